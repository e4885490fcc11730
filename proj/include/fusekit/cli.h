// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

// The fusekit command line. Every subcommand prints an aligned table on
// stdout and, with --json PATH, writes a machine-readable report that echoes
// the resolved configuration ("--json -" sends the report to stdout in place
// of the table). Exit status: 0 success, 2 invalid input or arguments,
// 1 runtime failure.

#ifndef FUSEKIT_CLI_H_
#define FUSEKIT_CLI_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fusekit/evaluation.h"
#include "fusekit/schedule.h"
#include "fusekit/search.h"
#include "json.hpp"

namespace fusekit {

struct RunConfig {
  std::string subcommand;
  std::vector<std::string> inputs;
  std::string output;
  std::string gt;
  std::string json;

  std::uint32_t num_classes = 0;  // 0: take it from the dataset manifest
  std::uint16_t ignore_label = kDefaultIgnoreLabel;
  std::uint32_t bins = kDefaultBins;
  double step = kDefaultStep;
  std::uint32_t trials = kDefaultTrials;
  std::uint64_t seed = 0;

  std::optional<double> alpha;
  std::vector<double> coefficients;
  bool early_stop = false;
  bool keep = false;
  bool weighted_ece = false;
  bool extrapolate = false;

  // search
  std::string table;
  std::string command;
  double timeout = 0.0;
  std::string scratch;

  // schedule
  std::string schedule_config;
  CosineCycleSchedule schedule;
  std::vector<std::uint32_t> checkpoint_epochs;
  bool cycle_ends = false;

  // gen-fixtures
  std::string fixture_kind;
  double cosine = 1.0;
  std::uint32_t layer_width = 16;
  std::string dtype = "f32";
  std::vector<double> fractions = {0.6, 0.6};
  double overlap = 0.2;
  std::uint32_t images = 2;
  std::uint32_t image_height = 16;
  std::uint32_t image_width = 16;
  double ignore_fraction = 0.0;
  bool with_probs = false;
  std::vector<double> bin_accuracy;
  std::vector<double> bin_confidence;
  std::uint32_t pixels_per_bin = 1024;
};

nlohmann::json config_to_json(const RunConfig& config);

struct CommandOutcome {
  int exit_code = 0;
  nlohmann::json report;
  std::string table;
  std::vector<std::string> warnings;
};

CommandOutcome cmd_fuse(const RunConfig& config);
CommandOutcome cmd_swa(const RunConfig& config);
CommandOutcome cmd_cossim(const RunConfig& config);
CommandOutcome cmd_oracle(const RunConfig& config);
CommandOutcome cmd_metrics(const RunConfig& config);
CommandOutcome cmd_calibrate(const RunConfig& config);
CommandOutcome cmd_ensemble(const RunConfig& config);
CommandOutcome cmd_search(const RunConfig& config);
CommandOutcome cmd_schedule(const RunConfig& config);
CommandOutcome cmd_gen_fixtures(const RunConfig& config);

nlohmann::json to_json(const ClassScores& scores);
nlohmann::json to_json(const CalibrationReport& report);
nlohmann::json to_json(const SearchResult& result);

// Parses argv, runs the subcommand and emits its output. Returns the exit
// status.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace fusekit

#endif  // FUSEKIT_CLI_H_
