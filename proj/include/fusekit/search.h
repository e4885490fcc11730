// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

// Fusion-coefficient search.
//
// Scores come from an Evaluator: either a lookup table of precomputed
// validation scores, or an external command that scores a fused checkpoint
// written to a scratch directory. The command receives the checkpoint path
// in place of every "{checkpoint}" in its template and must print the score
// as the last non-empty line of its standard output.

#ifndef FUSEKIT_SEARCH_H_
#define FUSEKIT_SEARCH_H_

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fusekit/fusion.h"

namespace fusekit {

inline constexpr double kDefaultStep = 0.05;
inline constexpr std::uint32_t kDefaultTrials = 50;

class Evaluator {
 public:
  virtual ~Evaluator() = default;

  // Number of checkpoints the coefficient vectors address.
  virtual std::size_t arity() const = 0;
  virtual std::string mode() const = 0;
  // Maps a requested coefficient vector onto the one that will actually be
  // scored (table mode snaps to its grid).
  virtual FusionCoefficients canonicalize(const FusionCoefficients& c) const {
    return c;
  }
  virtual double evaluate(const FusionCoefficients& c) = 0;
};

class TableEvaluator final : public Evaluator {
 public:
  // `resolution` must divide 1; keys are stored as multiples of it.
  TableEvaluator(std::size_t arity, double resolution = kDefaultStep);

  // Rows "alpha,score" (pairwise) or "c1,...,cK,score". Blank lines, lines
  // starting with '#' and a non-numeric header line are skipped.
  static TableEvaluator from_csv(std::istream& in,
                                 double resolution = kDefaultStep);
  static TableEvaluator from_csv_file(const std::filesystem::path& path,
                                      double resolution = kDefaultStep);

  std::size_t arity() const override { return arity_; }
  std::string mode() const override { return "table"; }
  FusionCoefficients canonicalize(const FusionCoefficients& c) const override;
  double evaluate(const FusionCoefficients& c) override;

  void set(const FusionCoefficients& c, double score);
  std::optional<double> lookup(const FusionCoefficients& c) const;
  std::size_t size() const { return table_.size(); }
  double resolution() const { return resolution_; }

 private:
  std::vector<std::int64_t> key(const FusionCoefficients& c) const;

  std::size_t arity_;
  double resolution_;
  std::int64_t lattice_;
  std::map<std::vector<std::int64_t>, double> table_;
};

struct CommandResult {
  int exit_code = 0;
  bool timed_out = false;
  std::string out;
  std::string err;
};

// Runs `command` through /bin/sh. timeout_seconds <= 0 waits indefinitely.
CommandResult run_command(const std::string& command, double timeout_seconds);

// Single-quotes `text` for /bin/sh.
std::string shell_quote(const std::string& text);

// Parses the last non-empty line of `output` as a decimal score.
double parse_score(const std::string& output);

// Scores an already-written fused checkpoint with the command protocol.
double evaluate_external(const std::string& command_template,
                         const std::filesystem::path& fused_path,
                         double timeout_seconds = 0.0);

struct CommandOptions {
  std::string command_template;
  double timeout_seconds = 0.0;
  std::filesystem::path scratch_dir;
  bool keep = false;  // leave fused checkpoints in scratch_dir
};

// Fuses the bound checkpoints for each request, scores the result with the
// command and removes the fused file again unless `keep` is set.
class CommandEvaluator final : public Evaluator {
 public:
  CommandEvaluator(std::vector<std::filesystem::path> checkpoints,
                   CommandOptions options, FusionOptions fusion = {});

  std::size_t arity() const override { return checkpoints_.size(); }
  std::string mode() const override { return "command"; }
  double evaluate(const FusionCoefficients& c) override;

  const std::vector<std::filesystem::path>& written() const { return written_; }

 private:
  std::vector<std::filesystem::path> checkpoints_;
  CommandOptions options_;
  FusionOptions fusion_;
  std::size_t counter_ = 0;
  std::vector<std::filesystem::path> written_;
};

struct Evaluation {
  FusionCoefficients coefficients;
  double score = 0.0;
};

struct SearchResult {
  std::vector<Evaluation> evaluations;  // in evaluation order
  FusionCoefficients best;
  double best_score = 0.0;
  bool terminated_early = false;
};

struct GridOptions {
  double step = kDefaultStep;
  // Walk up from alpha = 0 while scores improve, then down from alpha = 1,
  // instead of sweeping every grid point.
  bool early_stop = false;
};

// Number of grid intervals for `step`; throws unless step divides 1.
std::uint32_t grid_intervals(double step);

// Sweeps alpha (the weight on the first checkpoint) over {0, step, ..., 1}.
// Ties go to the alpha closest to 0.5, then to the smaller alpha.
SearchResult grid_search_alpha(Evaluator& evaluator,
                               const GridOptions& options = {});

struct SimplexOptions {
  std::uint32_t trials = kDefaultTrials;
  std::uint64_t seed = 0;
};

// Uniform sample from the (k-1)-simplex via spacings of sorted uniforms.
FusionCoefficients sample_simplex(std::size_t k, std::mt19937_64& rng);

// Trial 0 scores the uniform (SWA) vector, later trials random simplex
// points. Ties go to the earliest trial.
SearchResult random_simplex_search(Evaluator& evaluator,
                                   const SimplexOptions& options = {});

}  // namespace fusekit

#endif  // FUSEKIT_SEARCH_H_
