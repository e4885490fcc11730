// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusekit/cli.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "fusekit/dataset.h"
#include "fusekit/error.h"
#include "fusekit/fixtures.h"
#include "fusekit/fusion.h"
#include "fusekit/report.h"
#include "fusekit/tensor_store.h"

namespace fusekit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, message);
}

json optional_value(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string percent(double v) { return fixed(100.0 * v, 2); }

std::vector<fs::path> as_paths(const std::vector<std::string>& inputs) {
  return {inputs.begin(), inputs.end()};
}

std::string similarity_warning(double cosine) {
  return "cosine similarity " + fixed(cosine, 6) + " is below " +
         fixed(kSimilarityGuideline, 3) +
         "; fusing these weights is unlikely to improve on the single models";
}

std::uint32_t resolve_classes(const RunConfig& config, const Dataset& gt) {
  if (config.num_classes != 0) return config.num_classes;
  if (gt.num_classes == 0) invalid("class count missing from manifest; pass --classes");
  return gt.num_classes;
}

Dataset load_aligned(const std::string& dir, const Dataset& gt) {
  Dataset ds = load_dataset(dir);
  try {
    check_aligned(gt, ds);
  } catch (const Error& e) {
    throw Error(e.code(), dir + ": " + e.what());
  }
  return ds;
}

void add_scores_rows(TextTable& table, const std::string& label,
                     const ClassScores& s) {
  table.add_row({label, percent(s.miou), percent(s.precision), percent(s.recall),
                 percent(s.pixel_accuracy)});
}

TextTable scores_table() {
  return TextTable({"", "mIoU %", "precision %", "recall %", "pixel acc %"});
}

std::string per_class_table(const ClassScores& s) {
  TextTable table({"class", "IoU %", "precision %", "recall %"});
  for (std::size_t c = 0; c < s.iou.size(); ++c) {
    if (!s.iou[c]) {
      table.add_row({std::to_string(c), "-", "-", "-"});
      continue;
    }
    table.add_row({std::to_string(c), percent(*s.iou[c]),
                   percent(*s.precision_per_class[c]), percent(*s.recall_per_class[c])});
  }
  return table.render();
}

json summary_of(const FuseFilesSummary& s) {
  return {{"fused_elements", s.fused_elements}, {"copied_integer_tensors", s.copied}};
}

CommandOutcome fuse_with(const RunConfig& config, const FusionCoefficients& coeffs) {
  if (config.output.empty()) invalid("missing output path (-o)");
  FusionOptions options{config.extrapolate};
  const auto inputs = as_paths(config.inputs);
  FuseFilesSummary summary = fuse_archives(inputs, coeffs, config.output, options);

  CommandOutcome outcome;
  outcome.report = {{"command", config.subcommand},
                    {"config", config_to_json(config)},
                    {"coefficients", coeffs},
                    {"output", config.output},
                    {"summary", summary_of(summary)}};
  if (coeffs.size() == 2) outcome.report["alpha"] = coeffs[0];
  TextTable table({"input", "coefficient"});
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    table.add_row({config.inputs[i], fixed(coeffs[i], 4)});
  }
  outcome.table = table.render() + "wrote " + config.output + " (" +
                  std::to_string(summary.fused_elements) + " fused elements, " +
                  std::to_string(summary.copied.size()) + " integer tensors copied)\n";
  return outcome;
}

CosineCycleSchedule schedule_from(const RunConfig& config) {
  CosineCycleSchedule s = config.schedule;
  validate(s);
  return s;
}

DType dtype_from(const std::string& name) {
  auto d = parse_dtype(name);
  if (!d || !is_float(*d)) invalid("fixture dtype must be f32 or f64");
  return *d;
}

}  // namespace

json config_to_json(const RunConfig& c) {
  return {
      {"subcommand", c.subcommand},
      {"inputs", c.inputs},
      {"output", c.output},
      {"gt", c.gt},
      {"classes", c.num_classes},
      {"ignore_label", c.ignore_label},
      {"bins", c.bins},
      {"step", c.step},
      {"trials", c.trials},
      {"seed", c.seed},
      {"alpha", optional_value(c.alpha)},
      {"coefficients", c.coefficients},
      {"early_stop", c.early_stop},
      {"keep", c.keep},
      {"weighted_ece", c.weighted_ece},
      {"extrapolate", c.extrapolate},
      {"table", c.table},
      {"command", c.command},
      {"timeout", c.timeout},
      {"scratch", c.scratch},
      {"schedule",
       {{"start_lr", c.schedule.start_lr},
        {"iterations_per_cycle", c.schedule.iterations_per_cycle},
        {"cycles", c.schedule.cycles},
        {"epochs_per_cycle", c.schedule.epochs_per_cycle},
        {"checkpoint_epochs", c.checkpoint_epochs},
        {"cycle_ends", c.cycle_ends}}},
      {"fixture",
       {{"kind", c.fixture_kind},
        {"cosine", c.cosine},
        {"layer_width", c.layer_width},
        {"dtype", c.dtype},
        {"fractions", c.fractions},
        {"overlap", c.overlap},
        {"images", c.images},
        {"image_height", c.image_height},
        {"image_width", c.image_width},
        {"ignore_fraction", c.ignore_fraction},
        {"with_probs", c.with_probs},
        {"bin_accuracy", c.bin_accuracy},
        {"bin_confidence", c.bin_confidence},
        {"pixels_per_bin", c.pixels_per_bin}}},
  };
}

json to_json(const ClassScores& s) {
  json iou = json::array(), precision = json::array(), recall = json::array();
  for (std::size_t c = 0; c < s.iou.size(); ++c) {
    iou.push_back(optional_value(s.iou[c]));
    precision.push_back(optional_value(s.precision_per_class[c]));
    recall.push_back(optional_value(s.recall_per_class[c]));
  }
  return {{"iou", iou},
          {"precision_per_class", precision},
          {"recall_per_class", recall},
          {"miou", s.miou},
          {"precision", s.precision},
          {"recall", s.recall},
          {"pixel_accuracy", s.pixel_accuracy},
          {"included_classes", s.included_classes},
          {"valid_pixels", s.valid_pixels}};
}

json to_json(const CalibrationReport& r) {
  json bins = json::array();
  for (const CalibrationBin& b : r.bins) {
    bins.push_back({{"count", b.count},
                    {"correct", b.correct},
                    {"accuracy", b.accuracy},
                    {"confidence", b.confidence}});
  }
  return {{"bins", bins},
          {"ece", r.ece},
          {"mce", r.mce},
          {"kl", optional_value(r.kl)},
          {"correct_hist", r.correct_hist},
          {"incorrect_hist", r.incorrect_hist},
          {"valid_pixels", r.valid_pixels},
          {"correct_pixels", r.correct_pixels},
          {"weighted_ece", r.weighted_ece}};
}

json to_json(const SearchResult& r) {
  json evals = json::array();
  for (const Evaluation& e : r.evaluations) {
    evals.push_back({{"coefficients", e.coefficients}, {"score", e.score}});
  }
  return {{"evaluations", evals},
          {"best", r.best},
          {"best_score", r.best_score},
          {"terminated_early", r.terminated_early}};
}

CommandOutcome cmd_fuse(const RunConfig& config) {
  if (config.inputs.size() < 2) invalid("fuse needs at least two checkpoints");
  FusionCoefficients coeffs;
  if (config.alpha && !config.coefficients.empty()) {
    invalid("pass either --alpha or --coeffs, not both");
  }
  if (config.alpha) {
    if (config.inputs.size() != 2) invalid("--alpha applies to exactly two checkpoints");
    const double a = *config.alpha;
    if (!config.extrapolate && (a < 0.0 || a > 1.0)) {
      invalid("alpha must lie in [0, 1] unless --extrapolate is set");
    }
    coeffs = {a, 1.0 - a};
  } else if (!config.coefficients.empty()) {
    coeffs = config.coefficients;
  } else {
    invalid("fuse needs --alpha or --coeffs");
  }
  return fuse_with(config, coeffs);
}

CommandOutcome cmd_swa(const RunConfig& config) {
  if (config.inputs.empty()) invalid("swa needs at least one checkpoint");
  return fuse_with(config, uniform_coefficients(config.inputs.size()));
}

CommandOutcome cmd_cossim(const RunConfig& config) {
  if (config.inputs.size() != 2) invalid("cossim compares exactly two checkpoints");
  const Checkpoint a = read_archive(config.inputs[0]);
  const Checkpoint b = read_archive(config.inputs[1]);
  const SimilarityReport sim = cosine_similarity(a, b);

  CommandOutcome outcome;
  json warning = nullptr;
  if (sim.below_guideline()) {
    outcome.warnings.push_back(similarity_warning(sim.cosine));
    warning = outcome.warnings.back();
  }
  outcome.report = {{"command", config.subcommand},
                    {"config", config_to_json(config)},
                    {"cosine", sim.cosine},
                    {"dimension", sim.dimension},
                    {"skipped", sim.skipped},
                    {"guideline", kSimilarityGuideline},
                    {"warning", warning}};
  TextTable table({"metric", "value"});
  table.add_row({"cosine similarity", fixed(sim.cosine, 6)});
  table.add_row({"compared parameters", std::to_string(sim.dimension)});
  table.add_row({"skipped tensors", std::to_string(sim.skipped.size())});
  outcome.table = table.render();
  return outcome;
}

CommandOutcome cmd_oracle(const RunConfig& config) {
  if (config.gt.empty()) invalid("oracle needs --gt");
  if (config.inputs.empty()) invalid("oracle needs at least one prediction directory");
  const Dataset gt = load_dataset(config.gt);
  const std::uint32_t classes = resolve_classes(config, gt);
  const std::vector<LabelMap> gt_maps = gt.label_maps();

  std::vector<std::vector<LabelMap>> models;
  json members = json::array();
  TextTable table = scores_table();
  for (const std::string& dir : config.inputs) {
    models.push_back(load_aligned(dir, gt).label_maps());
    const ClassScores s = compute_metrics(
        confusion_matrix(models.back(), gt_maps, classes, config.ignore_label));
    members.push_back({{"input", dir}, {"scores", to_json(s)}});
    add_scores_rows(table, dir, s);
  }
  const ClassScores oracle = oracle_score(models, gt_maps, classes, config.ignore_label);
  add_scores_rows(table, "oracle", oracle);

  CommandOutcome outcome;
  outcome.report = {{"command", config.subcommand},
                    {"config", config_to_json(config)},
                    {"members", members},
                    {"oracle", to_json(oracle)}};
  outcome.table = table.render();
  return outcome;
}

CommandOutcome cmd_metrics(const RunConfig& config) {
  if (config.gt.empty()) invalid("metrics needs --gt");
  if (config.inputs.size() != 1) invalid("metrics scores exactly one prediction directory");
  const Dataset gt = load_dataset(config.gt);
  const std::uint32_t classes = resolve_classes(config, gt);
  const Dataset pred = load_aligned(config.inputs[0], gt);
  const ConfusionMatrix cm =
      confusion_matrix(pred.label_maps(), gt.label_maps(), classes, config.ignore_label);
  const ClassScores s = compute_metrics(cm);

  json counts = json::array();
  for (std::uint32_t g = 0; g < classes; ++g) {
    json row = json::array();
    for (std::uint32_t p = 0; p < classes; ++p) row.push_back(cm.at(g, p));
    counts.push_back(row);
  }
  CommandOutcome outcome;
  outcome.report = {{"command", config.subcommand},
                    {"config", config_to_json(config)},
                    {"confusion_matrix", counts},
                    {"scores", to_json(s)}};
  TextTable table = scores_table();
  add_scores_rows(table, config.inputs[0], s);
  outcome.table = per_class_table(s) + "\n" + table.render();
  return outcome;
}

CommandOutcome cmd_calibrate(const RunConfig& config) {
  if (config.gt.empty()) invalid("calibrate needs --gt");
  if (config.inputs.size() != 1) invalid("calibrate takes exactly one prediction directory");
  const Dataset gt = load_dataset(config.gt);
  const Dataset pred = load_aligned(config.inputs[0], gt);
  CalibrationOptions options{config.bins, config.ignore_label, config.weighted_ece};
  const CalibrationReport r = calibration(pred.images, gt.label_maps(), options);

  CommandOutcome outcome;
  outcome.report = {{"command", config.subcommand},
                    {"config", config_to_json(config)},
                    {"calibration", to_json(r)}};
  TextTable bins({"bin", "count", "accuracy", "confidence"});
  for (std::size_t b = 0; b < r.bins.size(); ++b) {
    const CalibrationBin& bin = r.bins[b];
    bins.add_row({fixed(static_cast<double>(b) / r.bins.size(), 2) + "-" +
                      fixed(static_cast<double>(b + 1) / r.bins.size(), 2),
                  std::to_string(bin.count),
                  bin.count ? fixed(bin.accuracy, 4) : "-",
                  bin.count ? fixed(bin.confidence, 4) : "-"});
  }
  TextTable summary({"metric", "value"});
  summary.add_row({r.weighted_ece ? "ECE (count-weighted)" : "ECE", fixed(r.ece, 4)});
  summary.add_row({"MCE", fixed(r.mce, 4)});
  summary.add_row({"KL (nats)", r.kl ? fixed(*r.kl, 4) : "undefined"});
  outcome.table = bins.render() + "\n" + summary.render();
  return outcome;
}

CommandOutcome cmd_ensemble(const RunConfig& config) {
  if (config.inputs.empty()) invalid("ensemble needs at least one prediction directory");
  if (config.output.empty()) invalid("missing output directory (-o)");
  std::vector<Dataset> members;
  for (const std::string& dir : config.inputs) {
    members.push_back(load_dataset(dir));
    if (members.size() > 1) {
      try {
        check_aligned(members.front(), members.back());
      } catch (const Error& e) {
        throw Error(e.code(), dir + ": " + e.what());
      }
    }
  }
  Dataset out;
  out.num_classes = members[0].num_classes;
  out.ids = members[0].ids;
  std::vector<PredictionSet> per_image(members.size());
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    for (std::size_t m = 0; m < members.size(); ++m) per_image[m] = members[m].images[i];
    try {
      out.images.push_back(deep_ensemble_average(per_image));
    } catch (const Error& e) {
      throw Error(e.code(), "image '" + out.ids[i] + "': " + e.what());
    }
  }
  save_dataset(config.output, out);

  CommandOutcome outcome;
  outcome.report = {{"command", config.subcommand},
                    {"config", config_to_json(config)},
                    {"output", config.output},
                    {"members", config.inputs.size()},
                    {"images", out.ids.size()}};
  outcome.table = "averaged " + std::to_string(members.size()) + " members over " +
                  std::to_string(out.ids.size()) + " images into " + config.output + "\n";
  if (!config.gt.empty()) {
    const Dataset gt = load_dataset(config.gt);
    check_aligned(gt, out);
    const std::uint32_t classes = resolve_classes(config, gt);
    const ClassScores s = compute_metrics(
        confusion_matrix(out.label_maps(), gt.label_maps(), classes, config.ignore_label));
    CalibrationOptions options{config.bins, config.ignore_label, config.weighted_ece};
    const CalibrationReport r = calibration(out.images, gt.label_maps(), options);
    outcome.report["scores"] = to_json(s);
    outcome.report["calibration"] = to_json(r);
    TextTable table = scores_table();
    add_scores_rows(table, "ensemble", s);
    outcome.table += table.render();
  }
  return outcome;
}

CommandOutcome cmd_search(const RunConfig& config) {
  const bool table_mode = !config.table.empty();
  if (table_mode == !config.command.empty()) {
    invalid("search needs exactly one of --table or --command");
  }
  CommandOutcome outcome;

  if (!config.inputs.empty()) {
    if (config.inputs.size() < 2) invalid("search needs at least two checkpoints");
    std::vector<Checkpoint> ckpts;
    for (const auto& path : config.inputs) ckpts.push_back(read_archive(path));
    double min_cos = 1.0;
    for (std::size_t i = 0; i < ckpts.size(); ++i) {
      for (std::size_t j = i + 1; j < ckpts.size(); ++j) {
        const SimilarityReport sim = cosine_similarity(ckpts[i], ckpts[j]);
        if (sim.below_guideline()) {
          outcome.warnings.push_back(config.inputs[i] + " vs " + config.inputs[j] + ": " +
                                     similarity_warning(sim.cosine));
        }
        min_cos = std::min(min_cos, sim.cosine);
      }
    }
    outcome.report["min_cosine"] = min_cos;
  }

  std::unique_ptr<Evaluator> evaluator;
  if (table_mode) {
    auto table = std::make_unique<TableEvaluator>(
        TableEvaluator::from_csv_file(config.table, config.step));
    if (!config.inputs.empty() && table->arity() != config.inputs.size()) {
      invalid("score table addresses " + std::to_string(table->arity()) +
              " checkpoints but " + std::to_string(config.inputs.size()) + " were given");
    }
    evaluator = std::move(table);
  } else {
    if (config.inputs.size() < 2) invalid("command mode needs the checkpoints to fuse");
    CommandOptions options{config.command, config.timeout, config.scratch, config.keep};
    evaluator = std::make_unique<CommandEvaluator>(as_paths(config.inputs), options,
                                                   FusionOptions{config.extrapolate});
  }

  SearchResult result;
  std::string strategy;
  if (evaluator->arity() == 2) {
    strategy = config.early_stop ? "grid_early_stop" : "grid";
    result = grid_search_alpha(*evaluator, {config.step, config.early_stop});
  } else {
    strategy = "random_simplex";
    result = random_simplex_search(*evaluator, {config.trials, config.seed});
  }

  outcome.report["command"] = config.subcommand;
  outcome.report["config"] = config_to_json(config);
  outcome.report["mode"] = evaluator->mode();
  outcome.report["strategy"] = strategy;
  outcome.report["result"] = to_json(result);
  outcome.report["warnings"] = outcome.warnings;

  std::vector<std::string> header;
  for (std::size_t i = 0; i < evaluator->arity(); ++i) header.push_back("c" + std::to_string(i + 1));
  header.push_back("score");
  TextTable table(header);
  for (const Evaluation& e : result.evaluations) {
    std::vector<std::string> row;
    for (double c : e.coefficients) row.push_back(fixed(c, 4));
    row.push_back(fixed(e.score, 4));
    table.add_row(row);
  }
  std::string best;
  for (double c : result.best) best += (best.empty() ? "" : ", ") + fixed(c, 4);
  outcome.table = table.render() + "best (" + best + ") score " + fixed(result.best_score, 4) +
                  (result.terminated_early ? " [terminated early]" : "") + "\n";
  return outcome;
}

CommandOutcome cmd_schedule(const RunConfig& config) {
  const CosineCycleSchedule s = schedule_from(config);
  std::vector<std::uint32_t> epochs = config.checkpoint_epochs;
  if (config.cycle_ends) {
    for (std::uint32_t e : cycle_end_epochs(s)) epochs.push_back(e);
  }
  const ScheduleTable table = emit_schedule(s, epochs);
  if (!config.output.empty()) {
    std::ofstream out(config.output);
    out << schedule_csv(table);
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + config.output + "'");
  }

  json marked = json::array();
  TextTable text({"iteration", "cycle", "lr", "checkpoint epoch"});
  for (const ScheduleRow& r : table.rows) {
    if (r.checkpoint_epoch < 0) continue;
    marked.push_back({{"iteration", r.iteration},
                      {"cycle", r.cycle},
                      {"lr", r.lr},
                      {"checkpoint_epoch", r.checkpoint_epoch}});
    text.add_row({std::to_string(r.iteration), std::to_string(r.cycle), fixed(r.lr, 6),
                  std::to_string(r.checkpoint_epoch)});
  }
  CommandOutcome outcome;
  outcome.report = {{"command", config.subcommand},
                    {"config", config_to_json(config)},
                    {"total_iterations", s.total_iterations()},
                    {"marked_rows", table.marked_rows},
                    {"total_weights", table.total_weights},
                    {"checkpoints", marked},
                    {"finetune_learning_rates", finetune_learning_rates()},
                    {"output", config.output}};
  outcome.table = text.render() + std::to_string(table.marked_rows) +
                  " stored checkpoints, " + std::to_string(table.total_weights) +
                  " weights including the start\n";
  return outcome;
}

CommandOutcome cmd_gen_fixtures(const RunConfig& config) {
  if (config.output.empty()) invalid("missing output directory (-o)");
  std::mt19937_64 rng(config.seed);
  const fs::path dir = config.output;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + dir.string() + "'");

  CommandOutcome outcome;
  json files = json::array();
  if (config.fixture_kind == "checkpoints") {
    CheckpointFixtureParams params;
    params.cosine = config.cosine;
    params.width = config.layer_width;
    params.classes = config.num_classes ? config.num_classes : 4;
    params.dtype = dtype_from(config.dtype);
    auto [a, b] = make_checkpoint_pair(params, rng);
    write_archive(a, dir / "a.fta");
    write_archive(b, dir / "b.fta");
    files = {(dir / "a.fta").string(), (dir / "b.fta").string()};
    outcome.table = "planted cosine " + fixed(config.cosine, 6) + " in " +
                    (dir / "a.fta").string() + ", " + (dir / "b.fta").string() + "\n";
  } else if (config.fixture_kind == "predictions") {
    PredictionFixtureParams params;
    params.correct_fractions = config.fractions;
    params.overlap = config.overlap;
    params.classes = config.num_classes ? config.num_classes : 4;
    params.images = config.images;
    params.height = config.image_height;
    params.width = config.image_width;
    params.ignore_fraction = config.ignore_fraction;
    params.with_probs = config.with_probs;
    PredictionFixture fx = make_prediction_fixture(params, rng);
    save_dataset(dir / "gt", fx.gt);
    files.push_back((dir / "gt").string());
    for (std::size_t m = 0; m < fx.models.size(); ++m) {
      const fs::path model_dir = dir / ("model_" + std::to_string(m));
      save_dataset(model_dir, fx.models[m]);
      files.push_back(model_dir.string());
    }
    outcome.table = "wrote ground truth and " + std::to_string(fx.models.size()) +
                    " prediction sets under " + dir.string() + "\n";
  } else if (config.fixture_kind == "calibration") {
    CalibrationFixtureParams params;
    params.bin_accuracy = config.bin_accuracy;
    params.bin_confidence = config.bin_confidence;
    params.pixels_per_bin = config.pixels_per_bin;
    params.classes = config.num_classes ? config.num_classes : 2;
    CalibrationFixture fx = make_calibration_fixture(params, rng);
    save_dataset(dir / "gt", fx.gt);
    save_dataset(dir / "pred", fx.pred);
    files = {(dir / "gt").string(), (dir / "pred").string()};
    outcome.table = "wrote calibration fixture under " + dir.string() + "\n";
  } else {
    invalid("unknown fixture kind '" + config.fixture_kind +
            "' (checkpoints, predictions, calibration)");
  }
  outcome.report = {{"command", config.subcommand},
                    {"config", config_to_json(config)},
                    {"files", files}};
  return outcome;
}

namespace {

void apply_schedule_config(RunConfig& config, const CLI::App& sub) {
  std::ifstream in(config.schedule_config);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + config.schedule_config + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    invalid("schedule config is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) invalid("schedule config must be a JSON object");
  auto unset = [&](const char* flag) { return sub.count(flag) == 0; };
  try {
    if (j.contains("start_lr") && unset("--start-lr")) {
      config.schedule.start_lr = j["start_lr"].get<double>();
    }
    if (j.contains("iterations_per_cycle") && unset("--iterations-per-cycle")) {
      config.schedule.iterations_per_cycle = j["iterations_per_cycle"].get<std::uint32_t>();
    }
    if (j.contains("cycles") && unset("--cycles")) {
      config.schedule.cycles = j["cycles"].get<std::uint32_t>();
    }
    if (j.contains("epochs_per_cycle") && unset("--epochs-per-cycle")) {
      config.schedule.epochs_per_cycle = j["epochs_per_cycle"].get<std::uint32_t>();
    }
    if (j.contains("checkpoint_epochs") && unset("--checkpoint-epochs")) {
      config.checkpoint_epochs = j["checkpoint_epochs"].get<std::vector<std::uint32_t>>();
    }
    if (j.contains("cycle_ends") && unset("--cycle-ends")) {
      config.cycle_ends = j["cycle_ends"].get<bool>();
    }
  } catch (const json::exception& e) {
    invalid("schedule config has a field of the wrong type: " + std::string(e.what()));
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  RunConfig config;
  CLI::App app{"fusekit: checkpoint weight fusion and segmentation evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fusekit 1.0.0");

  auto common = [&](CLI::App* sub) {
    sub->add_option("--json", config.json,
                    "Write the JSON report to this path ('-' for stdout)");
  };
  auto eval_opts = [&](CLI::App* sub) {
    sub->add_option("--gt", config.gt, "Ground-truth dataset directory");
    sub->add_option("-C,--classes", config.num_classes,
                    "Class count (default: from the ground-truth manifest)");
    sub->add_option("--ignore-label", config.ignore_label, "Void label")
        ->capture_default_str();
  };

  auto* fuse = app.add_subcommand("fuse", "Fuse checkpoints with given coefficients");
  fuse->add_option("inputs", config.inputs, "Input archives")->required();
  fuse->add_option("-o,--output", config.output, "Output archive")->required();
  fuse->add_option("--alpha", config.alpha, "Weight of the first of two checkpoints");
  fuse->add_option("--coeffs", config.coefficients, "One coefficient per input")
      ->delimiter(',');
  fuse->add_flag("--extrapolate", config.extrapolate, "Allow coefficients outside [0, 1]");
  common(fuse);

  auto* swa = app.add_subcommand("swa", "Equal-weight average of checkpoints");
  swa->add_option("inputs", config.inputs, "Input archives")->required();
  swa->add_option("-o,--output", config.output, "Output archive")->required();
  common(swa);

  auto* cossim = app.add_subcommand("cossim", "Cosine similarity of two checkpoints");
  cossim->add_option("inputs", config.inputs, "Two input archives")->required()->expected(2);
  common(cossim);

  auto* oracle = app.add_subcommand("oracle", "Oracle test over prediction sets");
  oracle->add_option("inputs", config.inputs, "Prediction directories")->required();
  eval_opts(oracle);
  common(oracle);

  auto* metrics = app.add_subcommand("metrics", "mIoU, precision and recall");
  metrics->add_option("inputs", config.inputs, "Prediction directory")->required();
  eval_opts(metrics);
  common(metrics);

  auto* calibrate = app.add_subcommand("calibrate", "ECE, MCE and KL divergence");
  calibrate->add_option("inputs", config.inputs, "Prediction directory")->required();
  calibrate->add_option("-B,--bins", config.bins, "Confidence bins")->capture_default_str();
  calibrate->add_flag("--weighted-ece", config.weighted_ece,
                      "Weight bins by their share of pixels");
  eval_opts(calibrate);
  common(calibrate);

  auto* ensemble = app.add_subcommand("ensemble", "Average softmax predictions");
  ensemble->add_option("inputs", config.inputs, "Prediction directories")->required();
  ensemble->add_option("-o,--output", config.output, "Output dataset directory")->required();
  ensemble->add_option("-B,--bins", config.bins, "Confidence bins")->capture_default_str();
  ensemble->add_flag("--weighted-ece", config.weighted_ece,
                     "Weight bins by their share of pixels");
  eval_opts(ensemble);
  common(ensemble);

  auto* search = app.add_subcommand("search", "Search fusion coefficients");
  search->add_option("inputs", config.inputs, "Checkpoints to fuse");
  search->add_option("--table", config.table, "CSV of precomputed scores");
  search->add_option("--command", config.command,
                     "Evaluator command; {checkpoint} is replaced by the fused archive");
  search->add_option("--step", config.step, "Alpha grid step")->capture_default_str();
  search->add_flag("--early-stop", config.early_stop, "Stop the alpha sweep early");
  search->add_option("--trials", config.trials, "Random simplex trials")->capture_default_str();
  search->add_option("--seed", config.seed, "Random seed")->capture_default_str();
  search->add_option("--timeout", config.timeout, "Evaluator timeout in seconds (0: none)");
  search->add_option("--scratch", config.scratch, "Directory for fused checkpoints");
  search->add_flag("--keep", config.keep, "Keep fused checkpoints");
  search->add_flag("--extrapolate", config.extrapolate, "Allow coefficients outside [0, 1]");
  common(search);

  auto* schedule = app.add_subcommand("schedule", "Cosine-annealing schedule table");
  schedule->add_option("--config", config.schedule_config, "JSON schedule config");
  schedule->add_option("--start-lr", config.schedule.start_lr)->capture_default_str();
  schedule->add_option("--iterations-per-cycle", config.schedule.iterations_per_cycle)
      ->capture_default_str();
  schedule->add_option("--cycles", config.schedule.cycles)->capture_default_str();
  schedule->add_option("--epochs-per-cycle", config.schedule.epochs_per_cycle)
      ->capture_default_str();
  schedule->add_option("--checkpoint-epochs", config.checkpoint_epochs,
                       "Epochs whose checkpoints are stored (0 = start)")
      ->delimiter(',');
  schedule->add_flag("--cycle-ends", config.cycle_ends, "Store a checkpoint at every cycle end");
  schedule->add_option("-o,--output", config.output, "CSV output path");
  common(schedule);

  auto* gen = app.add_subcommand("gen-fixtures", "Write synthetic inputs with planted properties");
  gen->add_option("kind", config.fixture_kind, "checkpoints | predictions | calibration")
      ->required();
  gen->add_option("-o,--output", config.output, "Output directory")->required();
  gen->add_option("--seed", config.seed)->capture_default_str();
  gen->add_option("-C,--classes", config.num_classes);
  gen->add_option("--cosine", config.cosine, "Planted cosine similarity");
  gen->add_option("--layer-width", config.layer_width)->capture_default_str();
  gen->add_option("--dtype", config.dtype)->capture_default_str();
  gen->add_option("--fractions", config.fractions, "Per-model correct fractions")
      ->delimiter(',');
  gen->add_option("--overlap", config.overlap, "Fraction correct in every model");
  gen->add_option("--images", config.images)->capture_default_str();
  gen->add_option("--image-height", config.image_height)->capture_default_str();
  gen->add_option("--image-width", config.image_width)->capture_default_str();
  gen->add_option("--ignore-fraction", config.ignore_fraction);
  gen->add_flag("--with-probs", config.with_probs);
  gen->add_option("--bin-accuracy", config.bin_accuracy)->delimiter(',');
  gen->add_option("--bin-confidence", config.bin_confidence)->delimiter(',');
  gen->add_option("--pixels-per-bin", config.pixels_per_bin)->capture_default_str();
  common(gen);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "fusekit 1.0.0\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  config.subcommand = chosen->get_name();

  try {
    if (chosen == schedule && !config.schedule_config.empty()) {
      apply_schedule_config(config, *chosen);
    }
    CommandOutcome outcome;
    const std::string& name = config.subcommand;
    if (name == "fuse") outcome = cmd_fuse(config);
    else if (name == "swa") outcome = cmd_swa(config);
    else if (name == "cossim") outcome = cmd_cossim(config);
    else if (name == "oracle") outcome = cmd_oracle(config);
    else if (name == "metrics") outcome = cmd_metrics(config);
    else if (name == "calibrate") outcome = cmd_calibrate(config);
    else if (name == "ensemble") outcome = cmd_ensemble(config);
    else if (name == "search") outcome = cmd_search(config);
    else if (name == "schedule") outcome = cmd_schedule(config);
    else outcome = cmd_gen_fixtures(config);

    for (const std::string& w : outcome.warnings) err << "warning: " << w << "\n";
    const std::string json_text = dump_report(outcome.report);
    if (config.json == "-") {
      out << json_text;
    } else {
      out << outcome.table;
      if (!config.json.empty()) {
        std::ofstream file(config.json);
        file << json_text;
        if (!file) throw Error(ErrorCode::kIo, "cannot write '" + config.json + "'");
      }
    }
    return outcome.exit_code;
  } catch (const Error& e) {
    err << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fusekit
