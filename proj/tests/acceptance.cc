// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fusekit/cli.h"
#include "fusekit/evaluation.h"
#include "fusekit/fixtures.h"
#include "fusekit/fusion.h"
#include "fusekit/schedule.h"
#include "fusekit/search.h"
#include "fusekit/tensor_store.h"
#include "json.hpp"
#include "test_util.h"

namespace fusekit {
namespace {

namespace t = testing;

// Collects the first few failures of one criterion.
class Check {
 public:
  void expect(bool condition, const std::string& what) {
    if (condition) return;
    if (failures_++ < 5) notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  void note(const std::string& text) { info_ += (info_.empty() ? "" : ", ") + text; }
  bool ok() const { return failures_ == 0; }
  std::string detail() const {
    if (ok()) return info_;
    return std::to_string(failures_) + " failure(s): " + notes_;
  }

 private:
  int failures_ = 0;
  std::string notes_;
  std::string info_;
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void fusion_algebra(Check& check) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> unit;
  std::uniform_int_distribution<int> exponent(-8, 8);
  constexpr int kPairs = 1000;
  double worst_swap = 0, worst_homogeneity = 0, worst_oracle = 0;
  for (int i = 0; i < kPairs; ++i) {
    const Checkpoint a = t::random_checkpoint(rng);
    const Checkpoint b = t::random_like(a, rng);
    const double alpha = unit(rng);
    check.expect(fuse_pair(a, b, 1.0) == a, "fuse(a, b, 1) != a");
    check.expect(fuse_pair(a, b, 0.0) == b, "fuse(a, b, 0) != b");
    check.expect(fuse_pair(a, a, alpha) == a, "fuse(a, a, alpha) != a");

    const Checkpoint scale = t::abs_combination({a, b}, {alpha, 1 - alpha});
    worst_swap = std::max(worst_swap, t::max_relative_error(fuse_pair(a, b, alpha),
                                                            fuse_pair(b, a, 1 - alpha), &scale));

    const double s = std::ldexp(1.0, exponent(rng));
    const Checkpoint as = t::scaled(a, s), bs = t::scaled(b, s);
    const Checkpoint scale_s = t::abs_combination({as, bs}, {alpha, 1 - alpha});
    worst_homogeneity = std::max(
        worst_homogeneity, t::max_relative_error(fuse_pair(as, bs, alpha),
                                                 t::scaled(fuse_pair(a, b, alpha), s), &scale_s));

    const std::size_t k = 2 + rng() % 3;
    std::vector<Checkpoint> ckpts = {t::random_checkpoint(rng, {.f64_only = true})};
    while (ckpts.size() < k) ckpts.push_back(t::random_like(ckpts[0], rng));
    const FusionCoefficients coeffs = sample_simplex(k, rng);
    const Checkpoint many_scale = t::abs_combination(ckpts, coeffs);
    worst_oracle = std::max(worst_oracle,
                            t::max_relative_error(fuse_many(ckpts, coeffs),
                                                  t::reference_fuse(ckpts, coeffs), &many_scale));
  }
  const double elapsed = seconds_since(start);
  check.expect(worst_swap <= 1e-12, "swap symmetry error " + num(worst_swap));
  check.expect(worst_homogeneity <= 1e-9, "homogeneity error " + num(worst_homogeneity));
  check.expect(worst_oracle <= 1e-9, "fuse_many vs reference error " + num(worst_oracle));
  check.expect(elapsed < 60, "took " + num(elapsed) + " s");
  check.note(std::to_string(kPairs) + " pairs");
  check.note("swap " + num(worst_swap));
  check.note("homogeneity " + num(worst_homogeneity));
  check.note("oracle " + num(worst_oracle));
  check.note(num(elapsed) + " s");
}

void similarity(Check& check) {
  std::mt19937_64 rng(7);
  double worst = 0;
  for (DType dtype : {DType::kF32, DType::kF64}) {
    for (double c : {0.0, 0.5, 0.925, 0.95, 1.0}) {
      CheckpointFixtureParams params;
      params.cosine = c;
      params.dtype = dtype;
      auto [a, b] = make_checkpoint_pair(params, rng);
      const double got = cosine_similarity(a, b).cosine;
      worst = std::max(worst, std::abs(got - c));
      check.expect(std::abs(got - c) <= 1e-6, "planted " + num(c) + " measured " + num(got));
    }
  }
  // The guideline on planted f64 fixtures either side of the threshold.
  for (double c : {0.0, 0.5, 0.9, 0.92, 0.9249, 0.925, 0.9251, 0.95, 1.0}) {
    CheckpointFixtureParams params;
    params.cosine = c;
    params.dtype = DType::kF64;
    auto [a, b] = make_checkpoint_pair(params, rng);
    check.expect(cosine_similarity(a, b).below_guideline() == (c < 0.925),
                 "warning wrong at " + num(c));
  }
  // Scalars and integer tensors do not move the cosine.
  for (int i = 0; i < 200; ++i) {
    const Checkpoint a = t::random_checkpoint(rng, {.floats_only = true, .allow_scalars = false});
    const Checkpoint b = t::random_like(a, rng);
    double base;
    try {
      base = cosine_similarity(a, b).cosine;
    } catch (const Error&) {
      continue;
    }
    Checkpoint a2 = a, b2 = b;
    a2.emplace("~scalar", Tensor::scalar<double>(3.5));
    b2.emplace("~scalar", Tensor::scalar<double>(-1e6));
    a2.emplace("~count", Tensor::from_values<std::int64_t>({3}, {1, 2, 3}));
    b2.emplace("~count", Tensor::from_values<std::int64_t>({3}, {-9, 0, 9}));
    check.expect(cosine_similarity(a2, b2).cosine == base, "scalar/integer tensors changed cosine");
  }
  check.note("worst planted error " + num(worst));
}

void oracle(Check& check) {
  std::mt19937_64 rng(11);
  constexpr int kInstances = 500;
  for (int trial = 0; trial < kInstances; ++trial) {
    const std::uint32_t classes = 2 + rng() % 6;
    const std::size_t k = 2 + rng() % 3;
    const std::uint32_t h = 1 + rng() % 8, w = 1 + rng() % 8;
    std::vector<LabelMap> gt;
    for (int i = 0; i < 2; ++i) gt.push_back(t::random_label_map(rng, h, w, classes, 0.1));
    std::vector<std::vector<LabelMap>> models(k);
    for (auto& m : models) {
      for (const auto& g : gt) m.push_back(t::noisy_copy(rng, g, classes, 0.4));
    }
    ClassScores o;
    try {
      o = oracle_score(models, gt, classes);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kUndefined) continue;  // every pixel void
      throw;
    }
    check.expect(o.pixel_accuracy == t::reference_union_accuracy(models, gt),
                 "union fraction mismatch");
    for (const auto& m : models) {
      check.expect(
          o.pixel_accuracy >= compute_metrics(confusion_matrix(m, gt, classes)).pixel_accuracy,
          "oracle below a member");
    }
    std::vector<std::vector<LabelMap>> doubled = models;
    doubled.insert(doubled.end(), models.begin(), models.end());
    const ClassScores d = oracle_score(doubled, gt, classes);
    check.expect(d.pixel_accuracy == o.pixel_accuracy && d.iou == o.iou && d.miou == o.miou,
                 "duplicated models changed the oracle");
  }
  const LabelMap gt(1, 3, {1, 2, 3});
  const std::vector<LabelMap> preds = {LabelMap(1, 3, {1, 0, 0}), LabelMap(1, 3, {0, 2, 0})};
  check.expect(oracle_merge(preds, gt) == LabelMap(1, 3, {1, 2, 0}), "traced example");
  check.note(std::to_string(kInstances) + " instances");
}

void metrics_and_calibration(Check& check) {
  std::mt19937_64 rng(13);
  constexpr int kInstances = 500;
  const auto close = [](double x, double y) { return std::abs(x - y) <= 1e-12; };
  int scored = 0;
  for (int trial = 0; trial < kInstances; ++trial) {
    const std::uint32_t classes = 2 + rng() % 6;
    const std::uint32_t bins = 1 + rng() % 20;
    const std::uint32_t h = 1 + rng() % 8, w = 1 + rng() % 8;
    std::vector<LabelMap> gt, pred;
    std::vector<PredictionSet> soft;
    for (int i = 0; i < 2; ++i) {
      gt.push_back(t::random_label_map(rng, h, w, classes, 0.1));
      PredictionSet p = t::random_soft_prediction(rng, h, w, classes);
      p.labels = t::noisy_copy(rng, gt.back(), classes, 0.5);
      pred.push_back(p.labels);
      soft.push_back(std::move(p));
    }

    const ConfusionMatrix cm = confusion_matrix(pred, gt, classes);
    const auto ref_cm = t::reference_confusion(pred, gt, classes);
    for (std::uint32_t g = 0; g < classes; ++g) {
      for (std::uint32_t p = 0; p < classes; ++p) {
        check.expect(cm.at(g, p) == ref_cm[g][p], "confusion matrix mismatch");
      }
    }

    if (const auto ref = t::reference_scores(pred, gt, classes)) {
      ++scored;
      const ClassScores s = compute_metrics(cm);
      check.expect(close(s.miou, ref->miou), "mIoU mismatch");
      check.expect(close(s.precision, ref->mean_precision), "precision mismatch");
      check.expect(close(s.recall, ref->mean_recall), "recall mismatch");
      for (std::uint32_t c = 0; c < classes; ++c) {
        if (s.iou[c].has_value() != ref->iou[c].has_value()) {
          check.expect(false, "class inclusion mismatch");
          continue;
        }
        if (!ref->iou[c]) continue;
        check.expect(close(*s.iou[c], *ref->iou[c]), "per-class IoU mismatch");
        check.expect(close(*s.precision_per_class[c], *ref->precision[c]),
                     "per-class precision mismatch");
        check.expect(close(*s.recall_per_class[c], *ref->recall[c]), "per-class recall mismatch");
      }
    }

    const auto ref = t::reference_calibration(soft, gt, bins);
    const CalibrationReport r = calibration(soft, gt, {.bins = bins});
    check.expect(close(r.ece, ref.ece), "ECE mismatch");
    check.expect(close(r.mce, ref.mce), "MCE mismatch");
    check.expect(r.ece <= r.mce, "ECE > MCE");
    check.expect(r.kl.has_value() == ref.kl.has_value(), "KL definedness mismatch");
    if (r.kl && ref.kl) check.expect(close(*r.kl, *ref.kl), "KL mismatch");
    const CalibrationReport weighted = calibration(soft, gt, {.bins = bins, .weighted_ece = true});
    check.expect(close(weighted.ece, ref.weighted_ece), "weighted ECE mismatch");
    check.expect(weighted.ece <= weighted.mce, "weighted ECE > MCE");

    std::vector<double> p(bins);
    double sum = 0;
    for (double& v : p) sum += v = static_cast<double>(rng() % 1000);
    if (sum > 0) {
      for (double& v : p) v /= sum;
      check.expect(kl_divergence(p, p) < 1e-12, "KL(P, P) not zero");
    }
  }

  CalibrationFixtureParams params;
  params.bin_accuracy = {0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95};
  const CalibrationFixture fx = make_calibration_fixture(params, rng);
  const double fixture_ece = calibration(fx.pred.images, fx.gt.label_maps()).ece;
  check.expect(fixture_ece < 1e-9, "calibrated fixture ECE " + num(fixture_ece));

  // Class 1 is in the ground truth but never predicted and stays in with
  // IoU 0; class 2 appears nowhere and is left out.
  const std::vector<LabelMap> gt = {LabelMap(1, 4, {0, 0, 1, 1})};
  const std::vector<LabelMap> pred = {LabelMap(1, 4, {0, 0, 0, 0})};
  const ClassScores s = compute_metrics(confusion_matrix(pred, gt, 3));
  check.expect(s.included_classes == 2 && s.iou[1] == 0.0 && !s.iou[2].has_value() &&
                   s.miou == 0.25,
               "inclusion rule");
  check.note(std::to_string(kInstances) + " instances (" + std::to_string(scored) +
             " with defined metrics)");
  check.note("fixture ECE " + num(fixture_ece));
}

TableEvaluator pair_table(const std::vector<double>& scores) {
  const auto n = static_cast<double>(scores.size() - 1);
  TableEvaluator table(2, 1.0 / n);
  for (std::size_t k = 0; k < scores.size(); ++k) table.set({k / n, 1.0 - k / n}, scores[k]);
  return table;
}

std::size_t reference_argmax(const std::vector<double>& scores) {
  const auto n = static_cast<std::int64_t>(scores.size() - 1);
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    const auto d = std::abs(2 * static_cast<std::int64_t>(k) - n);
    const auto d_best = std::abs(2 * static_cast<std::int64_t>(best) - n);
    if (scores[k] > scores[best] || (scores[k] == scores[best] && d < d_best)) best = k;
  }
  return best;
}

std::vector<double> unimodal(std::mt19937_64& rng, std::size_t points) {
  std::uniform_real_distribution<double> rise(0.001, 1.0);
  const std::size_t peak = rng() % points;
  std::vector<double> s(points);
  s[peak] = 100;
  for (std::size_t k = peak; k-- > 0;) s[k] = s[k + 1] - rise(rng);
  for (std::size_t k = peak + 1; k < points; ++k) s[k] = s[k - 1] - rise(rng);
  return s;
}

TableEvaluator planted_simplex(std::size_t k, const FusionCoefficients& optimum, std::uint32_t n) {
  TableEvaluator table(k, 1.0 / n);
  std::vector<std::uint32_t> units(k, 0);
  std::function<void(std::size_t, std::uint32_t)> fill = [&](std::size_t i, std::uint32_t left) {
    if (i + 1 == k) {
      units[i] = left;
      FusionCoefficients c(k);
      double dist = 0;
      for (std::size_t j = 0; j < k; ++j) {
        c[j] = static_cast<double>(units[j]) / n;
        dist += (c[j] - optimum[j]) * (c[j] - optimum[j]);
      }
      table.set(c, -std::sqrt(dist));
      return;
    }
    for (std::uint32_t u = 0; u <= left; ++u) {
      units[i] = u;
      fill(i + 1, left - u);
    }
  };
  fill(0, n);
  return table;
}

void search(Check& check) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> score(0, 1);
  std::uniform_int_distribution<int> coarse(0, 4);
  constexpr int kGridTables = 500;
  for (int trial = 0; trial < kGridTables; ++trial) {
    std::vector<double> scores(21);
    // Alternate continuous scores with coarse ones that force ties.
    for (double& v : scores) v = trial % 2 ? score(rng) : coarse(rng);
    TableEvaluator table = pair_table(scores);
    const SearchResult r = grid_search_alpha(table);
    const std::size_t best = reference_argmax(scores);
    check.expect(r.best_score == scores[best] && r.best[0] == best / 20.0,
                 "grid missed the table argmax");

    std::vector<double> mirrored(scores.rbegin(), scores.rend());
    TableEvaluator mirror = pair_table(mirrored);
    const SearchResult m = grid_search_alpha(mirror);
    check.expect(m.best_score == r.best_score, "mirror property violated");
    // Ties resolve toward the smaller alpha, which is not mirror-symmetric,
    // so the winning coefficients only mirror when the argmax is unique.
    if (std::count(scores.begin(), scores.end(), scores[best]) == 1) {
      check.expect(m.best[1] == r.best[0], "mirrored argmax moved");
    }
  }

  constexpr int kUnimodal = 1000;
  std::size_t early_evals = 0;
  for (int trial = 0; trial < kUnimodal; ++trial) {
    const std::vector<double> scores = unimodal(rng, 21);
    TableEvaluator a = pair_table(scores), b = pair_table(scores);
    const SearchResult exhaustive = grid_search_alpha(a);
    const SearchResult early = grid_search_alpha(b, {.early_stop = true});
    early_evals += early.evaluations.size();
    check.expect(early.best == exhaustive.best && early.best_score == exhaustive.best_score,
                 "early stop differs from exhaustive");
  }

  int wins = 0, runs = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (std::size_t k : {3u, 4u}) {
      FusionCoefficients optimum(k, 0.0);
      const std::size_t i = rng() % k, j = (i + 1 + rng() % (k - 1)) % k;
      optimum[i] = 0.7;
      optimum[j] = 0.3;
      TableEvaluator table = planted_simplex(k, optimum, 20);
      const SearchResult r = random_simplex_search(table, {.seed = seed});
      ++runs;
      if (r.best_score > r.evaluations.front().score) ++wins;
      check.expect(r.evaluations.size() == 50, "simplex trial count");
    }
  }
  check.expect(wins == runs, "simplex beat uniform in " + std::to_string(wins) + "/" +
                                 std::to_string(runs));

  t::TempDir dir;
  const auto csv_path = dir / "scores.csv";
  {
    std::ostringstream csv;
    for (int k = 0; k <= 20; ++k) csv << k / 20.0 << "," << score(rng) << "\n";
    std::string text = csv.str();
    t::write_file(csv_path, std::vector<std::byte>(reinterpret_cast<const std::byte*>(text.data()),
                                                   reinterpret_cast<const std::byte*>(text.data()) +
                                                       text.size()));
  }
  std::ostringstream out, err;
  const int code = run_cli({"search", "--table", csv_path.string(), "--json", "-"}, out, err);
  check.expect(code == 0, "search exited " + std::to_string(code) + ": " + err.str());
  if (code == 0) {
    const auto report = nlohmann::json::parse(out.str());
    check.expect(report["config"]["trials"] == 50, "trials default not echoed as 50");
    check.expect(report["config"]["step"] == 0.05, "step default not echoed as 0.05");
  }
  check.note(std::to_string(kGridTables) + " grid tables");
  check.note(std::to_string(kUnimodal) + " unimodal tables (" +
             num(static_cast<double>(early_evals) / kUnimodal) + " evaluations each)");
  check.note("simplex " + std::to_string(wins) + "/" + std::to_string(runs));
}

void formats(Check& check) {
  std::mt19937_64 rng(19);
  t::TempDir dir;
  constexpr int kFuzz = 300;
  for (int i = 0; i < kFuzz; ++i) {
    const Checkpoint ckpt = t::random_checkpoint(rng, {.max_tensors = 8});
    write_archive(ckpt, dir / "a.fta");
    const auto bytes = t::read_file(dir / "a.fta");
    check.expect(read_archive(dir / "a.fta") == ckpt, "round trip changed the checkpoint");
    check.expect(encode_archive(decode_archive(bytes)) == bytes, "re-encoding changed bytes");
  }

  const auto fixture = t::raw_archive(
      R"({"w":{"dtype":"f32","shape":[2],"data_offsets":[0,8]},)"
      R"("n":{"dtype":"i64","shape":[],"data_offsets":[8,16]}})",
      [] {
        auto data = t::bytes_of<float>({1.5f, -2.0f});
        const auto n = t::bytes_of<std::int64_t>({42});
        data.insert(data.end(), n.begin(), n.end());
        return data;
      }());
  const Checkpoint parsed = decode_archive(fixture);
  check.expect(parsed.size() == 2 && parsed.at("w").shape() == Shape{2} &&
                   parsed.at("w").values<float>()[0] == 1.5f &&
                   parsed.at("w").values<float>()[1] == -2.0f &&
                   parsed.at("n").values<std::int64_t>()[0] == 42,
               "hand-built fixture");

  const auto f32x2 = t::bytes_of<float>({1.0f, 2.0f});
  auto short_prefix = t::raw_archive("{}", {});
  short_prefix.resize(5);
  struct Case {
    const char* name;
    std::vector<std::byte> bytes;
    ErrorCode expected;
  };
  const std::vector<Case> corpus = {
      {"short prefix", short_prefix, ErrorCode::kTruncated},
      {"short data",
       t::raw_archive(R"({"w":{"dtype":"f32","shape":[2],"data_offsets":[0,8]}})",
                      t::bytes_of<float>({1.0f})),
       ErrorCode::kTruncated},
      {"overlap",
       t::raw_archive(R"({"a":{"dtype":"f32","shape":[2],"data_offsets":[0,8]},)"
                      R"("b":{"dtype":"f32","shape":[1],"data_offsets":[4,8]}})",
                      f32x2),
       ErrorCode::kBadOffsets},
      {"bad dtype",
       t::raw_archive(R"({"w":{"dtype":"f16","shape":[4],"data_offsets":[0,8]}})", f32x2),
       ErrorCode::kUnknownDtype},
      {"duplicate name",
       t::raw_archive(R"({"w":{"dtype":"f32","shape":[1],"data_offsets":[0,4]},)"
                      R"("w":{"dtype":"f32","shape":[1],"data_offsets":[4,8]}})",
                      f32x2),
       ErrorCode::kDuplicateName},
      {"bad json", t::raw_archive("{\"w\"", f32x2), ErrorCode::kMalformedHeader},
  };
  for (const Case& c : corpus) {
    const auto code = t::error_code_of([&] { decode_archive(c.bytes); });
    check.expect(code == c.expected, std::string("malformed case '") + c.name + "'");
  }
  const auto valid = encode_archive(t::random_checkpoint(rng));
  for (std::size_t n = 0; n < valid.size(); ++n) {
    const std::vector<std::byte> prefix(valid.begin(), valid.begin() + n);
    check.expect(t::error_code_of([&] { decode_archive(prefix); }).has_value(),
                 "a truncated file parsed");
  }
  check.note(std::to_string(kFuzz) + " fuzzed round trips");
  check.note(std::to_string(corpus.size()) + " malformed cases");
}

void schedule(Check& check) {
  for (std::uint32_t n : {2u, 10u, 100u, 1000u}) {
    CosineCycleSchedule s;
    s.iterations_per_cycle = n;
    s.cycles = 4;
    check.expect(lr_at(s, 0) == s.start_lr, "lr(0) != start_lr");
    check.expect(std::abs(lr_at(s, n / 2) - s.start_lr / 2) <= 1e-18, "lr(N/2) != start_lr/2");
    for (std::uint64_t it = 0; it < n; ++it) {
      for (std::uint32_t c = 1; c < s.cycles; ++c) {
        check.expect(lr_at(s, it) == lr_at(s, it + std::uint64_t{c} * n), "not periodic");
      }
    }
  }
  CosineCycleSchedule ten;
  ten.iterations_per_cycle = 100;
  ten.cycles = 10;
  ten.epochs_per_cycle = 1;
  const ScheduleTable table = emit_schedule(ten, cycle_end_epochs(ten));
  check.expect(table.marked_rows == 10, "marked rows " + std::to_string(table.marked_rows));
  check.expect(table.total_weights == 11, "total weights " + std::to_string(table.total_weights));
  check.note("10 cycles x 1 epoch: " + std::to_string(table.marked_rows) + " marked, " +
             std::to_string(table.total_weights) + " weights");
}

// Writes a checkpoint of `elements` f32 values spread over tensors of at
// most 4M elements, without holding it in memory.
void write_synthetic(const std::filesystem::path& path, std::uint64_t elements,
                     std::uint64_t seed) {
  constexpr std::uint64_t kTensor = 4u << 20;
  std::vector<TensorEntry> entries;
  for (std::uint64_t done = 0, i = 0; done < elements; ++i) {
    const std::uint64_t n = std::min(kTensor, elements - done);
    char name[32];
    std::snprintf(name, sizeof(name), "layer%03llu.weight", static_cast<unsigned long long>(i));
    entries.push_back({name, DType::kF32, {n}, 0, 0});
    done += n;
  }
  ArchiveWriter writer(path, entries);
  std::minstd_rand gen(static_cast<std::minstd_rand::result_type>(seed + 1));
  std::vector<float> buffer;
  for (const TensorEntry& e : writer.entries()) {
    buffer.resize(e.numel());
    for (float& v : buffer) v = static_cast<float>(gen()) * 1e-9f - 1.0f;
    writer.write(std::as_bytes(std::span(buffer)));
  }
  writer.finish();
}

void performance(Check& check) {
  constexpr std::uint64_t kParams = 100'000'000;
  t::TempDir dir;
  write_synthetic(dir / "a.fta", kParams, 1);
  write_synthetic(dir / "b.fta", kParams, 2);
  const auto size = std::filesystem::file_size(dir / "a.fta");
  const t::ProcessResult r =
      t::run_process({FUSEKIT_CLI_PATH, "fuse", (dir / "a.fta").string(),
                      (dir / "b.fta").string(), "--alpha", "0.5", "-o", (dir / "f.fta").string()});
  check.expect(r.exit_code == 0, "fuse exited " + std::to_string(r.exit_code) + ": " + r.err);
  check.expect(r.seconds < 30, "took " + num(r.seconds) + " s");
  const double ratio = static_cast<double>(r.peak_rss_bytes) / static_cast<double>(size);
  check.expect(ratio < 2.5, "peak RSS " + num(ratio) + "x one checkpoint");
  if (r.exit_code == 0) {
    check.expect(std::filesystem::file_size(dir / "f.fta") == size, "fused size differs");
    // Spot-check the first and last tensors against the in-memory fusion.
    ArchiveReader a(dir / "a.fta"), b(dir / "b.fta"), f(dir / "f.fta");
    for (std::size_t i : {std::size_t{0}, f.entries().size() - 1}) {
      const TensorEntry& e = f.entries()[i];
      Checkpoint ca, cb, cf;
      ca.emplace(e.name, a.read_tensor(a.entries()[i]));
      cb.emplace(e.name, b.read_tensor(b.entries()[i]));
      cf.emplace(e.name, f.read_tensor(e));
      check.expect(fuse_pair(ca, cb, 0.5) == cf, "fused tensor '" + e.name + "' differs");
    }
  }
  check.note("100M parameters in " + num(r.seconds) + " s");
  check.note("peak RSS " + num(r.peak_rss_bytes / 1048576.0) + " MiB = " + num(ratio) +
             "x one checkpoint");
}

}  // namespace
}  // namespace fusekit

int main() {
  struct Criterion {
    const char* name;
    void (*run)(fusekit::Check&);
  };
  const Criterion criteria[] = {
      {"fusion-algebra", fusekit::fusion_algebra},
      {"cosine", fusekit::similarity},
      {"oracle", fusekit::oracle},
      {"metrics-calibration", fusekit::metrics_and_calibration},
      {"search", fusekit::search},
      {"formats", fusekit::formats},
      {"schedule", fusekit::schedule},
      {"performance", fusekit::performance},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    fusekit::Check check;
    try {
      c.run(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    if (!check.ok()) ++failed;
    std::cout << (check.ok() ? "PASS " : "FAIL ") << c.name << ": " << check.detail()
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
