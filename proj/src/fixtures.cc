// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusekit/fixtures.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusekit/evaluation.h"

namespace fusekit {

namespace {

[[noreturn]] void infeasible(const std::string& message) {
  throw Error(ErrorCode::kInfeasible, message);
}

void store(Tensor& t, std::size_t i, double v) {
  if (t.dtype() == DType::kF32) {
    t.values<float>()[i] = static_cast<float>(v);
  } else {
    t.values<double>()[i] = v;
  }
}

std::uint64_t scaled_count(double fraction, std::uint64_t total) {
  return static_cast<std::uint64_t>(std::llround(fraction * static_cast<double>(total)));
}

std::uint16_t wrong_label(std::uint16_t gt, std::uint32_t classes,
                          std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> shift(1, classes - 1);
  return static_cast<std::uint16_t>((gt + shift(rng)) % classes);
}

// Random distribution over classes whose unique maximum sits at `label`.
void fill_probs(std::vector<float>& probs, std::size_t pixels, std::size_t p,
                std::uint16_t label, std::uint32_t classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  std::vector<double> w(classes);
  for (double& x : w) x = unit(rng);
  w[label] = 2.0 * *std::max_element(w.begin(), w.end());
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (std::uint32_t c = 0; c < classes; ++c) {
    probs[std::size_t{c} * pixels + p] = static_cast<float>(w[c] / sum);
  }
}

}  // namespace

Checkpoint fixture_layout(std::uint32_t width, std::uint32_t classes,
                          DType dtype) {
  if (width == 0 || classes == 0) {
    throw Error(ErrorCode::kInvalidArgument, "fixture layout needs positive sizes");
  }
  const std::uint64_t w = width;
  Checkpoint c;
  c.emplace("backbone.conv1.weight", Tensor(dtype, {w, 3, 3, 3}));
  c.emplace("backbone.bn1.weight", Tensor(dtype, {w}));
  c.emplace("backbone.bn1.bias", Tensor(dtype, {w}));
  c.emplace("backbone.bn1.running_mean", Tensor(dtype, {w}));
  c.emplace("backbone.bn1.running_var", Tensor(dtype, {w}));
  c.emplace("backbone.bn1.num_batches_tracked", Tensor::scalar<std::int64_t>(1000));
  c.emplace("backbone.conv2.weight", Tensor(dtype, {w, w, 3, 3}));
  c.emplace("head.weight", Tensor(dtype, {classes, w, 1, 1}));
  c.emplace("head.bias", Tensor(dtype, {classes}));
  return c;
}

std::pair<Checkpoint, Checkpoint> make_checkpoint_pair(
    const CheckpointFixtureParams& params, std::mt19937_64& rng) {
  const double c = params.cosine;
  if (!(c >= -1.0 && c <= 1.0)) infeasible("target cosine must lie in [-1, 1]");
  if (!is_float(params.dtype)) {
    throw Error(ErrorCode::kInvalidArgument, "fixture dtype must be f32 or f64");
  }
  Checkpoint a = fixture_layout(params.width, params.classes, params.dtype);
  Checkpoint b = a;

  const std::size_t n = flatten_concat(a).size();
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(n), v(n);
  for (double& e : x) e = gauss(rng);
  for (double& e : v) e = gauss(rng);

  // Round theta_1 to its stored precision first so the planted angle is
  // measured against what actually lands on disk.
  if (params.dtype == DType::kF32) {
    for (double& e : x) e = static_cast<float>(e);
  }
  const double norm_x = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = x[i] / norm_x;
  // Two Gram-Schmidt passes keep v orthogonal to machine precision.
  for (int pass = 0; pass < 2; ++pass) {
    const double proj = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i] -= proj * u[i];
  }
  const double norm_v = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));

  std::size_t offset = 0;
  for (auto& [name, ta] : a) {
    if (!is_flattenable(ta.dtype(), ta.shape())) continue;
    Tensor& tb = b.at(name);
    for (std::size_t i = 0; i < ta.numel(); ++i, ++offset) {
      store(ta, i, x[offset]);
      store(tb, i, norm_x * (c * u[offset] + s * v[offset] / norm_v));
    }
  }
  if (c == 1.0) b = a;
  return {std::move(a), std::move(b)};
}

PredictionFixture make_prediction_fixture(const PredictionFixtureParams& params,
                                          std::mt19937_64& rng) {
  const std::size_t k = params.correct_fractions.size();
  if (k < 2) infeasible("prediction fixtures need at least two models");
  if (params.classes < 2) infeasible("prediction fixtures need at least two classes");
  if (params.classes > kDefaultIgnoreLabel) infeasible("too many classes for u16 labels");
  if (params.images == 0 || params.height == 0 || params.width == 0) {
    infeasible("prediction fixtures need non-empty images");
  }
  if (!(params.ignore_fraction >= 0.0 && params.ignore_fraction < 1.0)) {
    infeasible("ignore fraction must lie in [0, 1)");
  }

  const std::size_t per_image = std::size_t{params.height} * params.width;
  const std::size_t total = per_image * params.images;
  const std::uint64_t ignored = scaled_count(params.ignore_fraction, total);
  const std::uint64_t valid = total - ignored;

  const std::uint64_t core = scaled_count(params.overlap, valid);
  if (params.overlap < 0.0) infeasible("overlap must be non-negative");
  std::vector<std::uint64_t> extra(k);
  std::uint64_t used = core;
  for (std::size_t m = 0; m < k; ++m) {
    const double f = params.correct_fractions[m];
    if (!(f >= 0.0 && f <= 1.0)) infeasible("correct fractions must lie in [0, 1]");
    const std::uint64_t correct = scaled_count(f, valid);
    if (correct < core) {
      infeasible("overlap " + std::to_string(params.overlap) +
                 " exceeds correct fraction " + std::to_string(f));
    }
    extra[m] = correct - core;
    used += extra[m];
  }
  if (used > valid) {
    infeasible("correct sets need " + std::to_string(used) + " pixels but only " +
               std::to_string(valid) + " are valid");
  }

  // Pixel roles along a random permutation: ignored, then the shared core,
  // then each model's private correct pixels, then pixels wrong everywhere.
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  // owner: -2 ignored, -1 core, m private to model m, k wrong everywhere
  std::vector<int> owner(total, static_cast<int>(k));
  std::size_t pos = 0;
  for (std::uint64_t i = 0; i < ignored; ++i) owner[order[pos++]] = -2;
  for (std::uint64_t i = 0; i < core; ++i) owner[order[pos++]] = -1;
  for (std::size_t m = 0; m < k; ++m) {
    for (std::uint64_t i = 0; i < extra[m]; ++i) owner[order[pos++]] = static_cast<int>(m);
  }

  std::uniform_int_distribution<std::uint32_t> any_class(0, params.classes - 1);
  PredictionFixture fx;
  fx.gt.num_classes = params.classes;
  fx.models.resize(k);
  for (auto& m : fx.models) m.num_classes = params.classes;

  for (std::uint32_t img = 0; img < params.images; ++img) {
    const std::string id = "img_" + std::to_string(img);
    std::vector<std::uint16_t> gt(per_image);
    std::vector<std::vector<std::uint16_t>> pred(k, std::vector<std::uint16_t>(per_image));
    for (std::size_t p = 0; p < per_image; ++p) {
      const int role = owner[img * per_image + p];
      if (role == -2) {
        gt[p] = kDefaultIgnoreLabel;
        for (auto& lm : pred) lm[p] = static_cast<std::uint16_t>(any_class(rng));
        continue;
      }
      gt[p] = static_cast<std::uint16_t>(any_class(rng));
      for (std::size_t m = 0; m < k; ++m) {
        const bool correct = role == -1 || role == static_cast<int>(m);
        pred[m][p] = correct ? gt[p] : wrong_label(gt[p], params.classes, rng);
      }
    }
    fx.gt.ids.push_back(id);
    PredictionSet gt_set;
    gt_set.labels = LabelMap(params.height, params.width, std::move(gt));
    fx.gt.images.push_back(std::move(gt_set));
    for (std::size_t m = 0; m < k; ++m) {
      PredictionSet ps;
      ps.labels = LabelMap(params.height, params.width, std::move(pred[m]));
      if (params.with_probs) {
        ps.prob_classes = params.classes;
        ps.probs.emplace(std::size_t{params.classes} * per_image);
        ps.confidence.emplace(per_image);
        for (std::size_t p = 0; p < per_image; ++p) {
          fill_probs(*ps.probs, per_image, p, ps.labels.labels[p], params.classes, rng);
          float best = 0.0f;
          for (std::uint32_t c = 0; c < params.classes; ++c) {
            best = std::max(best, (*ps.probs)[std::size_t{c} * per_image + p]);
          }
          (*ps.confidence)[p] = best;
        }
      }
      fx.models[m].ids.push_back(id);
      fx.models[m].images.push_back(std::move(ps));
    }
  }
  return fx;
}

CalibrationFixture make_calibration_fixture(const CalibrationFixtureParams& params,
                                            std::mt19937_64& rng) {
  const auto bins = static_cast<std::uint32_t>(params.bin_accuracy.size());
  if (bins == 0) infeasible("calibration fixture needs at least one bin");
  if (!params.bin_confidence.empty() && params.bin_confidence.size() != bins) {
    infeasible("bin confidences and accuracies differ in count");
  }
  if (params.pixels_per_bin == 0) infeasible("bins need at least one pixel");
  if (params.classes < 2) infeasible("calibration fixtures need at least two classes");

  const std::uint32_t n = params.pixels_per_bin;
  std::vector<std::uint16_t> gt(std::size_t{bins} * n);
  std::vector<std::uint16_t> pred(gt.size());
  std::vector<float> conf(gt.size());
  std::uniform_int_distribution<std::uint32_t> any_class(0, params.classes - 1);

  for (std::uint32_t b = 0; b < bins; ++b) {
    const double acc = params.bin_accuracy[b];
    if (!(acc >= 0.0 && acc <= 1.0)) infeasible("bin accuracies must lie in [0, 1]");
    const std::uint64_t correct = scaled_count(acc, n);
    const double c = params.bin_confidence.empty()
                         ? static_cast<double>(correct) / n
                         : params.bin_confidence[b];
    const float stored = static_cast<float>(c);
    if (!(stored >= 0.0f && stored <= 1.0f) || confidence_bin(stored, bins) != b) {
      infeasible("confidence " + std::to_string(c) + " does not fall into bin " +
                 std::to_string(b) + " of " + std::to_string(bins));
    }
    std::vector<std::uint32_t> cols(n);
    std::iota(cols.begin(), cols.end(), 0);
    std::shuffle(cols.begin(), cols.end(), rng);
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::size_t p = std::size_t{b} * n + cols[i];
      gt[p] = static_cast<std::uint16_t>(any_class(rng));
      pred[p] = i < correct ? gt[p] : wrong_label(gt[p], params.classes, rng);
      conf[p] = stored;
    }
  }

  CalibrationFixture fx;
  fx.gt.num_classes = fx.pred.num_classes = params.classes;
  fx.gt.ids = fx.pred.ids = {"bins"};
  PredictionSet g;
  g.labels = LabelMap(bins, n, std::move(gt));
  fx.gt.images.push_back(std::move(g));
  PredictionSet p;
  p.labels = LabelMap(bins, n, std::move(pred));
  p.confidence = std::move(conf);
  fx.pred.images.push_back(std::move(p));
  return fx;
}

}  // namespace fusekit
