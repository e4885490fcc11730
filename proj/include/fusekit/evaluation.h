// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

// Segmentation evaluation: oracle merging, confusion-matrix metrics, deep
// ensemble averaging and confidence calibration.

#ifndef FUSEKIT_EVALUATION_H_
#define FUSEKIT_EVALUATION_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fusekit {

// Void pixels, excluded from every metric.
inline constexpr std::uint16_t kDefaultIgnoreLabel = 255;
inline constexpr std::uint32_t kDefaultBins = 10;

struct LabelMap {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint16_t> labels;  // row-major

  LabelMap() = default;
  LabelMap(std::uint32_t h, std::uint32_t w, std::vector<std::uint16_t> l);

  std::size_t size() const { return labels.size(); }
  bool same_shape(const LabelMap& other) const {
    return height == other.height && width == other.width;
  }
  bool operator==(const LabelMap&) const = default;
};

// Model output for one image. `probs` is class-major (C x H x W).
struct PredictionSet {
  LabelMap labels;
  std::optional<std::vector<float>> confidence;
  std::optional<std::vector<float>> probs;
  std::uint32_t prob_classes = 0;

  bool operator==(const PredictionSet&) const = default;
};

// Consistency checks on a prediction (probability simplex, argmax agreement,
// confidence = max prob). Returns human-readable problems; empty when valid.
std::vector<std::string> validate_prediction(const PredictionSet& pred,
                                             double prob_tolerance = 1e-4);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::uint32_t num_classes);

  std::uint32_t num_classes() const { return num_classes_; }
  // counts[gt][pred]
  std::uint64_t at(std::uint32_t gt, std::uint32_t pred) const {
    return counts_[std::size_t{gt} * num_classes_ + pred];
  }
  std::uint64_t valid_pixels() const { return valid_pixels_; }
  std::uint64_t gt_total(std::uint32_t cls) const;
  std::uint64_t pred_total(std::uint32_t cls) const;

  // Throws kInvalidArgument on shape mismatch or an out-of-range label.
  void add(const LabelMap& pred, const LabelMap& gt, std::uint16_t ignore_label);
  void add_count(std::uint32_t gt, std::uint32_t pred, std::uint64_t n);
  void merge(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::uint32_t num_classes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t valid_pixels_ = 0;
};

ConfusionMatrix confusion_matrix(std::span<const LabelMap> pred,
                                 std::span<const LabelMap> gt,
                                 std::uint32_t num_classes,
                                 std::uint16_t ignore_label = kDefaultIgnoreLabel);

// Per-class values are nullopt for classes absent from both ground truth and
// predictions; those classes are left out of the macro averages. A class
// that appears in the ground truth but is never predicted stays in with
// IoU 0.
struct ClassScores {
  std::vector<std::optional<double>> iou;
  std::vector<std::optional<double>> precision_per_class;
  std::vector<std::optional<double>> recall_per_class;
  double miou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double pixel_accuracy = 0.0;
  std::uint32_t included_classes = 0;
  std::uint64_t valid_pixels = 0;
};

ClassScores compute_metrics(const ConfusionMatrix& cm);

// Keeps preds[0] except where some model hits the ground truth, in which
// case the hit wins. Void pixels pass through from preds[0].
LabelMap oracle_merge(std::span<const LabelMap> preds, const LabelMap& gt,
                      std::uint16_t ignore_label = kDefaultIgnoreLabel);

// models[m][i] is model m's prediction for image i.
ClassScores oracle_score(std::span<const std::vector<LabelMap>> models,
                         std::span<const LabelMap> gt, std::uint32_t num_classes,
                         std::uint16_t ignore_label = kDefaultIgnoreLabel);

// Per-pixel mean of the members' probability maps. Labels are the argmax of
// the stored (f32) mean, ties going to the lowest class id.
PredictionSet deep_ensemble_average(std::span<const PredictionSet> members);

struct CalibrationBin {
  std::uint64_t count = 0;
  std::uint64_t correct = 0;
  double accuracy = 0.0;    // correct / count, 0 for empty bins
  double confidence = 0.0;  // mean confidence, 0 for empty bins
};

struct CalibrationOptions {
  std::uint32_t bins = kDefaultBins;
  std::uint16_t ignore_label = kDefaultIgnoreLabel;
  // Weight bin gaps by |bin|/n instead of the flat 1/B.
  bool weighted_ece = false;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  double mce = 0.0;
  // KL(P || Q) in nats; nullopt when either histogram is empty.
  std::optional<double> kl;
  std::vector<double> correct_hist;    // P
  std::vector<double> incorrect_hist;  // Q
  std::uint64_t valid_pixels = 0;
  std::uint64_t correct_pixels = 0;
  bool weighted_ece = false;
};

// Equal-width bin over [0, 1]; a confidence of exactly 1 lands in the top bin.
std::uint32_t confidence_bin(double confidence, std::uint32_t bins);

// Sum over P(x) > 0 of P(x) * ln(P(x) / max(Q(x), 1e-12)).
double kl_divergence(std::span<const double> p, std::span<const double> q);

CalibrationReport calibration(std::span<const PredictionSet> preds,
                              std::span<const LabelMap> gt,
                              const CalibrationOptions& options = {});

}  // namespace fusekit

#endif  // FUSEKIT_EVALUATION_H_
