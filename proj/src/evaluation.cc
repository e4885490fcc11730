// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusekit/evaluation.h"

#include <algorithm>
#include <cmath>

#include "fusekit/error.h"

namespace fusekit {

namespace {

constexpr double kKlEpsilon = 1e-12;

[[noreturn]] void invalid(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, message);
}

std::string shape_of(const LabelMap& m) {
  return std::to_string(m.height) + "x" + std::to_string(m.width);
}

void require_same_shape(const LabelMap& a, const LabelMap& b,
                        const char* what) {
  if (!a.same_shape(b)) {
    invalid(std::string(what) + ": shape " + shape_of(a) + " vs " +
            shape_of(b));
  }
}

}  // namespace

LabelMap::LabelMap(std::uint32_t h, std::uint32_t w,
                   std::vector<std::uint16_t> l)
    : height(h), width(w), labels(std::move(l)) {
  if (labels.size() != std::size_t{h} * w) {
    invalid("label map holds " + std::to_string(labels.size()) +
            " labels for a " + std::to_string(h) + "x" + std::to_string(w) +
            " image");
  }
}

std::vector<std::string> validate_prediction(const PredictionSet& pred,
                                             double prob_tolerance) {
  std::vector<std::string> problems;
  const std::size_t pixels = pred.labels.size();
  if (pred.confidence) {
    if (pred.confidence->size() != pixels) {
      problems.push_back("confidence map size differs from label map");
    } else {
      for (float c : *pred.confidence) {
        if (!(c >= 0.0f && c <= 1.0f)) {
          problems.push_back("confidence outside [0, 1]");
          break;
        }
      }
    }
  }
  if (!pred.probs) return problems;
  const std::uint32_t classes = pred.prob_classes;
  if (classes == 0 || pred.probs->size() != std::size_t{classes} * pixels) {
    problems.push_back("probability map size differs from C x H x W");
    return problems;
  }
  const auto& probs = *pred.probs;
  std::size_t bad_sum = 0, bad_argmax = 0, bad_conf = 0, negative = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    double sum = 0.0;
    float best = probs[p];
    std::uint32_t arg = 0;
    for (std::uint32_t c = 0; c < classes; ++c) {
      const float v = probs[std::size_t{c} * pixels + p];
      if (v < 0.0f) ++negative;
      sum += v;
      if (v > best) {
        best = v;
        arg = c;
      }
    }
    if (std::abs(sum - 1.0) > prob_tolerance) ++bad_sum;
    if (pred.labels.labels[p] != arg) ++bad_argmax;
    if (pred.confidence && pred.confidence->size() == pixels &&
        (*pred.confidence)[p] != best) {
      ++bad_conf;
    }
  }
  if (negative) problems.push_back(std::to_string(negative) + " negative probabilities");
  if (bad_sum) problems.push_back(std::to_string(bad_sum) + " pixels whose probabilities do not sum to 1");
  if (bad_argmax) problems.push_back(std::to_string(bad_argmax) + " pixels whose label is not the argmax");
  if (bad_conf) problems.push_back(std::to_string(bad_conf) + " pixels whose confidence is not the max probability");
  return problems;
}

ConfusionMatrix::ConfusionMatrix(std::uint32_t num_classes)
    : num_classes_(num_classes),
      counts_(std::size_t{num_classes} * num_classes, 0) {
  if (num_classes == 0) invalid("number of classes must be positive");
}

std::uint64_t ConfusionMatrix::gt_total(std::uint32_t cls) const {
  std::uint64_t n = 0;
  for (std::uint32_t p = 0; p < num_classes_; ++p) n += at(cls, p);
  return n;
}

std::uint64_t ConfusionMatrix::pred_total(std::uint32_t cls) const {
  std::uint64_t n = 0;
  for (std::uint32_t g = 0; g < num_classes_; ++g) n += at(g, cls);
  return n;
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt,
                          std::uint16_t ignore_label) {
  require_same_shape(pred, gt, "prediction and ground truth differ");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::uint16_t g = gt.labels[i];
    if (g == ignore_label) continue;
    const std::uint16_t p = pred.labels[i];
    if (g >= num_classes_) {
      invalid("ground-truth label " + std::to_string(g) + " out of range for " +
              std::to_string(num_classes_) + " classes");
    }
    if (p >= num_classes_) {
      invalid("predicted label " + std::to_string(p) + " out of range for " +
              std::to_string(num_classes_) + " classes");
    }
    ++counts_[std::size_t{g} * num_classes_ + p];
    ++valid_pixels_;
  }
}

void ConfusionMatrix::add_count(std::uint32_t gt, std::uint32_t pred,
                                std::uint64_t n) {
  if (gt >= num_classes_ || pred >= num_classes_) {
    invalid("class index out of range");
  }
  counts_[std::size_t{gt} * num_classes_ + pred] += n;
  valid_pixels_ += n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    invalid("cannot merge confusion matrices of different class counts");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  valid_pixels_ += other.valid_pixels_;
}

ConfusionMatrix confusion_matrix(std::span<const LabelMap> pred,
                                 std::span<const LabelMap> gt,
                                 std::uint32_t num_classes,
                                 std::uint16_t ignore_label) {
  if (pred.size() != gt.size()) {
    invalid(std::to_string(pred.size()) + " predictions for " +
            std::to_string(gt.size()) + " ground-truth images");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < gt.size(); ++i) cm.add(pred[i], gt[i], ignore_label);
  return cm;
}

ClassScores compute_metrics(const ConfusionMatrix& cm) {
  const std::uint32_t c = cm.num_classes();
  ClassScores s;
  s.iou.resize(c);
  s.precision_per_class.resize(c);
  s.recall_per_class.resize(c);
  s.valid_pixels = cm.valid_pixels();

  double iou_sum = 0.0, precision_sum = 0.0, recall_sum = 0.0;
  std::uint64_t hits = 0;
  for (std::uint32_t k = 0; k < c; ++k) {
    const std::uint64_t tp = cm.at(k, k);
    const std::uint64_t gt = cm.gt_total(k);
    const std::uint64_t pred = cm.pred_total(k);
    hits += tp;
    if (gt == 0 && pred == 0) continue;
    const std::uint64_t fp = pred - tp;
    const std::uint64_t fn = gt - tp;
    const double iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    const double precision =
        pred ? static_cast<double>(tp) / static_cast<double>(pred) : 0.0;
    const double recall = gt ? static_cast<double>(tp) / static_cast<double>(gt) : 0.0;
    s.iou[k] = iou;
    s.precision_per_class[k] = precision;
    s.recall_per_class[k] = recall;
    iou_sum += iou;
    precision_sum += precision;
    recall_sum += recall;
    ++s.included_classes;
  }
  if (s.included_classes == 0) {
    throw Error(ErrorCode::kUndefined,
                "no class occurs in ground truth or predictions");
  }
  const double n = s.included_classes;
  s.miou = iou_sum / n;
  s.precision = precision_sum / n;
  s.recall = recall_sum / n;
  s.pixel_accuracy =
      static_cast<double>(hits) / static_cast<double>(cm.valid_pixels());
  return s;
}

LabelMap oracle_merge(std::span<const LabelMap> preds, const LabelMap& gt,
                      std::uint16_t ignore_label) {
  if (preds.empty()) invalid("oracle needs at least one prediction");
  for (const LabelMap& p : preds) {
    require_same_shape(p, gt, "oracle input differs from ground truth");
  }
  LabelMap merged = preds[0];
  for (const LabelMap& p : preds) {
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const std::uint16_t g = gt.labels[i];
      if (g != ignore_label && p.labels[i] == g) merged.labels[i] = g;
    }
  }
  return merged;
}

ClassScores oracle_score(std::span<const std::vector<LabelMap>> models,
                         std::span<const LabelMap> gt, std::uint32_t num_classes,
                         std::uint16_t ignore_label) {
  if (models.empty()) invalid("oracle needs at least one model");
  for (const auto& m : models) {
    if (m.size() != gt.size()) {
      invalid("model has " + std::to_string(m.size()) + " images, ground truth " +
              std::to_string(gt.size()));
    }
  }
  ConfusionMatrix cm(num_classes);
  std::vector<LabelMap> per_image(models.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (std::size_t m = 0; m < models.size(); ++m) per_image[m] = models[m][i];
    cm.add(oracle_merge(per_image, gt[i], ignore_label), gt[i], ignore_label);
  }
  return compute_metrics(cm);
}

PredictionSet deep_ensemble_average(std::span<const PredictionSet> members) {
  if (members.empty()) invalid("ensemble needs at least one member");
  const PredictionSet& first = members[0];
  const std::uint32_t classes = first.prob_classes;
  for (const PredictionSet& m : members) {
    if (!m.probs) invalid("ensemble member lacks probability maps");
    require_same_shape(m.labels, first.labels, "ensemble members differ");
    if (m.prob_classes != classes ||
        m.probs->size() != std::size_t{classes} * first.labels.size()) {
      invalid("ensemble members differ in probability map shape");
    }
  }
  if (classes == 0) invalid("probability maps have no classes");

  const std::size_t pixels = first.labels.size();
  const double k = static_cast<double>(members.size());
  PredictionSet out;
  out.prob_classes = classes;
  out.probs.emplace(std::size_t{classes} * pixels);
  out.confidence.emplace(pixels);
  out.labels = LabelMap(first.labels.height, first.labels.width,
                        std::vector<std::uint16_t>(pixels));
  auto& probs = *out.probs;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double sum = 0.0;
    for (const PredictionSet& m : members) sum += (*m.probs)[i];
    probs[i] = static_cast<float>(sum / k);
  }
  for (std::size_t p = 0; p < pixels; ++p) {
    float best = probs[p];
    std::uint16_t arg = 0;
    for (std::uint32_t c = 1; c < classes; ++c) {
      const float v = probs[std::size_t{c} * pixels + p];
      if (v > best) {
        best = v;
        arg = static_cast<std::uint16_t>(c);
      }
    }
    out.labels.labels[p] = arg;
    (*out.confidence)[p] = best;
  }
  return out;
}

std::uint32_t confidence_bin(double confidence, std::uint32_t bins) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    invalid("confidence " + std::to_string(confidence) + " outside [0, 1]");
  }
  const auto bin = static_cast<std::uint32_t>(std::floor(confidence * bins));
  return std::min(bin, bins - 1);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) invalid("histograms differ in length");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], kKlEpsilon));
  }
  return kl;
}

CalibrationReport calibration(std::span<const PredictionSet> preds,
                              std::span<const LabelMap> gt,
                              const CalibrationOptions& options) {
  if (options.bins == 0) invalid("bin count must be at least 1");
  if (preds.size() != gt.size()) {
    invalid(std::to_string(preds.size()) + " predictions for " +
            std::to_string(gt.size()) + " ground-truth images");
  }
  const std::uint32_t b = options.bins;
  std::vector<std::uint64_t> count(b, 0), correct(b, 0);
  std::vector<double> conf_sum(b, 0.0);

  for (std::size_t i = 0; i < gt.size(); ++i) {
    const PredictionSet& pred = preds[i];
    if (!pred.confidence) invalid("prediction lacks a confidence map");
    require_same_shape(pred.labels, gt[i], "prediction and ground truth differ");
    if (pred.confidence->size() != gt[i].size()) {
      invalid("confidence map size differs from label map");
    }
    for (std::size_t p = 0; p < gt[i].size(); ++p) {
      const std::uint16_t g = gt[i].labels[p];
      if (g == options.ignore_label) continue;
      const double c = (*pred.confidence)[p];
      const std::uint32_t bin = confidence_bin(c, b);
      ++count[bin];
      conf_sum[bin] += c;
      if (pred.labels.labels[p] == g) ++correct[bin];
    }
  }

  CalibrationReport report;
  report.weighted_ece = options.weighted_ece;
  report.bins.resize(b);
  for (std::uint32_t k = 0; k < b; ++k) {
    report.valid_pixels += count[k];
    report.correct_pixels += correct[k];
  }
  if (report.valid_pixels == 0) {
    throw Error(ErrorCode::kUndefined, "no valid pixels to calibrate");
  }
  const std::uint64_t incorrect_pixels =
      report.valid_pixels - report.correct_pixels;

  double gap_sum = 0.0;
  for (std::uint32_t k = 0; k < b; ++k) {
    CalibrationBin& bin = report.bins[k];
    bin.count = count[k];
    bin.correct = correct[k];
    if (bin.count == 0) continue;
    bin.accuracy = static_cast<double>(bin.correct) / static_cast<double>(bin.count);
    bin.confidence = conf_sum[k] / static_cast<double>(bin.count);
    const double gap = std::abs(bin.accuracy - bin.confidence);
    gap_sum += options.weighted_ece
                   ? gap * static_cast<double>(bin.count) /
                         static_cast<double>(report.valid_pixels)
                   : gap;
    report.mce = std::max(report.mce, gap);
  }
  report.ece = options.weighted_ece ? gap_sum : gap_sum / b;
  // A mean of gaps cannot exceed the largest one; drop rounding excess.
  report.ece = std::min(report.ece, report.mce);

  report.correct_hist.assign(b, 0.0);
  report.incorrect_hist.assign(b, 0.0);
  for (std::uint32_t k = 0; k < b; ++k) {
    if (report.correct_pixels) {
      report.correct_hist[k] = static_cast<double>(correct[k]) /
                               static_cast<double>(report.correct_pixels);
    }
    if (incorrect_pixels) {
      report.incorrect_hist[k] = static_cast<double>(count[k] - correct[k]) /
                                 static_cast<double>(incorrect_pixels);
    }
  }
  if (report.correct_pixels && incorrect_pixels) {
    report.kl = kl_divergence(report.correct_hist, report.incorrect_hist);
  }
  return report;
}

}  // namespace fusekit
