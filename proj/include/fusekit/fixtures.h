// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic inputs with planted properties: checkpoint pairs at a chosen
// cosine similarity, prediction sets with chosen correct fractions and
// overlap, and confidence maps with chosen per-bin accuracy.

#ifndef FUSEKIT_FIXTURES_H_
#define FUSEKIT_FIXTURES_H_

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "fusekit/dataset.h"
#include "fusekit/tensor_store.h"

namespace fusekit {

struct CheckpointFixtureParams {
  double cosine = 1.0;
  std::uint32_t width = 16;   // channels of the toy conv layers
  std::uint32_t classes = 4;  // output channels of the head
  DType dtype = DType::kF32;
};

// A small conv-net shaped layout (conv, batch norm with an i64 step counter,
// conv, head), zero-filled.
Checkpoint fixture_layout(std::uint32_t width, std::uint32_t classes,
                          DType dtype);

// theta_1 is Gaussian; theta_2 = |theta_1| (c u + sqrt(1 - c^2) v) with u the
// direction of theta_1 and v a random unit vector orthogonal to it. Integer
// tensors are identical in both.
std::pair<Checkpoint, Checkpoint> make_checkpoint_pair(
    const CheckpointFixtureParams& params, std::mt19937_64& rng);

struct PredictionFixtureParams {
  std::vector<double> correct_fractions = {0.6, 0.6};
  // Fraction of valid pixels correct in every model; each model's remaining
  // correct pixels are disjoint from all others.
  double overlap = 0.2;
  std::uint32_t classes = 4;
  std::uint32_t images = 2;
  std::uint32_t height = 16;
  std::uint32_t width = 16;
  double ignore_fraction = 0.0;
  bool with_probs = false;
};

struct PredictionFixture {
  Dataset gt;
  std::vector<Dataset> models;
};

PredictionFixture make_prediction_fixture(const PredictionFixtureParams& params,
                                          std::mt19937_64& rng);

struct CalibrationFixtureParams {
  std::vector<double> bin_accuracy;
  // Per-bin confidence; empty means each bin's confidence equals its
  // realized accuracy (a perfectly calibrated fixture).
  std::vector<double> bin_confidence;
  std::uint32_t pixels_per_bin = 1024;
  std::uint32_t classes = 2;
};

struct CalibrationFixture {
  Dataset gt;
  Dataset pred;
};

CalibrationFixture make_calibration_fixture(const CalibrationFixtureParams& params,
                                            std::mt19937_64& rng);

}  // namespace fusekit

#endif  // FUSEKIT_FIXTURES_H_
