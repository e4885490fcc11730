// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

// Prediction dumps on disk: a directory holding manifest.json
// ({"num_classes": C, "images": [ids...]}) and one archive per image id,
// <id>.fta, with tensors "labels" (u16 HxW), optional "confidence"
// (f32 HxW) and optional "probs" (f32 CxHxW). Ground truth uses the same
// layout with labels only.

#ifndef FUSEKIT_DATASET_H_
#define FUSEKIT_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fusekit/evaluation.h"
#include "fusekit/tensor_store.h"

namespace fusekit {

struct Dataset {
  std::uint32_t num_classes = 0;
  std::vector<std::string> ids;
  std::vector<PredictionSet> images;  // aligned with ids

  std::vector<LabelMap> label_maps() const;
};

PredictionSet prediction_from_checkpoint(const Checkpoint& ckpt);
Checkpoint prediction_to_checkpoint(const PredictionSet& pred);

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

// Throws unless both datasets list the same image ids in the same order with
// matching label-map shapes and class counts.
void check_aligned(const Dataset& a, const Dataset& b);

}  // namespace fusekit

#endif  // FUSEKIT_DATASET_H_
