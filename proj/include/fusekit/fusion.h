// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

// Weight fusion: element-wise combinations of compatible checkpoints, equal
// averaging (SWA) and cosine similarity in weight space.
//
// Float tensors are accumulated in f64 and rounded once to the stored dtype.
// Integer tensors (step counters and the like) are carried over only when
// bit-identical across all inputs.

#ifndef FUSEKIT_FUSION_H_
#define FUSEKIT_FUSION_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fusekit/tensor_store.h"

namespace fusekit {

// Cosine similarity below which fusion rarely pays off.
inline constexpr double kSimilarityGuideline = 0.925;

struct FusionOptions {
  // Allow coefficients outside [0, 1] (they must still sum to 1).
  bool extrapolate = false;
};

// One coefficient per input, summing to 1 within 1e-6.
using FusionCoefficients = std::vector<double>;

void validate_coefficients(std::span<const double> coeffs, std::size_t inputs,
                           const FusionOptions& options = {});

FusionCoefficients uniform_coefficients(std::size_t k);

// alpha * a + (1 - alpha) * b.
Checkpoint fuse_pair(const Checkpoint& a, const Checkpoint& b, double alpha,
                     const FusionOptions& options = {});

Checkpoint fuse_many(std::span<const Checkpoint> ckpts,
                     std::span<const double> coeffs,
                     const FusionOptions& options = {});

// Equal-weight mean; a single checkpoint is returned unchanged.
Checkpoint swa_average(std::span<const Checkpoint> ckpts);

struct FuseFilesSummary {
  std::uint64_t fused_elements = 0;
  std::vector<std::string> copied;  // integer tensors carried over verbatim
};

// Streaming variant over archives on disk. Memory use is bounded by a fixed
// chunk per input regardless of checkpoint size. Output bytes are identical
// to write_archive(fuse_many(read_archive(...)...)).
FuseFilesSummary fuse_archives(std::span<const std::filesystem::path> inputs,
                               std::span<const double> coeffs,
                               const std::filesystem::path& output,
                               const FusionOptions& options = {});

struct SimilarityReport {
  double cosine = 0.0;
  std::uint64_t dimension = 0;
  std::vector<std::string> skipped;  // scalar and integer tensors

  bool below_guideline() const;
};

SimilarityReport cosine_similarity(const Checkpoint& a, const Checkpoint& b);

// Cosine of two equally long vectors, clamped to [-1, 1].
double cosine(std::span<const double> x, std::span<const double> y);

}  // namespace fusekit

#endif  // FUSEKIT_FUSION_H_
