// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusekit/fusion.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "fusekit/parallel.h"

namespace fusekit {

namespace {

constexpr double kCoefficientSumTolerance = 1e-6;
// Tolerance on the guideline comparison so that a pair planted exactly at the
// guideline is not flagged because of rounding in the last bits.
constexpr double kGuidelineSlack = 1e-9;
constexpr std::size_t kChunkElements = std::size_t{1} << 20;
constexpr std::size_t kParallelGrain = std::size_t{1} << 16;

template <typename T>
bool bit_equal(T a, T b) {
  return std::memcmp(&a, &b, sizeof(T)) == 0;
}

// Fuses n elements. Elements bit-identical across all inputs are passed
// through (so -0.0 and +0.0 count as different),
// otherwise terms with a non-zero coefficient are summed in input order.
// Returns the index of the first non-finite result, or n.
template <typename T>
std::size_t fuse_elements(std::span<const T* const> inputs,
                          std::span<const double> coeffs, T* out,
                          std::size_t n) {
  const std::size_t k = inputs.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T first = inputs[0][i];
    bool same = true;
    for (std::size_t j = 1; j < k && same; ++j) same = bit_equal(inputs[j][i], first);
    if (same) {
      out[i] = first;
      continue;
    }
    double acc = 0.0;
    bool started = false;
    for (std::size_t j = 0; j < k; ++j) {
      if (coeffs[j] == 0.0) continue;
      const double term = coeffs[j] * static_cast<double>(inputs[j][i]);
      acc = started ? acc + term : term;
      started = true;
    }
    const T value = static_cast<T>(acc);
    if (!std::isfinite(value)) return i;
    out[i] = value;
  }
  return n;
}

template <typename T>
void fuse_range(const std::string& name, std::span<const T* const> inputs,
                std::span<const double> coeffs, T* out, std::size_t n) {
  parallel_for(n, kParallelGrain, [&](std::size_t begin, std::size_t end) {
    std::vector<const T*> shifted(inputs.size());
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      shifted[j] = inputs[j] + begin;
    }
    std::size_t bad = fuse_elements<T>(shifted, coeffs, out + begin,
                                       end - begin);
    if (bad != end - begin) {
      throw Error(ErrorCode::kNonFinite,
                  "non-finite fused value in '" + name + "' at element " +
                      std::to_string(begin + bad));
    }
  });
}

// Dispatches on float dtype for raw byte buffers.
void fuse_bytes(const std::string& name, DType dtype,
                std::span<const std::byte* const> inputs,
                std::span<const double> coeffs, std::byte* out,
                std::size_t n) {
  auto run = [&]<typename T>() {
    std::vector<const T*> typed(inputs.size());
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      typed[j] = reinterpret_cast<const T*>(inputs[j]);
    }
    fuse_range<T>(name, typed, coeffs, reinterpret_cast<T*>(out), n);
  };
  if (dtype == DType::kF32) {
    run.template operator()<float>();
  } else {
    run.template operator()<double>();
  }
}

[[noreturn]] void integer_mismatch(const std::string& name) {
  throw Error(ErrorCode::kIncompatible,
              "integer tensor '" + name +
                  "' differs between checkpoints and cannot be averaged");
}

Checkpoint fuse_checked(std::span<const Checkpoint* const> ckpts,
                        std::span<const double> coeffs) {
  Checkpoint fused;
  for (const auto& [name, first] : *ckpts[0]) {
    std::vector<const Tensor*> members;
    members.reserve(ckpts.size());
    for (const Checkpoint* c : ckpts) members.push_back(&c->at(name));

    if (!is_float(first.dtype())) {
      for (const Tensor* t : members) {
        if (!(*t == first)) integer_mismatch(name);
      }
      fused.emplace(name, first);
      continue;
    }

    Tensor out(first.dtype(), first.shape());
    std::vector<const std::byte*> inputs;
    for (const Tensor* t : members) inputs.push_back(t->bytes().data());
    fuse_bytes(name, first.dtype(), inputs, coeffs, out.bytes().data(),
               first.numel());
    fused.emplace(name, std::move(out));
  }
  return fused;
}

}  // namespace

void validate_coefficients(std::span<const double> coeffs, std::size_t inputs,
                           const FusionOptions& options) {
  if (coeffs.size() != inputs) {
    throw Error(ErrorCode::kInvalidArgument,
                "expected " + std::to_string(inputs) + " coefficients, got " +
                    std::to_string(coeffs.size()));
  }
  double sum = 0.0;
  for (double c : coeffs) {
    if (!std::isfinite(c)) {
      throw Error(ErrorCode::kInvalidArgument, "coefficients must be finite");
    }
    if (!options.extrapolate && (c < 0.0 || c > 1.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "coefficient " + std::to_string(c) +
                      " outside [0, 1]; pass extrapolate to allow it");
    }
    sum += c;
  }
  if (std::abs(sum - 1.0) > kCoefficientSumTolerance) {
    throw Error(ErrorCode::kInvalidArgument,
                "coefficients must sum to 1 (got " + std::to_string(sum) + ")");
  }
}

FusionCoefficients uniform_coefficients(std::size_t k) {
  return FusionCoefficients(k, 1.0 / static_cast<double>(k));
}

Checkpoint fuse_pair(const Checkpoint& a, const Checkpoint& b, double alpha,
                     const FusionOptions& options) {
  if (!std::isfinite(alpha) ||
      (!options.extrapolate && (alpha < 0.0 || alpha > 1.0))) {
    throw Error(ErrorCode::kInvalidArgument,
                "alpha must lie in [0, 1] (got " + std::to_string(alpha) + ")");
  }
  check_compatible(a, b);
  const Checkpoint* const pair[] = {&a, &b};
  const double coeffs[] = {alpha, 1.0 - alpha};
  return fuse_checked(pair, coeffs);
}

Checkpoint fuse_many(std::span<const Checkpoint> ckpts,
                     std::span<const double> coeffs,
                     const FusionOptions& options) {
  if (ckpts.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "fusion needs at least two checkpoints");
  }
  validate_coefficients(coeffs, ckpts.size(), options);
  for (std::size_t i = 1; i < ckpts.size(); ++i) {
    check_compatible(ckpts[0], ckpts[i]);
  }
  std::vector<const Checkpoint*> members;
  for (const Checkpoint& c : ckpts) members.push_back(&c);
  return fuse_checked(members, coeffs);
}

Checkpoint swa_average(std::span<const Checkpoint> ckpts) {
  if (ckpts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "SWA needs at least one checkpoint");
  }
  if (ckpts.size() == 1) return ckpts[0];
  return fuse_many(ckpts, uniform_coefficients(ckpts.size()));
}

FuseFilesSummary fuse_archives(std::span<const std::filesystem::path> inputs,
                               std::span<const double> coeffs,
                               const std::filesystem::path& output,
                               const FusionOptions& options) {
  if (inputs.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no input archives");
  }
  validate_coefficients(coeffs, inputs.size(), options);

  std::vector<ArchiveReader> readers;
  readers.reserve(inputs.size());
  for (const auto& path : inputs) readers.emplace_back(path);
  for (std::size_t i = 1; i < readers.size(); ++i) {
    try {
      check_compatible(readers[0].entries(), readers[i].entries());
    } catch (const Error& e) {
      throw Error(e.code(), inputs[0].string() + " vs " + inputs[i].string() +
                                ": " + e.what());
    }
  }

  FuseFilesSummary summary;
  ArchiveWriter writer(output, readers[0].entries());
  const std::size_t k = readers.size();
  std::vector<std::vector<std::byte>> in_buf(k);
  std::vector<std::byte> out_buf;
  std::vector<const std::byte*> in_ptr(k);

  for (std::size_t t = 0; t < readers[0].entries().size(); ++t) {
    const TensorEntry& entry = readers[0].entries()[t];
    const std::size_t elem = dtype_size(entry.dtype);
    const std::uint64_t total = entry.numel();
    const bool floating = is_float(entry.dtype);

    for (std::uint64_t done = 0; done < total;) {
      const std::size_t n =
          static_cast<std::size_t>(std::min<std::uint64_t>(kChunkElements,
                                                           total - done));
      for (std::size_t j = 0; j < k; ++j) {
        in_buf[j].resize(n * elem);
        readers[j].read_bytes(readers[j].entries()[t], done * elem, in_buf[j]);
        in_ptr[j] = in_buf[j].data();
      }
      if (floating) {
        out_buf.resize(n * elem);
        fuse_bytes(entry.name, entry.dtype, in_ptr, coeffs, out_buf.data(), n);
        writer.write(out_buf);
      } else {
        for (std::size_t j = 1; j < k; ++j) {
          if (in_buf[j] != in_buf[0]) integer_mismatch(entry.name);
        }
        writer.write(in_buf[0]);
      }
      done += n;
    }
    if (floating) {
      summary.fused_elements += total;
    } else {
      summary.copied.push_back(entry.name);
    }
  }
  writer.finish();
  return summary;
}

bool SimilarityReport::below_guideline() const {
  return cosine < kSimilarityGuideline - kGuidelineSlack;
}

double cosine(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kInvalidArgument, "vectors differ in length");
  }
  if (x.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "no parameters to compare (empty flattened vector)");
  }
  long double dot = 0.0L;
  long double xx = 0.0L;
  long double yy = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double a = x[i];
    const long double b = y[i];
    dot += a * b;
    xx += a * a;
    yy += b * b;
  }
  if (xx == 0.0L || yy == 0.0L) {
    throw Error(ErrorCode::kInvalidArgument,
                "cosine similarity undefined for a zero-norm parameter vector");
  }
  const double c = static_cast<double>(dot / std::sqrt(xx * yy));
  return std::clamp(c, -1.0, 1.0);
}

SimilarityReport cosine_similarity(const Checkpoint& a, const Checkpoint& b) {
  check_compatible(a, b);
  SimilarityReport report;
  for (const auto& [name, t] : a) {
    if (!is_flattenable(t.dtype(), t.shape())) report.skipped.push_back(name);
  }
  const std::vector<double> x = flatten_concat(a);
  const std::vector<double> y = flatten_concat(b);
  report.cosine = cosine(x, y);
  report.dimension = x.size();
  return report;
}

}  // namespace fusekit
