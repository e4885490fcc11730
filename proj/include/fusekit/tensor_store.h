// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

// Tensor archives (.fta): [u64 LE header length][JSON header][packed data].
//
// The header maps every tensor name to {"dtype", "shape", "data_offsets"},
// where data_offsets is a half-open byte range into the data section. The
// ranges must tile the data section exactly once sorted. Writers emit the
// canonical form: names in byte-lexicographic order, offsets densely packed
// in that order, compact JSON with sorted keys.

#ifndef FUSEKIT_TENSOR_STORE_H_
#define FUSEKIT_TENSOR_STORE_H_

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusekit/error.h"

namespace fusekit {

static_assert(std::endian::native == std::endian::little,
              "archive buffers are stored little-endian and used in place");

enum class DType : std::uint8_t { kF32, kF64, kU8, kU16, kI64 };

std::size_t dtype_size(DType dtype);
std::string_view dtype_name(DType dtype);
std::optional<DType> parse_dtype(std::string_view name);
bool is_float(DType dtype);

template <typename T>
constexpr DType dtype_of();
template <> constexpr DType dtype_of<float>() { return DType::kF32; }
template <> constexpr DType dtype_of<double>() { return DType::kF64; }
template <> constexpr DType dtype_of<std::uint8_t>() { return DType::kU8; }
template <> constexpr DType dtype_of<std::uint16_t>() { return DType::kU16; }
template <> constexpr DType dtype_of<std::int64_t>() { return DType::kI64; }

using Shape = std::vector<std::uint64_t>;

std::uint64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor owning its little-endian buffer.
class Tensor {
 public:
  Tensor() = default;
  // Zero-filled.
  Tensor(DType dtype, Shape shape);
  // Takes ownership of raw bytes; size must equal numel * dtype_size.
  Tensor(DType dtype, Shape shape, std::vector<std::byte> bytes);

  template <typename T>
  static Tensor from_values(Shape shape, std::span<const T> values) {
    Tensor t(dtype_of<T>(), std::move(shape));
    if (values.size() != t.numel()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "value count does not match shape " + shape_string(t.shape_));
    }
    std::memcpy(t.data_.data(), values.data(), t.data_.size());
    return t;
  }
  template <typename T>
  static Tensor from_values(Shape shape, std::initializer_list<T> values) {
    return from_values<T>(std::move(shape),
                          std::span<const T>(values.begin(), values.size()));
  }
  template <typename T>
  static Tensor scalar(T value) {
    return from_values<T>({}, std::span<const T>(&value, 1));
  }

  DType dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::uint64_t numel() const { return data_.size() / dtype_size(dtype_); }
  std::size_t nbytes() const { return data_.size(); }

  std::span<const std::byte> bytes() const { return data_; }
  std::span<std::byte> bytes() { return data_; }

  template <typename T>
  std::span<const T> values() const {
    check_dtype(dtype_of<T>());
    return {reinterpret_cast<const T*>(data_.data()), data_.size() / sizeof(T)};
  }
  template <typename T>
  std::span<T> values() {
    check_dtype(dtype_of<T>());
    return {reinterpret_cast<T*>(data_.data()), data_.size() / sizeof(T)};
  }

  double value_as_double(std::uint64_t index) const;

  // Bitwise equality of dtype, shape and buffer.
  bool operator==(const Tensor& other) const = default;

 private:
  void check_dtype(DType expected) const;

  DType dtype_ = DType::kF32;
  Shape shape_;
  std::vector<std::byte> data_;
};

// Ordered by name (byte-lexicographic), which fixes every iteration order.
using Checkpoint = std::map<std::string, Tensor>;

struct TensorEntry {
  std::string name;
  DType dtype;
  Shape shape;
  std::uint64_t begin = 0;  // byte offsets into the data section
  std::uint64_t end = 0;

  std::uint64_t nbytes() const { return end - begin; }
  std::uint64_t numel() const { return shape_numel(shape); }
};

// Parses and validates a header against a data section of `data_size`
// bytes. Returned entries are sorted by name.
std::vector<TensorEntry> parse_header(std::string_view json,
                                      std::uint64_t data_size);

// Lays out `entries` canonically (sorted, densely packed) and returns the
// header JSON. Offsets in `entries` are overwritten.
std::string encode_header(std::vector<TensorEntry>& entries);

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Random-access reader. Only the header is held in memory.
class ArchiveReader {
 public:
  explicit ArchiveReader(const std::filesystem::path& path);

  const std::filesystem::path& path() const { return path_; }
  const std::vector<TensorEntry>& entries() const { return entries_; }
  const TensorEntry* find(std::string_view name) const;
  std::uint64_t data_size() const { return data_size_; }

  // Reads out.size() bytes starting `offset` bytes into the tensor.
  void read_bytes(const TensorEntry& entry, std::uint64_t offset,
                  std::span<std::byte> out);
  Tensor read_tensor(const TensorEntry& entry);

 private:
  std::filesystem::path path_;
  FilePtr file_;
  std::uint64_t data_start_ = 0;
  std::uint64_t data_size_ = 0;
  std::vector<TensorEntry> entries_;
};

// Streaming writer: the header goes out first, then tensor bytes are
// appended in entry order. Output lands under a temporary name and is renamed
// into place by finish(); an unfinished writer removes its partial file.
class ArchiveWriter {
 public:
  ArchiveWriter(const std::filesystem::path& path,
                std::vector<TensorEntry> entries);
  ~ArchiveWriter();
  ArchiveWriter(const ArchiveWriter&) = delete;
  ArchiveWriter& operator=(const ArchiveWriter&) = delete;

  const std::vector<TensorEntry>& entries() const { return entries_; }
  void write(std::span<const std::byte> bytes);
  void finish();

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_path_;
  FilePtr file_;
  std::vector<TensorEntry> entries_;
  std::uint64_t expected_ = 0;
  std::uint64_t written_ = 0;
};

Checkpoint read_archive(const std::filesystem::path& path);
void write_archive(const Checkpoint& ckpt, const std::filesystem::path& path);

// In-memory canonical encoding, identical to the file contents written by
// write_archive.
std::vector<std::byte> encode_archive(const Checkpoint& ckpt);
Checkpoint decode_archive(std::span<const std::byte> bytes);

// Throws kIncompatible naming the first (lexicographic) offending tensor.
void check_compatible(const Checkpoint& a, const Checkpoint& b);
void check_compatible(const std::vector<TensorEntry>& a,
                      const std::vector<TensorEntry>& b);

// Tensors that take part in weight-space geometry: rank >= 1 and float.
bool is_flattenable(DType dtype, const Shape& shape);

// All flattenable tensors in name order, widened to f64.
std::vector<double> flatten_concat(const Checkpoint& ckpt);

}  // namespace fusekit

#endif  // FUSEKIT_TENSOR_STORE_H_
