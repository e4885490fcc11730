// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusekit/tensor_store.h"

#include <algorithm>
#include <cerrno>
#include <limits>
#include <set>
#include <system_error>

#include "json.hpp"

namespace fusekit {

namespace {

using nlohmann::json;

constexpr std::uint64_t kHeaderPrefix = 8;

std::uint64_t load_u64_le(const std::byte* p) {
  std::uint64_t v = 0;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

[[noreturn]] void io_error(const std::string& what,
                           const std::filesystem::path& path) {
  throw Error(ErrorCode::kIo, what + " '" + path.string() +
                                  "': " + std::generic_category().message(errno));
}

std::uint64_t checked_numel(const Shape& shape, const std::string& name) {
  std::uint64_t n = 1;
  for (std::uint64_t d : shape) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
      throw Error(ErrorCode::kMalformedHeader,
                  "shape of '" + name + "' overflows");
    }
    n *= d;
  }
  return n;
}

TensorEntry parse_entry(const std::string& name, const json& spec) {
  if (name.empty()) {
    throw Error(ErrorCode::kMalformedHeader, "empty tensor name");
  }
  if (!spec.is_object()) {
    throw Error(ErrorCode::kMalformedHeader,
                "entry '" + name + "' is not an object");
  }
  auto field = [&](const char* key) -> const json& {
    auto it = spec.find(key);
    if (it == spec.end()) {
      throw Error(ErrorCode::kMalformedHeader,
                  "entry '" + name + "' lacks \"" + key + "\"");
    }
    return *it;
  };

  TensorEntry entry;
  entry.name = name;

  const json& dtype = field("dtype");
  if (!dtype.is_string()) {
    throw Error(ErrorCode::kMalformedHeader,
                "dtype of '" + name + "' is not a string");
  }
  auto parsed = parse_dtype(dtype.get<std::string>());
  if (!parsed) {
    throw Error(ErrorCode::kUnknownDtype, "unknown dtype \"" +
                                              dtype.get<std::string>() +
                                              "\" for '" + name + "'");
  }
  entry.dtype = *parsed;

  const json& shape = field("shape");
  if (!shape.is_array()) {
    throw Error(ErrorCode::kMalformedHeader,
                "shape of '" + name + "' is not an array");
  }
  for (const json& d : shape) {
    if (!d.is_number_unsigned()) {
      throw Error(ErrorCode::kMalformedHeader,
                  "shape of '" + name + "' has a non-integer extent");
    }
    entry.shape.push_back(d.get<std::uint64_t>());
  }

  const json& offsets = field("data_offsets");
  if (!offsets.is_array() || offsets.size() != 2 ||
      !offsets[0].is_number_unsigned() || !offsets[1].is_number_unsigned()) {
    throw Error(ErrorCode::kMalformedHeader,
                "data_offsets of '" + name + "' must be [begin, end]");
  }
  entry.begin = offsets[0].get<std::uint64_t>();
  entry.end = offsets[1].get<std::uint64_t>();
  if (entry.end < entry.begin) {
    throw Error(ErrorCode::kBadOffsets,
                "data_offsets of '" + name + "' end before they begin");
  }

  std::uint64_t numel = checked_numel(entry.shape, name);
  std::uint64_t size = dtype_size(entry.dtype);
  if (numel > std::numeric_limits<std::uint64_t>::max() / size ||
      numel * size != entry.nbytes()) {
    throw Error(ErrorCode::kMalformedHeader,
                "byte range of '" + name + "' does not match shape " +
                    shape_string(entry.shape) + " and dtype " +
                    std::string(dtype_name(entry.dtype)));
  }
  return entry;
}

struct ArchiveLayout {
  std::uint64_t header_len = 0;
  std::uint64_t data_start = 0;
  std::uint64_t data_size = 0;
};

ArchiveLayout check_layout(std::uint64_t file_size, std::uint64_t header_len) {
  if (file_size < kHeaderPrefix) {
    throw Error(ErrorCode::kTruncated, "truncated header length");
  }
  if (header_len > file_size - kHeaderPrefix) {
    throw Error(ErrorCode::kTruncated, "truncated header");
  }
  ArchiveLayout layout;
  layout.header_len = header_len;
  layout.data_start = kHeaderPrefix + header_len;
  layout.data_size = file_size - layout.data_start;
  return layout;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU8: return 1;
    case DType::kU16: return 2;
    case DType::kI64: return 8;
  }
  return 1;
}

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kU8: return "u8";
    case DType::kU16: return "u16";
    case DType::kI64: return "i64";
  }
  return "?";
}

std::optional<DType> parse_dtype(std::string_view name) {
  for (DType d : {DType::kF32, DType::kF64, DType::kU8, DType::kU16,
                  DType::kI64}) {
    if (dtype_name(d) == name) return d;
  }
  return std::nullopt;
}

bool is_float(DType dtype) {
  return dtype == DType::kF32 || dtype == DType::kF64;
}

std::uint64_t shape_numel(const Shape& shape) {
  std::uint64_t n = 1;
  for (std::uint64_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(DType dtype, Shape shape)
    : dtype_(dtype),
      shape_(std::move(shape)),
      data_(shape_numel(shape_) * dtype_size(dtype)) {}

Tensor::Tensor(DType dtype, Shape shape, std::vector<std::byte> bytes)
    : dtype_(dtype), shape_(std::move(shape)), data_(std::move(bytes)) {
  if (data_.size() != shape_numel(shape_) * dtype_size(dtype_)) {
    throw Error(ErrorCode::kInvalidArgument,
                "buffer of " + std::to_string(data_.size()) +
                    " bytes does not match shape " + shape_string(shape_));
  }
}

double Tensor::value_as_double(std::uint64_t index) const {
  const std::byte* p = data_.data() + index * dtype_size(dtype_);
  switch (dtype_) {
    case DType::kF32: {
      float v;
      std::memcpy(&v, p, sizeof(v));
      return v;
    }
    case DType::kF64: {
      double v;
      std::memcpy(&v, p, sizeof(v));
      return v;
    }
    case DType::kU8:
      return static_cast<double>(std::to_integer<std::uint8_t>(*p));
    case DType::kU16: {
      std::uint16_t v;
      std::memcpy(&v, p, sizeof(v));
      return v;
    }
    case DType::kI64: {
      std::int64_t v;
      std::memcpy(&v, p, sizeof(v));
      return static_cast<double>(v);
    }
  }
  return 0.0;
}

void Tensor::check_dtype(DType expected) const {
  if (dtype_ != expected) {
    throw Error(ErrorCode::kInvalidArgument,
                "tensor holds " + std::string(dtype_name(dtype_)) +
                    ", requested " + std::string(dtype_name(expected)));
  }
}

std::vector<TensorEntry> parse_header(std::string_view text,
                                      std::uint64_t data_size) {
  std::set<std::string> seen;
  std::string duplicate;
  json::parser_callback_t on_event = [&](int depth, json::parse_event_t event,
                                         json& parsed) {
    if (event == json::parse_event_t::key && depth == 1) {
      auto name = parsed.get<std::string>();
      if (!seen.insert(name).second && duplicate.empty()) duplicate = name;
    }
    return true;
  };

  json header;
  try {
    header = json::parse(text.begin(), text.end(), on_event);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader,
                std::string("header is not valid JSON: ") + e.what());
  }
  if (!duplicate.empty()) {
    throw Error(ErrorCode::kDuplicateName,
                "duplicate tensor name '" + duplicate + "'");
  }
  if (!header.is_object()) {
    throw Error(ErrorCode::kMalformedHeader, "header is not a JSON object");
  }

  std::vector<TensorEntry> entries;
  entries.reserve(header.size());
  for (const auto& [name, spec] : header.items()) {
    if (name == "__metadata__") continue;
    entries.push_back(parse_entry(name, spec));
  }

  for (const TensorEntry& e : entries) {
    if (e.end > data_size) {
      throw Error(ErrorCode::kTruncated,
                  "truncated data: '" + e.name + "' ends at byte " +
                      std::to_string(e.end) + " of a " +
                      std::to_string(data_size) + "-byte data section");
    }
  }

  std::vector<const TensorEntry*> by_offset;
  by_offset.reserve(entries.size());
  for (const TensorEntry& e : entries) by_offset.push_back(&e);
  std::sort(by_offset.begin(), by_offset.end(),
            [](const TensorEntry* a, const TensorEntry* b) {
              return a->begin != b->begin ? a->begin < b->begin
                                          : a->end < b->end;
            });
  std::uint64_t cursor = 0;
  for (const TensorEntry* e : by_offset) {
    if (e->begin < cursor) {
      throw Error(ErrorCode::kBadOffsets,
                  "overlap: '" + e->name + "' starts at byte " +
                      std::to_string(e->begin) + " inside another tensor");
    }
    if (e->begin > cursor) {
      throw Error(ErrorCode::kBadOffsets,
                  "gap: bytes [" + std::to_string(cursor) + "," +
                      std::to_string(e->begin) + ") belong to no tensor");
    }
    cursor = e->end;
  }
  if (cursor != data_size) {
    throw Error(ErrorCode::kBadOffsets,
                "gap: " + std::to_string(data_size - cursor) +
                    " trailing bytes after the last tensor");
  }

  std::sort(entries.begin(), entries.end(),
            [](const TensorEntry& a, const TensorEntry& b) {
              return a.name < b.name;
            });
  return entries;
}

std::string encode_header(std::vector<TensorEntry>& entries) {
  std::sort(entries.begin(), entries.end(),
            [](const TensorEntry& a, const TensorEntry& b) {
              return a.name < b.name;
            });
  json header = json::object();
  std::uint64_t cursor = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    TensorEntry& e = entries[i];
    if (e.name.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "empty tensor name");
    }
    if (i > 0 && entries[i - 1].name == e.name) {
      throw Error(ErrorCode::kDuplicateName,
                  "duplicate tensor name '" + e.name + "'");
    }
    e.begin = cursor;
    e.end = cursor + shape_numel(e.shape) * dtype_size(e.dtype);
    cursor = e.end;
    header[e.name] = {{"dtype", dtype_name(e.dtype)},
                      {"shape", e.shape},
                      {"data_offsets", {e.begin, e.end}}};
  }
  return header.dump();
}

ArchiveReader::ArchiveReader(const std::filesystem::path& path) : path_(path) {
  file_.reset(std::fopen(path.c_str(), "rb"));
  if (!file_) io_error("cannot open", path);
  if (fseeko(file_.get(), 0, SEEK_END) != 0) io_error("cannot seek", path);
  const auto file_size = static_cast<std::uint64_t>(ftello(file_.get()));
  std::rewind(file_.get());

  std::byte prefix[kHeaderPrefix];
  std::uint64_t header_len = 0;
  if (file_size >= kHeaderPrefix) {
    if (std::fread(prefix, 1, kHeaderPrefix, file_.get()) != kHeaderPrefix) {
      io_error("cannot read", path);
    }
    header_len = load_u64_le(prefix);
  }
  ArchiveLayout layout = check_layout(file_size, header_len);

  std::string header(layout.header_len, '\0');
  if (std::fread(header.data(), 1, header.size(), file_.get()) !=
      header.size()) {
    io_error("cannot read header of", path);
  }
  entries_ = parse_header(header, layout.data_size);
  data_start_ = layout.data_start;
  data_size_ = layout.data_size;
}

const TensorEntry* ArchiveReader::find(std::string_view name) const {
  auto it = std::lower_bound(
      entries_.begin(), entries_.end(), name,
      [](const TensorEntry& e, std::string_view n) { return e.name < n; });
  return (it != entries_.end() && it->name == name) ? &*it : nullptr;
}

void ArchiveReader::read_bytes(const TensorEntry& entry, std::uint64_t offset,
                               std::span<std::byte> out) {
  if (offset + out.size() > entry.nbytes()) {
    throw Error(ErrorCode::kInvalidArgument,
                "read past the end of '" + entry.name + "'");
  }
  if (out.empty()) return;
  const auto pos = static_cast<off_t>(data_start_ + entry.begin + offset);
  if (fseeko(file_.get(), pos, SEEK_SET) != 0) io_error("cannot seek", path_);
  if (std::fread(out.data(), 1, out.size(), file_.get()) != out.size()) {
    io_error("cannot read", path_);
  }
}

Tensor ArchiveReader::read_tensor(const TensorEntry& entry) {
  std::vector<std::byte> buffer(entry.nbytes());
  read_bytes(entry, 0, buffer);
  return Tensor(entry.dtype, entry.shape, std::move(buffer));
}

ArchiveWriter::ArchiveWriter(const std::filesystem::path& path,
                             std::vector<TensorEntry> entries)
    : path_(path), entries_(std::move(entries)) {
  std::string header = encode_header(entries_);
  expected_ = entries_.empty() ? 0 : entries_.back().end;

  tmp_path_ = path_;
  tmp_path_ += ".partial";
  file_.reset(std::fopen(tmp_path_.c_str(), "wb"));
  if (!file_) io_error("cannot write", path_);

  std::uint64_t len = header.size();
  std::byte prefix[kHeaderPrefix];
  std::memcpy(prefix, &len, sizeof(len));
  if (std::fwrite(prefix, 1, kHeaderPrefix, file_.get()) != kHeaderPrefix ||
      std::fwrite(header.data(), 1, header.size(), file_.get()) !=
          header.size()) {
    io_error("cannot write", path_);
  }
}

ArchiveWriter::~ArchiveWriter() {
  if (file_) {
    file_.reset();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void ArchiveWriter::write(std::span<const std::byte> bytes) {
  if (!file_) {
    throw Error(ErrorCode::kInvalidArgument, "archive writer already finished");
  }
  if (written_ + bytes.size() > expected_) {
    throw Error(ErrorCode::kInvalidArgument,
                "more tensor bytes than the header declares");
  }
  if (std::fwrite(bytes.data(), 1, bytes.size(), file_.get()) != bytes.size()) {
    io_error("cannot write", path_);
  }
  written_ += bytes.size();
}

void ArchiveWriter::finish() {
  if (written_ != expected_) {
    throw Error(ErrorCode::kInvalidArgument,
                "archive closed after " + std::to_string(written_) + " of " +
                    std::to_string(expected_) + " data bytes");
  }
  if (std::fflush(file_.get()) != 0) io_error("cannot write", path_);
  file_.reset();
  std::error_code ec;
  std::filesystem::rename(tmp_path_, path_, ec);
  if (ec) {
    std::filesystem::remove(tmp_path_, ec);
    throw Error(ErrorCode::kIo, "cannot move archive into place at '" +
                                    path_.string() + "'");
  }
}

namespace {

std::vector<TensorEntry> entries_of(const Checkpoint& ckpt) {
  std::vector<TensorEntry> entries;
  entries.reserve(ckpt.size());
  for (const auto& [name, t] : ckpt) {
    entries.push_back({name, t.dtype(), t.shape(), 0, 0});
  }
  return entries;
}

}  // namespace

Checkpoint read_archive(const std::filesystem::path& path) {
  ArchiveReader reader(path);
  Checkpoint ckpt;
  for (const TensorEntry& e : reader.entries()) {
    ckpt.emplace(e.name, reader.read_tensor(e));
  }
  return ckpt;
}

void write_archive(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ArchiveWriter writer(path, entries_of(ckpt));
  for (const auto& [name, t] : ckpt) writer.write(t.bytes());
  writer.finish();
}

std::vector<std::byte> encode_archive(const Checkpoint& ckpt) {
  std::vector<TensorEntry> entries = entries_of(ckpt);
  std::string header = encode_header(entries);
  std::uint64_t len = header.size();
  std::vector<std::byte> out(kHeaderPrefix + header.size());
  std::memcpy(out.data(), &len, sizeof(len));
  std::memcpy(out.data() + kHeaderPrefix, header.data(), header.size());
  for (const auto& [name, t] : ckpt) {
    out.insert(out.end(), t.bytes().begin(), t.bytes().end());
  }
  return out;
}

Checkpoint decode_archive(std::span<const std::byte> bytes) {
  std::uint64_t header_len =
      bytes.size() >= kHeaderPrefix ? load_u64_le(bytes.data()) : 0;
  ArchiveLayout layout = check_layout(bytes.size(), header_len);
  std::string_view header(
      reinterpret_cast<const char*>(bytes.data() + kHeaderPrefix),
      layout.header_len);
  Checkpoint ckpt;
  for (const TensorEntry& e : parse_header(header, layout.data_size)) {
    auto first = bytes.begin() + static_cast<std::ptrdiff_t>(
                                     layout.data_start + e.begin);
    std::vector<std::byte> buffer(first,
                                  first + static_cast<std::ptrdiff_t>(e.nbytes()));
    ckpt.emplace(e.name, Tensor(e.dtype, e.shape, std::move(buffer)));
  }
  return ckpt;
}

void check_compatible(const std::vector<TensorEntry>& a,
                      const std::vector<TensorEntry>& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->name < ib->name)) {
      throw Error(ErrorCode::kIncompatible,
                  "missing key '" + ia->name + "' in second checkpoint");
    }
    if (ia == a.end() || ib->name < ia->name) {
      throw Error(ErrorCode::kIncompatible,
                  "extra key '" + ib->name + "' in second checkpoint");
    }
    if (ia->dtype != ib->dtype) {
      throw Error(ErrorCode::kIncompatible,
                  "dtype mismatch for '" + ia->name + "': " +
                      std::string(dtype_name(ia->dtype)) + " vs " +
                      std::string(dtype_name(ib->dtype)));
    }
    if (ia->shape != ib->shape) {
      throw Error(ErrorCode::kIncompatible,
                  "shape mismatch for '" + ia->name + "': " +
                      shape_string(ia->shape) + " vs " +
                      shape_string(ib->shape));
    }
    ++ia;
    ++ib;
  }
}

void check_compatible(const Checkpoint& a, const Checkpoint& b) {
  check_compatible(entries_of(a), entries_of(b));
}

bool is_flattenable(DType dtype, const Shape& shape) {
  return is_float(dtype) && !shape.empty();
}

std::vector<double> flatten_concat(const Checkpoint& ckpt) {
  std::size_t total = 0;
  for (const auto& [name, t] : ckpt) {
    if (is_flattenable(t.dtype(), t.shape())) total += t.numel();
  }
  std::vector<double> out;
  out.reserve(total);
  for (const auto& [name, t] : ckpt) {
    if (!is_flattenable(t.dtype(), t.shape())) continue;
    if (t.dtype() == DType::kF32) {
      for (float v : t.values<float>()) out.push_back(v);
    } else {
      for (double v : t.values<double>()) out.push_back(v);
    }
  }
  return out;
}

}  // namespace fusekit
