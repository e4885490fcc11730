// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusekit/dataset.h"

#include <fstream>

#include "json.hpp"

namespace fusekit {

namespace {

constexpr char kManifest[] = "manifest.json";

[[noreturn]] void malformed(const std::string& message) {
  throw Error(ErrorCode::kMalformedHeader, message);
}

const Tensor& require(const Checkpoint& ckpt, const std::string& name) {
  auto it = ckpt.find(name);
  if (it == ckpt.end()) malformed("prediction archive lacks \"" + name + "\"");
  return it->second;
}

template <typename T>
std::vector<T> copy_values(const Tensor& t) {
  auto v = t.values<T>();
  return {v.begin(), v.end()};
}

}  // namespace

std::vector<LabelMap> Dataset::label_maps() const {
  std::vector<LabelMap> maps;
  maps.reserve(images.size());
  for (const PredictionSet& p : images) maps.push_back(p.labels);
  return maps;
}

PredictionSet prediction_from_checkpoint(const Checkpoint& ckpt) {
  const Tensor& labels = require(ckpt, "labels");
  if (labels.dtype() != DType::kU16 || labels.rank() != 2) {
    malformed("\"labels\" must be a u16 HxW tensor");
  }
  const auto h = static_cast<std::uint32_t>(labels.shape()[0]);
  const auto w = static_cast<std::uint32_t>(labels.shape()[1]);
  PredictionSet pred;
  pred.labels = LabelMap(h, w, copy_values<std::uint16_t>(labels));

  if (auto it = ckpt.find("confidence"); it != ckpt.end()) {
    const Tensor& t = it->second;
    if (t.dtype() != DType::kF32 || t.shape() != labels.shape()) {
      malformed("\"confidence\" must be an f32 tensor shaped like \"labels\"");
    }
    pred.confidence = copy_values<float>(t);
  }
  if (auto it = ckpt.find("probs"); it != ckpt.end()) {
    const Tensor& t = it->second;
    if (t.dtype() != DType::kF32 || t.rank() != 3 || t.shape()[1] != h ||
        t.shape()[2] != w) {
      malformed("\"probs\" must be an f32 CxHxW tensor");
    }
    pred.prob_classes = static_cast<std::uint32_t>(t.shape()[0]);
    pred.probs = copy_values<float>(t);
  }
  return pred;
}

Checkpoint prediction_to_checkpoint(const PredictionSet& pred) {
  const Shape hw = {pred.labels.height, pred.labels.width};
  Checkpoint ckpt;
  ckpt.emplace("labels", Tensor::from_values<std::uint16_t>(
                             hw, std::span(pred.labels.labels)));
  if (pred.confidence) {
    ckpt.emplace("confidence",
                 Tensor::from_values<float>(hw, std::span(*pred.confidence)));
  }
  if (pred.probs) {
    ckpt.emplace("probs", Tensor::from_values<float>(
                              {pred.prob_classes, pred.labels.height,
                               pred.labels.width},
                              std::span(*pred.probs)));
  }
  return ckpt;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifest;
  std::ifstream in(manifest_path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open '" + manifest_path.string() + "'");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    malformed("'" + manifest_path.string() + "' is not valid JSON: " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("num_classes") ||
      !manifest["num_classes"].is_number_unsigned() ||
      !manifest.contains("images") || !manifest["images"].is_array()) {
    malformed("'" + manifest_path.string() +
              "' must hold {\"num_classes\": C, \"images\": [...]}");
  }
  Dataset ds;
  ds.num_classes = manifest["num_classes"].get<std::uint32_t>();
  for (const auto& id : manifest["images"]) {
    if (!id.is_string()) malformed("image ids must be strings");
    ds.ids.push_back(id.get<std::string>());
  }
  for (const std::string& id : ds.ids) {
    const auto path = dir / (id + ".fta");
    try {
      ds.images.push_back(prediction_from_checkpoint(read_archive(path)));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ": " + e.what());
    }
  }
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  if (dataset.ids.size() != dataset.images.size()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset ids and images differ in count");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIo, "cannot create '" + dir.string() + "'");
  }
  for (std::size_t i = 0; i < dataset.ids.size(); ++i) {
    write_archive(prediction_to_checkpoint(dataset.images[i]),
                  dir / (dataset.ids[i] + ".fta"));
  }
  nlohmann::json manifest = {{"num_classes", dataset.num_classes},
                             {"images", dataset.ids}};
  std::ofstream out(dir / kManifest);
  out << manifest.dump(2) << "\n";
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write manifest in '" + dir.string() + "'");
  }
}

void check_aligned(const Dataset& a, const Dataset& b) {
  if (a.num_classes != b.num_classes) {
    throw Error(ErrorCode::kInvalidArgument,
                "class counts differ: " + std::to_string(a.num_classes) +
                    " vs " + std::to_string(b.num_classes));
  }
  if (a.ids != b.ids) {
    throw Error(ErrorCode::kInvalidArgument, "datasets list different image ids");
  }
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    if (!a.images[i].labels.same_shape(b.images[i].labels)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "image '" + a.ids[i] + "' differs in shape");
    }
  }
}

}  // namespace fusekit
