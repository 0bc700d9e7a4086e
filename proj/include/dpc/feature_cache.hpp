/* Copyright 2026 The DPC Search Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DPC_FEATURE_CACHE_HPP_
#define DPC_FEATURE_CACHE_HPP_

// On-disk cache of frozen-backbone features, one DPCT file per image, plus a
// copy of the label maps. manifest.json is written last and marks a complete
// cache; it records the fingerprints of the backbone and dataset.

#include <filesystem>
#include <string>
#include <vector>

#include "dpc/backbone.hpp"
#include "dpc/dataset.hpp"
#include "dpc/dpct_io.hpp"
#include "dpc/errors.hpp"
#include "json.hpp"

namespace dpc {

struct FeatureCache {
  std::string backbone_fingerprint;
  std::string dataset_fingerprint;
  int num_classes = 0;
  std::vector<Tensor> features;  // (1, C, h', w') per image
  std::vector<LabelMap> labels;  // (1, H, W) per image

  int size() const { return static_cast<int>(features.size()); }
  int channels() const { return features.empty() ? 0 : features.front().shape().c; }
};

inline Tensor extract_features(const Backbone& backbone, const Tensor& image) {
  NoGradGuard guard;
  return backbone.forward(image);
}

inline FeatureCache load_cache(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath))
    throw DataError("feature cache incomplete or missing: " + mpath.string() +
                    " (run the cache command)");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cache manifest " + mpath.string() + ": " + e.what());
  }
  FeatureCache c;
  c.backbone_fingerprint = m.at("backbone_fingerprint").get<std::string>();
  c.dataset_fingerprint = m.at("dataset_fingerprint").get<std::string>();
  c.num_classes = m.at("num_classes").get<int>();
  const auto fshape = m.at("feature_shape");
  for (const auto& e : m.at("entries")) {
    const auto fpath = dir / e.at("feature_file").get<std::string>();
    Tensor t = read_tensor(fpath);
    if (t.shape().c != fshape.at(0).get<int>() || t.shape().h != fshape.at(1).get<int>() ||
        t.shape().w != fshape.at(2).get<int>())
      throw DataError("cache file " + fpath.string() + " has shape " + t.shape().str() +
                      " inconsistent with the manifest");
    c.features.push_back(std::move(t));
    c.labels.push_back(read_labels(dir / e.at("label_file").get<std::string>()));
  }
  if (c.features.empty()) throw DataError("feature cache " + dir.string() + " is empty");
  return c;
}

// Builds the cache, or loads it when a complete cache with matching
// fingerprints already exists. A cache made by another backbone or dataset
// is stale and must be rebuilt.
inline FeatureCache build_cache(const Dataset& dataset, const Backbone& backbone,
                                const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!backbone.frozen) throw StateError("build_cache: backbone must be frozen");
  const std::string bfp = backbone.fingerprint();
  const std::string dfp = dataset_fingerprint(dataset.config);
  const auto mpath = dir / "manifest.json";
  if (fs::exists(mpath)) {
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(read_file(mpath));
    } catch (const nlohmann::json::exception& e) {
      throw StaleCacheError("cache manifest " + mpath.string() +
                            " is unreadable; delete " + dir.string() + " and rebuild");
    }
    const std::string have_b = m.value("backbone_fingerprint", "");
    const std::string have_d = m.value("dataset_fingerprint", "");
    if (have_b != bfp || have_d != dfp)
      throw StaleCacheError("stale feature cache in " + dir.string() + " (backbone " +
                            have_b + " vs " + bfp + ", dataset " + have_d + " vs " + dfp +
                            "); delete the directory and rebuild the cache");
    return load_cache(dir);
  }
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "labels");
  nlohmann::ordered_json m;
  m["backbone_fingerprint"] = bfp;
  m["backbone_architecture"] = backbone.architecture();
  m["dataset_fingerprint"] = dfp;
  m["num_classes"] = dataset.num_classes();
  m["output_stride"] = backbone.config.output_stride;
  m["entries"] = nlohmann::ordered_json::array();
  FeatureCache cache;
  cache.backbone_fingerprint = bfp;
  cache.dataset_fingerprint = dfp;
  cache.num_classes = dataset.num_classes();
  for (int i = 0; i < dataset.size(); ++i) {
    Tensor f = extract_features(backbone, dataset.samples[i].image);
    const std::string ff = "features/" + image_file_name(i, ".dpct");
    const std::string lf = "labels/" + image_file_name(i, ".dpct");
    write_tensor(dir / ff, f);
    write_labels(dir / lf, dataset.samples[i].labels);
    nlohmann::ordered_json e;
    e["id"] = i;
    e["feature_file"] = ff;
    e["label_file"] = lf;
    e["h"] = f.shape().h;
    e["w"] = f.shape().w;
    m["entries"].push_back(e);
    cache.features.push_back(std::move(f));
    cache.labels.push_back(dataset.samples[i].labels);
  }
  if (cache.features.empty()) throw DataError("build_cache: dataset is empty");
  const Shape fs0 = cache.features.front().shape();
  m["feature_shape"] = {fs0.c, fs0.h, fs0.w};
  write_file_atomic(mpath, m.dump(1) + "\n");
  return cache;
}

}  // namespace dpc

#endif  // DPC_FEATURE_CACHE_HPP_
