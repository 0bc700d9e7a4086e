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
#ifndef DPC_CONFIG_HPP_
#define DPC_CONFIG_HPP_

// Run configuration: one JSON object with optional sections "space",
// "dataset", "backbone", "train", "search" and "analysis". Missing keys take
// their defaults; unknown keys are rejected.

#include <filesystem>
#include <set>
#include <string>
#include <type_traits>

#include "dpc/backbone.hpp"
#include "dpc/dataset.hpp"
#include "dpc/dpct_io.hpp"
#include "dpc/errors.hpp"
#include "dpc/proxy.hpp"
#include "dpc/search.hpp"
#include "dpc/search_space.hpp"
#include "json.hpp"

namespace dpc {

struct RunConfig {
  SearchSpaceConfig space;
  SyntheticDatasetConfig dataset;
  BackboneConfig backbone;
  TrainConfig train;
  SearchConfig search;
  int histogram_bins = 20;
};

namespace detail {

class Section {
 public:
  Section(const nlohmann::json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      j_ = root.at(name_);
      if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
    } else {
      j_ = nlohmann::json::object();
    }
  }

  template <class V>
  void get(const char* key, V& field) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    bool ok = false;
    if constexpr (std::is_same_v<V, bool>)
      ok = v.is_boolean();
    else if constexpr (std::is_unsigned_v<V>)
      ok = v.is_number_unsigned();
    else if constexpr (std::is_integral_v<V>)
      ok = v.is_number_integer();
    else
      ok = v.is_number();
    if (!ok) throw ConfigError(name_ + "." + key + ": wrong type");
    field = v.get<V>();
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!known_.count(k)) throw ConfigError(name_ + "." + k + ": unknown key");
  }

 private:
  std::string name_;
  nlohmann::json j_;
  std::set<std::string> known_;
};

}  // namespace detail

inline void validate_config(const RunConfig& c) {
  if (c.space.num_branches < 1) throw ConfigError("space.num_branches: must be >= 1");
  if (c.space.filters < 1) throw ConfigError("space.filters: must be >= 1");
  validate_config(c.dataset);
  if (c.backbone.out_channels < 1) throw ConfigError("backbone.out_channels: must be >= 1");
  if (c.backbone.output_stride < 1 || (c.backbone.output_stride & (c.backbone.output_stride - 1)))
    throw ConfigError("backbone.output_stride: must be a power of two");
  const BackboneConfig probe{c.backbone.in_channels, 1, c.backbone.output_stride, 0};
  const auto bb = make_backbone(probe);
  const int fh = bb.feature_size(c.dataset.image_h), fw = bb.feature_size(c.dataset.image_w);
  if (fh < kGrids.back() || fw < kGrids.back())
    throw ConfigError("dataset: feature map " + std::to_string(fh) + "x" + std::to_string(fw) +
                      " is smaller than the largest pooling grid " +
                      std::to_string(kGrids.back()) + "; enlarge the images or lower output_stride");
  validate_config(c.train);
  validate_config(c.search);
  if (c.histogram_bins < 1) throw ConfigError("analysis.histogram_bins: must be >= 1");
}

inline RunConfig config_from_json(const nlohmann::json& root) {
  if (!root.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [k, v] : root.items())
    if (k != "space" && k != "dataset" && k != "backbone" && k != "train" &&
        k != "search" && k != "analysis")
      throw ConfigError(k + ": unknown section");
  RunConfig c;
  detail::Section space(root, "space");
  space.get("num_branches", c.space.num_branches);
  space.get("filters", c.space.filters);
  space.finish();

  detail::Section ds(root, "dataset");
  ds.get("num_images", c.dataset.num_images);
  ds.get("image_h", c.dataset.image_h);
  ds.get("image_w", c.dataset.image_w);
  ds.get("num_classes", c.dataset.num_classes);
  ds.get("min_shapes", c.dataset.min_shapes);
  ds.get("max_shapes", c.dataset.max_shapes);
  ds.get("min_scale", c.dataset.min_scale);
  ds.get("max_scale", c.dataset.max_scale);
  ds.get("min_aspect", c.dataset.min_aspect);
  ds.get("max_aspect", c.dataset.max_aspect);
  ds.get("noise", c.dataset.noise);
  ds.get("seed", c.dataset.seed);
  ds.finish();

  detail::Section bb(root, "backbone");
  bb.get("out_channels", c.backbone.out_channels);
  bb.get("output_stride", c.backbone.output_stride);
  bb.get("seed", c.backbone.seed);
  bb.finish();

  detail::Section tr(root, "train");
  tr.get("steps", c.train.steps);
  tr.get("batch_size", c.train.batch_size);
  tr.get("base_lr", c.train.base_lr);
  tr.get("lr_power", c.train.lr_power);
  tr.get("momentum", c.train.momentum);
  tr.get("seed", c.train.seed);
  tr.get("full_steps_multiplier", c.train.full_steps_multiplier);
  tr.get("backbone_lr_scale", c.train.backbone_lr_scale);
  tr.get("eval_batch", c.train.eval_batch);
  tr.finish();

  detail::Section se(root, "search");
  se.get("budget", c.search.budget);
  se.get("exploit_prob", c.search.exploit_prob);
  se.get("top_k", c.search.top_k);
  se.get("rerank_k", c.search.rerank_k);
  se.get("seed", c.search.seed);
  se.get("parallelism", c.search.parallelism);
  se.get("log_wall_time", c.search.log_wall_time);
  se.finish();

  detail::Section an(root, "analysis");
  an.get("histogram_bins", c.histogram_bins);
  an.finish();

  c.train.filters = c.space.filters;
  return c;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["space"] = {{"num_branches", c.space.num_branches}, {"filters", c.space.filters}};
  j["dataset"] = to_json(c.dataset);
  j["backbone"] = {{"out_channels", c.backbone.out_channels},
                   {"output_stride", c.backbone.output_stride},
                   {"seed", c.backbone.seed}};
  nlohmann::ordered_json t;
  t["steps"] = c.train.steps;
  t["batch_size"] = c.train.batch_size;
  t["base_lr"] = c.train.base_lr;
  t["lr_power"] = c.train.lr_power;
  t["momentum"] = c.train.momentum;
  t["seed"] = c.train.seed;
  t["full_steps_multiplier"] = c.train.full_steps_multiplier;
  t["backbone_lr_scale"] = c.train.backbone_lr_scale;
  t["eval_batch"] = c.train.eval_batch;
  j["train"] = t;
  nlohmann::ordered_json s;
  s["budget"] = c.search.budget;
  s["exploit_prob"] = c.search.exploit_prob;
  s["top_k"] = c.search.top_k;
  s["rerank_k"] = c.search.rerank_k;
  s["seed"] = c.search.seed;
  s["parallelism"] = c.search.parallelism;
  s["log_wall_time"] = c.search.log_wall_time;
  j["search"] = s;
  j["analysis"] = {{"histogram_bins", c.histogram_bins}};
  return j;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  try {
    return config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace dpc

#endif  // DPC_CONFIG_HPP_
