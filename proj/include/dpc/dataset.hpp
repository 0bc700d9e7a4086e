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
#ifndef DPC_DATASET_HPP_
#define DPC_DATASET_HPP_

// Synthetic multi-scale dense-prediction data.
//
// Each image is a noisy gray background with axis-aligned rectangles and
// ellipses painted in sequence (later shapes occlude earlier ones). Classes
// come in pairs that share a color and shape kind and differ only in
// orientation: the first member of a pair is wider than tall, the second
// taller than wide. Telling the members apart therefore needs spatial context
// at the object's scale and aspect ratio, which is what the cell's operators
// provide.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dpc/dpct_io.hpp"
#include "dpc/errors.hpp"
#include "dpc/ops.hpp"
#include "dpc/search_space.hpp"
#include "dpc/tensor.hpp"
#include "json.hpp"

namespace dpc {

struct SyntheticDatasetConfig {
  int num_images = 1000;
  int image_h = 64;
  int image_w = 64;
  int num_classes = 5;
  int min_shapes = 1;
  int max_shapes = 4;
  double min_scale = 0.05;  // object side as a fraction of the image side
  double max_scale = 0.8;
  double min_aspect = 0.25;  // width / height
  double max_aspect = 4.0;
  double noise = 0.2;
  std::uint64_t seed = 0;
};

inline void validate_config(const SyntheticDatasetConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("dataset." + field + ": " + why);
  };
  if (c.num_images < 2) fail("num_images", "must be >= 2");
  if (c.image_h < 1) fail("image_h", "must be >= 1");
  if (c.image_w < 1) fail("image_w", "must be >= 1");
  if (c.num_classes < 2) fail("num_classes", "must be >= 2 (background + objects)");
  if (c.num_classes > 254) fail("num_classes", "must be < 255 (void label)");
  if (c.min_shapes < 0) fail("min_shapes", "must be >= 0");
  if (c.max_shapes < c.min_shapes) fail("max_shapes", "must be >= min_shapes");
  if (!(c.min_scale > 0.0)) fail("min_scale", "must be > 0");
  if (!(c.max_scale >= c.min_scale)) fail("max_scale", "must be >= min_scale");
  if (!(c.min_aspect > 0.0)) fail("min_aspect", "must be > 0");
  if (!(c.min_aspect <= 1.0)) fail("min_aspect", "must be <= 1");
  if (!(c.max_aspect >= 1.0)) fail("max_aspect", "must be >= 1");
  if (!(c.noise >= 0.0)) fail("noise", "must be >= 0");
}

enum class ShapeKind { kRectangle, kEllipse };

// Geometry in pixel units; a pixel belongs to the shape when its center does.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::kRectangle;
  int cls = 1;
  double center_y = 0.0;
  double center_x = 0.0;
  double half_h = 0.0;
  double half_w = 0.0;
};

inline bool covers(const ShapeSpec& s, int i, int j) {
  const double dy = (i + 0.5 - s.center_y), dx = (j + 0.5 - s.center_x);
  if (s.kind == ShapeKind::kRectangle)
    return std::abs(dy) <= s.half_h && std::abs(dx) <= s.half_w;
  const double ny = dy / s.half_h, nx = dx / s.half_w;
  return ny * ny + nx * nx <= 1.0;
}

inline ShapeKind class_kind(int cls) {
  return ((cls - 1) / 2) % 2 == 0 ? ShapeKind::kRectangle : ShapeKind::kEllipse;
}

inline bool class_is_wide(int cls) { return (cls - 1) % 2 == 0; }

inline std::array<float, 3> class_color(int cls) {
  static constexpr std::array<std::array<float, 3>, 6> palette = {{
      {1.0f, -0.6f, -0.6f},
      {-0.6f, 1.0f, -0.6f},
      {-0.6f, -0.6f, 1.0f},
      {1.0f, 1.0f, -0.6f},
      {1.0f, -0.6f, 1.0f},
      {-0.6f, 1.0f, 1.0f},
  }};
  return palette[((cls - 1) / 2) % palette.size()];
}

inline constexpr std::array<float, 3> kBackgroundColor = {0.0f, 0.0f, 0.0f};

struct Sample {
  Tensor image;     // (1, 3, h, w)
  LabelMap labels;  // (1, h, w)
};

// Paints `shapes` in order onto an h x w canvas. Noise is added per pixel and
// channel from `rng` when `noise` > 0.
inline Sample rasterize(const std::vector<ShapeSpec>& shapes, int h, int w,
                        double noise, Rng& rng) {
  Sample s;
  s.labels = {1, h, w, std::vector<std::int32_t>(static_cast<std::size_t>(h) * w, 0)};
  for (const ShapeSpec& sh : shapes) {
    const int i0 = std::max(0, static_cast<int>(std::floor(sh.center_y - sh.half_h)));
    const int i1 = std::min(h, static_cast<int>(std::ceil(sh.center_y + sh.half_h)) + 1);
    const int j0 = std::max(0, static_cast<int>(std::floor(sh.center_x - sh.half_w)));
    const int j1 = std::min(w, static_cast<int>(std::ceil(sh.center_x + sh.half_w)) + 1);
    for (int i = i0; i < i1; ++i)
      for (int j = j0; j < j1; ++j)
        if (covers(sh, i, j)) s.labels.values[i * w + j] = sh.cls;
  }
  s.image = Tensor({1, 3, h, w});
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto img = s.image.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    const int cls = s.labels.values[p];
    const auto color = cls == 0 ? kBackgroundColor : class_color(cls);
    for (int c = 0; c < 3; ++c)
      img[c * plane + p] =
          color[c] + (noise > 0.0 ? static_cast<float>(noise * gauss(rng)) : 0.0f);
  }
  return s;
}

inline std::vector<ShapeSpec> sample_shapes(const SyntheticDatasetConfig& c,
                                            Rng& rng) {
  std::uniform_int_distribution<int> count_dist(c.min_shapes, c.max_shapes);
  std::uniform_int_distribution<int> cls_dist(1, c.num_classes - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double log_s0 = std::log(c.min_scale), log_s1 = std::log(c.max_scale);
  // Orientation magnitude |log(aspect)| for wide (+) or tall (-) classes.
  const double wide_max = std::log(c.max_aspect), tall_max = -std::log(c.min_aspect);
  const int n = count_dist(rng);
  std::vector<ShapeSpec> shapes;
  for (int k = 0; k < n; ++k) {
    ShapeSpec s;
    s.cls = cls_dist(rng);
    s.kind = class_kind(s.cls);
    const double side =
        std::exp(log_s0 + (log_s1 - log_s0) * unit(rng)) * std::min(c.image_h, c.image_w);
    const double span = class_is_wide(s.cls) ? wide_max : tall_max;
    const double mag = span * (0.25 + 0.75 * unit(rng));
    const double log_aspect = class_is_wide(s.cls) ? mag : -mag;
    const double aspect = std::exp(log_aspect);  // width / height
    s.half_w = 0.5 * side * std::sqrt(aspect);
    s.half_h = 0.5 * side / std::sqrt(aspect);
    s.center_y = unit(rng) * c.image_h;
    s.center_x = unit(rng) * c.image_w;
    shapes.push_back(s);
  }
  return shapes;
}

struct Dataset {
  SyntheticDatasetConfig config;
  std::vector<Sample> samples;

  int size() const { return static_cast<int>(samples.size()); }
  int num_classes() const { return config.num_classes; }
};

// Held-out split: the last 20% of images by index (at least one).
inline int validation_count(int n) { return std::max(1, n / 5); }
inline int train_count(int n) { return n - validation_count(n); }

inline Dataset generate_dataset(const SyntheticDatasetConfig& cfg) {
  validate_config(cfg);
  Dataset d;
  d.config = cfg;
  d.samples.reserve(cfg.num_images);
  for (int i = 0; i < cfg.num_images; ++i) {
    // Per-image streams keep images independent of each other's draws.
    Rng rng(cfg.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(i) + 1);
    auto shapes = sample_shapes(cfg, rng);
    d.samples.push_back(rasterize(shapes, cfg.image_h, cfg.image_w, cfg.noise, rng));
  }
  return d;
}

inline nlohmann::ordered_json to_json(const SyntheticDatasetConfig& c) {
  nlohmann::ordered_json j;
  j["num_images"] = c.num_images;
  j["image_h"] = c.image_h;
  j["image_w"] = c.image_w;
  j["num_classes"] = c.num_classes;
  j["min_shapes"] = c.min_shapes;
  j["max_shapes"] = c.max_shapes;
  j["min_scale"] = c.min_scale;
  j["max_scale"] = c.max_scale;
  j["min_aspect"] = c.min_aspect;
  j["max_aspect"] = c.max_aspect;
  j["noise"] = c.noise;
  j["seed"] = c.seed;
  return j;
}

inline std::string dataset_fingerprint(const SyntheticDatasetConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

inline std::string image_file_name(int id, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d%s", id, suffix);
  return buf;
}

inline void write_labels(const std::filesystem::path& path, const LabelMap& l) {
  std::vector<float> v(l.values.begin(), l.values.end());
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(l.h),
                                 static_cast<std::uint32_t>(l.w)};
  write_dpct(path, dims, v);
}

inline LabelMap read_labels(const std::filesystem::path& path) {
  DpctArray a = read_dpct(path);
  if (a.dims.size() != 2)
    throw DataError("labels " + path.string() + ": expected rank 2");
  LabelMap l{1, static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]), {}};
  l.values.reserve(a.values.size());
  for (float f : a.values) l.values.push_back(static_cast<std::int32_t>(f));
  return l;
}

// Layout: images/NNNNNN.dpct (1,3,h,w), labels/NNNNNN.dpct (h,w) and
// manifest.json, written last.
inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  nlohmann::ordered_json manifest;
  manifest["config"] = to_json(d.config);
  manifest["fingerprint"] = dataset_fingerprint(d.config);
  manifest["images"] = nlohmann::ordered_json::array();
  for (int i = 0; i < d.size(); ++i) {
    const std::string img = "images/" + image_file_name(i, ".dpct");
    const std::string lab = "labels/" + image_file_name(i, ".dpct");
    write_tensor(dir / img, d.samples[i].image);
    write_labels(dir / lab, d.samples[i].labels);
    nlohmann::ordered_json e;
    e["id"] = i;
    e["image_file"] = img;
    e["label_file"] = lab;
    e["h"] = d.samples[i].labels.h;
    e["w"] = d.samples[i].labels.w;
    manifest["images"].push_back(e);
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
}

inline SyntheticDatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  SyntheticDatasetConfig c;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) {
      try {
        field = j.at(key).get<std::decay_t<decltype(field)>>();
      } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("dataset.") + key + ": wrong type");
      }
    }
  };
  get("num_images", c.num_images);
  get("image_h", c.image_h);
  get("image_w", c.image_w);
  get("num_classes", c.num_classes);
  get("min_shapes", c.min_shapes);
  get("max_shapes", c.max_shapes);
  get("min_scale", c.min_scale);
  get("max_scale", c.max_scale);
  get("min_aspect", c.min_aspect);
  get("max_aspect", c.max_aspect);
  get("noise", c.noise);
  get("seed", c.seed);
  return c;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath))
    throw DataError("dataset manifest missing: " + mpath.string() +
                    " (run gen-data first)");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset manifest " + mpath.string() + ": " + e.what());
  }
  Dataset d;
  d.config = dataset_config_from_json(manifest.at("config"));
  for (const auto& e : manifest.at("images")) {
    Sample s;
    s.image = read_tensor(dir / e.at("image_file").get<std::string>());
    s.labels = read_labels(dir / e.at("label_file").get<std::string>());
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace dpc

#endif  // DPC_DATASET_HPP_
