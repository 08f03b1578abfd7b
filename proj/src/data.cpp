// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "tgazsr/png_io.hpp"
#include "tgazsr/random.hpp"

namespace tgazsr {

ImageBatch Dataset::batch(std::span<const std::size_t> indices) const {
  ImageBatch b;
  b.shape = shape;
  b.pixels = Tensor(indices.size(), shape.size());
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = pixels.row(indices[i]);
    std::copy(src.begin(), src.end(), b.pixels.row(i).begin());
    b.labels.push_back(labels[indices[i]]);
  }
  return b;
}

ImageBatch Dataset::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return batch(idx);
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  Dataset d;
  d.id = id;
  d.shape = shape;
  d.class_names = class_names;
  d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  d.pixels = Tensor(n, shape.size());
  std::copy(pixels.data.begin(), pixels.data.begin() + static_cast<std::ptrdiff_t>(n * shape.size()),
            d.pixels.data.begin());
  return d;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::missing_file, "manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    const auto size = j.at("image_size").get<std::vector<std::size_t>>();
    if (size.size() != 2 || size[0] == 0 || size[1] == 0) {
      throw Error(ErrorCode::malformed_manifest, "image_size must be [H, W] with H, W >= 1");
    }
    m.height = size[0];
    m.width = size[1];
    const auto& entries = j.at("entries");
    if (!entries.is_array()) throw Error(ErrorCode::malformed_manifest, "entries must be a list");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number_integer()) {
        throw Error(ErrorCode::malformed_manifest,
                    "entry " + std::to_string(i) + " is not [\"path\", label]");
      }
      m.entries.emplace_back(e[0].get<std::string>(), e[1].get<int>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_manifest, path.string() + ": " + e.what());
  }
  if (m.entries.empty()) throw Error(ErrorCode::empty_dataset, path.string() + " lists no entries");
  for (const auto& [file, label] : m.entries) {
    if (label < 0 || static_cast<std::size_t>(label) >= m.class_names.size()) {
      throw Error(ErrorCode::label_out_of_range,
                  file + " has label " + std::to_string(label) + " with " +
                      std::to_string(m.class_names.size()) + " classes");
    }
  }
  for (const auto& [file, label] : m.entries) {
    if (!std::filesystem::exists(m.root / file)) {
      throw Error(ErrorCode::missing_file, (m.root / file).string());
    }
  }
  return m;
}

std::string write_manifest(const DatasetManifest& m) {
  auto quote = [](const std::string& s) { return nlohmann::json(s).dump(); };
  std::ostringstream out;
  out << "{\n  \"classes\": [";
  for (std::size_t i = 0; i < m.class_names.size(); ++i) {
    out << (i ? ", " : "") << quote(m.class_names[i]);
  }
  out << "],\n  \"image_size\": [" << m.height << ", " << m.width << "],\n  \"entries\": [";
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    out << (i ? ",\n    " : "\n    ") << '[' << quote(m.entries[i].first) << ", "
        << m.entries[i].second << ']';
  }
  out << (m.entries.empty() ? "]\n}\n" : "\n  ]\n}\n");
  return out.str();
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << write_manifest(manifest);
}

Dataset load_dataset(const DatasetManifest& manifest) {
  Dataset d;
  d.id = manifest.root.filename().string();
  d.class_names = manifest.class_names;
  d.shape = ImageShape{3, manifest.height, manifest.width};
  d.pixels = Tensor(manifest.entries.size(), d.shape.size());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    ImageShape got;
    const Tensor img = read_png_rgb(manifest.root / manifest.entries[i].first, got);
    if (!(got == d.shape)) {
      throw Error(ErrorCode::shape_mismatch, manifest.entries[i].first + " is " +
                                                 std::to_string(got.height) + "x" +
                                                 std::to_string(got.width));
    }
    std::copy(img.data.begin(), img.data.end(), d.pixels.row(i).begin());
    d.labels.push_back(manifest.entries[i].second);
  }
  return d;
}

const std::vector<std::string>& shape_class_names() {
  static const std::vector<std::string> names{"disk", "square", "triangle", "plus",
                                              "ring", "bar",    "diamond",  "cross"};
  return names;
}

namespace {

// Shape membership in coordinates normalised by the shape radius.
bool inside(std::size_t shape, double dx, double dy) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (shape) {
    case 0: return dx * dx + dy * dy <= 1.0;
    case 1: return std::max(ax, ay) <= 0.8;
    case 2: return dy >= -0.85 && dy <= 0.85 && ax <= 0.95 * (dy + 0.85) / 1.7;
    case 3: return (ax <= 0.3 && ay <= 1.0) || (ay <= 0.3 && ax <= 1.0);
    case 4: {
      const double r2 = dx * dx + dy * dy;
      return r2 <= 1.0 && r2 >= 0.3;
    }
    case 5: return ay <= 0.3 && ax <= 1.0;
    case 6: return ax + ay <= 1.0;
    case 7: return (std::abs(dx - dy) <= 0.4 || std::abs(dx + dy) <= 0.4) && std::max(ax, ay) <= 0.85;
    default: return false;
  }
}

}  // namespace

Dataset synthetic_dataset(const std::string& kind, std::size_t n, std::uint64_t seed,
                          const ShapesOptions& options) {
  if (kind != "shapes") throw Error(ErrorCode::config, "unknown synthetic dataset '" + kind + "'");
  const auto& names = shape_class_names();
  if (options.num_classes < 2 || options.first_class + options.num_classes > names.size()) {
    throw Error(ErrorCode::invalid_argument, "shapes supports 2.." + std::to_string(names.size()) +
                                                 " classes");
  }
  if (n == 0) throw Error(ErrorCode::empty_dataset, "synthetic dataset of size 0");
  const std::size_t side = options.image_size;
  Dataset d;
  d.id = "shapes-" + std::to_string(options.first_class) + "+" +
         std::to_string(options.num_classes) + "-" + std::to_string(seed);
  d.shape = ImageShape{3, side, side};
  const auto first = names.begin() + static_cast<std::ptrdiff_t>(options.first_class);
  d.class_names.assign(first, first + static_cast<std::ptrdiff_t>(options.num_classes));
  d.pixels = Tensor(n, d.shape.size());
  d.labels.resize(n);

  Rng rng(seed);
  constexpr int kSuper = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % options.num_classes;
    d.labels[i] = static_cast<int>(label);
    const double radius = side * rng.uniform(options.min_scale, options.max_scale);
    const double cx = rng.uniform(radius + 0.5, side - radius - 0.5);
    const double cy = rng.uniform(radius + 0.5, side - radius - 0.5);
    double fg[3], bg[3];
    const bool light_on_dark = rng.uniform() < 0.5;
    for (int c = 0; c < 3; ++c) {
      const double hi = rng.uniform(0.6, 1.0), lo = rng.uniform(0.0, 0.4);
      fg[c] = light_on_dark ? hi : lo;
      bg[c] = light_on_dark ? lo : hi;
    }
    auto img = d.pixels.row(i);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy) {
          for (int sx = 0; sx < kSuper; ++sx) {
            const double px = x + (sx + 0.5) / kSuper, py = y + (sy + 0.5) / kSuper;
            hits += inside(options.first_class + label, (px - cx) / radius, (py - cy) / radius) ? 1 : 0;
          }
        }
        const double cover = hits / double(kSuper * kSuper);
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = cover * fg[c] + (1.0 - cover) * bg[c] +
                           options.noise * rng.uniform(-1.0, 1.0);
          img[(c * side + y) * side + x] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  return d;
}

std::vector<std::size_t> sample_order(std::size_t n, std::uint64_t seed, bool shuffle) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
  }
  return order;
}

BatchSequence::BatchSequence(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed,
                             bool shuffle)
    : dataset_(&dataset), batch_size_(batch_size), order_(sample_order(dataset.size(), seed, shuffle)) {
  if (batch_size == 0) throw Error(ErrorCode::invalid_argument, "batch size must be >= 1");
}

std::size_t BatchSequence::size() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

ImageBatch BatchSequence::operator[](std::size_t i) const {
  const std::size_t begin = i * batch_size_;
  const std::size_t end = std::min(begin + batch_size_, order_.size());
  return dataset_->batch(std::span<const std::size_t>(order_.data() + begin, end - begin));
}

BatchSequence batches(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed,
                      bool shuffle) {
  return BatchSequence(dataset, batch_size, seed, shuffle);
}

}  // namespace tgazsr
