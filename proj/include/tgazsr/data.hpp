// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tgazsr/model.hpp"

namespace tgazsr {

// In-memory labelled images, one flattened image per row of `pixels`.
struct Dataset {
  std::string id;
  ImageShape shape;
  Tensor pixels;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  ImageBatch batch(std::span<const std::size_t> indices) const;
  ImageBatch all() const;
  // First n samples (or all, if n >= size()).
  Dataset head(std::size_t n) const;
};

// Manifest JSON:
//   {"classes": [...], "image_size": [H, W], "entries": [["rel/path.png", 3], ...]}
// Entry paths are relative to the manifest's directory.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::pair<std::string, int>> entries;
  std::vector<std::string> class_names;
  std::size_t height = 0;
  std::size_t width = 0;
};

// Distinct ErrorCodes: missing_file (manifest or an entry), malformed_manifest,
// label_out_of_range, empty_dataset.
DatasetManifest load_manifest(const std::filesystem::path& path);
// Canonical manifest text; load_manifest(save_manifest(m)) reproduces it.
std::string write_manifest(const DatasetManifest& manifest);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
// Reads every referenced PNG (8-bit RGB) into memory.
Dataset load_dataset(const DatasetManifest& manifest);

struct ShapesOptions {
  std::size_t num_classes = 4;
  std::size_t first_class = 0;  // classes first_class .. first_class + num_classes - 1
  std::size_t image_size = 32;
  double min_scale = 0.18;  // shape radius as a fraction of the image side
  double max_scale = 0.30;
  double noise = 0.04;      // uniform per-pixel noise amplitude
};

// Class names of the procedural shape task, in label order.
const std::vector<std::string>& shape_class_names();

// kind == "shapes": procedurally drawn shapes, one geometry per class, with
// random position, size and colours. Labels cycle 0..K-1 so every prefix is
// near-balanced.
Dataset synthetic_dataset(const std::string& kind, std::size_t n, std::uint64_t seed,
                          const ShapesOptions& options = {});

// Index order for one pass: identity, or a seeded Fisher-Yates shuffle.
std::vector<std::size_t> sample_order(std::size_t n, std::uint64_t seed, bool shuffle);

// Batches in a deterministic order; the final partial batch is kept.
class BatchSequence {
 public:
  BatchSequence(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed, bool shuffle);

  std::size_t size() const;
  ImageBatch operator[](std::size_t i) const;

  class Iterator {
   public:
    Iterator(const BatchSequence* seq, std::size_t i) : seq_(seq), i_(i) {}
    ImageBatch operator*() const { return (*seq_)[i_]; }
    Iterator& operator++() {
      ++i_;
      return *this;
    }
    bool operator!=(const Iterator& o) const { return i_ != o.i_; }

   private:
    const BatchSequence* seq_;
    std::size_t i_;
  };
  Iterator begin() const { return {this, 0}; }
  Iterator end() const { return {this, size()}; }

 private:
  const Dataset* dataset_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
};

BatchSequence batches(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed,
                      bool shuffle);

}  // namespace tgazsr
