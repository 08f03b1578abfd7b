// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tgazsr/archive.hpp"
#include "tgazsr/autograd.hpp"
#include "tgazsr/tensor.hpp"

namespace tgazsr {

struct ImageShape {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

// N images flattened channel-major into the rows of `pixels`, values in [0,1].
struct ImageBatch {
  ImageShape shape;
  Tensor pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  // Throws on an empty batch, a row-width mismatch, a pixel outside [0,1] or a
  // label outside [0, num_classes). num_classes == 0 skips the upper bound.
  void validate(std::size_t num_classes = 0) const;
};

// Frozen class-prompt embeddings, one unit-norm row per class.
struct TextEmbeddings {
  Tensor vectors;
  std::vector<std::string> class_names;
  std::string prompt_template = "a photo of a {class}";

  std::size_t num_classes() const { return vectors.rows; }
  std::size_t dim() const { return vectors.cols; }
  // Rows of `vectors` selected by label, as an N x d tensor.
  Tensor rows_for(std::span<const int> labels) const;
};

struct ImageEncoding {
  Tensor pooled;   // N x d, unit rows
  Tensor patches;  // (N*P) x d, patch tokens before pooling
  std::size_t num_patches = 0;
};

using ParameterStore = std::map<std::string, Tensor>;
using ParamVars = std::map<std::string, ad::Var>;

// Differentiable encoder outputs for one forward pass.
struct EncoderGraph {
  ad::Var patches;      // (N*P) x d
  ad::Var pooled;       // N x d, unit rows
  ad::Var activations;  // last-block patch activations used by Grad-CAM
  std::size_t num_patches = 0;
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;

  virtual std::unique_ptr<ImageEncoder> clone() const = 0;
  virtual std::string kind() const = 0;
  virtual std::size_t patch_size() const = 0;
  virtual std::size_t embed_dim() const = 0;
  // Architecture hyperparameters; two encoders with equal config() are
  // interchangeable apart from their parameter values.
  virtual nlohmann::json config() const = 0;
  virtual EncoderGraph forward(const ad::Var& pixels, const ImageShape& shape,
                               const ParamVars& params) const = 0;

  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  std::size_t parameter_count() const;

 protected:
  ParameterStore params_;
};

// Wraps every stored parameter in a fresh leaf for one forward pass.
ParamVars bind_parameters(const ParameterStore& store, bool requires_grad);

struct VitConfig {
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t patch = 4;
  std::size_t dim = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;

  nlohmann::json to_json() const;
  static VitConfig from_json(const nlohmann::json& j);
};

// Patch 8, d=32, one block, two heads: the size used for the desk experiments.
VitConfig desk_vit_config();

// Pre-norm vision transformer without a class token. Patch tokens after the
// last block form the spatial feature grid; the pooled embedding is the
// l2-normalised projection of their mean.
class VitEncoder final : public ImageEncoder {
 public:
  VitEncoder(const VitConfig& cfg, std::uint64_t seed);

  std::unique_ptr<ImageEncoder> clone() const override;
  std::string kind() const override { return "vit"; }
  std::size_t patch_size() const override { return cfg_.patch; }
  std::size_t embed_dim() const override { return cfg_.dim; }
  nlohmann::json config() const override { return cfg_.to_json(); }
  EncoderGraph forward(const ad::Var& pixels, const ImageShape& shape,
                       const ParamVars& params) const override;
  const VitConfig& vit_config() const { return cfg_; }

 private:
  VitConfig cfg_;
};

// Single linear patch embedding followed by mean pooling and a projection.
// Small enough to reason about by hand; used for closed-form checks.
class LinearPatchEncoder final : public ImageEncoder {
 public:
  LinearPatchEncoder(std::size_t channels, std::size_t patch, std::size_t dim,
                     std::uint64_t seed);

  std::unique_ptr<ImageEncoder> clone() const override;
  std::string kind() const override { return "linear"; }
  std::size_t patch_size() const override { return patch_; }
  std::size_t embed_dim() const override { return dim_; }
  nlohmann::json config() const override;
  EncoderGraph forward(const ad::Var& pixels, const ImageShape& shape,
                       const ParamVars& params) const override;

 private:
  std::size_t channels_;
  std::size_t patch_;
  std::size_t dim_;
};

std::unique_ptr<ImageEncoder> make_encoder(const nlohmann::json& config, std::uint64_t seed);

// Runs the encoder without recording a graph.
ImageEncoding encode_image(const ImageEncoder& encoder, const ImageBatch& batch);

// Builds the graph with `pixels` as the input node. Parameters become leaves
// that require grad only when `track_params` is set.
struct TrackedForward {
  EncoderGraph graph;
  ParamVars params;
};
TrackedForward forward_tracked(const ImageEncoder& encoder, const ad::Var& pixels,
                               const ImageShape& shape, bool track_params);

struct SyntheticTextSource {
  std::uint64_t seed = 0;
  std::size_t dim = 64;
};
struct ArchiveTextSource {
  std::filesystem::path path;
};
using TextSource = std::variant<SyntheticTextSource, ArchiveTextSource>;

// Class-prompt embeddings from a frozen source. Synthetic vectors are derived
// from the seed and the formatted prompt, so each class keeps its vector
// regardless of list order. Archive sources look tensors up by class name.
TextEmbeddings encode_text(const std::vector<std::string>& class_names,
                           const std::string& prompt_template, const TextSource& source);

std::string format_prompt(const std::string& prompt_template, const std::string& class_name);

// logits[i, k] = <pooled_i, text_k> / temperature
ad::Var classification_logits(const ad::Var& pooled, const TextEmbeddings& text,
                              double temperature);
Tensor classification_logits(const Tensor& pooled, const TextEmbeddings& text,
                             double temperature);

inline constexpr double kDefaultTemperature = 0.07;

// Frozen original encoder, trainable target, frozen text, fixed temperature.
class DualModelState {
 public:
  DualModelState(std::unique_ptr<ImageEncoder> original, TextEmbeddings text,
                 double temperature = kDefaultTemperature);
  DualModelState(std::unique_ptr<ImageEncoder> original, std::unique_ptr<ImageEncoder> target,
                 TextEmbeddings text, double temperature = kDefaultTemperature);

  const ImageEncoder& original() const { return *original_; }
  const ImageEncoder& target() const { return *target_; }
  ImageEncoder& mutable_target() { return *target_; }
  const TextEmbeddings& text() const { return text_; }
  double temperature() const { return temperature_; }

 private:
  std::unique_ptr<const ImageEncoder> original_;
  std::unique_ptr<ImageEncoder> target_;
  TextEmbeddings text_;
  double temperature_;
};

// Checkpoint layout inside a tensor archive: encoder parameters under
// "encoder/<name>", text rows under "text/vectors", and in meta the encoder
// kind and config, class names, prompt template and temperature.
struct Checkpoint {
  std::unique_ptr<ImageEncoder> encoder;
  TextEmbeddings text;
  double temperature = kDefaultTemperature;
};
TensorArchive to_archive(const ImageEncoder& encoder, const TextEmbeddings& text,
                         double temperature);
Checkpoint from_archive(const TensorArchive& archive);

}  // namespace tgazsr
