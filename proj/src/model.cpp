// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/model.hpp"

#include <cmath>

#include "tgazsr/random.hpp"

namespace tgazsr {

void ImageBatch::validate(std::size_t num_classes) const {
  if (labels.empty()) throw Error(ErrorCode::empty_dataset, "image batch has no samples");
  if (pixels.rows != labels.size() || pixels.cols != shape.size()) {
    throw Error(ErrorCode::shape_mismatch, "pixel tensor does not match batch shape");
  }
  for (double v : pixels.data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "pixel value outside [0,1]");
    }
  }
  for (int y : labels) {
    if (y < 0 || (num_classes != 0 && static_cast<std::size_t>(y) >= num_classes)) {
      throw Error(ErrorCode::label_out_of_range, "label " + std::to_string(y));
    }
  }
}

Tensor TextEmbeddings::rows_for(std::span<const int> labels) const {
  Tensor out(labels.size(), dim());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes()) {
      throw Error(ErrorCode::label_out_of_range, "label " + std::to_string(y));
    }
    auto src = vectors.row(static_cast<std::size_t>(y));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::size_t ImageEncoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

ParamVars bind_parameters(const ParameterStore& store, bool requires_grad) {
  ParamVars vars;
  for (const auto& [name, t] : store) vars.emplace(name, ad::leaf(t, requires_grad));
  return vars;
}

namespace {

Tensor random_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = stddev * rng.normal();
  return t;
}

const ad::Var& param(const ParamVars& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw Error(ErrorCode::invalid_argument, "missing parameter " + name);
  return it->second;
}

ad::Var linear(const ad::Var& x, const ParamVars& params, const std::string& prefix) {
  return ad::add_row(ad::matmul(x, param(params, prefix + ".w")), param(params, prefix + ".b"));
}

void check_geometry(const ImageShape& shape, std::size_t patch) {
  if (patch == 0 || shape.height % patch != 0 || shape.width % patch != 0) {
    throw Error(ErrorCode::shape_mismatch,
                "image " + std::to_string(shape.height) + "x" + std::to_string(shape.width) +
                    " not divisible by patch size " + std::to_string(patch));
  }
}

}  // namespace

nlohmann::json VitConfig::to_json() const {
  return {{"kind", "vit"},     {"image_size", image_size}, {"channels", channels},
          {"patch", patch},    {"dim", dim},               {"depth", depth},
          {"heads", heads},    {"mlp_ratio", mlp_ratio}};
}

VitConfig VitConfig::from_json(const nlohmann::json& j) {
  VitConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.channels = j.value("channels", c.channels);
  c.patch = j.value("patch", c.patch);
  c.dim = j.value("dim", c.dim);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  return c;
}

VitConfig desk_vit_config() {
  VitConfig c;
  c.patch = 8;
  c.dim = 32;
  c.depth = 1;
  c.heads = 2;
  return c;
}

VitEncoder::VitEncoder(const VitConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.patch == 0 || cfg.image_size % cfg.patch != 0) {
    throw Error(ErrorCode::shape_mismatch, "image_size not divisible by patch");
  }
  if (cfg.heads == 0 || cfg.dim % cfg.heads != 0) {
    throw Error(ErrorCode::invalid_argument, "dim not divisible by heads");
  }
  Rng rng(seed);
  const std::size_t d = cfg.dim;
  const std::size_t pdim = cfg.channels * cfg.patch * cfg.patch;
  const std::size_t grid = cfg.image_size / cfg.patch;
  const std::size_t hidden = cfg.mlp_ratio * d;
  auto fan_in = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

  params_["patch.w"] = random_normal(pdim, d, fan_in(pdim), rng);
  params_["patch.b"] = Tensor(1, d);
  params_["pos"] = random_normal(grid * grid, d, 0.02, rng);
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    params_[p + "ln1.g"] = Tensor(1, d, 1.0);
    params_[p + "ln1.b"] = Tensor(1, d);
    params_[p + "qkv.w"] = random_normal(d, 3 * d, fan_in(d), rng);
    params_[p + "qkv.b"] = Tensor(1, 3 * d);
    params_[p + "proj.w"] = random_normal(d, d, 0.5 * fan_in(d), rng);
    params_[p + "proj.b"] = Tensor(1, d);
    params_[p + "ln2.g"] = Tensor(1, d, 1.0);
    params_[p + "ln2.b"] = Tensor(1, d);
    params_[p + "fc1.w"] = random_normal(d, hidden, fan_in(d), rng);
    params_[p + "fc1.b"] = Tensor(1, hidden);
    params_[p + "fc2.w"] = random_normal(hidden, d, 0.5 * fan_in(hidden), rng);
    params_[p + "fc2.b"] = Tensor(1, d);
  }
  params_["ln_f.g"] = Tensor(1, d, 1.0);
  params_["ln_f.b"] = Tensor(1, d);
  params_["head.w"] = random_normal(d, d, fan_in(d), rng);
}

std::unique_ptr<ImageEncoder> VitEncoder::clone() const {
  return std::make_unique<VitEncoder>(*this);
}

EncoderGraph VitEncoder::forward(const ad::Var& pixels, const ImageShape& shape,
                                 const ParamVars& params) const {
  check_geometry(shape, cfg_.patch);
  if (shape.height != cfg_.image_size || shape.width != cfg_.image_size ||
      shape.channels != cfg_.channels) {
    throw Error(ErrorCode::shape_mismatch, "batch geometry does not match encoder");
  }
  const std::size_t grid = cfg_.image_size / cfg_.patch;
  const std::size_t n_patches = grid * grid;

  ad::Var x = ad::patchify(pixels, shape.channels, shape.height, shape.width, cfg_.patch);
  x = ad::add_tiled(linear(x, params, "patch"), param(params, "pos"));
  for (std::size_t b = 0; b < cfg_.depth; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    ad::Var h = ad::layer_norm(x, param(params, p + "ln1.g"), param(params, p + "ln1.b"));
    h = ad::multi_head_attention(linear(h, params, p + "qkv"), n_patches, cfg_.heads);
    x = ad::add(x, linear(h, params, p + "proj"));
    h = ad::layer_norm(x, param(params, p + "ln2.g"), param(params, p + "ln2.b"));
    h = ad::gelu(linear(h, params, p + "fc1"));
    x = ad::add(x, linear(h, params, p + "fc2"));
  }
  x = ad::layer_norm(x, param(params, "ln_f.g"), param(params, "ln_f.b"));
  EncoderGraph g;
  g.patches = x;
  g.activations = x;
  g.num_patches = n_patches;
  g.pooled = ad::l2_normalize_rows(ad::matmul(ad::block_mean(x, n_patches), param(params, "head.w")));
  return g;
}

LinearPatchEncoder::LinearPatchEncoder(std::size_t channels, std::size_t patch, std::size_t dim,
                                       std::uint64_t seed)
    : channels_(channels), patch_(patch), dim_(dim) {
  Rng rng(seed);
  const std::size_t pdim = channels * patch * patch;
  params_["patch.w"] = random_normal(pdim, dim, 1.0 / std::sqrt(static_cast<double>(pdim)), rng);
  params_["patch.b"] = Tensor(1, dim);
  Tensor eye(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) eye(i, i) = 1.0;
  params_["head.w"] = std::move(eye);
}

std::unique_ptr<ImageEncoder> LinearPatchEncoder::clone() const {
  return std::make_unique<LinearPatchEncoder>(*this);
}

nlohmann::json LinearPatchEncoder::config() const {
  return {{"kind", "linear"}, {"channels", channels_}, {"patch", patch_}, {"dim", dim_}};
}

EncoderGraph LinearPatchEncoder::forward(const ad::Var& pixels, const ImageShape& shape,
                                         const ParamVars& params) const {
  check_geometry(shape, patch_);
  if (shape.channels != channels_) throw Error(ErrorCode::shape_mismatch, "channel count");
  const std::size_t n_patches = (shape.height / patch_) * (shape.width / patch_);
  ad::Var x = ad::patchify(pixels, shape.channels, shape.height, shape.width, patch_);
  x = linear(x, params, "patch");
  EncoderGraph g;
  g.patches = x;
  g.activations = x;
  g.num_patches = n_patches;
  g.pooled = ad::l2_normalize_rows(ad::matmul(ad::block_mean(x, n_patches), param(params, "head.w")));
  return g;
}

std::unique_ptr<ImageEncoder> make_encoder(const nlohmann::json& config, std::uint64_t seed) {
  const std::string kind = config.value("kind", "vit");
  if (kind == "vit") return std::make_unique<VitEncoder>(VitConfig::from_json(config), seed);
  if (kind == "linear") {
    return std::make_unique<LinearPatchEncoder>(config.value("channels", std::size_t{3}),
                                                config.value("patch", std::size_t{4}),
                                                config.value("dim", std::size_t{64}), seed);
  }
  throw Error(ErrorCode::config, "unknown encoder kind " + kind);
}

TrackedForward forward_tracked(const ImageEncoder& encoder, const ad::Var& pixels,
                               const ImageShape& shape, bool track_params) {
  TrackedForward out;
  out.params = bind_parameters(encoder.parameters(), track_params);
  out.graph = encoder.forward(pixels, shape, out.params);
  return out;
}

ImageEncoding encode_image(const ImageEncoder& encoder, const ImageBatch& batch) {
  batch.validate();
  ad::NoGradGuard no_grad;
  auto fwd = forward_tracked(encoder, ad::constant(batch.pixels), batch.shape, false);
  return {fwd.graph.pooled.value(), fwd.graph.patches.value(), fwd.graph.num_patches};
}

std::string format_prompt(const std::string& prompt_template, const std::string& class_name) {
  for (const std::string placeholder : {"{class}", "{}"}) {
    const auto pos = prompt_template.find(placeholder);
    if (pos != std::string::npos) {
      std::string out = prompt_template;
      out.replace(pos, placeholder.size(), class_name);
      return out;
    }
  }
  throw Error(ErrorCode::invalid_argument, "prompt template has no placeholder: " + prompt_template);
}

TextEmbeddings encode_text(const std::vector<std::string>& class_names,
                           const std::string& prompt_template, const TextSource& source) {
  if (class_names.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "need at least two classes");
  }
  TextEmbeddings text;
  text.class_names = class_names;
  text.prompt_template = prompt_template;

  if (const auto* syn = std::get_if<SyntheticTextSource>(&source)) {
    text.vectors = Tensor(class_names.size(), syn->dim);
    for (std::size_t k = 0; k < class_names.size(); ++k) {
      Rng rng(fnv1a(format_prompt(prompt_template, class_names[k]), fnv1a("seed") ^ syn->seed));
      for (double& v : text.vectors.row(k)) v = rng.normal();
    }
  } else {
    const auto& path = std::get<ArchiveTextSource>(source).path;
    const TensorArchive archive = load_archive(path);
    for (std::size_t k = 0; k < class_names.size(); ++k) {
      auto it = archive.tensors.find(class_names[k]);
      if (it == archive.tensors.end()) {
        throw Error(ErrorCode::missing_class,
                    "class '" + class_names[k] + "' not found in " + path.string());
      }
      const Tensor& t = it->second;
      if (k == 0) text.vectors = Tensor(class_names.size(), t.size());
      if (t.size() != text.vectors.cols) {
        throw Error(ErrorCode::dimension_mismatch, "embedding width for " + class_names[k]);
      }
      std::copy(t.data.begin(), t.data.end(), text.vectors.row(k).begin());
    }
  }
  for (std::size_t k = 0; k < text.vectors.rows; ++k) {
    auto row = text.vectors.row(k);
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw Error(ErrorCode::invalid_argument, "zero text embedding");
    for (double& v : row) v /= norm;
  }
  return text;
}

ad::Var classification_logits(const ad::Var& pooled, const TextEmbeddings& text,
                              double temperature) {
  if (pooled.cols() != text.dim()) {
    throw Error(ErrorCode::dimension_mismatch,
                "image embedding width " + std::to_string(pooled.cols()) +
                    " vs text width " + std::to_string(text.dim()));
  }
  if (!(temperature > 0.0)) throw Error(ErrorCode::invalid_argument, "temperature must be > 0");
  return ad::scale(ad::matmul_nt(pooled, ad::constant(text.vectors)), 1.0 / temperature);
}

Tensor classification_logits(const Tensor& pooled, const TextEmbeddings& text,
                             double temperature) {
  ad::NoGradGuard no_grad;
  return classification_logits(ad::constant(pooled), text, temperature).value();
}

namespace {
void check_dual_state(const ImageEncoder& original, const ImageEncoder& target,
                      const TextEmbeddings& text, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::invalid_argument, "temperature must be > 0");
  if (original.config() != target.config()) {
    throw Error(ErrorCode::invalid_argument, "original and target architectures differ");
  }
  if (original.embed_dim() != text.dim()) {
    throw Error(ErrorCode::dimension_mismatch, "encoder width does not match text embeddings");
  }
}
}  // namespace

DualModelState::DualModelState(std::unique_ptr<ImageEncoder> original, TextEmbeddings text,
                               double temperature)
    : original_(std::move(original)),
      target_(original_->clone()),
      text_(std::move(text)),
      temperature_(temperature) {
  check_dual_state(*original_, *target_, text_, temperature_);
}

DualModelState::DualModelState(std::unique_ptr<ImageEncoder> original,
                               std::unique_ptr<ImageEncoder> target, TextEmbeddings text,
                               double temperature)
    : original_(std::move(original)),
      target_(std::move(target)),
      text_(std::move(text)),
      temperature_(temperature) {
  check_dual_state(*original_, *target_, text_, temperature_);
}

TensorArchive to_archive(const ImageEncoder& encoder, const TextEmbeddings& text,
                         double temperature) {
  TensorArchive a;
  for (const auto& [name, t] : encoder.parameters()) a.tensors["encoder/" + name] = t;
  a.tensors["text/vectors"] = text.vectors;
  a.meta = {{"encoder", encoder.config()},
            {"classes", text.class_names},
            {"template", text.prompt_template},
            {"temperature", temperature}};
  return a;
}

Checkpoint from_archive(const TensorArchive& archive) {
  Checkpoint ck;
  try {
    ck.encoder = make_encoder(archive.meta.at("encoder"), 0);
    ck.text.class_names = archive.meta.at("classes").get<std::vector<std::string>>();
    ck.text.prompt_template = archive.meta.value("template", ck.text.prompt_template);
    ck.temperature = archive.meta.value("temperature", kDefaultTemperature);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, std::string("checkpoint meta: ") + e.what());
  }
  for (auto& [name, t] : ck.encoder->parameters()) {
    auto it = archive.tensors.find("encoder/" + name);
    if (it == archive.tensors.end()) throw Error(ErrorCode::io, "checkpoint lacks " + name);
    if (it->second.size() != t.size()) throw Error(ErrorCode::shape_mismatch, "checkpoint " + name);
    t.data = it->second.data;
  }
  auto it = archive.tensors.find("text/vectors");
  if (it == archive.tensors.end()) throw Error(ErrorCode::io, "checkpoint lacks text/vectors");
  ck.text.vectors = it->second;
  // float32 storage: renormalise rows to restore the unit-norm invariant
  for (std::size_t k = 0; k < ck.text.vectors.rows; ++k) {
    auto row = ck.text.vectors.row(k);
    double n = 0.0;
    for (double v : row) n += v * v;
    n = std::sqrt(n);
    for (double& v : row) v /= n;
  }
  return ck;
}

}  // namespace tgazsr
