// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "tgazsr/random.hpp"

namespace tgazsr {

std::string to_string(AttackLoss loss) {
  return loss == AttackLoss::cw_margin ? "cw" : "ce";
}

AttackLoss attack_loss_from_string(const std::string& name) {
  if (name == "ce" || name == "cross_entropy") return AttackLoss::cross_entropy;
  if (name == "cw" || name == "cw_margin") return AttackLoss::cw_margin;
  throw Error(ErrorCode::config, "unknown attack loss '" + name + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::invalid_argument, "epsilon must be >= 0");
  }
  if (!(step_size > 0.0)) throw Error(ErrorCode::invalid_argument, "step size must be > 0");
  if (iterations < 1) throw Error(ErrorCode::invalid_argument, "iterations must be >= 1");
  if (!(clamp_min < clamp_max)) throw Error(ErrorCode::invalid_argument, "empty clamp range");
  if (!(kappa >= 0.0)) throw Error(ErrorCode::invalid_argument, "kappa must be >= 0");
}

nlohmann::json AttackConfig::to_json() const {
  return {{"eps", epsilon},         {"step", step_size},  {"iters", iterations},
          {"random_init", random_init}, {"clamp", {clamp_min, clamp_max}},
          {"loss", to_string(loss)}, {"kappa", kappa},    {"seed", seed}};
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j) { return from_json(j, AttackConfig{}); }

AttackConfig AttackConfig::from_json(const nlohmann::json& j, AttackConfig c) {
  c.epsilon = j.value("eps", c.epsilon);
  c.step_size = j.value("step", c.step_size);
  c.iterations = j.value("iters", c.iterations);
  c.random_init = j.value("random_init", c.random_init);
  if (j.contains("clamp")) {
    const auto range = j.at("clamp").get<std::vector<double>>();
    if (range.size() != 2) throw Error(ErrorCode::config, "attack.clamp must have two values");
    c.clamp_min = range[0];
    c.clamp_max = range[1];
  }
  if (j.contains("loss")) c.loss = attack_loss_from_string(j.at("loss").get<std::string>());
  c.kappa = j.value("kappa", c.kappa);
  c.seed = j.value("seed", c.seed);
  return c;
}

AttackConfig pgd_train_config() { return AttackConfig{}; }

AttackConfig pgd_eval_config() {
  AttackConfig c;
  c.iterations = 100;
  return c;
}

void project_linf(Tensor& x, const Tensor& x0, double eps, double lo, double hi) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = std::clamp(x.data[i], x0.data[i] - eps, x0.data[i] + eps);
    x.data[i] = std::clamp(v, lo, hi);
  }
}

ImageBatch projected_sign_ascent(const ImageBatch& batch, const AttackConfig& cfg,
                                 const PixelGradientFn& gradient) {
  cfg.validate();
  ImageBatch adv = batch;
  Tensor& x = adv.pixels;
  if (cfg.random_init && cfg.epsilon > 0.0) {
    Rng rng(cfg.seed);
    for (double& v : x.data) v += rng.uniform(-cfg.epsilon, cfg.epsilon);
    project_linf(x, batch.pixels, cfg.epsilon, cfg.clamp_min, cfg.clamp_max);
  }
  for (int it = 0; it < cfg.iterations; ++it) {
    const Tensor g = gradient(x);
    if (g.size() != x.size()) throw Error(ErrorCode::shape_mismatch, "attack gradient size");
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = g.data[i] > 0.0 ? 1.0 : (g.data[i] < 0.0 ? -1.0 : 0.0);
      x.data[i] += cfg.step_size * s;
    }
    project_linf(x, batch.pixels, cfg.epsilon, cfg.clamp_min, cfg.clamp_max);
  }
  return adv;
}

Tensor attack_loss_gradient(const ImageEncoder& encoder, const Tensor& pixels,
                            const ImageShape& shape, std::span<const int> labels,
                            const TextEmbeddings& text, double temperature,
                            const AttackConfig& cfg) {
  ad::Var input = ad::leaf(pixels, true);
  auto fwd = forward_tracked(encoder, input, shape, false);
  ad::Var logits = classification_logits(fwd.graph.pooled, text, temperature);
  ad::Var loss = cfg.loss == AttackLoss::cw_margin ? ad::cw_margin(logits, labels, cfg.kappa)
                                                   : ad::cross_entropy(logits, labels);
  loss.backward();
  return input.grad();
}

namespace {

ImageBatch attack_with(const ImageEncoder& encoder, const ImageBatch& batch,
                       const TextEmbeddings& text, double temperature, const AttackConfig& cfg) {
  batch.validate(text.num_classes());
  return projected_sign_ascent(batch, cfg, [&](const Tensor& x) {
    return attack_loss_gradient(encoder, x, batch.shape, batch.labels, text, temperature, cfg);
  });
}

}  // namespace

ImageBatch pgd_attack(const ImageEncoder& encoder, const ImageBatch& batch,
                      const TextEmbeddings& text, double temperature, const AttackConfig& cfg) {
  if (cfg.loss != AttackLoss::cross_entropy) {
    throw Error(ErrorCode::invalid_argument, "pgd_attack expects the cross-entropy loss");
  }
  return attack_with(encoder, batch, text, temperature, cfg);
}

ImageBatch cw_attack(const ImageEncoder& encoder, const ImageBatch& batch,
                     const TextEmbeddings& text, double temperature, const AttackConfig& cfg) {
  if (cfg.loss != AttackLoss::cw_margin) {
    throw Error(ErrorCode::invalid_argument, "cw_attack expects the CW margin loss");
  }
  return attack_with(encoder, batch, text, temperature, cfg);
}

ImageBatch run_attack(const ImageEncoder& encoder, const ImageBatch& batch,
                      const TextEmbeddings& text, double temperature, const AttackConfig& cfg) {
  return attack_with(encoder, batch, text, temperature, cfg);
}

std::string LinfAttack::name() const {
  return (cfg_.loss == AttackLoss::cw_margin ? "cw-linf-" : "pgd-") +
         std::to_string(cfg_.iterations);
}

ImageBatch LinfAttack::run(const ImageEncoder& encoder, const ImageBatch& batch,
                           const TextEmbeddings& text, double temperature) const {
  return run_attack(encoder, batch, text, temperature, cfg_);
}

}  // namespace tgazsr
