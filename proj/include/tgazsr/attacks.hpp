// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include <json.hpp>

#include "tgazsr/model.hpp"

namespace tgazsr {

enum class AttackLoss { cross_entropy, cw_margin };

std::string to_string(AttackLoss loss);
AttackLoss attack_loss_from_string(const std::string& name);

// l-infinity attack settings. Distances are in pixel units on the [0,1] scale.
struct AttackConfig {
  double epsilon = 1.0 / 255.0;
  double step_size = 1.0 / 255.0;
  int iterations = 2;
  bool random_init = false;
  double clamp_min = 0.0;
  double clamp_max = 1.0;
  AttackLoss loss = AttackLoss::cross_entropy;
  double kappa = 0.0;
  std::uint64_t seed = 0;  // only used with random_init

  void validate() const;
  nlohmann::json to_json() const;
  static AttackConfig from_json(const nlohmann::json& j);
  static AttackConfig from_json(const nlohmann::json& j, AttackConfig defaults);
};

// Training-time attack: PGD-2 at eps = step = 1/255.
AttackConfig pgd_train_config();
// Evaluation attack: PGD-100 at eps = step = 1/255.
AttackConfig pgd_eval_config();

// Loss value and its gradient with respect to the pixels of the current iterate.
using PixelGradientFn = std::function<Tensor(const Tensor& pixels)>;

// Clips x into the eps-ball around x0 and then into [lo, hi].
void project_linf(Tensor& x, const Tensor& x0, double eps, double lo, double hi);

// Signed-gradient ascent with projection after every step:
//   x <- P(x + step * sign(grad)), sign(0) = 0.
// Returns the final iterate; the input batch is not modified.
ImageBatch projected_sign_ascent(const ImageBatch& batch, const AttackConfig& cfg,
                                 const PixelGradientFn& gradient);

// Gradient of the configured attack loss with respect to pixels, with encoder
// parameters held constant.
Tensor attack_loss_gradient(const ImageEncoder& encoder, const Tensor& pixels,
                            const ImageShape& shape, std::span<const int> labels,
                            const TextEmbeddings& text, double temperature,
                            const AttackConfig& cfg);

// PGD on the cross-entropy loss. Requires cfg.loss == cross_entropy.
ImageBatch pgd_attack(const ImageEncoder& encoder, const ImageBatch& batch,
                      const TextEmbeddings& text, double temperature, const AttackConfig& cfg);

// l-infinity PGD on the CW margin min(max_{k!=y} z_k - z_y, kappa).
// Requires cfg.loss == cw_margin.
ImageBatch cw_attack(const ImageEncoder& encoder, const ImageBatch& batch,
                     const TextEmbeddings& text, double temperature, const AttackConfig& cfg);

// Pluggable attack, e.g. an adapter around an external attack suite.
class Attack {
 public:
  virtual ~Attack() = default;
  virtual std::string name() const = 0;
  virtual ImageBatch run(const ImageEncoder& encoder, const ImageBatch& batch,
                         const TextEmbeddings& text, double temperature) const = 0;
};

// Built-in PGD/CW selected by cfg.loss.
class LinfAttack final : public Attack {
 public:
  explicit LinfAttack(AttackConfig cfg) : cfg_(cfg) { cfg_.validate(); }
  std::string name() const override;
  ImageBatch run(const ImageEncoder& encoder, const ImageBatch& batch, const TextEmbeddings& text,
                 double temperature) const override;
  const AttackConfig& config() const { return cfg_; }

 private:
  AttackConfig cfg_;
};

ImageBatch run_attack(const ImageEncoder& encoder, const ImageBatch& batch,
                      const TextEmbeddings& text, double temperature, const AttackConfig& cfg);

}  // namespace tgazsr
