// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgazsr/attacks.hpp"
#include "tgazsr/attention.hpp"
#include "tgazsr/data.hpp"
#include "tgazsr/model.hpp"

namespace tgazsr {

enum class Distance { l2, l1, cosine };

std::string to_string(Distance d);
Distance distance_from_string(const std::string& name);

// Weights of the attention terms in
//   L_total = L_CE + alpha * L_AR + beta * L_AMC.
// alpha = beta = 0 is plain adversarial fine-tuning.
struct LossWeights {
  double alpha = 0.08;
  double beta = 0.05;
  Distance distance = Distance::l2;
  AttentionSource attention = AttentionSource::text_guided;
  // Optional cross-entropy on clean inputs, added to L_CE. Off by default.
  double clean_ce = 0.0;

  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
  static LossWeights from_json(const nlohmann::json& j, LossWeights defaults);
};

struct SgdConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

struct TrainConfig {
  SgdConfig sgd;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  AttackConfig attack = pgd_train_config();

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig defaults);
};

// SGD with heavy-ball momentum and coupled L2 weight decay:
//   v <- mu * v + (g + wd * w);  w <- w - lr * v   (v starts at g).
class SgdMomentum {
 public:
  explicit SgdMomentum(SgdConfig cfg) : cfg_(cfg) {}
  void step(ParameterStore& params, const std::map<std::string, Tensor>& grads);
  const SgdConfig& config() const { return cfg_; }

 private:
  SgdConfig cfg_;
  std::map<std::string, std::vector<double>> velocity_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  void step(ParameterStore& params, const std::map<std::string, Tensor>& grads);

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

// Mean cross-entropy of image->text logits.
ad::Var contrastive_ce_loss(const ad::Var& logits, std::span<const int> labels);
double contrastive_ce_loss(const Tensor& logits, std::span<const int> labels);

// Per-sample distance between two attention maps (N x 1).
//   l2: Frobenius norm of A - B;  l1: sum |A - B|;
//   cosine: 1 - cos(A, B), 0 when both are zero, 1 when exactly one is.
ad::Var map_distance(const ad::Var& a, const ad::Var& b, Distance metric);
Tensor map_distance(const AttentionMap& a, const AttentionMap& b, Distance metric);

// Attention of `encoder` on `pixels` against each sample's ground-truth prompt,
// resized to the image size.
ad::Var attention_graph(const EncoderGraph& graph, const Tensor& text_rows, OutputSize out);

// L_AR = mean_i dist(A_tar(x_adv_i), A_ori(x_i)), original side detached.
double attention_refinement_loss(const DualModelState& state, const ImageBatch& adversarial,
                                 const ImageBatch& clean, Distance metric);
// L_AMC = mean_i dist(A_tar(x_i), A_ori(x_i)), original side detached.
double model_constraint_loss(const DualModelState& state, const ImageBatch& clean,
                             Distance metric);

double total_loss(double ce, double l_ar, double l_amc, const LossWeights& w);
ad::Var total_loss(const ad::Var& ce, const ad::Var& l_ar, const ad::Var& l_amc,
                   const LossWeights& w);

struct LossTerms {
  double ce = 0.0;
  double l_ar = 0.0;
  double l_amc = 0.0;
  double total = 0.0;
  std::size_t clean_correct = 0;
  std::size_t robust_correct = 0;
};

// Evaluates every loss term for a fixed adversarial batch and, when `grads` is
// given, fills it with d(L_total)/d(target parameter).
LossTerms compute_losses(const DualModelState& state, const ImageBatch& adversarial,
                         const ImageBatch& clean, const LossWeights& weights,
                         std::map<std::string, Tensor>* grads);

struct StepMetrics : LossTerms {
  std::size_t samples = 0;
};

// One fine-tuning step: attack the current target, evaluate L_total, update
// the target encoder only. Throws ErrorCode::non_finite_loss before updating
// if any term is not finite.
StepMetrics finetune_step(DualModelState& state, const ImageBatch& batch, const TrainConfig& cfg,
                          const LossWeights& weights, SgdMomentum& optimizer);

struct EpochLog {
  std::size_t epoch = 0;
  double l_ce = 0.0;
  double l_ar = 0.0;
  double l_amc = 0.0;
  double l_total = 0.0;
  double clean_acc = 0.0;   // on training batches, clean inputs
  double robust_acc = 0.0;  // on training batches, training-attack inputs

  nlohmann::json to_json() const;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  std::vector<StepMetrics> steps;
};

struct FinetuneOptions {
  // When set, the target encoder is written to <dir>/epoch_<e> after each epoch.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const EpochLog&)> on_epoch;
};

// Epoch e visits the dataset in the order sample_order(n, seed + e, true).
TrainingLog finetune(DualModelState& state, const Dataset& dataset, const TrainConfig& cfg,
                     const LossWeights& weights, const FinetuneOptions& options = {});

struct PretrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;

  void validate() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

// Clean cross-entropy training with Adam from the encoder's current
// parameters; produces the original model that fine-tuning starts from.
// Returns the mean loss of each epoch.
std::vector<double> pretrain(ImageEncoder& encoder, const Dataset& dataset,
                             const TextEmbeddings& text, double temperature,
                             const PretrainConfig& cfg);

}  // namespace tgazsr
