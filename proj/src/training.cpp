// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/training.hpp"

#include <cmath>

namespace tgazsr {

std::string to_string(Distance d) {
  switch (d) {
    case Distance::l2: return "l2";
    case Distance::l1: return "l1";
    case Distance::cosine: return "cosine";
  }
  return "l2";
}

Distance distance_from_string(const std::string& name) {
  if (name == "l2") return Distance::l2;
  if (name == "l1") return Distance::l1;
  if (name == "cosine" || name == "cos") return Distance::cosine;
  throw Error(ErrorCode::config, "unknown distance '" + name + "'");
}

nlohmann::json LossWeights::to_json() const {
  return {{"alpha", alpha},
          {"beta", beta},
          {"distance", to_string(distance)},
          {"attention", attention == AttentionSource::gradient_based ? "gradient" : "text"},
          {"clean_ce", clean_ce}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) { return from_json(j, LossWeights{}); }

LossWeights LossWeights::from_json(const nlohmann::json& j, LossWeights w) {
  w.alpha = j.value("alpha", w.alpha);
  w.beta = j.value("beta", w.beta);
  if (j.contains("distance")) w.distance = distance_from_string(j.at("distance").get<std::string>());
  if (j.contains("attention")) {
    const auto a = j.at("attention").get<std::string>();
    if (a == "text") {
      w.attention = AttentionSource::text_guided;
    } else if (a == "gradient" || a == "gradcam") {
      w.attention = AttentionSource::gradient_based;
    } else {
      throw Error(ErrorCode::config, "unknown attention source '" + a + "'");
    }
  }
  w.clean_ce = j.value("clean_ce", w.clean_ce);
  if (w.alpha < 0.0 || w.beta < 0.0 || w.clean_ce < 0.0) {
    throw Error(ErrorCode::config, "loss weights must be >= 0");
  }
  return w;
}

void TrainConfig::validate() const {
  if (!(sgd.learning_rate >= 0.0)) throw Error(ErrorCode::config, "learning rate must be >= 0");
  if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) {
    throw Error(ErrorCode::config, "momentum must be in [0, 1)");
  }
  if (!(sgd.weight_decay >= 0.0)) throw Error(ErrorCode::config, "weight decay must be >= 0");
  if (batch_size == 0) throw Error(ErrorCode::config, "batch size must be >= 1");
  attack.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", sgd.learning_rate}, {"momentum", sgd.momentum},
          {"weight_decay", sgd.weight_decay}, {"batch", batch_size},
          {"epochs", epochs}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  c.sgd.learning_rate = j.value("lr", c.sgd.learning_rate);
  c.sgd.momentum = j.value("momentum", c.sgd.momentum);
  c.sgd.weight_decay = j.value("weight_decay", c.sgd.weight_decay);
  c.batch_size = j.value("batch", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  return c;
}

void SgdMomentum::step(ParameterStore& params, const std::map<std::string, Tensor>& grads) {
  for (auto& [name, w] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const auto& g = it->second.data;
    auto [vit, fresh] = velocity_.try_emplace(name, w.size(), 0.0);
    auto& v = vit->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + cfg_.weight_decay * w.data[i];
      v[i] = fresh ? gi : cfg_.momentum * v[i] + gi;
      w.data[i] -= cfg_.learning_rate * v[i];
    }
  }
}

void Adam::step(ParameterStore& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, w] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const auto& g = it->second.data;
    auto& m = m_.try_emplace(name, w.size(), 0.0).first->second;
    auto& v = v_.try_emplace(name, w.size(), 0.0).first->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
      w.data[i] -= cfg_.learning_rate * (update + cfg_.weight_decay * w.data[i]);
    }
  }
}

ad::Var contrastive_ce_loss(const ad::Var& logits, std::span<const int> labels) {
  return ad::cross_entropy(logits, labels);
}

double contrastive_ce_loss(const Tensor& logits, std::span<const int> labels) {
  ad::NoGradGuard no_grad;
  return ad::cross_entropy(ad::constant(logits), labels).item();
}

ad::Var map_distance(const ad::Var& a, const ad::Var& b, Distance metric) {
  switch (metric) {
    case Distance::l1: return ad::row_l1_distance(a, b);
    case Distance::cosine: return ad::row_cosine_distance(a, b);
    case Distance::l2: break;
  }
  return ad::row_l2_distance(a, b);
}

Tensor map_distance(const AttentionMap& a, const AttentionMap& b, Distance metric) {
  if (a.height != b.height || a.width != b.width) {
    throw Error(ErrorCode::shape_mismatch, "attention maps differ in size");
  }
  ad::NoGradGuard no_grad;
  return map_distance(ad::constant(a.values), ad::constant(b.values), metric).value();
}

ad::Var attention_graph(const EncoderGraph& graph, const Tensor& text_rows, OutputSize out) {
  return text_guided_attention(graph.patches, ad::constant(text_rows), out);
}

namespace {

OutputSize map_size(const ImageBatch& b) { return {b.shape.height, b.shape.width}; }

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    auto row = logits.row(i);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    correct += best == labels[i] ? 1 : 0;
  }
  return correct;
}

// Map for one forward pass under the configured attention source.
ad::Var attention_for(const ImageEncoder& encoder, const EncoderGraph& graph,
                      const ImageBatch& batch, const DualModelState& state,
                      AttentionSource source) {
  if (source == AttentionSource::gradient_based) {
    const Tensor w = gradcam_weights(encoder, batch.pixels, batch.shape, batch.labels,
                                     state.text(), state.temperature());
    return gradcam_map(graph.activations, w, map_size(batch));
  }
  return attention_graph(graph, state.text().rows_for(batch.labels), map_size(batch));
}

ad::Var original_attention(const DualModelState& state, const ImageBatch& clean,
                           AttentionSource source) {
  Tensor weights;
  if (source == AttentionSource::gradient_based) {
    weights = gradcam_weights(state.original(), clean.pixels, clean.shape, clean.labels,
                              state.text(), state.temperature());
  }
  ad::NoGradGuard no_grad;
  auto fwd = forward_tracked(state.original(), ad::constant(clean.pixels), clean.shape, false);
  if (source == AttentionSource::gradient_based) {
    return ad::constant(gradcam_map(fwd.graph.activations, weights, map_size(clean)).value());
  }
  return ad::constant(
      attention_graph(fwd.graph, state.text().rows_for(clean.labels), map_size(clean)).value());
}

}  // namespace

double attention_refinement_loss(const DualModelState& state, const ImageBatch& adversarial,
                                 const ImageBatch& clean, Distance metric) {
  const ad::Var a_ori = original_attention(state, clean, AttentionSource::text_guided);
  ad::NoGradGuard no_grad;
  auto fwd = forward_tracked(state.target(), ad::constant(adversarial.pixels), adversarial.shape, false);
  ad::Var a_tar = attention_graph(fwd.graph, state.text().rows_for(clean.labels), map_size(clean));
  return ad::mean_all(map_distance(a_tar, a_ori, metric)).item();
}

double model_constraint_loss(const DualModelState& state, const ImageBatch& clean,
                             Distance metric) {
  return attention_refinement_loss(state, clean, clean, metric);
}

double total_loss(double ce, double l_ar, double l_amc, const LossWeights& w) {
  return ce + w.alpha * l_ar + w.beta * l_amc;
}

ad::Var total_loss(const ad::Var& ce, const ad::Var& l_ar, const ad::Var& l_amc,
                   const LossWeights& w) {
  return ad::add(ad::add(ce, ad::scale(l_ar, w.alpha)), ad::scale(l_amc, w.beta));
}

LossTerms compute_losses(const DualModelState& state, const ImageBatch& adversarial,
                         const ImageBatch& clean, const LossWeights& weights,
                         std::map<std::string, Tensor>* grads) {
  clean.validate(state.text().num_classes());
  if (adversarial.labels != clean.labels || !(adversarial.shape == clean.shape)) {
    throw Error(ErrorCode::shape_mismatch, "adversarial batch does not match clean batch");
  }
  const bool track = grads != nullptr;
  const ad::Var a_ori = original_attention(state, clean, weights.attention);

  const ImageEncoder& target = state.target();
  const ParamVars params = bind_parameters(target.parameters(), track);
  const EncoderGraph adv = target.forward(ad::constant(adversarial.pixels), adversarial.shape, params);
  const EncoderGraph cln = target.forward(ad::constant(clean.pixels), clean.shape, params);

  const ad::Var logits_adv = classification_logits(adv.pooled, state.text(), state.temperature());
  const ad::Var logits_cln = classification_logits(cln.pooled, state.text(), state.temperature());
  ad::Var ce = contrastive_ce_loss(logits_adv, adversarial.labels);
  if (weights.clean_ce > 0.0) {
    ce = ad::add(ce, ad::scale(contrastive_ce_loss(logits_cln, clean.labels), weights.clean_ce));
  }
  const ad::Var a_adv = attention_for(target, adv, adversarial, state, weights.attention);
  const ad::Var a_cln = attention_for(target, cln, clean, state, weights.attention);
  const ad::Var l_ar = ad::mean_all(map_distance(a_adv, a_ori, weights.distance));
  const ad::Var l_amc = ad::mean_all(map_distance(a_cln, a_ori, weights.distance));
  const ad::Var total = total_loss(ce, l_ar, l_amc, weights);

  LossTerms terms;
  terms.ce = ce.item();
  terms.l_ar = l_ar.item();
  terms.l_amc = l_amc.item();
  terms.total = total.item();
  terms.clean_correct = count_correct(logits_cln.value(), clean.labels);
  terms.robust_correct = count_correct(logits_adv.value(), adversarial.labels);

  if (track) {
    total.backward();
    grads->clear();
    for (const auto& [name, var] : params) grads->emplace(name, var.grad());
  }
  return terms;
}

StepMetrics finetune_step(DualModelState& state, const ImageBatch& batch, const TrainConfig& cfg,
                          const LossWeights& weights, SgdMomentum& optimizer) {
  const ImageBatch adversarial =
      run_attack(state.target(), batch, state.text(), state.temperature(), cfg.attack);
  std::map<std::string, Tensor> grads;
  StepMetrics m;
  static_cast<LossTerms&>(m) = compute_losses(state, adversarial, batch, weights, &grads);
  m.samples = batch.size();
  for (double v : {m.ce, m.l_ar, m.l_amc, m.total}) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::non_finite_loss,
                  "L_CE=" + std::to_string(m.ce) + " L_AR=" + std::to_string(m.l_ar) +
                      " L_AMC=" + std::to_string(m.l_amc) + "; step aborted");
    }
  }
  optimizer.step(state.mutable_target().parameters(), grads);
  return m;
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch},     {"l_ce", l_ce},           {"l_ar", l_ar},
          {"l_amc", l_amc},     {"l_total", l_total},     {"clean_acc", clean_acc},
          {"robust_acc", robust_acc}};
}

TrainingLog finetune(DualModelState& state, const Dataset& dataset, const TrainConfig& cfg,
                     const LossWeights& weights, const FinetuneOptions& options) {
  cfg.validate();
  SgdMomentum optimizer(cfg.sgd);
  TrainingLog log;
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    EpochLog ep;
    ep.epoch = e;
    std::size_t seen = 0, clean_ok = 0, robust_ok = 0;
    for (const ImageBatch& batch : batches(dataset, cfg.batch_size, cfg.seed + e, true)) {
      const StepMetrics m = finetune_step(state, batch, cfg, weights, optimizer);
      const auto w = static_cast<double>(m.samples);
      ep.l_ce += w * m.ce;
      ep.l_ar += w * m.l_ar;
      ep.l_amc += w * m.l_amc;
      ep.l_total += w * m.total;
      seen += m.samples;
      clean_ok += m.clean_correct;
      robust_ok += m.robust_correct;
      log.steps.push_back(m);
    }
    const auto n = static_cast<double>(seen);
    ep.l_ce /= n;
    ep.l_ar /= n;
    ep.l_amc /= n;
    ep.l_total /= n;
    ep.clean_acc = static_cast<double>(clean_ok) / n;
    ep.robust_acc = static_cast<double>(robust_ok) / n;
    log.epochs.push_back(ep);
    if (options.checkpoint_dir) {
      save_archive(*options.checkpoint_dir / ("epoch_" + std::to_string(e)),
                   to_archive(state.target(), state.text(), state.temperature()));
    }
    if (options.on_epoch) options.on_epoch(ep);
  }
  return log;
}

void PretrainConfig::validate() const {
  if (!(adam.learning_rate >= 0.0)) throw Error(ErrorCode::config, "learning rate must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw Error(ErrorCode::config, "Adam betas must be in [0, 1)");
  }
  if (!(adam.weight_decay >= 0.0)) throw Error(ErrorCode::config, "weight decay must be >= 0");
  if (batch_size == 0) throw Error(ErrorCode::config, "batch size must be >= 1");
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  c.adam.learning_rate = j.value("lr", c.adam.learning_rate);
  c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
  c.batch_size = j.value("batch", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<double> pretrain(ImageEncoder& encoder, const Dataset& dataset,
                             const TextEmbeddings& text, double temperature,
                             const PretrainConfig& cfg) {
  cfg.validate();
  Adam optimizer(cfg.adam);
  std::vector<double> losses;
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    double total = 0.0;
    for (const ImageBatch& batch : batches(dataset, cfg.batch_size, cfg.seed + e, true)) {
      auto fwd = forward_tracked(encoder, ad::constant(batch.pixels), batch.shape, true);
      ad::Var loss = contrastive_ce_loss(
          classification_logits(fwd.graph.pooled, text, temperature), batch.labels);
      if (!std::isfinite(loss.item())) throw Error(ErrorCode::non_finite_loss, "pretraining diverged");
      loss.backward();
      std::map<std::string, Tensor> grads;
      for (const auto& [name, var] : fwd.params) grads.emplace(name, var.grad());
      optimizer.step(encoder.parameters(), grads);
      total += loss.item() * static_cast<double>(batch.size());
    }
    losses.push_back(total / static_cast<double>(dataset.size()));
  }
  return losses;
}

}  // namespace tgazsr
