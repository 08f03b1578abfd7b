// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgazsr/attacks.hpp"
#include "tgazsr/attention.hpp"
#include "tgazsr/data.hpp"
#include "tgazsr/model.hpp"

namespace tgazsr {

inline constexpr std::size_t kEvalBatchSize = 64;

// Index of the largest entry of each row; ties go to the lowest index.
std::vector<int> predict(const Tensor& logits);

double zero_shot_accuracy(const ImageEncoder& encoder, const Dataset& dataset,
                          const TextEmbeddings& text, double temperature,
                          std::size_t batch_size = kEvalBatchSize);

// White-box by default. With `attack_source`, adversarial examples are crafted
// against that encoder and transferred to `encoder`.
double robust_accuracy(const ImageEncoder& encoder, const Dataset& dataset,
                       const TextEmbeddings& text, double temperature, const AttackConfig& attack,
                       std::size_t batch_size = kEvalBatchSize,
                       const ImageEncoder* attack_source = nullptr);

struct EvalEntry {
  std::string dataset_id;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  AttackConfig attack;
};

struct EvalReport {
  std::vector<EvalEntry> entries;
  double avg_clean = 0.0;
  double avg_robust = 0.0;
  std::string config_hash;
  std::uint64_t seed = 0;

  // Recomputes the averages from the entries.
  void finalize();
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// 16 hex digits of the FNV-1a hash of the compact JSON dump.
std::string config_hash(const nlohmann::json& config);

EvalEntry evaluate_dataset(const ImageEncoder& encoder, const Dataset& dataset,
                           const TextEmbeddings& text, double temperature,
                           const AttackConfig& attack, std::size_t batch_size = kEvalBatchSize);

// One entry per epsilon; step size follows the base config.
EvalReport strength_sweep(const DualModelState& state, const Dataset& dataset,
                          const std::vector<double>& eps_list, const AttackConfig& base,
                          std::size_t batch_size = kEvalBatchSize);

struct ShiftSample {
  std::size_t index = 0;
  double d_adv = 0.0;
  double d_noise = 0.0;
};

struct ShiftReport {
  std::vector<ShiftSample> samples;
  double mean_d_adv = 0.0;
  double mean_d_noise = 0.0;
  nlohmann::json to_json() const;
};

// Compares the target's text-guided attention on x with its attention on the
// attacked x_a and on x + delta, where delta has entries +-eps (random signs)
// and the same pixel clamp as the attack. The first n samples are used. When
// `png_dir` is set, writes {i}_clean.png, {i}_adv.png and {i}_noise.png.
ShiftReport attention_shift_report(const DualModelState& state, const Dataset& dataset,
                                   const AttackConfig& attack, std::size_t n, std::uint64_t seed,
                                   const std::optional<std::filesystem::path>& png_dir = {});

// Attention of `encoder` for each sample of `batch` against its label prompt.
AttentionMap batch_attention(const ImageEncoder& encoder, const ImageBatch& batch,
                             const TextEmbeddings& text);

// Image blended with a blue-to-red rendering of a [0,1] map; CHW, RGB.
std::vector<double> heatmap_overlay(std::span<const double> image, std::span<const double> map,
                                    const ImageShape& shape, double blend = 0.5);

struct TradeoffRow {
  std::string method;
  double clean = 0.0;
  double robust = 0.0;
  double mean() const { return 0.5 * (clean + robust); }
};

std::vector<TradeoffRow> tradeoff_rows(const std::vector<std::pair<std::string, EvalReport>>& reports);
std::string tradeoff_csv(const std::vector<TradeoffRow>& rows);
// Writes <stem>.csv and a clean-vs-robust scatter plot <stem>.png.
void tradeoff_table(const std::vector<TradeoffRow>& rows, const std::filesystem::path& stem);

}  // namespace tgazsr
