// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "tgazsr/png_io.hpp"
#include "tgazsr/random.hpp"

namespace tgazsr {

std::vector<int> predict(const Tensor& logits) {
  std::vector<int> out(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    auto row = logits.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

namespace {

std::size_t correct_on(const ImageEncoder& encoder, const ImageBatch& batch,
                       const TextEmbeddings& text, double temperature) {
  const ImageEncoding enc = encode_image(encoder, batch);
  const auto pred = predict(classification_logits(enc.pooled, text, temperature));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i] ? 1 : 0;
  return correct;
}

void require_nonempty(const Dataset& d) {
  if (d.size() == 0) throw Error(ErrorCode::empty_dataset, "dataset '" + d.id + "' is empty");
}

}  // namespace

double zero_shot_accuracy(const ImageEncoder& encoder, const Dataset& dataset,
                          const TextEmbeddings& text, double temperature, std::size_t batch_size) {
  require_nonempty(dataset);
  std::size_t correct = 0;
  for (const ImageBatch& b : batches(dataset, batch_size, 0, false)) {
    correct += correct_on(encoder, b, text, temperature);
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

double robust_accuracy(const ImageEncoder& encoder, const Dataset& dataset,
                       const TextEmbeddings& text, double temperature, const AttackConfig& attack,
                       std::size_t batch_size, const ImageEncoder* attack_source) {
  require_nonempty(dataset);
  attack.validate();
  const ImageEncoder& source = attack_source != nullptr ? *attack_source : encoder;
  std::size_t correct = 0;
  for (const ImageBatch& b : batches(dataset, batch_size, 0, false)) {
    const ImageBatch adv = run_attack(source, b, text, temperature, attack);
    correct += correct_on(encoder, adv, text, temperature);
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

void EvalReport::finalize() {
  avg_clean = 0.0;
  avg_robust = 0.0;
  if (entries.empty()) return;
  for (const auto& e : entries) {
    avg_clean += e.clean_acc;
    avg_robust += e.robust_acc;
  }
  avg_clean /= static_cast<double>(entries.size());
  avg_robust /= static_cast<double>(entries.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : entries) {
    items.push_back({{"dataset_id", e.dataset_id},
                     {"clean_acc", e.clean_acc},
                     {"robust_acc", e.robust_acc},
                     {"attack", e.attack.to_json()}});
  }
  return {{"entries", items},
          {"averages", {{"clean_acc", avg_clean}, {"robust_acc", avg_robust}}},
          {"config_hash", config_hash},
          {"seed", seed}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  for (const auto& e : j.at("entries")) {
    r.entries.push_back({e.at("dataset_id").get<std::string>(), e.at("clean_acc").get<double>(),
                         e.at("robust_acc").get<double>(), AttackConfig::from_json(e.at("attack"))});
  }
  r.config_hash = j.value("config_hash", "");
  r.seed = j.value("seed", std::uint64_t{0});
  r.finalize();
  return r;
}

std::string config_hash(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

EvalEntry evaluate_dataset(const ImageEncoder& encoder, const Dataset& dataset,
                           const TextEmbeddings& text, double temperature,
                           const AttackConfig& attack, std::size_t batch_size) {
  EvalEntry e;
  e.dataset_id = dataset.id;
  e.attack = attack;
  e.clean_acc = zero_shot_accuracy(encoder, dataset, text, temperature, batch_size);
  e.robust_acc = robust_accuracy(encoder, dataset, text, temperature, attack, batch_size);
  return e;
}

EvalReport strength_sweep(const DualModelState& state, const Dataset& dataset,
                          const std::vector<double>& eps_list, const AttackConfig& base,
                          std::size_t batch_size) {
  EvalReport report;
  report.seed = base.seed;
  const double clean =
      zero_shot_accuracy(state.target(), dataset, state.text(), state.temperature(), batch_size);
  for (double eps : eps_list) {
    AttackConfig cfg = base;
    cfg.epsilon = eps;
    EvalEntry e;
    e.dataset_id = dataset.id;
    e.attack = cfg;
    e.clean_acc = clean;
    e.robust_acc = robust_accuracy(state.target(), dataset, state.text(), state.temperature(),
                                   cfg, batch_size);
    report.entries.push_back(e);
  }
  report.finalize();
  return report;
}

nlohmann::json ShiftReport::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& s : samples) {
    items.push_back({{"index", s.index}, {"d_adv", s.d_adv}, {"d_noise", s.d_noise}});
  }
  return {{"samples", items}, {"mean_d_adv", mean_d_adv}, {"mean_d_noise", mean_d_noise}};
}

AttentionMap batch_attention(const ImageEncoder& encoder, const ImageBatch& batch,
                             const TextEmbeddings& text) {
  const ImageEncoding enc = encode_image(encoder, batch);
  return text_guided_attention(enc.patches, text.rows_for(batch.labels),
                               {batch.shape.height, batch.shape.width});
}

namespace {

double row_l2(const Tensor& a, const Tensor& b, std::size_t r) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols; ++c) {
    const double d = a(r, c) - b(r, c);
    s += d * d;
  }
  return std::sqrt(s);
}

// Blue (0) through white (0.5) to red (1).
void ramp(double v, double rgb[3]) {
  v = std::clamp(v, 0.0, 1.0);
  if (v < 0.5) {
    const double t = v / 0.5;
    rgb[0] = t;
    rgb[1] = t;
    rgb[2] = 1.0;
  } else {
    const double t = (v - 0.5) / 0.5;
    rgb[0] = 1.0;
    rgb[1] = 1.0 - t;
    rgb[2] = 1.0 - t;
  }
}

}  // namespace

std::vector<double> heatmap_overlay(std::span<const double> image, std::span<const double> map,
                                    const ImageShape& shape, double blend) {
  const std::size_t hw = shape.height * shape.width;
  if (map.size() != hw || image.size() != shape.size() || shape.channels != 3) {
    throw Error(ErrorCode::shape_mismatch, "heatmap overlay expects a 3-channel image and HxW map");
  }
  std::vector<double> out(3 * hw);
  for (std::size_t p = 0; p < hw; ++p) {
    double rgb[3];
    ramp(map[p], rgb);
    for (std::size_t c = 0; c < 3; ++c) {
      out[c * hw + p] = (1.0 - blend) * image[c * hw + p] + blend * rgb[c];
    }
  }
  return out;
}

ShiftReport attention_shift_report(const DualModelState& state, const Dataset& dataset,
                                   const AttackConfig& attack, std::size_t n, std::uint64_t seed,
                                   const std::optional<std::filesystem::path>& png_dir) {
  require_nonempty(dataset);
  attack.validate();
  const Dataset subset = dataset.head(n);
  const ImageBatch clean = subset.all();
  const ImageEncoder& model = state.target();
  const ImageBatch adv = run_attack(model, clean, state.text(), state.temperature(), attack);
  ImageBatch noisy = clean;
  Rng rng(seed);
  for (double& v : noisy.pixels.data) {
    const double delta = (rng.next() >> 63) != 0 ? attack.epsilon : -attack.epsilon;
    v = std::clamp(v + delta, attack.clamp_min, attack.clamp_max);
  }

  const AttentionMap a_clean = batch_attention(model, clean, state.text());
  const AttentionMap a_adv = batch_attention(model, adv, state.text());
  const AttentionMap a_noise = batch_attention(model, noisy, state.text());

  ShiftReport report;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    ShiftSample s;
    s.index = i;
    s.d_adv = row_l2(a_clean.values, a_adv.values, i);
    s.d_noise = row_l2(a_clean.values, a_noise.values, i);
    report.mean_d_adv += s.d_adv;
    report.mean_d_noise += s.d_noise;
    report.samples.push_back(s);
  }
  report.mean_d_adv /= static_cast<double>(clean.size());
  report.mean_d_noise /= static_cast<double>(clean.size());

  if (png_dir) {
    std::filesystem::create_directories(*png_dir);
    const auto write = [&](const ImageBatch& b, const AttentionMap& a, std::size_t i,
                           const std::string& tag) {
      write_png_rgb(*png_dir / (std::to_string(i) + "_" + tag + ".png"),
                    heatmap_overlay(b.pixels.row(i), a.values.row(i), b.shape), b.shape);
    };
    for (std::size_t i = 0; i < clean.size(); ++i) {
      write(clean, a_clean, i, "clean");
      write(adv, a_adv, i, "adv");
      write(noisy, a_noise, i, "noise");
    }
  }
  return report;
}

std::vector<TradeoffRow> tradeoff_rows(
    const std::vector<std::pair<std::string, EvalReport>>& reports) {
  std::vector<TradeoffRow> rows;
  for (const auto& [method, r] : reports) rows.push_back({method, r.avg_clean, r.avg_robust});
  return rows;
}

std::string tradeoff_csv(const std::vector<TradeoffRow>& rows) {
  std::string out = "method,clean,robust,mean\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f\n", r.clean, r.robust, r.mean());
    out += r.method + buf;
  }
  return out;
}

void tradeoff_table(const std::vector<TradeoffRow>& rows, const std::filesystem::path& stem) {
  {
    std::ofstream csv(stem.string() + ".csv", std::ios::binary);
    if (!csv) throw Error(ErrorCode::io, "cannot write " + stem.string() + ".csv");
    csv << tradeoff_csv(rows);
  }
  constexpr std::size_t side = 256, margin = 24;
  const ImageShape shape{3, side, side};
  std::vector<double> img(shape.size(), 1.0);
  const std::size_t hw = side * side;
  const auto put = [&](std::size_t x, std::size_t y, const double rgb[3]) {
    if (x >= side || y >= side) return;
    for (std::size_t c = 0; c < 3; ++c) img[c * hw + y * side + x] = rgb[c];
  };
  const double black[3] = {0.0, 0.0, 0.0};
  const std::size_t span = side - 2 * margin;
  for (std::size_t t = 0; t <= span; ++t) {
    put(margin + t, side - margin, black);  // x axis: robust accuracy
    put(margin, side - margin - t, black);  // y axis: clean accuracy
  }
  static const double palette[][3] = {{0.84, 0.15, 0.16}, {0.12, 0.47, 0.71}, {0.17, 0.63, 0.17},
                                      {1.00, 0.50, 0.05}, {0.58, 0.40, 0.74}, {0.55, 0.34, 0.29}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto cx = margin + static_cast<std::size_t>(std::lround(std::clamp(rows[i].robust, 0.0, 1.0) * span));
    const auto cy = side - margin - static_cast<std::size_t>(std::lround(std::clamp(rows[i].clean, 0.0, 1.0) * span));
    for (int dy = -3; dy <= 3; ++dy) {
      for (int dx = -3; dx <= 3; ++dx) {
        put(cx + dx, cy + dy, palette[i % 6]);
      }
    }
  }
  write_png_rgb(stem.string() + ".png", img, shape);
}

}  // namespace tgazsr
