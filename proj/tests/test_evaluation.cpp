// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "tgazsr/evaluation.hpp"
#include "tgazsr/png_io.hpp"

using namespace tgazsr;

namespace {

TextEmbeddings identity_text(std::size_t k) {
  TextEmbeddings t;
  t.vectors = Tensor(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    t.vectors(i, i) = 1.0;
    t.class_names.push_back("c" + std::to_string(i));
  }
  return t;
}

// Class k lights up channel k; the encoder reads channel means.
Dataset channel_dataset(std::size_t n) {
  Dataset d;
  d.id = "channels";
  d.shape = {3, 8, 8};
  d.class_names = {"c0", "c1", "c2"};
  d.pixels = Tensor(n, d.shape.size(), 0.1);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % 3);
    d.labels.push_back(k);
    for (std::size_t p = 0; p < 64; ++p) d.pixels(i, k * 64 + p) = 0.9;
  }
  return d;
}

LinearPatchEncoder channel_reader() {
  LinearPatchEncoder enc(3, 4, 3, 0);
  Tensor w(48, 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t j = 0; j < 16; ++j) w(c * 16 + j, c) = 1.0 / 16.0;
  enc.parameters()["patch.w"] = w;
  return enc;
}

Dataset random_dataset(std::size_t n, std::size_t k, std::uint64_t seed) {
  Dataset d;
  d.id = "noise";
  d.shape = {3, 8, 8};
  for (std::size_t i = 0; i < k; ++i) d.class_names.push_back("c" + std::to_string(i));
  d.pixels = test::random_tensor(n, d.shape.size(), seed, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) d.labels.push_back(static_cast<int>(i % k));
  return d;
}

}  // namespace

TEST_CASE("prediction ties go to the lowest index") {
  const std::vector<int> got = predict(Tensor(2, 3, {1.0, 3.0, 3.0, 0.0, 0.0, 0.0}));
  CHECK(got == std::vector<int>{1, 0});
}

TEST_CASE("oracle encoder scores perfectly") {
  const LinearPatchEncoder enc = channel_reader();
  CHECK(zero_shot_accuracy(enc, channel_dataset(12), identity_text(3), 0.07) == 1.0);
}

TEST_CASE("constant embedding predicts class 0 everywhere") {
  LinearPatchEncoder enc(3, 4, 4, 1);
  enc.parameters()["patch.w"] = Tensor(48, 4);
  enc.parameters()["patch.b"] = Tensor(1, 4, 1.0);
  const Dataset d = random_dataset(40, 4, 2);
  CHECK(zero_shot_accuracy(enc, d, identity_text(4), 0.07) == 0.25);
}

TEST_CASE("accuracy matches a per-sample brute-force classifier") {
  const LinearPatchEncoder enc(3, 4, 6, 3);
  const Dataset d = random_dataset(50, 5, 4);
  const TextEmbeddings text = encode_text(d.class_names, "{class}", SyntheticTextSource{2, 6});
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::vector<std::size_t> one{i};
    const ImageEncoding e = encode_image(enc, d.batch(one));
    int best = 0;
    double best_score = -1e300;
    for (std::size_t k = 0; k < text.num_classes(); ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < 6; ++c) s += e.pooled(0, c) * text.vectors(k, c);
      if (s > best_score) {
        best_score = s;
        best = static_cast<int>(k);
      }
    }
    correct += best == d.labels[i];
  }
  CHECK(zero_shot_accuracy(enc, d, text, 0.07) == static_cast<double>(correct) / 50.0);
}

TEST_CASE("accuracy does not depend on the batch size") {
  const LinearPatchEncoder enc(3, 4, 6, 5);
  const Dataset d = random_dataset(37, 3, 6);
  const TextEmbeddings text = encode_text(d.class_names, "{class}", SyntheticTextSource{1, 6});
  const double full = zero_shot_accuracy(enc, d, text, 0.07, 64);
  for (std::size_t bs : {1, 5, 36}) CHECK(zero_shot_accuracy(enc, d, text, 0.07, bs) == full);
  AttackConfig a = pgd_train_config();
  a.iterations = 2;
  const double r = robust_accuracy(enc, d, text, 0.07, a, 64);
  CHECK(robust_accuracy(enc, d, text, 0.07, a, 64, &enc) == r);
}

TEST_CASE("zero budget leaves robust accuracy equal to clean") {
  const LinearPatchEncoder enc(3, 4, 6, 7);
  const Dataset d = random_dataset(30, 3, 8);
  const TextEmbeddings text = encode_text(d.class_names, "{class}", SyntheticTextSource{1, 6});
  AttackConfig a = pgd_eval_config();
  a.epsilon = 0.0;
  a.iterations = 3;
  const EvalEntry e = evaluate_dataset(enc, d, text, 0.07, a);
  CHECK(e.robust_acc == e.clean_acc);
  CHECK(e.dataset_id == "noise");
}

TEST_CASE("robust accuracy does not exceed clean accuracy") {
  const LinearPatchEncoder enc = channel_reader();
  Dataset d = synthetic_dataset("shapes", 512, 3, ShapesOptions{3, 0, 8});
  const TextEmbeddings text = identity_text(3);
  d.class_names = text.class_names;
  AttackConfig a = pgd_eval_config();
  a.iterations = 5;
  a.epsilon = 4.0 / 255.0;
  const EvalEntry e = evaluate_dataset(enc, d, text, 0.07, a);
  CHECK(e.robust_acc <= e.clean_acc + 0.02);
}

TEST_CASE("strength sweep yields one entry per budget") {
  const Dataset d = random_dataset(24, 3, 9);
  const TextEmbeddings text = encode_text(d.class_names, "{class}", SyntheticTextSource{1, 6});
  DualModelState state(std::make_unique<LinearPatchEncoder>(3, 4, 6, 10), text);
  AttackConfig base = pgd_eval_config();
  base.iterations = 2;
  const EvalReport r = strength_sweep(state, d, {0.0, 1.0 / 255.0, 4.0 / 255.0}, base);
  REQUIRE(r.entries.size() == 3);
  CHECK(r.entries[0].robust_acc == r.entries[0].clean_acc);
  CHECK(r.entries[2].attack.epsilon == 4.0 / 255.0);
  CHECK(r.entries[2].attack.step_size == base.step_size);
}

TEST_CASE("report averages and json") {
  EvalReport r;
  r.entries = {{"a", 0.5, 0.25, {}}, {"b", 1.0, 0.0, {}}};
  r.config_hash = config_hash({{"x", 1}});
  r.seed = 3;
  r.finalize();
  CHECK(r.avg_clean == 0.75);
  CHECK(r.avg_robust == 0.125);
  const nlohmann::json j = r.to_json();
  CHECK(j.at("averages").at("clean_acc") == 0.75);
  CHECK(EvalReport::from_json(j).to_json() == j);
  CHECK(r.config_hash.size() == 16);
  CHECK(config_hash({{"x", 1}}) == r.config_hash);
  CHECK(config_hash({{"x", 2}}) != r.config_hash);
}

TEST_CASE("attention shift report with zero budget") {
  const Dataset d = random_dataset(6, 3, 11);
  const TextEmbeddings text = encode_text(d.class_names, "{class}", SyntheticTextSource{1, 6});
  DualModelState state(std::make_unique<LinearPatchEncoder>(3, 4, 6, 12), text);
  AttackConfig a = pgd_train_config();
  a.epsilon = 0.0;
  const auto dir = test::temp_dir("shift_png");
  const ShiftReport r = attention_shift_report(state, d, a, 4, 1, dir);
  REQUIRE(r.samples.size() == 4);
  CHECK(r.mean_d_adv == 0.0);
  CHECK(r.mean_d_noise == 0.0);
  ImageShape got;
  read_png_rgb(dir / "3_adv.png", got);
  CHECK(got == d.shape);
  CHECK(std::filesystem::exists(dir / "0_noise.png"));

  a.epsilon = 8.0 / 255.0;
  const ShiftReport moved = attention_shift_report(state, d, a, 4, 1);
  CHECK(moved.mean_d_adv > 0.0);
  CHECK(moved.mean_d_noise > 0.0);
}

TEST_CASE("heatmap overlay stays in range") {
  const ImageShape s{3, 4, 4};
  const Tensor img = test::random_tensor(1, s.size(), 1, 0.0, 1.0);
  const Tensor map = test::random_tensor(1, 16, 2, 0.0, 1.0);
  const std::vector<double> out = heatmap_overlay(img.data, map.data, s);
  REQUIRE(out.size() == s.size());
  for (double v : out) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(heatmap_overlay(img.data, map.data, s, 0.0) == img.data);
}

TEST_CASE("tradeoff table") {
  EvalReport a, b;
  a.entries = {{"d", 0.8, 0.4, {}}};
  b.entries = {{"d", 0.6, 0.5, {}}};
  a.finalize();
  b.finalize();
  const auto rows = tradeoff_rows({{"ce", a}, {"tga", b}});
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].mean() == doctest::Approx(0.55));
  CHECK(tradeoff_csv(rows) ==
        "method,clean,robust,mean\nce,0.800000,0.400000,0.600000\ntga,0.600000,0.500000,0.550000\n");
  const auto stem = test::temp_dir("tradeoff") / "table";
  tradeoff_table(rows, stem);
  std::ifstream csv(stem.string() + ".csv");
  const std::string text((std::istreambuf_iterator<char>(csv)), std::istreambuf_iterator<char>());
  CHECK(text == tradeoff_csv(rows));
  ImageShape got;
  read_png_rgb(stem.string() + ".png", got);
  CHECK(got.height == 256);
  CHECK(got.width == 256);
}
