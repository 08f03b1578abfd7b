// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "tgazsr/cli.hpp"
#include "tgazsr/evaluation.hpp"
#include "tgazsr/random.hpp"
#include "tgazsr/training.hpp"

using namespace tgazsr;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and desk settings.
constexpr int kBallRuns = 1000;
constexpr double kBallSlack = 1e-9;
constexpr double kGradRelTol = 1e-4;
constexpr int kGradSamples = 20;
constexpr double kOracleTol = 1e-10;
constexpr double kMonotoneSlack = 0.01;
constexpr double kMinOriginalAcc = 0.90;
constexpr int kSeeds = 5;
constexpr int kSeedsRequired = 4;
constexpr std::size_t kShiftSamples = 128;

constexpr double kTau = kDefaultTemperature;
constexpr std::size_t kPretrainSamples = 12288;
constexpr std::size_t kPretrainEpochs = 12;
constexpr std::size_t kTrainSamples = 2048;
constexpr std::size_t kEvalSamples = 256;
constexpr double kFinetuneLr = 1e-3;
constexpr std::size_t kFinetuneEpochs = 2;
constexpr double kTrainEps = 2.0 / 255.0;
constexpr double kEvalEps = 2.0 / 255.0;
constexpr int kEvalIters = 10;

constexpr double kMinutes = 60.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail, double secs,
            double limit) {
  const bool in_time = limit <= 0.0 || secs < limit;
  const bool ok = pass && in_time;
  failures += ok ? 0 : 1;
  std::printf("%s  %d  %-28s %s  [%.1fs", ok ? "PASS" : "FAIL", id, name, detail.c_str(), secs);
  if (limit > 0.0) std::printf(" / limit %.0fs", limit);
  std::printf("]\n");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

void ball_invariants() {
  const auto t0 = Clock::now();
  Rng rng(2026);
  std::size_t violations = 0;
  for (int run = 0; run < kBallRuns; ++run) {
    const std::size_t classes = 2 + rng.below(3);
    std::unique_ptr<ImageEncoder> enc;
    ImageShape shape;
    if (run % 4 == 0) {
      VitConfig c;
      c.image_size = 16;
      c.patch = 8;
      c.dim = 8;
      c.depth = 1;
      c.heads = 2;
      c.mlp_ratio = 2;
      enc = std::make_unique<VitEncoder>(c, rng.next());
      shape = {3, 16, 16};
    } else {
      enc = std::make_unique<LinearPatchEncoder>(3, 4, 8, rng.next());
      shape = {3, 8, 8};
    }
    std::vector<std::string> names;
    for (std::size_t k = 0; k < classes; ++k) names.push_back("c" + std::to_string(k));
    const TextEmbeddings text = encode_text(names, "{class}", SyntheticTextSource{rng.next(), 8});
    ImageBatch b;
    b.shape = shape;
    b.pixels = Tensor(2, shape.size());
    for (double& v : b.pixels.data) {
      const double u = rng.uniform();
      v = u < 0.1 ? 0.0 : (u < 0.2 ? 1.0 : rng.uniform());
    }
    b.labels = {static_cast<int>(rng.below(classes)), static_cast<int>(rng.below(classes))};
    AttackConfig cfg;
    cfg.epsilon = rng.uniform(0.0, 16.0 / 255.0);
    cfg.step_size = rng.uniform(0.1, 4.0) / 255.0;
    cfg.iterations = 1 + static_cast<int>(rng.below(5));
    cfg.random_init = rng.below(2) == 1;
    cfg.seed = rng.next();
    cfg.loss = rng.below(2) == 1 ? AttackLoss::cw_margin : AttackLoss::cross_entropy;
    cfg.kappa = rng.below(2) == 1 ? 0.0 : rng.uniform(0.0, 5.0);
    const ImageBatch adv = run_attack(*enc, b, text, kTau, cfg);
    for (std::size_t i = 0; i < adv.pixels.size(); ++i) {
      const double v = adv.pixels.data[i];
      if (std::abs(v - b.pixels.data[i]) > cfg.epsilon + kBallSlack || v < 0.0 || v > 1.0) {
        ++violations;
      }
    }
  }
  report(1, "ball invariants", violations == 0,
         fmt("violations=%zu over %d PGD/CW runs", violations, kBallRuns), seconds_since(t0),
         1 * kMinutes);
}

// ---------------------------------------------------------------------------

void perturb(ImageEncoder& enc, double amount, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : enc.parameters())
    for (double& v : t.data) v += amount * rng.uniform(-1.0, 1.0);
}

void gradient_check() {
  const auto t0 = Clock::now();
  const Dataset data = synthetic_dataset("shapes", 4, 7);
  const TextEmbeddings text = encode_text(data.class_names, "a photo of a {class}", SyntheticTextSource{7, 32});
  DualModelState state(std::make_unique<VitEncoder>(desk_vit_config(), 7), text, kTau);
  perturb(state.mutable_target(), 0.05, 8);
  const ImageBatch clean = data.all();
  const ImageBatch adv = run_attack(state.target(), clean, text, kTau, pgd_train_config());
  LossWeights w;
  w.alpha = 0.08;
  w.beta = 0.05;
  std::map<std::string, Tensor> grads;
  compute_losses(state, adv, clean, w, &grads);

  ParameterStore& params = state.mutable_target().parameters();
  std::vector<std::string> names;
  for (const auto& [name, _] : params) names.push_back(name);
  Rng rng(9);
  double worst = 0.0;
  for (int s = 0; s < kGradSamples; ++s) {
    const std::string& name = names[rng.below(names.size())];
    const std::size_t i = rng.below(params.at(name).size());
    double& p = params.at(name).data[i];
    const double orig = p, h = 1e-6;
    p = orig + h;
    const double up = compute_losses(state, adv, clean, w, nullptr).total;
    p = orig - h;
    const double down = compute_losses(state, adv, clean, w, nullptr).total;
    p = orig;
    const double fd = (up - down) / (2.0 * h), an = grads.at(name).data[i];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
    worst = std::max(worst, rel);
  }
  report(2, "gradient vs finite diff", worst < kGradRelTol,
         fmt("max rel err=%.2e on %d params (alpha=0.08 beta=0.05)", worst, kGradSamples),
         seconds_since(t0), 2 * kMinutes);
}

// ---------------------------------------------------------------------------

void loss_identities() {
  const auto t0 = Clock::now();
  const Dataset data = synthetic_dataset("shapes", 6, 11);
  const TextEmbeddings text = encode_text(data.class_names, "a photo of a {class}", SyntheticTextSource{1, 32});
  const DualModelState same(std::make_unique<VitEncoder>(desk_vit_config(), 3), text, kTau);
  const ImageBatch b = data.all();
  bool ok = true;
  std::string detail;
  for (Distance d : {Distance::l2, Distance::l1, Distance::cosine}) {
    LossWeights w;
    w.distance = d;
    const LossTerms t = compute_losses(same, b, b, w, nullptr);
    // 1 - cos(A, A) is zero up to rounding.
    const double tol = d == Distance::cosine ? 1e-15 : 0.0;
    const bool zero = std::abs(t.l_ar) <= tol && std::abs(t.l_amc) <= tol;
    ok = ok && zero;
    detail += fmt("%s:L_AR=%.1e,L_AMC=%.1e ", to_string(d).c_str(), t.l_ar, t.l_amc);
  }

  DualModelState moved(std::make_unique<VitEncoder>(desk_vit_config(), 3), text, kTau);
  perturb(moved.mutable_target(), 0.05, 4);
  const ImageBatch adv = run_attack(moved.target(), b, text, kTau, pgd_train_config());
  LossWeights off;
  off.alpha = off.beta = 0.0;
  const LossTerms t = compute_losses(moved, adv, b, off, nullptr);
  const bool reduces = t.total == t.ce && t.l_ar > 0.0;
  ok = ok && reduces;
  detail += fmt("| a=b=0: total-ce=%.1e ", t.total - t.ce);

  const AttentionMap ones{Tensor(1, 4, 1.0), 2, 2}, zeros{Tensor(1, 4, 0.0), 2, 2};
  const double l2 = map_distance(ones, zeros, Distance::l2).data[0];
  const double l1 = map_distance(ones, zeros, Distance::l1).data[0];
  ok = ok && l2 == 2.0 && l1 == 4.0;
  detail += fmt("| 2x2: l2=%.17g l1=%.17g", l2, l1);
  report(3, "loss identities", ok, detail, seconds_since(t0), 0.0);
}

// ---------------------------------------------------------------------------

// One seed of the desk zero-shot protocol: the original is trained on all 8
// shape classes; fine-tuning sees classes 0-3; evaluation covers held-out
// test images of classes 0-3 and of the unseen classes 4-7.
struct SeedSetup {
  std::uint64_t seed = 0;
  Dataset pre_test;
  Dataset train;
  std::vector<Dataset> eval;
  TextEmbeddings text_all;
  TextEmbeddings text_train;
  std::vector<TextEmbeddings> text_eval;
  std::unique_ptr<ImageEncoder> original;
  double original_acc = 0.0;
};

TextEmbeddings text_for(const Dataset& d, std::uint64_t seed) {
  return encode_text(d.class_names, "a photo of a {class}", SyntheticTextSource{seed, 32});
}

SeedSetup make_seed(std::uint64_t seed) {
  SeedSetup s;
  s.seed = seed;
  ShapesOptions all, seen, unseen;
  all.num_classes = 8;
  unseen.first_class = 4;
  const std::uint64_t base = 7000 + 10 * seed;
  const Dataset pre = synthetic_dataset("shapes", kPretrainSamples, base + 1, all);
  s.pre_test = synthetic_dataset("shapes", kEvalSamples, base + 2, all);
  s.train = synthetic_dataset("shapes", kTrainSamples, base + 3, seen);
  s.eval.push_back(synthetic_dataset("shapes", kEvalSamples, base + 4, seen));
  s.eval.push_back(synthetic_dataset("shapes", kEvalSamples, base + 5, unseen));
  s.text_all = text_for(pre, seed);
  s.text_train = text_for(s.train, seed);
  for (const Dataset& d : s.eval) s.text_eval.push_back(text_for(d, seed));
  s.original = std::make_unique<VitEncoder>(desk_vit_config(), 100 + seed);
  PretrainConfig pc;
  pc.epochs = kPretrainEpochs;
  pc.seed = seed;
  pretrain(*s.original, pre, s.text_all, kTau, pc);
  s.original_acc = zero_shot_accuracy(*s.original, s.pre_test, s.text_all, kTau);
  return s;
}

AttackConfig eval_attack(double eps) {
  AttackConfig a = pgd_eval_config();
  a.epsilon = eps;
  a.step_size = eps / 4.0;
  a.iterations = kEvalIters;
  return a;
}

void attention_shift(const std::vector<SeedSetup>& seeds, double setup_secs) {
  const auto t0 = Clock::now();
  int wins = 0;
  std::string detail;
  for (const SeedSetup& s : seeds) {
    const DualModelState state(s.original->clone(), s.text_all, kTau);
    AttackConfig attack = pgd_eval_config();
    attack.epsilon = 1.0 / 255.0;
    const ShiftReport r = attention_shift_report(state, s.pre_test, attack, kShiftSamples, s.seed);
    const bool ok = s.original_acc >= kMinOriginalAcc && r.mean_d_adv > r.mean_d_noise;
    wins += ok ? 1 : 0;
    detail += fmt("s%llu(acc %.3f adv %.3f noise %.3f) ", static_cast<unsigned long long>(s.seed),
                  s.original_acc, r.mean_d_adv, r.mean_d_noise);
  }
  detail = fmt("%d/%d seeds: ", wins, kSeeds) + detail;
  report(4, "attention shift", wins >= kSeedsRequired, detail, setup_secs + seconds_since(t0),
         10 * kMinutes);
}

struct Scores {
  double clean = 0.0;
  double robust = 0.0;
};

Scores score(const ImageEncoder& enc, const SeedSetup& s, double eps) {
  Scores out;
  for (std::size_t i = 0; i < s.eval.size(); ++i) {
    out.clean += zero_shot_accuracy(enc, s.eval[i], s.text_eval[i], kTau);
    out.robust += robust_accuracy(enc, s.eval[i], s.text_eval[i], kTau, eval_attack(eps));
  }
  out.clean /= static_cast<double>(s.eval.size());
  out.robust /= static_cast<double>(s.eval.size());
  return out;
}

std::unique_ptr<ImageEncoder> finetuned(const SeedSetup& s, double alpha, double beta) {
  DualModelState state(s.original->clone(), s.text_train, kTau);
  TrainConfig cfg;
  cfg.sgd.learning_rate = kFinetuneLr;
  cfg.epochs = kFinetuneEpochs;
  cfg.seed = s.seed;
  cfg.attack.epsilon = kTrainEps;
  cfg.attack.step_size = kTrainEps / 2.0;
  LossWeights w;
  w.alpha = alpha;
  w.beta = beta;
  finetune(state, s.train, cfg, w);
  return state.target().clone();
}

void ablation_and_strength(const std::vector<SeedSetup>& seeds) {
  auto t0 = Clock::now();
  int wins = 0;
  std::string detail;
  std::vector<std::unique_ptr<ImageEncoder>> tga_models;
  for (const SeedSetup& s : seeds) {
    const Scores ce = score(*finetuned(s, 0.0, 0.0), s, kEvalEps);
    tga_models.push_back(finetuned(s, 0.08, 0.05));
    const Scores tga = score(*tga_models.back(), s, kEvalEps);
    const bool ok = tga.robust >= ce.robust && tga.clean > ce.clean;
    wins += ok ? 1 : 0;
    detail += fmt("s%llu(CE %.3f/%.3f TGA %.3f/%.3f) ", static_cast<unsigned long long>(s.seed),
                  ce.clean, ce.robust, tga.clean, tga.robust);
  }
  report(5, "ablation ordering", wins >= kSeedsRequired,
         fmt("%d/%d seeds, clean/robust: ", wins, kSeeds) + detail, seconds_since(t0),
         30 * kMinutes);

  t0 = Clock::now();
  bool monotone = true;
  detail.clear();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    double prev = 2.0;
    detail += fmt("s%llu(", static_cast<unsigned long long>(seeds[i].seed));
    for (double eps : {1.0 / 255.0, 2.0 / 255.0, 4.0 / 255.0}) {
      const double r = score(*tga_models[i], seeds[i], eps).robust;
      monotone = monotone && r <= prev + kMonotoneSlack;
      prev = r;
      detail += fmt("%.3f ", r);
    }
    detail.back() = ')';
    detail += ' ';
  }
  report(6, "strength monotonicity", monotone, "robust at eps 1,2,4/255: " + detail,
         seconds_since(t0), 10 * kMinutes);
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "tgazsr_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::string> args = {
      "tgazsr",       "finetune",      "--out",        root.string(),  "--seed",  "3",
      "--train-data", "shapes:64:1:4", "--datasets",   "shapes:32:2:4,shapes:32:3:4:4",
      "--epochs",     "2",             "--lr",         "1e-3",         "--iters", "5",
      "--set",        "pretrain.epochs=2"};
  const int a = cli::run(args), b = cli::run(args);
  std::vector<fs::path> runs;
  if (fs::exists(root))
    for (const auto& e : fs::directory_iterator(root)) runs.push_back(e.path());
  bool ok = a == 0 && b == 0 && runs.size() == 2;
  std::string detail = fmt("exit codes %d,%d, %zu runs", a, b, runs.size());
  if (ok) {
    for (const char* f : {"training_log.jsonl", "report.json", "pretrain_log.jsonl"}) {
      const std::string x = slurp(runs[0] / f), y = slurp(runs[1] / f);
      const bool same = !x.empty() && x == y;
      ok = ok && same;
      detail += fmt(", %s %s", f, same ? "identical" : "DIFFERS");
    }
  }
  report(7, "determinism", ok, detail, seconds_since(t0), 0.0);
}

// ---------------------------------------------------------------------------

void oracles() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  Rng rng(88);

  // Zero-shot accuracy against a per-sample nearest-text loop.
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t k = 3 + trial;
    Dataset d;
    d.id = "oracle";
    d.shape = {3, 8, 8};
    for (std::size_t c = 0; c < k; ++c) d.class_names.push_back("c" + std::to_string(c));
    d.pixels = Tensor(40, d.shape.size());
    for (double& v : d.pixels.data) v = rng.uniform();
    for (std::size_t i = 0; i < 40; ++i) d.labels.push_back(static_cast<int>(rng.below(k)));
    const LinearPatchEncoder enc(3, 4, 6, rng.next());
    const TextEmbeddings text = encode_text(d.class_names, "{class}", SyntheticTextSource{rng.next(), 6});
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const std::vector<std::size_t> one{i};
      const Tensor pooled = encode_image(enc, d.batch(one)).pooled;
      std::size_t best = 0;
      double best_s = -1e300;
      for (std::size_t c = 0; c < k; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < 6; ++j) s += pooled(0, j) * text.vectors(c, j);
        if (s > best_s) {
          best_s = s;
          best = c;
        }
      }
      correct += static_cast<int>(best) == d.labels[i];
    }
    const double want = static_cast<double>(correct) / static_cast<double>(d.size());
    worst = std::max(worst, std::abs(zero_shot_accuracy(enc, d, text, kTau, 7) - want));
  }

  // Bilinear resize against direct per-pixel interpolation.
  for (std::size_t g : {2, 3, 4}) {
    for (OutputSize out : {OutputSize{5, 7}, OutputSize{8, 8}, OutputSize{1, 3}}) {
      Tensor grid(1, g * g);
      for (double& v : grid.data) v = rng.uniform(-1.0, 1.0);
      const Tensor m = bilinear_resize_matrix(g, out);
      for (std::size_t i = 0; i < out.height; ++i) {
        for (std::size_t j = 0; j < out.width; ++j) {
          const double y = out.height == 1 ? 0.0 : double(i) * double(g - 1) / double(out.height - 1);
          const double x = out.width == 1 ? 0.0 : double(j) * double(g - 1) / double(out.width - 1);
          const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(y), g - 1);
          const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(x), g - 1);
          const std::size_t y1 = std::min(y0 + 1, g - 1), x1 = std::min(x0 + 1, g - 1);
          const double fy = y - double(y0), fx = x - double(x0);
          const auto at = [&](std::size_t r, std::size_t c) { return grid.data[r * g + c]; };
          const double want = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                              fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
          double got = 0.0;
          for (std::size_t p = 0; p < g * g; ++p) got += grid.data[p] * m(p, i * out.width + j);
          worst = std::max(worst, std::abs(got - want));
        }
      }
    }
  }

  // Map distances against elementwise loops.
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 3, hw = 12;
    Tensor a(n, hw), b(n, hw);
    for (double& v : a.data) v = rng.uniform();
    for (double& v : b.data) v = rng.uniform();
    const AttentionMap ma{a, 3, 4}, mb{b, 3, 4};
    const Tensor l2 = map_distance(ma, mb, Distance::l2);
    const Tensor l1 = map_distance(ma, mb, Distance::l1);
    const Tensor cs = map_distance(ma, mb, Distance::cosine);
    for (std::size_t i = 0; i < n; ++i) {
      double sq = 0, ab = 0, aa = 0, bb = 0, abs_sum = 0;
      for (std::size_t j = 0; j < hw; ++j) {
        const double x = a(i, j), y = b(i, j);
        sq += (x - y) * (x - y);
        abs_sum += std::abs(x - y);
        ab += x * y;
        aa += x * x;
        bb += y * y;
      }
      worst = std::max(worst, std::abs(l2.data[i] - std::sqrt(sq)));
      worst = std::max(worst, std::abs(l1.data[i] - abs_sum));
      worst = std::max(worst, std::abs(cs.data[i] - (1.0 - ab / std::sqrt(aa * bb))));
    }
  }
  report(8, "oracle equivalence", worst <= kOracleTol,
         fmt("max |diff|=%.2e (accuracy, bilinear resize, map distances)", worst),
         seconds_since(t0), 0.0);
}

}  // namespace

int main() {
  std::printf("tgazsr acceptance suite\n");
  ball_invariants();
  gradient_check();
  loss_identities();

  const auto t0 = Clock::now();
  std::vector<SeedSetup> seeds;
  for (int s = 0; s < kSeeds; ++s) {
    seeds.push_back(make_seed(static_cast<std::uint64_t>(s)));
    std::fprintf(stderr, "seed %d original ready, acc %.3f (%.0fs)\n", s, seeds.back().original_acc,
                 seconds_since(t0));
  }
  attention_shift(seeds, seconds_since(t0));
  ablation_and_strength(seeds);
  determinism();
  oracles();
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
