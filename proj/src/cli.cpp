// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tgazsr/archive.hpp"
#include "tgazsr/evaluation.hpp"
#include "tgazsr/training.hpp"

namespace tgazsr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json default_run_config() {
  const TrainConfig train;
  const AttackConfig eval_attack = pgd_eval_config();
  return {
      {"seed", 0},
      {"out", "runs"},
      {"ckpt", ""},
      {"model", desk_vit_config().to_json()},
      {"temperature", kDefaultTemperature},
      {"text", {{"source", "synthetic"}, {"seed", 0}, {"template", "a photo of a {class}"},
                {"path", ""}}},
      {"data", {{"train", "shapes:2048:1:4"}, {"eval", json::array({"shapes:256:2:4"})}}},
      {"pretrain", {{"epochs", 30}, {"lr", 1e-3}, {"weight_decay", 0.0}, {"batch", 32}}},
      {"train", {{"lr", train.sgd.learning_rate}, {"momentum", train.sgd.momentum},
                 {"weight_decay", train.sgd.weight_decay}, {"batch", train.batch_size},
                 {"epochs", train.epochs}}},
      {"loss", LossWeights{}.to_json()},
      {"attack", pgd_train_config().to_json()},
      {"eval", {{"eps", json::array({1.0 / 255.0})}, {"attack", eval_attack.to_json()},
                {"batch", kEvalBatchSize}, {"transfer_ckpt", ""}}},
      {"viz", {{"n", 8}}},
      {"sweep", {{"alpha", json::array({0.08})}, {"beta", json::array({0.05})},
                 {"lr", json::array({train.sgd.learning_rate})},
                 {"distance", json::array({"l2"})}}},
  };
}

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::config, what); }

void check_keys(const json& given, const json& known, const std::string& prefix) {
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) config_error("unknown config key '" + prefix + key + "'");
    if (value.is_object() && known.at(key).is_object() && key != "model" && prefix.empty()) {
      check_keys(value, known.at(key), key + ".");
    }
  }
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

json load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("config file not found: " + path.string());
  json given;
  try {
    given = json::parse(in);
  } catch (const json::exception& e) {
    config_error("cannot parse " + path.string() + ": " + e.what());
  }
  if (!given.is_object()) config_error(path.string() + ": top level must be an object");
  json cfg = default_run_config();
  check_keys(given, cfg, "");
  cfg.merge_patch(given);
  return cfg;
}

double parse_number(const std::string& text) {
  const auto slash = text.find('/');
  std::size_t used = 0;
  try {
    if (slash == std::string::npos) {
      const double v = std::stod(text, &used);
      if (used != text.size()) config_error("not a number: '" + text + "'");
      return v;
    }
    const std::string num = text.substr(0, slash), den = text.substr(slash + 1);
    std::size_t used_den = 0;
    const double n = std::stod(num, &used);
    const double d = std::stod(den, &used_den);
    if (used != num.size() || used_den != den.size() || d == 0.0) {
      config_error("not a number: '" + text + "'");
    }
    return n / d;
  } catch (const std::logic_error&) {
    config_error("not a number: '" + text + "'");
  }
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_number(item));
  if (out.empty()) config_error("empty number list");
  return out;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) config_error("override must be key=value: " + assignment);
  const auto path = split(assignment.substr(0, eq), '.');
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    try {
      value = parse_number(raw);
    } catch (const Error&) {
      value = raw;
    }
  }
  json* node = &config;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->contains(path[i])) config_error("unknown config key '" + path[i] + "'");
    node = &(*node)[path[i]];
    if (!node->is_object()) config_error("'" + path[i] + "' is not a section");
  }
  if (path.size() > 1 || path[0] != "model") {
    if (!node->contains(path.back())) config_error("unknown config key '" + path.back() + "'");
  }
  (*node)[path.back()] = value;
}

Dataset load_dataset_spec(const std::string& spec) {
  if (spec.rfind("shapes:", 0) == 0) {
    const auto parts = split(spec, ':');
    if (parts.size() < 3 || parts.size() > 5) {
      config_error("synthetic dataset spec is shapes:<n>:<seed>[:<classes>[:<first>]], got " + spec);
    }
    ShapesOptions opts;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    try {
      n = std::stoul(parts[1]);
      seed = std::stoull(parts[2]);
      if (parts.size() >= 4) opts.num_classes = std::stoul(parts[3]);
      if (parts.size() == 5) opts.first_class = std::stoul(parts[4]);
    } catch (const std::logic_error&) {
      config_error("bad dataset spec " + spec);
    }
    Dataset d = synthetic_dataset("shapes", n, seed, opts);
    d.id = spec;
    return d;
  }
  Dataset d = load_dataset(load_manifest(spec));
  d.id = spec;
  return d;
}

fs::path make_run_dir(const fs::path& root, const std::string& hash) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = std::string(stamp) + "-" + hash;
  fs::path dir = root / base;
  for (int i = 1; fs::exists(dir); ++i) dir = root / (base + "-" + std::to_string(i));
  fs::create_directories(dir);
  return dir;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Everything a subcommand needs after configuration is resolved.
struct Run {
  json cfg;
  std::string hash;
  fs::path dir;
  std::uint64_t seed = 0;
};

Run start_run(json cfg) {
  Run r;
  try {
    r.seed = cfg.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    config_error(std::string("seed: ") + e.what());
  }
  r.hash = config_hash(cfg);
  r.dir = make_run_dir(cfg.at("out").get<std::string>(), r.hash);
  write_json(r.dir / "resolved_config.json", cfg);
  r.cfg = std::move(cfg);
  std::cerr << "run directory: " << r.dir.string() << "\n";
  return r;
}

TextSource text_source(const json& cfg, std::size_t dim) {
  const json& t = cfg.at("text");
  const std::string source = t.at("source").get<std::string>();
  if (source == "synthetic") return SyntheticTextSource{t.at("seed").get<std::uint64_t>(), dim};
  if (source == "archive") return ArchiveTextSource{t.at("path").get<std::string>()};
  config_error("text.source must be 'synthetic' or 'archive'");
}

TextEmbeddings text_for(const json& cfg, const std::vector<std::string>& classes, std::size_t dim,
                        const TextEmbeddings* fallback) {
  if (fallback != nullptr && fallback->class_names == classes) return *fallback;
  const std::string tmpl = fallback != nullptr ? fallback->prompt_template
                                               : cfg.at("text").at("template").get<std::string>();
  TextEmbeddings text = encode_text(classes, tmpl, text_source(cfg, dim));
  if (text.dim() != dim) {
    throw Error(ErrorCode::dimension_mismatch, "text embedding width differs from the encoder");
  }
  return text;
}

TrainConfig train_config(const json& section, std::uint64_t seed, const AttackConfig& attack) {
  TrainConfig t = TrainConfig::from_json(section);
  t.seed = seed;
  t.attack = attack;
  t.validate();
  return t;
}

std::vector<Dataset> eval_datasets(const json& cfg) {
  std::vector<Dataset> out;
  for (const auto& spec : cfg.at("data").at("eval")) out.push_back(load_dataset_spec(spec.get<std::string>()));
  if (out.empty()) config_error("data.eval lists no datasets");
  return out;
}

AttackConfig eval_attack(const json& cfg, double eps) {
  AttackConfig a = AttackConfig::from_json(cfg.at("eval").at("attack"), pgd_eval_config());
  a.epsilon = eps;
  a.validate();
  return a;
}

std::vector<double> eval_eps(const json& cfg) {
  const auto eps = cfg.at("eval").at("eps").get<std::vector<double>>();
  if (eps.empty()) config_error("eval.eps is empty");
  return eps;
}

Checkpoint load_checkpoint(const std::string& path) {
  if (path.empty()) config_error("a checkpoint is required (--ckpt)");
  return from_archive(load_archive(path));
}

void save_checkpoint(const fs::path& dir, const ImageEncoder& encoder, const TextEmbeddings& text,
                     double temperature, const std::string& hash) {
  TensorArchive a = to_archive(encoder, text, temperature);
  a.meta["config_hash"] = hash;
  save_archive(dir, a);
}

EvalReport evaluate_model(const Run& run, const ImageEncoder& encoder, const TextEmbeddings* text,
                          double temperature) {
  const std::size_t batch = run.cfg.at("eval").at("batch").get<std::size_t>();
  const std::string transfer = run.cfg.at("eval").at("transfer_ckpt").get<std::string>();
  std::optional<Checkpoint> source;
  if (!transfer.empty()) source = load_checkpoint(transfer);
  EvalReport report;
  report.seed = run.seed;
  report.config_hash = run.hash;
  for (const Dataset& ds : eval_datasets(run.cfg)) {
    const TextEmbeddings t = text_for(run.cfg, ds.class_names, encoder.embed_dim(), text);
    const double clean = zero_shot_accuracy(encoder, ds, t, temperature, batch);
    for (double eps : eval_eps(run.cfg)) {
      EvalEntry e;
      e.dataset_id = ds.id;
      e.attack = eval_attack(run.cfg, eps);
      e.clean_acc = clean;
      e.robust_acc = robust_accuracy(encoder, ds, t, temperature, e.attack, batch,
                                     source ? source->encoder.get() : nullptr);
      std::cerr << ds.id << " eps=" << eps << " clean=" << e.clean_acc
                << " robust=" << e.robust_acc << "\n";
      report.entries.push_back(e);
    }
  }
  report.finalize();
  return report;
}

// The frozen original: a given checkpoint, or a freshly pretrained encoder.
Checkpoint original_model(const Run& run, const Dataset& train) {
  const std::string ckpt = run.cfg.at("ckpt").get<std::string>();
  if (!ckpt.empty()) return load_checkpoint(ckpt);
  Checkpoint ck;
  ck.encoder = make_encoder(run.cfg.at("model"), run.seed);
  ck.temperature = run.cfg.at("temperature").get<double>();
  ck.text = text_for(run.cfg, train.class_names, ck.encoder->embed_dim(), nullptr);
  PretrainConfig pre = PretrainConfig::from_json(run.cfg.at("pretrain"));
  pre.seed = run.seed;
  std::ofstream log(run.dir / "pretrain_log.jsonl", std::ios::binary);
  const auto losses = pretrain(*ck.encoder, train, ck.text, ck.temperature, pre);
  for (std::size_t e = 0; e < losses.size(); ++e) {
    log << json{{"epoch", e + 1}, {"l_ce", losses[e]}, {"config_hash", run.hash}}.dump() << "\n";
  }
  const double acc = zero_shot_accuracy(*ck.encoder, train, ck.text, ck.temperature);
  log << json{{"train_clean_acc", acc}, {"config_hash", run.hash}}.dump() << "\n";
  std::cerr << "pretrained original: train clean acc " << acc << "\n";
  save_checkpoint(run.dir / "original", *ck.encoder, ck.text, ck.temperature, run.hash);
  return ck;
}

struct FinetuneResult {
  std::unique_ptr<ImageEncoder> target;
  TextEmbeddings text;
  double temperature;
};

FinetuneResult finetune_from(const Run& run, const Checkpoint& original, const Dataset& train,
                             const json& train_section, const json& loss_section,
                             const fs::path& out_dir) {
  const LossWeights weights = LossWeights::from_json(loss_section);
  const AttackConfig attack = AttackConfig::from_json(run.cfg.at("attack"), pgd_train_config());
  const TrainConfig cfg = train_config(train_section, run.seed, attack);
  const TextEmbeddings text =
      text_for(run.cfg, train.class_names, original.encoder->embed_dim(), &original.text);
  DualModelState state(original.encoder->clone(), text, original.temperature);
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "training_log.jsonl", std::ios::binary);
  FinetuneOptions options;
  options.checkpoint_dir = out_dir / "checkpoints";
  options.on_epoch = [&](const EpochLog& e) {
    json line = e.to_json();
    line["config_hash"] = run.hash;
    log << line.dump() << "\n" << std::flush;
    std::cerr << "epoch " << e.epoch << " total=" << e.l_total << " clean=" << e.clean_acc
              << " robust=" << e.robust_acc << "\n";
  };
  finetune(state, train, cfg, weights, options);
  save_checkpoint(out_dir / "checkpoint", state.target(), state.text(), state.temperature(),
                  run.hash);
  return {state.target().clone(), state.text(), state.temperature()};
}

int cmd_pretrain(const Run& run) {
  const Dataset train = load_dataset_spec(run.cfg.at("data").at("train").get<std::string>());
  const std::string ckpt = run.cfg.at("ckpt").get<std::string>();
  if (!ckpt.empty()) config_error("pretrain starts from the model config; drop --ckpt");
  original_model(run, train);
  std::cout << (run.dir / "original").string() << "\n";
  return kOk;
}

int cmd_finetune(const Run& run) {
  const Dataset train = load_dataset_spec(run.cfg.at("data").at("train").get<std::string>());
  const Checkpoint original = original_model(run, train);
  const FinetuneResult r = finetune_from(run, original, train, run.cfg.at("train"),
                                         run.cfg.at("loss"), run.dir);
  const EvalReport report = evaluate_model(run, *r.target, &r.text, r.temperature);
  write_json(run.dir / "report.json", report.to_json());
  std::cout << (run.dir / "report.json").string() << "\n";
  return kOk;
}

int cmd_evaluate(const Run& run) {
  const Checkpoint ck = load_checkpoint(run.cfg.at("ckpt").get<std::string>());
  const EvalReport report = evaluate_model(run, *ck.encoder, &ck.text, ck.temperature);
  write_json(run.dir / "report.json", report.to_json());
  std::cout << (run.dir / "report.json").string() << "\n";
  return kOk;
}

int cmd_attack(const Run& run) {
  const Checkpoint ck = load_checkpoint(run.cfg.at("ckpt").get<std::string>());
  const Dataset ds = eval_datasets(run.cfg).front();
  const TextEmbeddings text = text_for(run.cfg, ds.class_names, ck.encoder->embed_dim(), &ck.text);
  const AttackConfig cfg = eval_attack(run.cfg, eval_eps(run.cfg).front());
  const ImageBatch clean = ds.all();
  const ImageBatch adv = run_attack(*ck.encoder, clean, text, ck.temperature, cfg);
  double linf = 0.0;
  std::size_t out_of_range = 0;
  for (std::size_t i = 0; i < adv.pixels.size(); ++i) {
    linf = std::max(linf, std::abs(adv.pixels.data[i] - clean.pixels.data[i]));
    out_of_range += adv.pixels.data[i] < cfg.clamp_min || adv.pixels.data[i] > cfg.clamp_max;
  }
  TensorArchive archive;
  archive.tensors["pixels"] = adv.pixels;
  Tensor labels(adv.size(), 1);
  for (std::size_t i = 0; i < adv.size(); ++i) labels.data[i] = adv.labels[i];
  archive.tensors["labels"] = labels;
  archive.meta = {{"dataset", ds.id}, {"shape", {adv.shape.channels, adv.shape.height, adv.shape.width}},
                  {"attack", cfg.to_json()}, {"config_hash", run.hash}};
  save_archive(run.dir / "adversarial", archive);
  const auto accuracy = [&](const ImageBatch& b) {
    const auto pred = predict(classification_logits(encode_image(*ck.encoder, b).pooled, text,
                                                    ck.temperature));
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == b.labels[i];
    return static_cast<double>(ok) / static_cast<double>(b.size());
  };
  const json stats = {{"dataset", ds.id},          {"samples", adv.size()},
                      {"linf", linf},              {"eps", cfg.epsilon},
                      {"out_of_range", out_of_range}, {"clean_acc", accuracy(clean)},
                      {"robust_acc", accuracy(adv)}, {"attack", cfg.to_json()},
                      {"config_hash", run.hash}};
  write_json(run.dir / "attack_stats.json", stats);
  std::cout << stats.dump() << "\n";
  return kOk;
}

int cmd_attn_viz(const Run& run) {
  const Checkpoint ck = load_checkpoint(run.cfg.at("ckpt").get<std::string>());
  const Dataset ds = eval_datasets(run.cfg).front();
  const TextEmbeddings text = text_for(run.cfg, ds.class_names, ck.encoder->embed_dim(), &ck.text);
  const DualModelState state(ck.encoder->clone(), text, ck.temperature);
  const AttackConfig cfg = eval_attack(run.cfg, eval_eps(run.cfg).front());
  const std::size_t n = run.cfg.at("viz").at("n").get<std::size_t>();
  ShiftReport report = attention_shift_report(state, ds, cfg, n, run.seed, run.dir / "attention");
  json j = report.to_json();
  j["config_hash"] = run.hash;
  write_json(run.dir / "attention_shift.json", j);
  std::cout << "mean d_adv " << report.mean_d_adv << " mean d_noise " << report.mean_d_noise
            << "\n";
  return kOk;
}

int cmd_sweep(const Run& run) {
  const Dataset train = load_dataset_spec(run.cfg.at("data").at("train").get<std::string>());
  const Checkpoint original = original_model(run, train);
  const json& grid = run.cfg.at("sweep");
  std::vector<std::pair<std::string, EvalReport>> reports;
  char name[160];
  for (double alpha : grid.at("alpha").get<std::vector<double>>()) {
    for (double beta : grid.at("beta").get<std::vector<double>>()) {
      for (double lr : grid.at("lr").get<std::vector<double>>()) {
        for (const auto& dist : grid.at("distance").get<std::vector<std::string>>()) {
          std::snprintf(name, sizeof name, "alpha%g_beta%g_lr%g_%s", alpha, beta, lr, dist.c_str());
          json loss = run.cfg.at("loss");
          loss["alpha"] = alpha;
          loss["beta"] = beta;
          loss["distance"] = dist;
          json train_section = run.cfg.at("train");
          train_section["lr"] = lr;
          std::cerr << "sweep cell " << name << "\n";
          const fs::path cell = run.dir / "cells" / name;
          const FinetuneResult r = finetune_from(run, original, train, train_section, loss, cell);
          const EvalReport report = evaluate_model(run, *r.target, &r.text, r.temperature);
          write_json(cell / "report.json", report.to_json());
          reports.emplace_back(name, report);
        }
      }
    }
  }
  tradeoff_table(tradeoff_rows(reports), run.dir / "tradeoff");
  std::cout << (run.dir / "tradeoff.csv").string() << "\n";
  return kOk;
}

// Flags shared by every subcommand. Each one maps onto a config key and
// overrides the config file.
struct Flags {
  std::string config;
  std::vector<std::string> sets;
  struct Mapped {
    CLI::Option* option;
    std::string key;
    std::string flag;
  };
  std::vector<Mapped> mapped;
  std::map<std::string, std::string> values;
};

void add_mapped(CLI::App* app, Flags& flags, const std::string& flag, const std::string& key,
                const std::string& help) {
  CLI::Option* opt = app->add_option(flag, flags.values[flag], help);
  flags.mapped.push_back({opt, key, flag});
}

json resolve(const Flags& flags) {
  json cfg = flags.config.empty() ? default_run_config() : load_run_config(flags.config);
  for (const auto& [opt, key, flag] : flags.mapped) {
    if (opt->count() == 0) continue;
    const std::string& raw = flags.values.at(flag);
    if (key == "data.eval") {
      json list = json::array();
      for (const auto& s : split(raw, ',')) list.push_back(s);
      cfg["data"]["eval"] = list;
    } else if (key == "eval.eps" || key.rfind("sweep.", 0) == 0) {
      json list = json::array();
      if (key == "sweep.distance") {
        for (const auto& s : split(raw, ',')) list.push_back(s);
      } else {
        for (double v : parse_number_list(raw)) list.push_back(v);
      }
      apply_override(cfg, key + "=" + list.dump());
    } else {
      apply_override(cfg, key + "=" + raw);
    }
  }
  for (const auto& s : flags.sets) apply_override(cfg, s);
  try {
    // Type-check every section before any work starts.
    check_keys(cfg, default_run_config(), "");
    LossWeights::from_json(cfg.at("loss"));
    AttackConfig::from_json(cfg.at("attack")).validate();
    AttackConfig::from_json(cfg.at("eval").at("attack")).validate();
    TrainConfig::from_json(cfg.at("train")).validate();
    PretrainConfig::from_json(cfg.at("pretrain")).validate();
    eval_eps(cfg);
    cfg.at("temperature").get<double>();
    cfg.at("out").get<std::string>();
    cfg.at("ckpt").get<std::string>();
    cfg.at("viz").at("n").get<std::size_t>();
    cfg.at("eval").at("batch").get<std::size_t>();
  } catch (const json::exception& e) {
    config_error(std::string("invalid config value: ") + e.what());
  }
  return cfg;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Text-guided attention adversarial fine-tuning for zero-shot robustness"};
  app.name(args.empty() ? "tgazsr" : args.front());
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const Run&);
  };
  const Sub subs[] = {
      {"pretrain", "Clean training of the original encoder on the training set", cmd_pretrain},
      {"finetune", "Adversarial fine-tuning with attention losses, then evaluation", cmd_finetune},
      {"evaluate", "Clean and robust zero-shot accuracy of a checkpoint", cmd_evaluate},
      {"attack", "Attack one dataset and store the adversarial images", cmd_attack},
      {"attn-viz", "Attention maps on clean, adversarial and noisy inputs", cmd_attn_viz},
      {"sweep", "Fine-tune over a grid of alpha, beta, lr and distance", cmd_sweep},
  };
  std::map<std::string, Flags> flags;
  std::vector<std::pair<CLI::App*, const Sub*>> apps;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    Flags& f = flags[s.name];
    sub->add_option("--config", f.config, "JSON run config; flags override it");
    sub->add_option("--set", f.sets, "Override any config key, e.g. --set train.lr=0.01");
    add_mapped(sub, f, "--out", "out", "Output root; the run lands in <out>/<time>-<hash>");
    add_mapped(sub, f, "--seed", "seed", "Seed for init, batching and noise");
    add_mapped(sub, f, "--ckpt", "ckpt", "Checkpoint directory");
    add_mapped(sub, f, "--datasets", "data.eval",
               "Comma-separated manifests or shapes:<n>:<seed>[:<classes>[:<first>]]");
    add_mapped(sub, f, "--train-data", "data.train", "Training set (manifest or shapes spec)");
    add_mapped(sub, f, "--eps", "eval.eps", "Comma-separated evaluation radii, e.g. 1/255,2/255");
    add_mapped(sub, f, "--iters", "eval.attack.iters", "Evaluation attack iterations");
    add_mapped(sub, f, "--step", "eval.attack.step", "Evaluation attack step size");
    add_mapped(sub, f, "--loss", "eval.attack.loss", "Evaluation attack loss: ce or cw");
    add_mapped(sub, f, "--kappa", "eval.attack.kappa", "CW confidence margin");
    add_mapped(sub, f, "--train-eps", "attack.eps", "Training attack radius");
    const std::string section = std::string(s.name) == "pretrain" ? "pretrain" : "train";
    add_mapped(sub, f, "--epochs", section + ".epochs", "Training epochs");
    add_mapped(sub, f, "--lr", section + ".lr", "Learning rate");
    add_mapped(sub, f, "--batch", section + ".batch", "Training batch size");
    add_mapped(sub, f, "--alpha", "loss.alpha", "Weight of the attention refinement loss");
    add_mapped(sub, f, "--beta", "loss.beta", "Weight of the model constraint loss");
    add_mapped(sub, f, "--distance", "loss.distance", "Attention distance: l2, l1 or cosine");
    add_mapped(sub, f, "--attention", "loss.attention", "Attention source: text or gradient");
    add_mapped(sub, f, "--n", "viz.n", "Samples visualised by attn-viz");
    add_mapped(sub, f, "--alphas", "sweep.alpha", "Sweep grid for alpha");
    add_mapped(sub, f, "--betas", "sweep.beta", "Sweep grid for beta");
    add_mapped(sub, f, "--lrs", "sweep.lr", "Sweep grid for the learning rate");
    add_mapped(sub, f, "--distances", "sweep.distance", "Sweep grid for the distance");
    apps.emplace_back(sub, &s);
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  for (const auto& [sub, s] : apps) {
    if (!sub->parsed()) continue;
    try {
      const Run r = start_run(resolve(flags.at(s->name)));
      return s->fn(r);
    } catch (const Error& e) {
      std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
      return e.code() == ErrorCode::config || e.code() == ErrorCode::invalid_argument
                 ? kConfigError
                 : kRuntimeError;
    } catch (const json::exception& e) {
      std::cerr << "error [config]: " << e.what() << "\n";
      return kConfigError;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kRuntimeError;
    }
  }
  return kConfigError;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace tgazsr::cli
