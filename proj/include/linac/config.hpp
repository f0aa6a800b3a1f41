#pragma once

// Experiment configuration: dataset, transform, classifier, bypass training
// and attack list, loaded from JSON on top of a named preset.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "linac/attacks.hpp"
#include "linac/checkpoint.hpp"
#include "linac/classifier.hpp"
#include "linac/dataset.hpp"
#include "linac/json_io.hpp"
#include "linac/transforms.hpp"

namespace linac::config {

namespace fs = std::filesystem;
using json_io::ConfigError;
using json_io::json;
using json_io::Reader;

/// Key used for the paper's defended classifier.
inline constexpr std::int64_t kPaperKey = -2314326399425823309LL;

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | cifar10 | lnt1
  std::string path;                 // cifar10: batch directory; lnt1: directory with train.* and test.*
  std::size_t train_size = 6000;    // 0 keeps everything available
  std::size_t test_size = 500;
  std::size_t image_size = 16;      // synthetic only
  std::uint64_t seed = 1;
};

/// Where an attack's perturbations are computed.
enum class SourceKind {
  kDirect,          // the target pipeline itself
  kBpda,            // exact forward, identity backward through the transform
  kPba,             // bypass classifier fit on the training set
  kNominal,         // separately trained undefended classifier
  kSurrogateKey,    // LINAC classifier trained with an attacker key, via BPDA
  kReconstruction,  // reconstruction-mode classifier with an attacker key, via BPDA
};

inline std::string to_string(SourceKind k) {
  switch (k) {
    case SourceKind::kDirect: return "direct";
    case SourceKind::kBpda: return "bpda";
    case SourceKind::kPba: return "pba";
    case SourceKind::kNominal: return "nominal";
    case SourceKind::kSurrogateKey: return "surrogate-key";
    case SourceKind::kReconstruction: return "reconstruction";
  }
  return "direct";
}

struct SourceSpec {
  SourceKind kind = SourceKind::kDirect;
  std::int64_t key = 0;  // attacker key for surrogate-key and reconstruction

  std::string name() const {
    const std::string base = to_string(kind);
    return kind == SourceKind::kSurrogateKey || kind == SourceKind::kReconstruction ? base + ":" + std::to_string(key)
                                                                                     : base;
  }
};

struct AttackSpec {
  std::string name;
  attacks::PerturbationBudget budget;
  attacks::AttackConfig config;
  SourceSpec source;
};

struct ExperimentConfig {
  std::string preset;
  DatasetConfig dataset;
  transforms::TransformSpec transform;
  classifier::ClassifierSpec classifier;
  classifier::TrainConfig train;
  attacks::PbaConfig pba;
  std::vector<AttackSpec> attacks;
  std::string output_dir = "out";
  std::uint64_t attack_seed = 0;

  /// Classifier spec with input dims filled in from dataset and transform.
  classifier::ClassifierSpec resolved_classifier(std::size_t rows, std::size_t cols) const {
    auto s = classifier;
    s.rows = rows;
    s.cols = cols;
    s.input_channels = transform.output_channels(3);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Presets

inline std::vector<AttackSpec> standard_attacks(SourceSpec src, double linf_eps, double l2_eps, std::size_t pgd_steps,
                                                std::size_t pgd_restarts, std::size_t mt_steps, std::size_t mt_restarts,
                                                std::size_t queries, std::size_t square_restarts) {
  std::vector<AttackSpec> out;
  for (auto [norm, eps] : {std::pair{attacks::Norm::kLinf, linf_eps}, std::pair{attacks::Norm::kL2, l2_eps}}) {
    const std::string suffix = norm == attacks::Norm::kLinf ? "-linf" : "-l2";
    out.push_back({"pgd" + suffix, {norm, eps}, attacks::AttackConfig::pgd(pgd_steps, pgd_restarts), src});
    out.push_back({"mt" + suffix, {norm, eps}, attacks::AttackConfig::mt_pgd(mt_steps, mt_restarts), src});
    out.push_back({"square" + suffix, {norm, eps}, attacks::AttackConfig::square(queries, square_restarts),
                   SourceSpec{SourceKind::kDirect}});
  }
  return out;
}

/// Full-scale hyperparameters: CIFAR-10, L=5, H=256, F=5, N=10, M=32, K=2,
/// batch 1024 for 1000 epochs at lr 0.4 with CutMix and EMA 0.995.
inline ExperimentConfig paper_appendix_a() {
  ExperimentConfig c;
  c.preset = "paper-appendix-a";
  c.dataset = {"cifar10", "cifar-10-batches-bin", 0, 0, 32, 0};
  c.transform.kind = transforms::TransformKind::kLinac;
  c.transform.arch = {5, 256, 5};
  c.transform.fit = {10, 32, 1e-3, 1e-4, PrivateKey{kPaperKey}};
  c.transform.repr_layer = 2;
  c.classifier = {256, 32, 32, 10, 32, 64, 64};
  c.train.epochs = 1000;
  c.train.batch = 1024;
  c.train.lr = 0.4;
  c.train.lr_drops = {650, 800, 900, 950};
  c.train.weight_decay = 5e-4;
  c.train.cutmix = true;
  c.pba = attacks::PbaConfig::linac(256, 100);
  c.attacks = standard_attacks({SourceKind::kBpda}, 8.0 / 255.0, 0.5, 100, 10, 200, 20, 10000, 10);
  for (auto& a : standard_attacks({SourceKind::kPba}, 8.0 / 255.0, 0.5, 100, 10, 200, 20, 10000, 10))
    if (a.config.kind != attacks::AttackKind::kSquare) c.attacks.push_back(a);
  c.output_dir = "out/paper-appendix-a";
  return c;
}

/// Desk scale: 16x16 synthetic images, H=64, N=5, small classifier.
inline ExperimentConfig desk_small() {
  ExperimentConfig c;
  c.preset = "desk-small";
  c.dataset = {"synthetic", "", 6000, 500, 16, 1};
  c.transform.kind = transforms::TransformKind::kLinac;
  c.transform.arch = {5, 64, 5};
  c.transform.fit = {5, 16, 5e-3, 1e-4, PrivateKey{kPaperKey}};
  c.transform.repr_layer = 2;
  c.classifier = {64, 16, 16, 10, 32, 64, 64};
  c.train.epochs = 30;
  c.train.batch = 32;
  c.train.lr = 0.05;
  c.train.lr_drops = classifier::TrainConfig::proportional_drops(30);
  c.pba = attacks::PbaConfig::linac(64, 30);
  c.pba.batch = 32;
  c.pba.lr = 0.003;  // 0.1 is tuned for large batches; at 32 the bypass stalls near chance
  c.attacks = {
      {"pgd-linf", attacks::PerturbationBudget::linf(), attacks::AttackConfig::pgd(20, 1), {SourceKind::kBpda}},
      {"pgd-linf", attacks::PerturbationBudget::linf(), attacks::AttackConfig::pgd(20, 1), {SourceKind::kPba}},
      {"square-linf", attacks::PerturbationBudget::linf(), attacks::AttackConfig::square(2000, 1), {SourceKind::kDirect}},
  };
  c.output_dir = "out/desk-small";
  return c;
}

inline std::optional<ExperimentConfig> preset(const std::string& name) {
  if (name == "paper-appendix-a") return paper_appendix_a();
  if (name == "desk-small") return desk_small();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const SourceSpec& s) {
  json j{{"kind", to_string(s.kind)}};
  if (s.kind == SourceKind::kSurrogateKey || s.kind == SourceKind::kReconstruction) j["key"] = s.key;
  return j;
}

inline json to_json(const ExperimentConfig& c) {
  json attacks_json = json::array();
  for (const auto& a : c.attacks) {
    json j{{"name", a.name}, {"norm", attacks::to_string(a.budget.norm)}, {"epsilon", a.budget.epsilon}};
    j.update(json_io::to_json(a.config));
    j["source"] = to_json(a.source);
    attacks_json.push_back(j);
  }
  json pba = json_io::to_json(c.pba);
  pba.erase("arch");
  pba.erase("out_channels");
  return {{"preset", c.preset},
          {"dataset",
           {{"kind", c.dataset.kind},
            {"path", c.dataset.path},
            {"train_size", c.dataset.train_size},
            {"test_size", c.dataset.test_size},
            {"image_size", c.dataset.image_size},
            {"seed", c.dataset.seed}}},
          {"transform", json_io::to_json(c.transform)},
          {"classifier",
           {{"widths", {c.classifier.width1, c.classifier.width2, c.classifier.width3}},
            {"num_classes", c.classifier.num_classes},
            {"train", json_io::to_json(c.train)}}},
          {"pba", pba},
          {"attacks", attacks_json},
          {"attack_seed", c.attack_seed},
          {"output_dir", c.output_dir}};
}

inline SourceSpec read_source(const Reader& r) {
  r.reject_unknown({"kind", "key"});
  const auto kind = r.get<std::string>("kind");
  SourceSpec s;
  if (kind == "direct") s.kind = SourceKind::kDirect;
  else if (kind == "bpda") s.kind = SourceKind::kBpda;
  else if (kind == "pba") s.kind = SourceKind::kPba;
  else if (kind == "nominal") s.kind = SourceKind::kNominal;
  else if (kind == "surrogate-key") s.kind = SourceKind::kSurrogateKey;
  else if (kind == "reconstruction") s.kind = SourceKind::kReconstruction;
  else throw ConfigError(r.path_of("kind"), "unknown source kind '" + kind + "'");
  if (s.kind == SourceKind::kSurrogateKey || s.kind == SourceKind::kReconstruction) s.key = r.get<std::int64_t>("key");
  return s;
}

inline AttackSpec read_attack(const Reader& r) {
  r.reject_unknown({"name", "kind", "norm", "epsilon", "steps", "restarts", "step_size", "queries", "p_init", "source"});
  AttackSpec a;
  a.name = r.get<std::string>("name");
  if (a.name.empty() || a.name.find_first_of(",@\n") != std::string::npos)
    throw ConfigError(r.path_of("name"), "must be non-empty without ',', '@' or newlines");
  json_io::check_at(r.path_of("kind"), [&] { a.config.kind = attacks::attack_kind_from_string(r.get<std::string>("kind")); });
  json_io::check_at(r.path_of("norm"), [&] { a.budget.norm = attacks::norm_from_string(r.get<std::string>("norm")); });
  a.budget.epsilon = r.get<double>("epsilon");
  if (!(a.budget.epsilon > 0)) throw ConfigError(r.path_of("epsilon"), "must be > 0");
  const auto defaults = a.config.kind == attacks::AttackKind::kSquare ? attacks::AttackConfig::square()
                        : a.config.kind == attacks::AttackKind::kPgd  ? attacks::AttackConfig::pgd()
                                                                      : attacks::AttackConfig::mt_pgd();
  a.config.steps = r.get_or("steps", defaults.steps);
  a.config.restarts = r.get_or("restarts", defaults.restarts);
  a.config.step_size = r.get_or("step_size", defaults.step_size);
  a.config.queries = r.get_or("queries", defaults.queries);
  a.config.p_init = r.get_or("p_init", defaults.p_init);
  if (a.config.steps < 1) throw ConfigError(r.path_of("steps"), "must be >= 1");
  if (a.config.restarts < 1) throw ConfigError(r.path_of("restarts"), "must be >= 1");
  if (a.config.queries < 1) throw ConfigError(r.path_of("queries"), "must be >= 1");
  if (a.config.step_size < 0) throw ConfigError(r.path_of("step_size"), "must be >= 0");
  if (!(a.config.p_init > 0 && a.config.p_init <= 1)) throw ConfigError(r.path_of("p_init"), "must lie in (0, 1]");
  if (r.has("source")) a.source = read_source(r.child("source"));
  return a;
}

/// Parses `j` over the preset it names (or `base`), validating every field
/// before returning.
inline ExperimentConfig from_json(const json& j, const ExperimentConfig& base = desk_small()) {
  const Reader r(j, "");
  r.reject_unknown({"preset", "dataset", "transform", "classifier", "pba", "attacks", "attack_seed", "output_dir"});
  ExperimentConfig c = base;
  if (r.has("preset")) {
    const auto name = r.get<std::string>("preset");
    auto p = preset(name);
    if (!p) throw ConfigError("preset", "unknown preset '" + name + "' (expected paper-appendix-a or desk-small)");
    c = *p;
  }
  if (r.has("dataset")) {
    const Reader d = r.child("dataset");
    d.reject_unknown({"kind", "path", "train_size", "test_size", "image_size", "seed"});
    c.dataset.kind = d.get_or("kind", c.dataset.kind);
    if (c.dataset.kind != "synthetic" && c.dataset.kind != "cifar10" && c.dataset.kind != "lnt1")
      throw ConfigError(d.path_of("kind"), "must be synthetic, cifar10 or lnt1");
    c.dataset.path = d.get_or("path", c.dataset.path);
    c.dataset.train_size = d.get_or("train_size", c.dataset.train_size);
    c.dataset.test_size = d.get_or("test_size", c.dataset.test_size);
    c.dataset.image_size = d.get_or("image_size", c.dataset.image_size);
    c.dataset.seed = d.get_or<std::uint64_t>("seed", c.dataset.seed);
    if (c.dataset.kind == "synthetic") {
      if (c.dataset.train_size == 0) throw ConfigError(d.path_of("train_size"), "must be >= 1 for synthetic data");
      if (c.dataset.test_size == 0) throw ConfigError(d.path_of("test_size"), "must be >= 1 for synthetic data");
      if (c.dataset.image_size < 4) throw ConfigError(d.path_of("image_size"), "must be >= 4");
    } else {
      if (c.dataset.path.empty()) throw ConfigError(d.path_of("path"), "required for dataset kind " + c.dataset.kind);
      if (!fs::exists(c.dataset.path)) throw ConfigError(d.path_of("path"), "'" + c.dataset.path + "' does not exist");
    }
  }
  if (r.has("transform")) c.transform = json_io::read_transform(r.child("transform"), c.transform);
  if (r.has("classifier")) {
    const Reader k = r.child("classifier");
    k.reject_unknown({"widths", "num_classes", "train"});
    if (k.has("widths")) {
      const auto w = k.get<std::vector<std::size_t>>("widths");
      if (w.size() != 3) throw ConfigError(k.path_of("widths"), "expected three widths");
      for (std::size_t i = 0; i < 3; ++i)
        if (w[i] == 0) throw ConfigError(k.path_of("widths") + "[" + std::to_string(i) + "]", "must be >= 1");
      c.classifier.width1 = w[0];
      c.classifier.width2 = w[1];
      c.classifier.width3 = w[2];
    }
    c.classifier.num_classes = k.get_or("num_classes", c.classifier.num_classes);
    if (c.classifier.num_classes < 2) throw ConfigError(k.path_of("num_classes"), "must be >= 2");
    if (k.has("train")) c.train = json_io::read_train_config(k.child("train"), c.train);
  }
  if (r.has("pba")) {
    const Reader p = r.child("pba");
    p.reject_unknown({"block", "epochs", "batch", "lr", "lr_drops", "lr_drop_factor", "momentum", "seed"});
    c.pba.block = p.get_or("block", c.pba.block);
    c.pba.epochs = p.get_or("epochs", c.pba.epochs);
    c.pba.batch = p.get_or("batch", c.pba.batch);
    c.pba.lr = p.get_or("lr", c.pba.lr);
    c.pba.lr_drops = p.has("lr_drops") ? p.get<std::vector<std::size_t>>("lr_drops") : c.pba.lr_drops;
    c.pba.lr_drop_factor = p.get_or("lr_drop_factor", c.pba.lr_drop_factor);
    c.pba.momentum = p.get_or("momentum", c.pba.momentum);
    c.pba.seed = p.get_or<std::uint64_t>("seed", c.pba.seed);
    if (c.pba.epochs < 1) throw ConfigError(p.path_of("epochs"), "must be >= 1");
    if (c.pba.batch < 1) throw ConfigError(p.path_of("batch"), "must be >= 1");
    if (!(c.pba.lr > 0)) throw ConfigError(p.path_of("lr"), "must be > 0");
  }
  if (r.has("attacks")) {
    c.attacks.clear();
    for (const auto& item : r.items("attacks")) c.attacks.push_back(read_attack(item));
  }
  for (std::size_t i = 0; i < c.attacks.size(); ++i) {
    const auto& a = c.attacks[i];
    const std::string at = "attacks[" + std::to_string(i) + "]";
    if (a.source.kind == SourceKind::kDirect && a.config.kind != attacks::AttackKind::kSquare &&
        c.transform.kind != transforms::TransformKind::kNone)
      throw ConfigError(at + ".source.kind", "gradient attacks cannot run directly on a keyed transform; use bpda or pba");
    for (std::size_t k = 0; k < i; ++k)
      if (c.attacks[k].name == a.name && c.attacks[k].source.name() == a.source.name())
        throw ConfigError(at + ".name", "duplicate attack/source pair " + a.name + "@" + a.source.name());
  }
  c.attack_seed = r.get_or<std::uint64_t>("attack_seed", c.attack_seed);
  c.output_dir = r.get_or("output_dir", c.output_dir);
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  if (c.transform.kind == transforms::TransformKind::kBlockShuffle) {
    c.pba.arch = attacks::BypassArch::kBlockLinear;
    if (c.dataset.kind == "synthetic" && c.dataset.image_size % c.transform.block)
      throw ConfigError("transform.block", "must divide dataset.image_size");
  } else {
    c.pba.arch = attacks::BypassArch::kConv3x3;
  }
  c.pba.block = c.transform.block;
  c.pba.out_channels = c.transform.output_channels(3);
  return c;
}

inline ExperimentConfig load(const fs::path& path) {
  return from_json(checkpoint::read_json(path));
}

// ---------------------------------------------------------------------------
// Dataset loading

struct Splits {
  data::Dataset train;
  data::Dataset test;
};

inline Splits load_splits(const DatasetConfig& d) {
  Splits s;
  if (d.kind == "synthetic") {
    data::SyntheticSpec spec;
    spec.size = d.image_size;
    spec.seed = d.seed;
    spec.count = d.train_size;
    s.train = data::synthetic_dataset(spec);
    // Test images come from a disjoint keyed stream.
    spec.seed = d.seed ^ 0x5DEECE66DULL;
    spec.count = d.test_size;
    s.test = data::synthetic_dataset(spec);
    return s;
  }
  if (d.kind == "cifar10") {
    std::vector<data::Dataset> parts;
    for (int b = 1; b <= 5; ++b) {
      const auto file = fs::path(d.path) / ("data_batch_" + std::to_string(b) + ".bin");
      if (fs::exists(file)) parts.push_back(data::read_cifar10(file));
    }
    if (parts.empty()) throw std::runtime_error("no CIFAR-10 training batches under " + d.path);
    std::vector<Tensor<float>> imgs;
    for (auto& p : parts) {
      imgs.push_back(p.images);
      s.train.labels.insert(s.train.labels.end(), p.labels.begin(), p.labels.end());
    }
    s.train.images = Tensor<float>({s.train.labels.size(), 32, 32, 3});
    std::size_t at = 0;
    for (const auto& t : imgs) {
      std::copy(t.values().begin(), t.values().end(), s.train.images.data() + at);
      at += t.size();
    }
    s.test = data::read_cifar10(fs::path(d.path) / "test_batch.bin");
  } else {
    s.train = data::load_dataset(fs::path(d.path) / "train");
    s.test = data::load_dataset(fs::path(d.path) / "test");
  }
  if (d.train_size && d.train_size < s.train.size()) s.train = s.train.slice(0, d.train_size);
  if (d.test_size && d.test_size < s.test.size()) s.test = s.test.slice(0, d.test_size);
  return s;
}

}  // namespace linac::config
