#pragma once

// End-to-end orchestration shared by the command-line tool: train a
// classifier behind a transform, build attack sources, run an attack list
// and collect correctness masks.

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "linac/attacks.hpp"
#include "linac/checkpoint.hpp"
#include "linac/classifier.hpp"
#include "linac/config.hpp"
#include "linac/evaluation.hpp"
#include "linac/model.hpp"

namespace linac::pipeline {

namespace fs = std::filesystem;

struct TrainedClassifier {
  classifier::ClassifierParams model;
  transforms::NormalizationStats stats;
  transforms::TransformSpec transform;
  std::vector<classifier::CurvePoint> curve;
};

/// Normalisation statistics from `train`, then a classifier trained on the
/// transformed training images.
inline TrainedClassifier train_behind(const data::Dataset& train, const transforms::TransformSpec& transform,
                                      const classifier::ClassifierSpec& base, const classifier::TrainConfig& cfg,
                                      std::size_t workers = default_workers()) {
  transform.validate();
  TrainedClassifier t;
  t.stats = transforms::fit_normalization(train.images);
  t.transform = transform;
  auto spec = base;
  spec.rows = train.images.dim(1);
  spec.cols = train.images.dim(2);
  spec.input_channels = transform.output_channels(train.images.dim(3));
  spec.num_classes = train.num_classes;
  auto r = classifier::train_classifier(train, spec, cfg,
                                        derive_stream(PrivateKey{static_cast<std::int64_t>(cfg.seed)},
                                                      StreamLabel::training()),
                                        classifier::make_preprocess(t.stats, transform, workers));
  t.model = std::move(r.model);
  t.curve = std::move(r.curve);
  return t;
}

inline void save(const fs::path& dir, const TrainedClassifier& t, const classifier::TrainConfig& cfg) {
  checkpoint::save_classifier(dir, t.model, t.stats, t.transform, cfg);
  checkpoint::write_curve_csv(dir / "curve.csv", t.curve);
}

inline TrainedClassifier load(const fs::path& dir) {
  auto l = checkpoint::load_classifier(dir);
  return {std::move(l.model), std::move(l.stats), std::move(l.transform), {}};
}

/// Loads `dir` if it holds a checkpoint, otherwise trains and saves there.
inline TrainedClassifier cached(const fs::path& dir, const data::Dataset& train,
                                const transforms::TransformSpec& transform, const classifier::ClassifierSpec& base,
                                const classifier::TrainConfig& cfg, std::size_t workers) {
  if (!dir.empty() && fs::exists(dir / "model.json")) return load(dir);
  auto t = train_behind(train, transform, base, cfg, workers);
  if (!dir.empty()) save(dir, t, cfg);
  return t;
}

/// The pipeline as deployed: exact transform with the private key.
inline std::unique_ptr<ForwardModel> deployed_model(const TrainedClassifier& t,
                                                    std::size_t workers = default_workers()) {
  if (t.transform.kind == transforms::TransformKind::kNone)
    return std::make_unique<PipelineModel>(t.stats, std::vector<NetworkStage>{t.model.stage()});
  return std::make_unique<TransformedModel>(t.stats, t.transform, t.model.stage(), workers);
}

/// A model attacks are computed on, with whatever it depends on.
struct Source {
  std::string name;
  std::vector<std::unique_ptr<ForwardModel>> owned;
  const ForwardModel* model = nullptr;
};

struct SourceContext {
  const TrainedClassifier* target = nullptr;
  const data::Dataset* train = nullptr;
  const config::ExperimentConfig* cfg = nullptr;
  std::size_t workers = 1;
  fs::path cache_dir;  // surrogate checkpoints; empty disables caching
};

inline Source make_source(const config::SourceSpec& spec, const SourceContext& ctx) {
  using config::SourceKind;
  Source s;
  s.name = spec.name();
  const auto& target = *ctx.target;
  const auto& cfg = *ctx.cfg;
  auto cache = [&](const std::string& sub) { return ctx.cache_dir.empty() ? fs::path{} : ctx.cache_dir / sub; };
  auto bpda_over = [&](const TrainedClassifier& t) {
    auto exact = std::make_unique<TransformedModel>(t.stats, t.transform, t.model.stage(), ctx.workers);
    auto bpda = std::make_unique<BpdaModel>(*exact);
    s.model = bpda.get();
    s.owned.push_back(std::move(exact));
    s.owned.push_back(std::move(bpda));
  };

  switch (spec.kind) {
    case SourceKind::kDirect:
      s.owned.push_back(deployed_model(target, ctx.workers));
      s.model = s.owned.back().get();
      break;
    case SourceKind::kBpda:
      if (target.transform.kind == transforms::TransformKind::kNone) {
        s.owned.push_back(deployed_model(target, ctx.workers));
        s.model = s.owned.back().get();
      } else {
        bpda_over(target);
      }
      break;
    case SourceKind::kPba: {
      attacks::BypassParams bp;
      const fs::path dir = cache("pba");
      if (!dir.empty() && fs::exists(dir / "model.json")) {
        bp = checkpoint::load_bypass(dir);
      } else {
        auto pc = cfg.pba;
        pc.out_channels = target.transform.output_channels(3);
        pc.arch = target.transform.kind == transforms::TransformKind::kBlockShuffle ? attacks::BypassArch::kBlockLinear
                                                                                    : attacks::BypassArch::kConv3x3;
        pc.block = target.transform.block;
        bp = attacks::train_pba(target.model.stage(), target.stats, *ctx.train, pc);
        if (!dir.empty()) checkpoint::save_bypass(dir, bp, pc);
      }
      s.owned.push_back(std::make_unique<PipelineModel>(target.stats, std::vector<NetworkStage>{bp.stage, target.model.stage()}));
      s.model = s.owned.back().get();
      break;
    }
    case SourceKind::kNominal: {
      const auto t = cached(cache("nominal"), *ctx.train, transforms::TransformSpec{}, cfg.classifier, cfg.train,
                            ctx.workers);
      s.owned.push_back(deployed_model(t, ctx.workers));
      s.model = s.owned.back().get();
      break;
    }
    case SourceKind::kSurrogateKey:
    case SourceKind::kReconstruction: {
      auto tr = target.transform.with_key(PrivateKey{spec.key});
      if (spec.kind == SourceKind::kReconstruction) tr.kind = transforms::TransformKind::kLinacReconstruction;
      const auto sub = (spec.kind == SourceKind::kReconstruction ? "reconstruction-" : "surrogate-") +
                       std::to_string(spec.key);
      bpda_over(cached(cache(sub), *ctx.train, tr, cfg.classifier, cfg.train, ctx.workers));
      break;
    }
  }
  return s;
}

struct ColumnResult {
  config::AttackSpec spec;
  attacks::AttackOutcome outcome;
  std::vector<bool> target_correct;
};

struct AttackReport {
  evaluation::CorrectnessMask mask;
  std::vector<ColumnResult> columns;
};

/// Runs every configured attack against `test`, scoring each on the
/// deployed target. Attack i draws from stream attack(i) of attack_seed.
inline AttackReport run_attacks(const config::ExperimentConfig& cfg, const SourceContext& ctx,
                                const data::Dataset& test, std::ostream* log = nullptr) {
  const auto target = deployed_model(*ctx.target, ctx.workers);
  AttackReport rep;
  {
    const auto pred = predict_labels(*target, test.images);
    std::vector<bool> clean(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) clean[i] = pred[i] == test.labels[i];
    rep.mask = evaluation::CorrectnessMask(std::move(clean));
  }
  std::vector<Source> sources;
  auto source_for = [&](const config::SourceSpec& spec) -> const Source& {
    for (const auto& s : sources)
      if (s.name == spec.name()) return s;
    if (log) *log << "building source " << spec.name() << '\n';
    sources.push_back(make_source(spec, ctx));
    return sources.back();
  };
  for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
    const auto& a = cfg.attacks[i];
    const Source& src = source_for(a.source);
    if (log) *log << "attack " << a.name << "@" << src.name << '\n';
    const RngStream stream = derive_stream(PrivateKey{static_cast<std::int64_t>(cfg.attack_seed)}, StreamLabel::attack(i));
    ColumnResult col{a, attacks::run_attack(*src.model, test.images, test.labels, a.budget, a.config, stream), {}};
    col.target_correct = attacks::evaluate_on(*target, col.outcome.adversarial, test.labels);
    rep.mask.set(a.name, src.name, col.target_correct);
    rep.columns.push_back(std::move(col));
  }
  return rep;
}

/// Perturbation tensor and JSON metadata for one attack column.
inline void save_outcome(const fs::path& dir, const ColumnResult& c, const data::Dataset& test) {
  fs::create_directories(dir);
  Tensor<float> delta = c.outcome.adversarial;
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= test.images[i];
  lnt1::save(dir / "perturbation.lnt1", delta);
  std::size_t queries = 0, successes = 0, robust = 0;
  for (auto q : c.outcome.queries) queries += q;
  for (auto s : c.outcome.success) successes += s != 0;
  for (bool b : c.target_correct) robust += b;
  json_io::json j{{"attack", c.spec.name},
                  {"source", c.spec.source.name()},
                  {"config", json_io::to_json(c.spec.config)},
                  {"budget", json_io::to_json(c.spec.budget)},
                  {"examples", test.size()},
                  {"queries", queries},
                  {"source_successes", successes},
                  {"target_correct", robust},
                  {"success", c.outcome.success}};
  checkpoint::write_json(dir / "outcome.json", j);
}

}  // namespace linac::pipeline
