#pragma once

// On-disk bundles: a directory holding `model.json` plus one LNT1 tensor per
// layer weight and bias. Dense weights are stored [in, out], convolutions
// [k, k, in, out], block-linear maps [b*b*C, b*b*C].

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "linac/attacks.hpp"
#include "linac/classifier.hpp"
#include "linac/inr.hpp"
#include "linac/json_io.hpp"
#include "linac/lnt1.hpp"
#include "linac/nn.hpp"

namespace linac::checkpoint {

namespace fs = std::filesystem;
using json_io::json;

inline Dims weight_dims(const nn::LayerSpec& l) {
  switch (l.kind) {
    case nn::LayerKind::kDense: return {l.in_features, l.out_features};
    case nn::LayerKind::kConv2d: return {l.kernel, l.kernel, l.in_features, l.out_features};
    case nn::LayerKind::kBlockLinear: {
      const std::size_t w = l.kernel * l.kernel * l.in_features;
      return {w, w};
    }
    default: return {};
  }
}

/// Writes `<prefix>layer<i>.weight.lnt1` / `.bias.lnt1` for every layer with
/// parameters and returns the file list, in order.
inline std::vector<std::string> save_params(const fs::path& dir, const std::string& prefix, const nn::Network& net,
                                            std::span<const float> params) {
  if (params.size() != net.param_count()) throw std::invalid_argument("parameter count does not match network");
  std::vector<std::string> files;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& l = net.layers()[i];
    if (l.param_count() == 0) continue;
    const float* p = params.data() + net.param_offset(i);
    const std::string stem = prefix + "layer" + std::to_string(i);
    lnt1::save(dir / (stem + ".weight.lnt1"),
               Tensor<float>(weight_dims(l), std::vector<float>(p, p + l.weight_count())));
    files.push_back(stem + ".weight.lnt1");
    if (l.bias_count()) {
      const float* b = p + l.weight_count();
      lnt1::save(dir / (stem + ".bias.lnt1"), Tensor<float>({l.bias_count()}, std::vector<float>(b, b + l.bias_count())));
      files.push_back(stem + ".bias.lnt1");
    }
  }
  return files;
}

inline std::vector<float> load_params(const fs::path& dir, const std::string& prefix, const nn::Network& net) {
  std::vector<float> params(net.param_count());
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& l = net.layers()[i];
    if (l.param_count() == 0) continue;
    const std::string stem = prefix + "layer" + std::to_string(i);
    const auto w = lnt1::load<float>(dir / (stem + ".weight.lnt1"));
    if (w.dims() != weight_dims(l))
      throw std::runtime_error(stem + ".weight.lnt1 has dims " + dims_string(w.dims()) + ", expected " +
                               dims_string(weight_dims(l)));
    std::copy(w.values().begin(), w.values().end(), params.begin() + static_cast<std::ptrdiff_t>(net.param_offset(i)));
    if (l.bias_count()) {
      const auto b = lnt1::load<float>(dir / (stem + ".bias.lnt1"));
      if (b.size() != l.bias_count()) throw std::runtime_error(stem + ".bias.lnt1 has the wrong length");
      std::copy(b.values().begin(), b.values().end(),
                params.begin() + static_cast<std::ptrdiff_t>(net.param_offset(i) + l.weight_count()));
    }
  }
  return params;
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

inline json read_descriptor(const fs::path& dir, const std::string& kind) {
  json j = read_json(dir / "model.json");
  if (!j.contains("kind") || j["kind"] != kind)
    throw std::runtime_error((dir / "model.json").string() + " is not a " + kind + " checkpoint");
  return j;
}

// ---------------------------------------------------------------------------

inline void write_curve_csv(const fs::path& path, std::span<const classifier::CurvePoint> curve) {
  std::ofstream os(path);
  os << "epoch,loss,lr,train_acc\n" << std::setprecision(9);
  for (const auto& c : curve) os << c.epoch << ',' << c.loss << ',' << c.lr << ',' << c.train_acc << '\n';
}

inline void save_classifier(const fs::path& dir, const classifier::ClassifierParams& m,
                            const transforms::NormalizationStats& stats, const transforms::TransformSpec& transform,
                            const classifier::TrainConfig& cfg) {
  fs::create_directories(dir);
  const nn::Network net = m.spec.network();
  json j{{"kind", "classifier"},
         {"spec", json_io::to_json(m.spec)},
         {"network", json_io::to_json(net)},
         {"normalization", {{"mean", stats.mean}, {"stddev", stats.stddev}}},
         {"transform", json_io::to_json(transform)},
         {"train", json_io::to_json(cfg)}};
  j["params"] = save_params(dir, "", net, m.params);
  if (!m.ema.empty()) j["ema"] = save_params(dir, "ema.", net, m.ema);
  write_json(dir / "model.json", j);
}

struct LoadedClassifier {
  classifier::ClassifierParams model;
  transforms::NormalizationStats stats;
  transforms::TransformSpec transform;
};

inline LoadedClassifier load_classifier(const fs::path& dir) {
  const json j = read_descriptor(dir, "classifier");
  const json_io::Reader r(j, "");
  LoadedClassifier out;
  out.model.spec = json_io::read_classifier_spec(r.child("spec"));
  const nn::Network net = out.model.spec.network();
  out.model.params = load_params(dir, "", net);
  if (r.has("ema")) out.model.ema = load_params(dir, "ema.", net);
  out.stats.mean = j.at("normalization").at("mean").get<std::vector<double>>();
  out.stats.stddev = j.at("normalization").at("stddev").get<std::vector<double>>();
  out.transform = json_io::read_transform(r.child("transform"));
  return out;
}

inline void save_bypass(const fs::path& dir, const attacks::BypassParams& bp, const attacks::PbaConfig& cfg) {
  fs::create_directories(dir);
  json j{{"kind", "bypass"}, {"arch", attacks::to_string(bp.arch)}, {"network", json_io::to_json(bp.stage.net)},
         {"config", json_io::to_json(cfg)}, {"epoch_loss", bp.epoch_loss}};
  j["params"] = save_params(dir, "", bp.stage.net, bp.stage.params);
  write_json(dir / "model.json", j);
}

inline attacks::BypassParams load_bypass(const fs::path& dir) {
  const json j = read_descriptor(dir, "bypass");
  attacks::BypassParams bp;
  bp.arch = j.at("arch") == "conv3x3" ? attacks::BypassArch::kConv3x3 : attacks::BypassArch::kBlockLinear;
  bp.stage.net = json_io::read_network(json_io::Reader(j.at("network"), "network"));
  bp.stage.params = load_params(dir, "", bp.stage.net);
  bp.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
  return bp;
}

/// Fitted INR: JSON arch descriptor plus per-layer tensors. The key is not
/// written.
inline void save_inr(const fs::path& dir, const inr::InrParams<float>& p, const inr::FitConfig& fit) {
  fs::create_directories(dir);
  json j{{"kind", "inr"}, {"arch", json_io::to_json(p.arch)}, {"fit", json_io::to_json(fit)}};
  j["params"] = save_params(dir, "", p.arch.network(), p.params);
  write_json(dir / "model.json", j);
}

inline inr::InrParams<float> load_inr(const fs::path& dir) {
  const json j = read_descriptor(dir, "inr");
  inr::InrParams<float> p;
  p.arch = json_io::read_arch(json_io::Reader(j.at("arch"), "arch"));
  p.params = load_params(dir, "", p.arch.network());
  return p;
}

}  // namespace linac::checkpoint
