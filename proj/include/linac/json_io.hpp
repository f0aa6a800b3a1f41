#pragma once

// JSON round-tripping of the library's spec structs. Reading goes through a
// Reader that remembers where it is in the document, so every validation
// failure names the offending field ("transform.fit.epochs").

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "linac/attacks.hpp"
#include "linac/classifier.hpp"
#include "linac/dataset.hpp"
#include "linac/inr.hpp"
#include "linac/nn.hpp"
#include "linac/transforms.hpp"

namespace linac::json_io {

using json = nlohmann::ordered_json;

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : std::invalid_argument(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string path_of(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }
  bool has(std::string_view key) const { return j_.contains(key); }
  const json& raw(std::string_view key) const {
    if (!has(key)) throw ConfigError(path_of(key), "missing required field");
    return j_.at(std::string(key));
  }

  Reader child(std::string_view key) const { return Reader(raw(key), path_of(key)); }

  /// Items of an array of objects, each with an indexed path.
  std::vector<Reader> items(std::string_view key) const {
    const json& a = raw(key);
    if (!a.is_array()) throw ConfigError(path_of(key), "expected an array");
    std::vector<Reader> out;
    for (std::size_t i = 0; i < a.size(); ++i)
      out.emplace_back(a[i], path_of(key) + "[" + std::to_string(i) + "]");
    return out;
  }

  template <typename T>
  T get(std::string_view key) const {
    return convert<T>(raw(key), path_of(key));
  }

  template <typename T>
  T get_or(std::string_view key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  void reject_unknown(std::initializer_list<std::string_view> allowed) const {
    for (const auto& [k, v] : j_.items()) {
      bool ok = false;
      for (auto a : allowed) ok |= k == a;
      if (!ok) throw ConfigError(path_of(k), "unknown field");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::int64_t>) {
      if (!v.is_number_integer()) throw ConfigError(path, "expected a 64-bit integer");
      if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
        throw ConfigError(path, "integer does not fit in 64 signed bits");
      return v.get<std::int64_t>();
    } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError(path, "expected a non-negative integer");
      return static_cast<T>(v.get<std::uint64_t>());
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array()) throw ConfigError(path, "expected an array of integers");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<std::size_t>(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    } else {
      static_assert(sizeof(T) == 0, "unsupported field type");
    }
  }

 private:
  const json& j_;
  std::string path_;
};

// Runs `fn`, re-raising std::invalid_argument as a ConfigError at `path`.
template <typename Fn>
void check_at(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
}

// ---------------------------------------------------------------------------

inline json to_json(const inr::InrArch& a) {
  return {{"layers", a.layers}, {"width", a.width}, {"freqs", a.freqs}};
}

inline inr::InrArch read_arch(const Reader& r, inr::InrArch d = {}) {
  r.reject_unknown({"layers", "width", "freqs"});
  inr::InrArch a{r.get_or("layers", d.layers), r.get_or("width", d.width), r.get_or("freqs", d.freqs)};
  if (a.layers < 1) throw ConfigError(r.path_of("layers"), "must be >= 1");
  if (a.width < 1) throw ConfigError(r.path_of("width"), "must be >= 1");
  if (a.freqs < 1) throw ConfigError(r.path_of("freqs"), "must be >= 1");
  return a;
}

/// Fit hyperparameters; the key lives alongside in the enclosing block.
inline json to_json(const inr::FitConfig& f) {
  return {{"epochs", f.epochs}, {"batch", f.batch}, {"lr", f.lr}, {"alpha", f.alpha}};
}

inline inr::FitConfig read_fit(const Reader& r, inr::FitConfig d = {}) {
  r.reject_unknown({"epochs", "batch", "lr", "alpha"});
  inr::FitConfig f = d;
  f.epochs = r.get_or("epochs", d.epochs);
  f.batch = r.get_or("batch", d.batch);
  f.lr = r.get_or("lr", d.lr);
  f.alpha = r.get_or("alpha", d.alpha);
  if (f.epochs < 1) throw ConfigError(r.path_of("epochs"), "must be >= 1");
  if (f.batch < 1) throw ConfigError(r.path_of("batch"), "must be >= 1");
  if (!(f.lr > 0)) throw ConfigError(r.path_of("lr"), "must be > 0");
  if (!(f.alpha > 0 && f.alpha <= 1)) throw ConfigError(r.path_of("alpha"), "must lie in (0, 1]");
  return f;
}

inline json to_json(const transforms::TransformSpec& t) {
  json j{{"kind", transforms::to_string(t.kind)}};
  if (t.kind != transforms::TransformKind::kNone) j["key"] = t.key().value;
  if (t.kind == transforms::TransformKind::kLinac || t.kind == transforms::TransformKind::kLinacReconstruction) {
    j["arch"] = to_json(t.arch);
    j["fit"] = to_json(t.fit);
  }
  if (t.kind == transforms::TransformKind::kLinac) j["repr_layer"] = t.repr_layer;
  if (t.kind == transforms::TransformKind::kBlockShuffle) j["block"] = t.block;
  return j;
}

inline transforms::TransformSpec read_transform(const Reader& r, const transforms::TransformSpec& d = {}) {
  using transforms::TransformKind;
  r.reject_unknown({"kind", "key", "arch", "fit", "repr_layer", "block"});
  transforms::TransformSpec t = d;
  check_at(r.path_of("kind"), [&] { t.kind = transforms::transform_kind_from_string(r.get<std::string>("kind")); });
  if (r.has("arch")) t.arch = read_arch(r.child("arch"), d.arch);
  if (r.has("fit")) t.fit = read_fit(r.child("fit"), d.fit);
  if (t.kind != TransformKind::kNone) {
    if (!r.has("key")) throw ConfigError(r.path_of("key"), "required for transform kind " + transforms::to_string(t.kind));
    t.fit.key = PrivateKey{r.get<std::int64_t>("key")};
  }
  t.repr_layer = r.get_or("repr_layer", d.repr_layer);
  t.block = r.get_or("block", d.block);
  if (t.kind == TransformKind::kLinac && t.repr_layer >= t.arch.layers)
    throw ConfigError(r.path_of("repr_layer"), "must be below arch.layers (" + std::to_string(t.arch.layers) +
                                                   "); use kind linac-reconstruction for the RGB output");
  if (t.kind == TransformKind::kBlockShuffle && t.block == 0) throw ConfigError(r.path_of("block"), "must be >= 1");
  return t;
}

inline json to_json(const classifier::ClassifierSpec& s) {
  return {{"input_channels", s.input_channels}, {"rows", s.rows}, {"cols", s.cols}, {"num_classes", s.num_classes},
          {"width1", s.width1}, {"width2", s.width2}, {"width3", s.width3}};
}

inline classifier::ClassifierSpec read_classifier_spec(const Reader& r, const classifier::ClassifierSpec& d = {}) {
  r.reject_unknown({"input_channels", "rows", "cols", "num_classes", "width1", "width2", "width3"});
  classifier::ClassifierSpec s;
  s.input_channels = r.get_or("input_channels", d.input_channels);
  s.rows = r.get_or("rows", d.rows);
  s.cols = r.get_or("cols", d.cols);
  s.num_classes = r.get_or("num_classes", d.num_classes);
  s.width1 = r.get_or("width1", d.width1);
  s.width2 = r.get_or("width2", d.width2);
  s.width3 = r.get_or("width3", d.width3);
  for (auto key : {"input_channels", "rows", "cols", "num_classes", "width1", "width2", "width3"})
    if (r.get_or<std::size_t>(key, 1) == 0) throw ConfigError(r.path_of(key), "must be >= 1");
  return s;
}

inline json to_json(const classifier::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch", c.batch},
          {"lr", c.lr},
          {"lr_drops", c.lr_drops},
          {"lr_drop_factor", c.lr_drop_factor},
          {"weight_decay", c.weight_decay},
          {"momentum", c.momentum},
          {"nesterov", c.nesterov},
          {"ema_decay", c.ema_decay},
          {"cutmix", c.cutmix},
          {"seed", c.seed}};
}

inline classifier::TrainConfig read_train_config(const Reader& r, const classifier::TrainConfig& d = {}) {
  r.reject_unknown({"epochs", "batch", "lr", "lr_drops", "lr_drop_factor", "weight_decay", "momentum", "nesterov",
                    "ema_decay", "cutmix", "seed"});
  classifier::TrainConfig c = d;
  c.epochs = r.get_or("epochs", d.epochs);
  c.batch = r.get_or("batch", d.batch);
  c.lr = r.get_or("lr", d.lr);
  c.lr_drops = r.has("lr_drops") ? r.get<std::vector<std::size_t>>("lr_drops")
                                 : (r.has("epochs") ? classifier::TrainConfig::proportional_drops(c.epochs) : d.lr_drops);
  c.lr_drop_factor = r.get_or("lr_drop_factor", d.lr_drop_factor);
  c.weight_decay = r.get_or("weight_decay", d.weight_decay);
  c.momentum = r.get_or("momentum", d.momentum);
  c.nesterov = r.get_or("nesterov", d.nesterov);
  c.ema_decay = r.get_or("ema_decay", d.ema_decay);
  c.cutmix = r.get_or("cutmix", d.cutmix);
  c.seed = r.get_or<std::uint64_t>("seed", d.seed);
  if (c.epochs < 1) throw ConfigError(r.path_of("epochs"), "must be >= 1");
  if (c.batch < 1) throw ConfigError(r.path_of("batch"), "must be >= 1");
  if (!(c.lr > 0)) throw ConfigError(r.path_of("lr"), "must be > 0");
  if (!(c.ema_decay >= 0 && c.ema_decay < 1)) throw ConfigError(r.path_of("ema_decay"), "must lie in [0, 1)");
  if (c.weight_decay < 0) throw ConfigError(r.path_of("weight_decay"), "must be >= 0");
  return c;
}

inline json to_json(const nn::LayerSpec& l) {
  json j{{"kind", nn::to_string(l.kind)}};
  switch (l.kind) {
    case nn::LayerKind::kDense:
      j["in"] = l.in_features;
      j["out"] = l.out_features;
      j["bias"] = l.has_bias;
      break;
    case nn::LayerKind::kConv2d:
      j["in"] = l.in_features;
      j["out"] = l.out_features;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["bias"] = l.has_bias;
      break;
    case nn::LayerKind::kBlockLinear:
      j["block"] = l.kernel;
      j["channels"] = l.in_features;
      break;
    default:
      break;
  }
  return j;
}

inline nn::LayerSpec read_layer(const Reader& r) {
  const auto kind = r.get<std::string>("kind");
  if (kind == "dense") return nn::LayerSpec::dense(r.get<std::size_t>("in"), r.get<std::size_t>("out"), r.get_or("bias", true));
  if (kind == "conv2d")
    return nn::LayerSpec::conv2d(r.get<std::size_t>("in"), r.get<std::size_t>("out"), r.get<std::size_t>("kernel"),
                                 r.get_or<std::size_t>("stride", 1), r.get_or("bias", true));
  if (kind == "relu") return nn::LayerSpec::relu();
  if (kind == "swish") return nn::LayerSpec::swish();
  if (kind == "global_avg_pool") return nn::LayerSpec::global_avg_pool();
  if (kind == "flatten") return nn::LayerSpec::flatten();
  if (kind == "block_linear") return nn::LayerSpec::block_linear(r.get<std::size_t>("block"), r.get<std::size_t>("channels"));
  throw ConfigError(r.path_of("kind"), "unknown layer kind '" + kind + "'");
}

inline json to_json(const nn::Network& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) layers.push_back(to_json(l));
  return {{"input_dims", net.input_dims()}, {"layers", layers}};
}

inline nn::Network read_network(const Reader& r) {
  std::vector<nn::LayerSpec> layers;
  for (const auto& item : r.items("layers")) layers.push_back(read_layer(item));
  const auto dims = r.get<std::vector<std::size_t>>("input_dims");
  nn::Network net;
  check_at(r.path(), [&] { net = nn::Network(std::move(layers), Dims(dims.begin(), dims.end())); });
  return net;
}

inline json to_json(const attacks::PerturbationBudget& b) {
  return {{"norm", attacks::to_string(b.norm)}, {"epsilon", b.epsilon}};
}

inline json to_json(const attacks::AttackConfig& c) {
  json j{{"kind", attacks::to_string(c.kind)}, {"restarts", c.restarts}};
  if (c.kind == attacks::AttackKind::kSquare) {
    j["queries"] = c.queries;
    j["p_init"] = c.p_init;
  } else {
    j["steps"] = c.steps;
    j["step_size"] = c.step_size;
  }
  return j;
}

inline json to_json(const attacks::PbaConfig& c) {
  return {{"arch", attacks::to_string(c.arch)}, {"out_channels", c.out_channels}, {"block", c.block},
          {"epochs", c.epochs}, {"batch", c.batch}, {"lr", c.lr}, {"lr_drops", c.lr_drops},
          {"lr_drop_factor", c.lr_drop_factor}, {"momentum", c.momentum}, {"seed", c.seed}};
}

inline json to_json(const data::SyntheticSpec& s) {
  return {{"seed", s.seed}, {"count", s.count}, {"size", s.size}, {"num_classes", s.num_classes},
          {"texture", s.texture}, {"noise", s.noise}, {"min_contrast", s.min_contrast},
          {"max_contrast", s.max_contrast}};
}

}  // namespace linac::json_io
