#pragma once

// Small convolutional classifier trained by ERM with Nesterov momentum,
// step-decayed learning rate, optional CutMix and an EMA of parameters.

#include <cmath>
#include <numbers>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "linac/dataset.hpp"
#include "linac/model.hpp"
#include "linac/nn.hpp"
#include "linac/optim.hpp"
#include "linac/rng.hpp"
#include "linac/transforms.hpp"

namespace linac::classifier {

/// conv3x3(C->w1) swish, conv3x3(w1->w2, /2) swish, conv3x3(w2->w3, /2)
/// swish, global average pool, dense(w3->classes).
struct ClassifierSpec {
  std::size_t input_channels = 3;
  std::size_t rows = 16;
  std::size_t cols = 16;
  std::size_t num_classes = 10;
  std::size_t width1 = 32;
  std::size_t width2 = 64;
  std::size_t width3 = 64;

  nn::Network network() const {
    using nn::LayerSpec;
    return nn::Network({LayerSpec::conv2d(input_channels, width1, 3, 1), LayerSpec::swish(),
                        LayerSpec::conv2d(width1, width2, 3, 2), LayerSpec::swish(),
                        LayerSpec::conv2d(width2, width3, 3, 2), LayerSpec::swish(),
                        LayerSpec::global_avg_pool(), LayerSpec::dense(width3, num_classes)},
                       {rows, cols, input_channels});
  }

  friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 128;
  double lr = 0.05;
  std::vector<std::size_t> lr_drops{};  // epochs at which lr is multiplied by lr_drop_factor
  double lr_drop_factor = 0.1;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  bool nesterov = true;
  double ema_decay = 0.995;
  bool cutmix = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs == 0 || batch == 0 || !(lr > 0))
      throw std::invalid_argument("training needs positive epochs, batch and lr");
    if (!(ema_decay >= 0 && ema_decay < 1)) throw std::invalid_argument("ema_decay must lie in [0, 1)");
  }

  /// Drops at 65%, 80%, 90% and 95% of training.
  static std::vector<std::size_t> proportional_drops(std::size_t epochs) {
    std::vector<std::size_t> d;
    for (double f : {0.65, 0.80, 0.90, 0.95})
      d.push_back(static_cast<std::size_t>(std::llround(f * static_cast<double>(epochs))));
    return d;
  }
};

/// Trained parameters; `ema` is the averaged copy used for evaluation.
struct ClassifierParams {
  ClassifierSpec spec;
  std::vector<float> params;
  std::vector<float> ema;

  NetworkStage stage(bool use_ema = true) const {
    return {spec.network(), use_ema && !ema.empty() ? ema : params};
  }
};

struct CurvePoint {
  std::size_t epoch = 0;
  double loss = 0;
  double lr = 0;
  double train_acc = 0;  // running accuracy of the raw parameters on the epoch's batches
};

struct TrainResult {
  ClassifierParams model;
  std::vector<CurvePoint> curve;
};

/// Maps a raw image batch [B, rows, cols, 3] to classifier inputs.
using Preprocess = std::function<Tensor<float>(const Tensor<float>&)>;

/// Trains on `data` (raw images). `preprocess` turns raw batches into
/// classifier inputs; without CutMix it is applied once up front, with
/// CutMix it runs on every mixed batch.
/// He-scaled convolutions (gain sqrt 2, for the swish that follows each),
/// unit-gain output layer.
inline std::vector<float> initial_params(const ClassifierSpec& spec, RngStream& s) {
  const nn::Network net = spec.network();
  auto p = nn::init_params<float>(net, s);
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& l = net.layers()[i];
    if (l.kind != nn::LayerKind::kConv2d) continue;
    float* w = p.data() + net.param_offset(i);
    for (std::size_t k = 0; k < l.weight_count(); ++k) w[k] *= std::numbers::sqrt2_v<float>;
  }
  return p;
}

inline TrainResult train_classifier(const data::Dataset& data, const ClassifierSpec& spec,
                                    const TrainConfig& cfg, RngStream s,
                                    const Preprocess& preprocess = {}) {
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("training set is empty");
  const nn::Network net = spec.network();
  const std::size_t n = data.size(), classes = spec.num_classes;
  const std::size_t per_epoch = (n + cfg.batch - 1) / cfg.batch;

  RngStream init = s.fork(0);
  TrainResult r;
  r.model.spec = spec;
  r.model.params = initial_params(spec, init);
  auto& params = r.model.params;
  optim::MomentumState<float> mom(params.size(), cfg.momentum, cfg.nesterov);
  optim::EmaState<float> ema(params, cfg.ema_decay);

  Tensor<float> prepared;
  if (!cfg.cutmix) prepared = preprocess ? preprocess(data.images) : data.images;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream order_stream = s.fork(1000 + epoch);
    const auto order = permutation(order_stream, n);
    RngStream mix_stream = s.fork(2'000'000 + epoch);
    const double lr = optim::step_lr(epoch, cfg.lr, cfg.lr_drops, cfg.lr_drop_factor);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t first = b * cfg.batch, count = std::min(cfg.batch, n - first);
      std::vector<float> targets(count * classes, 0.0f);
      std::vector<int> hard(count);
      Tensor<float> x;
      if (cfg.cutmix) {
        std::vector<Tensor<float>> mixed(count);
        for (std::size_t k = 0; k < count; ++k) {
          const std::size_t ia = order[first + k];
          const auto ib = static_cast<std::size_t>(mix_stream.next_below(n));
          auto m = transforms::cutmix(data.image(ia), data.image(ib), mix_stream);
          mixed[k] = std::move(m.image);
          targets[k * classes + static_cast<std::size_t>(data.labels[ia])] += static_cast<float>(m.weight_a);
          targets[k * classes + static_cast<std::size_t>(data.labels[ib])] += static_cast<float>(m.weight_b);
          hard[k] = m.weight_a >= m.weight_b ? data.labels[ia] : data.labels[ib];
        }
        x = stack<float>(mixed);
        if (preprocess) x = preprocess(x);
      } else {
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(first),
                                     order.begin() + static_cast<std::ptrdiff_t>(first + count));
        Dims d = prepared.dims();
        d[0] = count;
        x = Tensor<float>(d);
        const std::size_t item = prepared.item_size();
        for (std::size_t k = 0; k < count; ++k) {
          std::copy_n(prepared.data() + idx[k] * item, item, x.data() + k * item);
          hard[k] = data.labels[idx[k]];
          targets[k * classes + static_cast<std::size_t>(hard[k])] = 1.0f;
        }
      }
      auto fwd = nn::forward<float>(net, params, x);
      auto lg = nn::softmax_cross_entropy<float>(fwd.output, std::span<const float>(targets));
      if (!std::isfinite(lg.loss))
        throw NonFiniteError("classifier training diverged at epoch " + std::to_string(epoch));
      const auto pred = nn::argmax_rows(fwd.output);
      for (std::size_t k = 0; k < count; ++k) correct += pred[k] == hard[k];
      loss_sum += static_cast<double>(lg.loss) * static_cast<double>(count);
      auto g = nn::backward<float>(net, params, fwd.cache, lg.grad, {.input_grad = false});
      optim::nesterov_step<float>(params, g.params, mom, lr, cfg.weight_decay);
      optim::ema_update<float>(ema, params);
    }
    r.curve.push_back({epoch, loss_sum / static_cast<double>(n), lr,
                       static_cast<double>(correct) / static_cast<double>(n)});
  }
  r.model.ema = std::move(ema.shadow);
  return r;
}

struct Prediction {
  Tensor<float> probabilities;
  std::vector<int> labels;
};

/// Softmax probabilities and argmax labels for classifier inputs.
inline Prediction predict(const NetworkStage& model, const Tensor<float>& inputs) {
  auto logits = nn::infer<float>(model.net, model.params, inputs);
  return {nn::softmax(logits), nn::argmax_rows(logits)};
}

/// Fraction of examples whose argmax matches the label. `transform`, when
/// given, maps each raw batch to classifier inputs first.
inline double accuracy(const NetworkStage& model, const data::Dataset& ds,
                       const Preprocess& transform = {}, std::size_t chunk = 256) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t first = 0; first < ds.size(); first += chunk) {
    const std::size_t n = std::min(chunk, ds.size() - first);
    Tensor<float> x = ds.images.slice(first, n);
    if (transform) x = transform(x);
    const auto labels = predict(model, x).labels;
    for (std::size_t k = 0; k < n; ++k) correct += labels[k] == ds.labels[first + k];
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Accuracy of any raw-input model.
inline double accuracy(const ForwardModel& model, const data::Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  const auto labels = predict_labels(model, ds.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) correct += labels[i] == ds.labels[i];
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Undefended pipeline: normalise then classify.
inline PipelineModel undefended_model(const transforms::NormalizationStats& stats,
                                      const ClassifierParams& cls) {
  return PipelineModel(stats, {cls.stage()});
}

/// Preprocessing used to train a classifier behind `transform`.
inline Preprocess make_preprocess(const transforms::NormalizationStats& stats,
                                  const transforms::TransformSpec& transform,
                                  std::size_t workers = default_workers()) {
  return [stats, transform, workers](const Tensor<float>& raw) {
    return transforms::transform_batch(transform, transforms::apply_normalization(raw, stats), workers);
  };
}

}  // namespace linac::classifier
