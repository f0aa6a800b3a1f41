#pragma once

// Classification pipelines over raw [0, 1] images, as seen by attacks.
//
// ForwardModel answers logit queries only. DifferentiableModel also returns
// gradients w.r.t. its raw input. Both count their calls so tests can check
// query budgets and that gradient-free attacks never ask for gradients.

#include <atomic>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "linac/nn.hpp"
#include "linac/parallel.hpp"
#include "linac/tensor.hpp"
#include "linac/transforms.hpp"

namespace linac {

/// Maps logits [batch, classes] to dLoss/dlogits of the same shape.
using LogitGradFn = std::function<Tensor<float>(const Tensor<float>& logits)>;

class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  /// Logits [batch, classes] for raw images [batch, rows, cols, C].
  Tensor<float> logits(const Tensor<float>& raw) const {
    forward_calls_ += raw.dim(0);
    return compute_logits(raw);
  }

  virtual std::size_t num_classes() const = 0;

  /// Per-example forward evaluations so far.
  std::size_t forward_calls() const { return forward_calls_; }
  std::size_t backward_calls() const { return backward_calls_; }

 protected:
  virtual Tensor<float> compute_logits(const Tensor<float>& raw) const = 0;

  mutable std::atomic<std::size_t> forward_calls_{0};
  mutable std::atomic<std::size_t> backward_calls_{0};
};

struct LogitsAndGradient {
  Tensor<float> logits;
  Tensor<float> input_grad;
};

class DifferentiableModel : public ForwardModel {
 public:
  /// One forward and one backward pass: logits and d(loss)/d(raw input),
  /// where loss's logit gradient is given by `dlogits`.
  LogitsAndGradient gradient(const Tensor<float>& raw, const LogitGradFn& dlogits) const {
    forward_calls_ += raw.dim(0);
    backward_calls_ += raw.dim(0);
    return compute_gradient(raw, dlogits);
  }

 protected:
  virtual LogitsAndGradient compute_gradient(const Tensor<float>& raw,
                                             const LogitGradFn& dlogits) const = 0;
};

/// A network together with its (frozen) parameters.
struct NetworkStage {
  nn::Network net;
  std::vector<float> params;
};

/// normalise -> stage_0 -> stage_1 -> ... ; fully differentiable.
class PipelineModel : public DifferentiableModel {
 public:
  PipelineModel(transforms::NormalizationStats stats, std::vector<NetworkStage> stages)
      : stats_(std::move(stats)), stages_(std::move(stages)) {}

  std::size_t num_classes() const override { return stages_.back().net.output_dims().at(0); }
  const std::vector<NetworkStage>& stages() const { return stages_; }
  const transforms::NormalizationStats& stats() const { return stats_; }

 protected:
  Tensor<float> compute_logits(const Tensor<float>& raw) const override {
    Tensor<float> x = transforms::apply_normalization(raw, stats_);
    for (const auto& st : stages_) x = nn::infer<float>(st.net, st.params, x);
    return x;
  }

  LogitsAndGradient compute_gradient(const Tensor<float>& raw,
                                     const LogitGradFn& dlogits) const override {
    std::vector<nn::ForwardCache<float>> caches;
    Tensor<float> x = transforms::apply_normalization(raw, stats_);
    for (const auto& st : stages_) {
      auto f = nn::forward<float>(st.net, st.params, x);
      caches.push_back(std::move(f.cache));
      x = std::move(f.output);
    }
    LogitsAndGradient r{x, dlogits(x)};
    for (std::size_t i = stages_.size(); i-- > 0;)
      r.input_grad = nn::backward<float>(stages_[i].net, stages_[i].params, caches[i], r.input_grad,
                                         {.input_grad = true, .param_grads = false})
                         .input;
    transforms::normalization_vjp(r.input_grad, stats_);
    return r;
  }

 private:
  transforms::NormalizationStats stats_;
  std::vector<NetworkStage> stages_;
};

/// normalise -> keyed transform (per image) -> classifier; forward only.
class TransformedModel : public ForwardModel {
 public:
  TransformedModel(transforms::NormalizationStats stats, transforms::TransformSpec transform,
                   NetworkStage classifier, std::size_t workers = default_workers())
      : stats_(std::move(stats)),
        transform_(std::move(transform)),
        classifier_(std::move(classifier)),
        workers_(workers) {}

  std::size_t num_classes() const override { return classifier_.net.output_dims().at(0); }
  const transforms::TransformSpec& transform() const { return transform_; }
  const NetworkStage& classifier() const { return classifier_; }
  const transforms::NormalizationStats& stats() const { return stats_; }

  /// Normalised and transformed classifier inputs.
  Tensor<float> preprocess(const Tensor<float>& raw) const {
    return transforms::transform_batch(transform_, transforms::apply_normalization(raw, stats_), workers_);
  }

 protected:
  Tensor<float> compute_logits(const Tensor<float>& raw) const override {
    return nn::infer<float>(classifier_.net, classifier_.params, preprocess(raw));
  }

 private:
  transforms::NormalizationStats stats_;
  transforms::TransformSpec transform_;
  NetworkStage classifier_;
  std::size_t workers_;
};

/// Backward-pass differentiable approximation: the forward pass runs the
/// exact transform and classifier; the backward pass takes the classifier's
/// gradient at the transformed input and pulls it back through a surrogate
/// (the identity unless given).
class BpdaModel : public DifferentiableModel {
 public:
  /// (normalised image batch, gradient at transformed input) -> gradient at normalised input
  using SurrogateVjp = std::function<Tensor<float>(const Tensor<float>&, const Tensor<float>&)>;

  explicit BpdaModel(const TransformedModel& exact, SurrogateVjp surrogate = {})
      : exact_(exact), surrogate_(std::move(surrogate)) {}

  std::size_t num_classes() const override { return exact_.num_classes(); }

 protected:
  Tensor<float> compute_logits(const Tensor<float>& raw) const override {
    return exact_.logits(raw);
  }

  LogitsAndGradient compute_gradient(const Tensor<float>& raw,
                                     const LogitGradFn& dlogits) const override {
    const auto& cls = exact_.classifier();
    const Tensor<float> normalized = transforms::apply_normalization(raw, exact_.stats());
    const Tensor<float> transformed = transforms::transform_batch(exact_.transform(), normalized);
    auto f = nn::forward<float>(cls.net, cls.params, transformed);
    LogitsAndGradient r{f.output, dlogits(f.output)};
    r.input_grad = nn::backward<float>(cls.net, cls.params, f.cache, r.input_grad,
                                       {.input_grad = true, .param_grads = false})
                       .input;
    if (surrogate_) r.input_grad = surrogate_(normalized, r.input_grad);
    if (r.input_grad.dims() != raw.dims())
      throw std::invalid_argument("BPDA surrogate gradient does not match input dims");
    transforms::normalization_vjp(r.input_grad, exact_.stats());
    return r;
  }

 private:
  const TransformedModel& exact_;
  SurrogateVjp surrogate_;
};

/// Forward-only view of a differentiable model (hides its gradient).
class ForwardOnly : public ForwardModel {
 public:
  explicit ForwardOnly(const ForwardModel& inner) : inner_(inner) {}
  std::size_t num_classes() const override { return inner_.num_classes(); }

 protected:
  Tensor<float> compute_logits(const Tensor<float>& raw) const override { return inner_.logits(raw); }

 private:
  const ForwardModel& inner_;
};

/// Argmax labels of a model over raw images, evaluated in chunks.
inline std::vector<int> predict_labels(const ForwardModel& model, const Tensor<float>& raw,
                                       std::size_t chunk = 256) {
  std::vector<int> out;
  out.reserve(raw.dim(0));
  for (std::size_t first = 0; first < raw.dim(0); first += chunk) {
    const std::size_t n = std::min(chunk, raw.dim(0) - first);
    auto labels = nn::argmax_rows(model.logits(raw.slice(first, n)));
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

}  // namespace linac
