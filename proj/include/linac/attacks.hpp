#pragma once

// Norm-bounded evasion attacks on raw-image classification pipelines.
//
// All attacks work on batches [B, rows, cols, C] with pixels in [0, 1] and
// treat examples independently. Randomness comes from the stream passed
// in; restart r uses stream.fork(r).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "linac/classifier.hpp"
#include "linac/dataset.hpp"
#include "linac/model.hpp"
#include "linac/nn.hpp"
#include "linac/optim.hpp"
#include "linac/rng.hpp"
#include "linac/tensor.hpp"
#include "linac/transforms.hpp"

namespace linac::attacks {

enum class Norm { kLinf, kL2 };

inline std::string to_string(Norm n) { return n == Norm::kLinf ? "linf" : "l2"; }
inline Norm norm_from_string(const std::string& s) {
  if (s == "linf") return Norm::kLinf;
  if (s == "l2") return Norm::kL2;
  throw std::invalid_argument("unknown norm '" + s + "' (expected linf or l2)");
}

/// Perturbation radius in raw pixel units.
struct PerturbationBudget {
  Norm norm = Norm::kLinf;
  double epsilon = 8.0 / 255.0;

  static PerturbationBudget linf(double eps = 8.0 / 255.0) { return {Norm::kLinf, eps}; }
  static PerturbationBudget l2(double eps = 0.5) { return {Norm::kL2, eps}; }

  void validate() const {
    if (!(epsilon > 0)) throw std::invalid_argument("perturbation epsilon must be > 0");
  }
};

enum class AttackKind { kPgd, kMultiTargetedPgd, kSquare };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kMultiTargetedPgd: return "mt-pgd";
    case AttackKind::kSquare: return "square";
  }
  return "pgd";
}
inline AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "pgd") return AttackKind::kPgd;
  if (s == "mt-pgd" || s == "mt") return AttackKind::kMultiTargetedPgd;
  if (s == "square") return AttackKind::kSquare;
  throw std::invalid_argument("unknown attack kind '" + s + "'");
}

struct AttackConfig {
  AttackKind kind = AttackKind::kPgd;
  std::size_t steps = 100;
  std::size_t restarts = 10;
  double step_size = 0;        // 0 selects epsilon / 4
  std::size_t queries = 10000;  // square: evaluations per restart
  double p_init = 0.3;          // square: initial fraction of pixels per window
  bool record_history = false;  // square: keep accepted losses per example

  void validate() const {
    if (steps < 1 || restarts < 1) throw std::invalid_argument("attack steps and restarts must be >= 1");
    if (kind == AttackKind::kSquare && queries < 1) throw std::invalid_argument("square needs queries >= 1");
  }

  static AttackConfig pgd(std::size_t steps = 100, std::size_t restarts = 10) {
    return {AttackKind::kPgd, steps, restarts};
  }
  static AttackConfig mt_pgd(std::size_t steps = 200, std::size_t restarts = 20) {
    return {AttackKind::kMultiTargetedPgd, steps, restarts};
  }
  static AttackConfig square(std::size_t queries = 10000, std::size_t restarts = 10) {
    AttackConfig c{AttackKind::kSquare, 1, restarts};
    c.queries = queries;
    return c;
  }
};

/// Result of attacking one batch.
struct AttackOutcome {
  Tensor<float> adversarial;
  std::vector<char> success;         // attacked model misclassifies the adversarial input
  std::vector<double> best_loss;     // attack objective at the kept candidate
  std::vector<std::size_t> queries;  // forward evaluations spent per example
  std::vector<std::vector<double>> history;

  /// Examples the attacked model still classifies correctly.
  std::vector<bool> robust_correct() const {
    std::vector<bool> r(success.size());
    for (std::size_t i = 0; i < success.size(); ++i) r[i] = !success[i];
    return r;
  }
};

/// In-place projection of one example's perturbation onto the norm ball,
/// then onto the pixel box [0, 1] around x.
inline void project(std::span<float> delta, std::span<const float> x, const PerturbationBudget& b) {
  if (b.norm == Norm::kLinf) {
    const auto eps = static_cast<float>(b.epsilon);
    for (float& d : delta) d = std::clamp(d, -eps, eps);
  } else {
    double ss = 0;
    for (float d : delta) ss += static_cast<double>(d) * d;
    const double n = std::sqrt(ss);
    if (n > b.epsilon) {
      const auto scale = static_cast<float>(b.epsilon / n);
      for (float& d : delta) d *= scale;
    }
  }
  if (!x.empty())
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = std::clamp(x[i] + delta[i], 0.0f, 1.0f) - x[i];
}

/// Whether x_adv lies in the box and within budget of x, evaluated in double.
inline bool within_budget(std::span<const float> x, std::span<const float> x_adv,
                          const PerturbationBudget& b) {
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x_adv[i] >= 0.0f && x_adv[i] <= 1.0f)) return false;
    const double d = std::abs(static_cast<double>(x_adv[i]) - static_cast<double>(x[i]));
    if (b.norm == Norm::kLinf) {
      if (d > b.epsilon) return false;
    } else {
      acc += d * d;
    }
  }
  return b.norm == Norm::kLinf || std::sqrt(acc) <= b.epsilon;
}

/// Adversarial image x + delta clamped to the box, with float rounding
/// pulled back so that within_budget holds exactly.
inline void materialize(std::span<const float> x, std::span<const float> delta, std::span<float> out,
                        const PerturbationBudget& b) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i] + delta[i], 0.0f, 1.0f);
  if (b.norm == Norm::kLinf) {
    for (std::size_t i = 0; i < x.size(); ++i)
      while (std::abs(static_cast<double>(out[i]) - x[i]) > b.epsilon) out[i] = std::nextafter(out[i], x[i]);
    return;
  }
  for (int iter = 0; iter < 64 && !within_budget(x, out, b); ++iter) {
    double ss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(out[i]) - x[i];
      ss += d * d;
    }
    const double scale = b.epsilon / std::sqrt(ss) * (1.0 - 1e-6 * (iter + 1));
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = std::clamp(static_cast<float>(x[i] + (static_cast<double>(out[i]) - x[i]) * scale), 0.0f, 1.0f);
  }
}

namespace detail {

struct Best {
  bool success = false;
  double loss = -std::numeric_limits<double>::infinity();
  bool set = false;

  bool improved_by(bool s, double l) const {
    if (!set) return true;
    if (s != success) return s;
    return l > loss;
  }
};

// exp(z_c - max z) for every c != label, and for the label itself. Keeping
// the two apart avoids the cancellation in 1 - p_label on confident rows.
inline double other_class_mass(const float* z, std::size_t classes, int label, double& own) {
  const double zmax = *std::max_element(z, z + classes);
  double others = 0;
  for (std::size_t c = 0; c < classes; ++c)
    if (static_cast<int>(c) != label) others += std::exp(static_cast<double>(z[c]) - zmax);
  own = std::exp(static_cast<double>(z[label]) - zmax);
  return others;
}

inline double cross_entropy_row(const float* z, std::size_t classes, int label) {
  double own = 0;
  const double others = other_class_mass(z, classes, label, own);
  if (own > 0) return std::log1p(others / own);
  const double zmax = *std::max_element(z, z + classes);
  return zmax + std::log(others) - z[label];
}

inline int argmax_row(const float* z, std::size_t classes) {
  return static_cast<int>(std::max_element(z, z + classes) - z);
}

/// z_y - max_{c != y} z_c; negative means misclassified.
inline double margin_row(const float* z, std::size_t classes, int label) {
  double other = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < classes; ++c)
    if (static_cast<int>(c) != label) other = std::max(other, static_cast<double>(z[c]));
  return z[label] - other;
}

inline void check_inputs(const Tensor<float>& x, std::span<const int> y, const PerturbationBudget& b,
                         const AttackConfig& cfg) {
  b.validate();
  cfg.validate();
  if (x.rank() < 2 || x.dim(0) != y.size()) throw std::invalid_argument("attack batch and labels differ");
}

inline AttackOutcome empty_outcome(const Tensor<float>& x) {
  const std::size_t n = x.dim(0);
  return {x, std::vector<char>(n, 0), std::vector<double>(n, -std::numeric_limits<double>::infinity()),
          std::vector<std::size_t>(n, 0), {}};
}

// Uniform start inside the ball.
inline void random_start(std::span<float> delta, const PerturbationBudget& b, RngStream& s) {
  if (b.norm == Norm::kLinf) {
    for (float& d : delta) d = static_cast<float>((2.0 * s.next_uniform() - 1.0) * b.epsilon);
    return;
  }
  double ss = 0;
  std::vector<double> g(delta.size());
  for (double& v : g) {
    v = s.next_gaussian();
    ss += v * v;
  }
  const double radius = b.epsilon * std::pow(s.next_uniform(), 1.0 / static_cast<double>(delta.size()));
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = static_cast<float>(g[i] / std::sqrt(ss) * radius);
}

// One gradient-ascent step on one example's perturbation.
inline void ascend(std::span<float> delta, std::span<const float> grad, const PerturbationBudget& b,
                   double step) {
  if (b.norm == Norm::kLinf) {
    const auto a = static_cast<float>(step);
    for (std::size_t i = 0; i < delta.size(); ++i)
      delta[i] += grad[i] > 0 ? a : (grad[i] < 0 ? -a : 0.0f);
    return;
  }
  double ss = 0;
  for (float g : grad) ss += static_cast<double>(g) * g;
  if (ss <= 0) return;
  const auto scale = static_cast<float>(step / std::sqrt(ss));
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += scale * grad[i];
}

// Runs projected gradient ascent. `target_of(example, run)` returns -1 for
// untargeted cross-entropy ascent or the class whose margin over the true
// class is maximised.
template <typename TargetFn>
AttackOutcome projected_ascent(const DifferentiableModel& model, const Tensor<float>& x,
                               std::span<const int> y, const PerturbationBudget& b, const AttackConfig& cfg,
                               RngStream s, std::size_t runs, TargetFn target_of) {
  check_inputs(x, y, b, cfg);
  const std::size_t n = x.dim(0), item = x.item_size(), classes = model.num_classes();
  const double step = cfg.step_size > 0 ? cfg.step_size : b.epsilon / 4.0;
  AttackOutcome out = empty_outcome(x);
  std::vector<Best> best(n);
  Tensor<float> delta(x.dims()), cur(x.dims());

  auto consider = [&](const Tensor<float>& logits) {
    for (std::size_t i = 0; i < n; ++i) {
      const float* z = logits.data() + i * classes;
      const bool succ = argmax_row(z, classes) != y[i];
      const double loss = cross_entropy_row(z, classes, y[i]);
      ++out.queries[i];
      if (best[i].improved_by(succ, loss)) {
        best[i] = {succ, loss, true};
        std::copy_n(cur.data() + i * item, item, out.adversarial.data() + i * item);
      }
    }
  };

  for (std::size_t run = 0; run < runs; ++run) {
    RngStream rs = s.fork(run);
    std::vector<int> targets(n);
    for (std::size_t i = 0; i < n; ++i) targets[i] = target_of(i, run);
    for (std::size_t i = 0; i < n; ++i) {
      random_start(delta.item(i), b, rs);
      project(delta.item(i), x.item(i), b);
    }
    const LogitGradFn dlogits = [&](const Tensor<float>& logits) {
      Tensor<float> g(logits.dims());
      for (std::size_t i = 0; i < n; ++i) {
        const float* z = logits.data() + i * classes;
        float* gi = g.data() + i * classes;
        if (targets[i] < 0) {
          const double zmax = *std::max_element(z, z + classes);
          double own = 0;
          const double others = other_class_mass(z, classes, y[i], own);
          const double sum = own + others;
          for (std::size_t c = 0; c < classes; ++c)
            gi[c] = static_cast<float>(std::exp(static_cast<double>(z[c]) - zmax) / sum);
          gi[y[i]] = static_cast<float>(-others / sum);
        } else {
          gi[targets[i]] = 1.0f;
          gi[y[i]] = -1.0f;
        }
      }
      return g;
    };
    try {
      for (std::size_t t = 0; t <= cfg.steps; ++t) {
        for (std::size_t i = 0; i < n; ++i) materialize(x.item(i), delta.item(i), cur.item(i), b);
        if (t == cfg.steps) {
          consider(model.logits(cur));
          break;
        }
        auto r = model.gradient(cur, dlogits);
        consider(r.logits);
        for (std::size_t i = 0; i < n; ++i) {
          ascend(delta.item(i), r.input_grad.item(i), b, step);
          project(delta.item(i), x.item(i), b);
        }
      }
    } catch (const NonFiniteError& e) {
      std::cerr << "attack: run " << run << " skipped: " << e.what() << '\n';
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.success[i] = best[i].success;
    out.best_loss[i] = best[i].loss;
  }
  return out;
}

}  // namespace detail

/// Untargeted PGD on cross-entropy: sign steps (Linf) or normalised
/// gradient steps (L2) from a random start, projected every step. Keeps,
/// per example, the successful iterate with the highest loss, or the
/// highest-loss iterate if none succeeds.
inline AttackOutcome pgd(const DifferentiableModel& model, const Tensor<float>& x, std::span<const int> y,
                         const PerturbationBudget& budget, const AttackConfig& cfg, RngStream s) {
  return detail::projected_ascent(model, x, y, budget, cfg, s, cfg.restarts,
                                  [](std::size_t, std::size_t) { return -1; });
}

/// Targeted margin ascent toward every wrong class. Runs are assigned to
/// targets round-robin; at least one run per target.
inline AttackOutcome mt_pgd(const DifferentiableModel& model, const Tensor<float>& x, std::span<const int> y,
                            const PerturbationBudget& budget, const AttackConfig& cfg, RngStream s) {
  const std::size_t classes = model.num_classes();
  if (classes < 2) throw std::invalid_argument("multi-targeted PGD needs at least two classes");
  const std::size_t others = classes - 1;
  const std::size_t runs = std::max(cfg.restarts, others);
  return detail::projected_ascent(model, x, y, budget, cfg, s, runs, [&](std::size_t i, std::size_t run) {
    return static_cast<int>((static_cast<std::size_t>(y[i]) + 1 + run % others) % classes);
  });
}

namespace detail {

inline double square_fraction(double p_init, std::size_t it, std::size_t total) {
  const auto i = static_cast<std::size_t>(static_cast<double>(it) / static_cast<double>(total) * 10000.0);
  static constexpr std::size_t kBounds[] = {10, 50, 200, 500, 1000, 2000, 4000, 6000, 8000};
  double p = p_init;
  for (std::size_t bnd : kBounds)
    if (i > bnd) p /= 2.0;
  return p;
}

}  // namespace detail

/// Gradient-free random search over square windows. Linf starts from
/// vertical +/-eps stripes and resamples one window per step to +/-eps per
/// channel; L2 rescales a signed square bump and renormalises to radius eps.
/// A candidate replaces the current perturbation only if the margin loss
/// improves. Each example stops once misclassified; `queries` bounds the
/// evaluations per restart.
inline AttackOutcome square_attack(const ForwardModel& model, const Tensor<float>& x, std::span<const int> y,
                                   const PerturbationBudget& b, const AttackConfig& cfg, RngStream s) {
  detail::check_inputs(x, y, b, cfg);
  if (x.rank() != 4) throw std::invalid_argument("square attack expects [B, rows, cols, C]");
  const std::size_t n = x.dim(0), rows = x.dim(1), cols = x.dim(2), ch = x.dim(3);
  const std::size_t item = x.item_size(), classes = model.num_classes();
  AttackOutcome out = detail::empty_outcome(x);
  if (cfg.record_history) out.history.assign(n, {});
  std::vector<detail::Best> best(n);
  const auto eps = static_cast<float>(b.epsilon);

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i)
      if (!best[i].success) active.push_back(i);
    if (active.empty()) break;
    RngStream rs = s.fork(restart);

    const std::size_t m = active.size();
    Tensor<float> delta({m, rows, cols, ch}), cur({m, rows, cols, ch});
    std::vector<double> loss(m);
    std::vector<char> done(m, 0);
    for (std::size_t k = 0; k < m; ++k) {
      auto d = delta.item(k);
      const float mag = b.norm == Norm::kLinf ? eps : static_cast<float>(b.epsilon / std::sqrt(static_cast<double>(item)));
      for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t q = 0; q < ch; ++q) {
          const float v = rs.next_below(2) ? mag : -mag;
          for (std::size_t r = 0; r < rows; ++r) d[(r * cols + c) * ch + q] = v;
        }
      project(d, x.item(active[k]), b);
      materialize(x.item(active[k]), d, cur.item(k), b);
    }

    auto score = [&](const Tensor<float>& logits, std::size_t k) {
      const int label = y[active[k]];
      return -detail::margin_row(logits.data() + k * classes, classes, label);
    };
    auto record = [&](std::size_t k, double l, const Tensor<float>& img) {
      const std::size_t i = active[k];
      const bool succ = l > 0;
      if (cfg.record_history) out.history[i].push_back(l);
      if (best[i].improved_by(succ, l)) {
        best[i] = {succ, l, true};
        std::copy_n(img.data() + k * item, item, out.adversarial.data() + i * item);
      }
      if (succ) done[k] = 1;
    };

    {
      const Tensor<float> logits = model.logits(cur);
      for (std::size_t k = 0; k < m; ++k) {
        ++out.queries[active[k]];
        loss[k] = score(logits, k);
        record(k, loss[k], cur);
      }
    }

    Tensor<float> cand_delta({m, rows, cols, ch});
    for (std::size_t it = 1; it < cfg.queries; ++it) {
      std::vector<std::size_t> live;
      for (std::size_t k = 0; k < m; ++k)
        if (!done[k]) live.push_back(k);
      if (live.empty()) break;
      const double p = detail::square_fraction(cfg.p_init, it, cfg.queries);
      auto side = static_cast<std::size_t>(std::llround(std::sqrt(p * static_cast<double>(rows * cols))));
      side = std::clamp<std::size_t>(side, 1, std::min(rows, cols) > 1 ? std::min(rows, cols) - 1 : 1);

      Tensor<float> batch({live.size(), rows, cols, ch});
      for (std::size_t li = 0; li < live.size(); ++li) {
        const std::size_t k = live[li];
        auto cd = cand_delta.item(k);
        std::copy_n(delta.item(k).data(), item, cd.data());
        const auto top = static_cast<std::size_t>(rs.next_below(rows - side + 1));
        const auto left = static_cast<std::size_t>(rs.next_below(cols - side + 1));
        if (b.norm == Norm::kLinf) {
          // Resample signs until the window actually changes.
          for (int attempt = 0; attempt < 8; ++attempt) {
            bool changed = false;
            for (std::size_t q = 0; q < ch; ++q) {
              const float v = rs.next_below(2) ? eps : -eps;
              for (std::size_t r = top; r < top + side; ++r)
                for (std::size_t c = left; c < left + side; ++c) {
                  float& slot = cd[(r * cols + c) * ch + q];
                  changed |= slot != v;
                  slot = v;
                }
            }
            if (changed) break;
          }
        } else {
          double window = 0;
          for (std::size_t r = top; r < top + side; ++r)
            for (std::size_t c = left; c < left + side; ++c)
              for (std::size_t q = 0; q < ch; ++q) window += static_cast<double>(cd[(r * cols + c) * ch + q]) * cd[(r * cols + c) * ch + q];
          const double mass = window + b.epsilon * b.epsilon * p;
          const double h = std::sqrt(mass / static_cast<double>(side * side * ch));
          for (std::size_t q = 0; q < ch; ++q) {
            const float v = static_cast<float>(rs.next_below(2) ? h : -h);
            for (std::size_t r = top; r < top + side; ++r)
              for (std::size_t c = left; c < left + side; ++c) cd[(r * cols + c) * ch + q] = v;
          }
          double ss = 0;
          for (float v : cd) ss += static_cast<double>(v) * v;
          if (ss > 0) {
            const auto scale = static_cast<float>(b.epsilon / std::sqrt(ss));
            for (float& v : cd) v *= scale;
          }
        }
        project(cd, x.item(active[k]), b);
        materialize(x.item(active[k]), cd, batch.item(li), b);
      }
      const Tensor<float> logits = model.logits(batch);
      for (std::size_t li = 0; li < live.size(); ++li) {
        const std::size_t k = live[li];
        ++out.queries[active[k]];
        const int label = y[active[k]];
        const double l = -detail::margin_row(logits.data() + li * classes, classes, label);
        if (l > loss[k]) {
          loss[k] = l;
          std::copy_n(cand_delta.item(k).data(), item, delta.item(k).data());
          std::copy_n(batch.item(li).data(), item, cur.item(k).data());
          record(k, l, cur);
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.success[i] = best[i].success;
    out.best_loss[i] = best[i].loss;
  }
  return out;
}

/// Dispatches on cfg.kind. Gradient attacks require a DifferentiableModel.
inline AttackOutcome run_attack(const ForwardModel& model, const Tensor<float>& x, std::span<const int> y,
                                const PerturbationBudget& budget, const AttackConfig& cfg, RngStream s) {
  if (cfg.kind == AttackKind::kSquare) return square_attack(model, x, y, budget, cfg, s);
  const auto* diff = dynamic_cast<const DifferentiableModel*>(&model);
  if (!diff) throw std::invalid_argument(to_string(cfg.kind) + " needs a differentiable model");
  return cfg.kind == AttackKind::kPgd ? pgd(*diff, x, y, budget, cfg, s) : mt_pgd(*diff, x, y, budget, cfg, s);
}

/// Correctness of `target` on each adversarial input.
inline std::vector<bool> evaluate_on(const ForwardModel& target, const Tensor<float>& adversarial,
                                     std::span<const int> y) {
  const auto pred = predict_labels(target, adversarial);
  std::vector<bool> ok(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) ok[i] = pred[i] == y[i];
  return ok;
}

/// PGD or MT-PGD where the forward pass runs the exact defence and the
/// backward pass goes through `surrogate` (identity when empty).
inline AttackOutcome bpda_attack(const TransformedModel& defence, const BpdaModel::SurrogateVjp& surrogate,
                                 const Tensor<float>& x, std::span<const int> y,
                                 const PerturbationBudget& budget, const AttackConfig& cfg, RngStream s) {
  const BpdaModel model(defence, surrogate);
  return run_attack(model, x, y, budget, cfg, s);
}

// ---------------------------------------------------------------------------
// Parametric bypass approximation

enum class BypassArch {
  kConv3x3,      // 3x3 convolution with bias, raw channels -> transform channels
  kBlockLinear,  // bias-free per-block linear map, identity initialised
};

inline std::string to_string(BypassArch a) { return a == BypassArch::kConv3x3 ? "conv3x3" : "block-linear"; }

struct PbaConfig {
  BypassArch arch = BypassArch::kConv3x3;
  std::size_t out_channels = 256;
  std::size_t block = 4;
  std::size_t epochs = 100;
  std::size_t batch = 128;
  double lr = 0.1;
  std::vector<std::size_t> lr_drops{65, 80, 90, 95};
  double lr_drop_factor = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  /// Conv bypass for LINAC: lr 0.1, drops at 65/80/90/95% of epochs.
  static PbaConfig linac(std::size_t channels, std::size_t epochs = 100) {
    PbaConfig c;
    c.arch = BypassArch::kConv3x3;
    c.out_channels = channels;
    c.epochs = epochs;
    c.lr = 0.1;
    c.lr_drops = classifier::TrainConfig::proportional_drops(epochs);
    return c;
  }

  /// Identity-initialised block-linear bypass: lr 0.001, drops at
  /// 275/285/290/295 of 300 epochs, scaled to `epochs`.
  static PbaConfig block_shuffle(std::size_t block = 4, std::size_t epochs = 300) {
    PbaConfig c;
    c.arch = BypassArch::kBlockLinear;
    c.block = block;
    c.epochs = epochs;
    c.lr = 0.001;
    c.lr_drops.clear();
    for (double e : {275.0, 285.0, 290.0, 295.0})
      c.lr_drops.push_back(static_cast<std::size_t>(std::llround(e / 300.0 * static_cast<double>(epochs))));
    return c;
  }
};

struct BypassParams {
  BypassArch arch = BypassArch::kConv3x3;
  NetworkStage stage;
  std::vector<double> epoch_loss;
};

inline nn::Network bypass_network(const PbaConfig& cfg, std::size_t rows, std::size_t cols, std::size_t channels) {
  if (cfg.arch == BypassArch::kConv3x3)
    return nn::Network({nn::LayerSpec::conv2d(channels, cfg.out_channels, 3, 1, true)}, {rows, cols, channels});
  return nn::Network({nn::LayerSpec::block_linear(cfg.block, channels)}, {rows, cols, channels});
}

/// Fits h_psi so that the frozen classifier applied to h_psi(normalise(x))
/// minimises cross-entropy on `train`. Only psi is updated.
inline BypassParams train_pba(const NetworkStage& defended, const transforms::NormalizationStats& stats,
                              const data::Dataset& train, const PbaConfig& cfg) {
  train.validate();
  if (train.size() == 0) throw std::invalid_argument("PBA training set is empty");
  const std::size_t rows = train.images.dim(1), cols = train.images.dim(2), ch = train.images.dim(3);
  BypassParams bp;
  bp.arch = cfg.arch;
  bp.stage.net = bypass_network(cfg, rows, cols, ch);
  if (bp.stage.net.output_dims() != defended.net.input_dims())
    throw std::invalid_argument("bypass output " + dims_string(bp.stage.net.output_dims()) +
                                " does not match classifier input " + dims_string(defended.net.input_dims()));
  RngStream s = derive_stream(PrivateKey{static_cast<std::int64_t>(cfg.seed)}, StreamLabel::attack(7));
  RngStream init = s.fork(0);
  bp.stage.params = nn::init_params<float>(bp.stage.net, init);
  optim::MomentumState<float> mom(bp.stage.params.size(), cfg.momentum, false);

  const Tensor<float> inputs = transforms::apply_normalization(train.images, stats);
  const std::size_t n = train.size(), item = inputs.item_size(), classes = defended.net.output_dims()[0];
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream os = s.fork(100 + epoch);
    const auto order = permutation(os, n);
    const double lr = optim::step_lr(epoch, cfg.lr, cfg.lr_drops, cfg.lr_drop_factor);
    double loss_sum = 0;
    for (std::size_t first = 0; first < n; first += cfg.batch) {
      const std::size_t count = std::min(cfg.batch, n - first);
      Tensor<float> x({count, rows, cols, ch});
      std::vector<int> labels(count);
      for (std::size_t k = 0; k < count; ++k) {
        std::copy_n(inputs.data() + order[first + k] * item, item, x.data() + k * item);
        labels[k] = train.labels[order[first + k]];
      }
      auto h = nn::forward<float>(bp.stage.net, bp.stage.params, x);
      auto f = nn::forward<float>(defended.net, defended.params, h.output);
      auto lg = nn::softmax_cross_entropy<float>(f.output, std::span<const int>(labels));
      if (!std::isfinite(lg.loss)) throw NonFiniteError("PBA training diverged at epoch " + std::to_string(epoch));
      loss_sum += static_cast<double>(lg.loss) * static_cast<double>(count);
      auto gf = nn::backward<float>(defended.net, defended.params, f.cache, lg.grad,
                                    {.input_grad = true, .param_grads = false});
      auto gh = nn::backward<float>(bp.stage.net, bp.stage.params, h.cache, gf.input,
                                    {.input_grad = false, .param_grads = true});
      optim::nesterov_step<float>(bp.stage.params, gh.params, mom, lr, 0.0);
    }
    bp.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    (void)classes;
  }
  return bp;
}

/// The attackable bypass classifier f(h_psi(normalise(x))).
inline PipelineModel bypass_model(const BypassParams& bp, const NetworkStage& defended,
                                  const transforms::NormalizationStats& stats) {
  return PipelineModel(stats, {bp.stage, defended});
}

/// Runs `cfg` against the bypass classifier. The resulting perturbations are
/// meant to be scored against the true defended pipeline with evaluate_on.
inline AttackOutcome pba_attack(const BypassParams& bp, const NetworkStage& defended,
                                const transforms::NormalizationStats& stats, const Tensor<float>& x,
                                std::span<const int> y, const PerturbationBudget& budget, const AttackConfig& cfg,
                                RngStream s) {
  const PipelineModel model = bypass_model(bp, defended, stats);
  return run_attack(model, x, y, budget, cfg, s);
}

// ---------------------------------------------------------------------------
// Key search and transfer

struct KeyAccuracy {
  PrivateKey key;
  double accuracy = 0;
  std::size_t index = 0;  // position in the candidate list
};

/// Accuracy of the defended classifier when inputs are transformed with
/// each candidate key instead of the private one; sorted by descending
/// accuracy (ties keep candidate order).
inline std::vector<KeyAccuracy> brute_force_keys(const NetworkStage& defended,
                                                 const transforms::NormalizationStats& stats,
                                                 const transforms::TransformSpec& transform,
                                                 std::span<const PrivateKey> candidates,
                                                 const data::Dataset& batch,
                                                 std::size_t workers = default_workers()) {
  if (candidates.empty()) throw std::invalid_argument("brute_force_keys needs at least one key");
  const Tensor<float> normalized = transforms::apply_normalization(batch.images, stats);
  std::vector<KeyAccuracy> table(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto inputs = transforms::transform_batch(transform.with_key(candidates[k]), normalized, workers);
    const auto labels = classifier::predict(defended, inputs).labels;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += labels[i] == batch.labels[i];
    table[k] = {candidates[k], static_cast<double>(correct) / static_cast<double>(batch.size()), k};
  }
  std::stable_sort(table.begin(), table.end(),
                   [](const KeyAccuracy& a, const KeyAccuracy& b) { return a.accuracy > b.accuracy; });
  return table;
}

struct NamedAttack {
  std::string name;
  PerturbationBudget budget;
  AttackConfig config;
};

struct SourceModel {
  std::string name;
  const ForwardModel* model = nullptr;
};

/// cells[s][a]: target correctness on adversarial inputs computed on
/// source s with attack a.
struct TransferMatrix {
  std::vector<std::string> sources;
  std::vector<std::string> attacks;
  std::vector<std::vector<std::vector<bool>>> cells;
  std::vector<std::vector<AttackOutcome>> outcomes;
};

inline TransferMatrix transfer_attack(std::span<const SourceModel> sources, const ForwardModel& target,
                                      std::span<const NamedAttack> attacks, const data::Dataset& ds,
                                      RngStream s) {
  TransferMatrix m;
  for (const auto& src : sources) m.sources.push_back(src.name);
  for (const auto& a : attacks) m.attacks.push_back(a.name);
  m.cells.assign(sources.size(), std::vector<std::vector<bool>>(attacks.size()));
  m.outcomes.assign(sources.size(), std::vector<AttackOutcome>(attacks.size()));
  for (std::size_t si = 0; si < sources.size(); ++si) {
    if (!sources[si].model) throw std::invalid_argument("transfer source '" + sources[si].name + "' is null");
    for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
      auto outcome = run_attack(*sources[si].model, ds.images, ds.labels, attacks[ai].budget, attacks[ai].config,
                                s.fork(si * 1000 + ai));
      m.cells[si][ai] = evaluate_on(target, outcome.adversarial, ds.labels);
      m.outcomes[si][ai] = std::move(outcome);
    }
  }
  return m;
}

}  // namespace linac::attacks
