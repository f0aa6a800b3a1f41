#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace linac::optim {

namespace detail {
inline void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}
}  // namespace detail

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::size_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, T(0)), v(n, T(0)) {}
};

/// Bias-corrected Adam update.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& st, double lr) {
  detail::check_sizes(params.size(), grads.size(), "adam_step");
  detail::check_sizes(params.size(), st.m.size(), "adam_step");
  detail::check_sizes(params.size(), st.v.size(), "adam_step");
  ++st.t;
  const T b1 = static_cast<T>(st.beta1), b2 = static_cast<T>(st.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(st.beta1, static_cast<double>(st.t))));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(st.beta2, static_cast<double>(st.t))));
  const T step = static_cast<T>(lr), eps = static_cast<T>(st.eps);
  T* m = st.m.data();
  T* v = st.v.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    params[i] -= step * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
  }
}

template <typename T>
struct MomentumState {
  std::vector<T> velocity;
  double momentum = 0.9;
  bool nesterov = true;

  MomentumState() = default;
  MomentumState(std::size_t n, double m, bool use_nesterov = true)
      : velocity(n, T(0)), momentum(m), nesterov(use_nesterov) {}
};

/// Momentum SGD with coupled weight decay:
///   g' = g + wd*p;  v = m*v + g';  p -= lr*(m*v + g')  (nesterov)
///                                  p -= lr*v           (heavy ball)
template <typename T>
void nesterov_step(std::span<T> params, std::span<const T> grads, MomentumState<T>& st,
                   double lr, double weight_decay) {
  detail::check_sizes(params.size(), grads.size(), "nesterov_step");
  detail::check_sizes(params.size(), st.velocity.size(), "nesterov_step");
  const T m = static_cast<T>(st.momentum), step = static_cast<T>(lr),
          wd = static_cast<T>(weight_decay);
  T* v = st.velocity.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i] + wd * params[i];
    v[i] = m * v[i] + g;
    params[i] -= step * (st.nesterov ? m * v[i] + g : v[i]);
  }
}

/// Cosine decay from `base` at t=0 to alpha*base at t=total.
inline double cosine_lr(std::size_t t, std::size_t total, double base, double alpha) {
  if (total == 0) throw std::invalid_argument("cosine_lr: total must be >= 1");
  if (t > total) t = total;
  const double frac = static_cast<double>(t) / static_cast<double>(total);
  return base * (alpha + (1.0 - alpha) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

/// Piecewise-constant decay: base * factor^(number of drop epochs <= epoch).
inline double step_lr(std::size_t epoch, double base, std::span<const std::size_t> drops,
                      double factor) {
  double lr = base;
  for (std::size_t d : drops)
    if (epoch >= d) lr *= factor;
  return lr;
}

template <typename T>
struct EmaState {
  std::vector<T> shadow;
  double decay = 0.995;

  EmaState() = default;
  EmaState(std::vector<T> initial, double r) : shadow(std::move(initial)), decay(r) {
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("EMA decay must lie in [0, 1)");
  }
};

/// shadow = r*shadow + (1-r)*params
template <typename T>
void ema_update(EmaState<T>& st, std::span<const T> params) {
  detail::check_sizes(params.size(), st.shadow.size(), "ema_update");
  const T r = static_cast<T>(st.decay);
  for (std::size_t i = 0; i < params.size(); ++i)
    st.shadow[i] = r * st.shadow[i] + (T(1) - r) * params[i];
}

}  // namespace linac::optim
