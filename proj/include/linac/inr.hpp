#pragma once

// Implicit neural representations of single images.
//
// An MLP maps positionally encoded pixel coordinates to colours. Its fitted
// parameters encode one image; intermediate activations at every pixel
// form the activation image consumed by defended classifiers.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "linac/nn.hpp"
#include "linac/optim.hpp"
#include "linac/rng.hpp"
#include "linac/tensor.hpp"

namespace linac::inr {

/// L hidden ReLU layers of width H over 4F positional features, 3 linear outputs.
struct InrArch {
  std::size_t layers = 5;
  std::size_t width = 256;
  std::size_t freqs = 5;

  std::size_t input_width() const { return 4 * freqs; }

  void validate() const {
    if (layers < 1 || width < 1 || freqs < 1)
      throw std::invalid_argument("INR architecture needs layers, width and freqs >= 1");
  }

  nn::Network network() const {
    validate();
    std::vector<nn::LayerSpec> specs;
    std::size_t in = input_width();
    for (std::size_t l = 0; l < layers; ++l) {
      specs.push_back(nn::LayerSpec::dense(in, width));
      specs.push_back(nn::LayerSpec::relu());
      in = width;
    }
    specs.push_back(nn::LayerSpec::dense(in, 3));
    return nn::Network(std::move(specs), {input_width()});
  }

  friend bool operator==(const InrArch&, const InrArch&) = default;
};

/// Fitting hyperparameters; the key seeds initialisation and pixel order.
struct FitConfig {
  std::size_t epochs = 10;
  std::size_t batch = 32;
  double lr = 1e-3;
  double alpha = 1e-4;
  PrivateKey key{};

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("fit epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("fit batch must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("fit learning rate must be > 0");
    if (!(alpha > 0 && alpha <= 1)) throw std::invalid_argument("fit alpha must lie in (0, 1]");
  }

  friend bool operator==(const FitConfig&, const FitConfig&) = default;
};

template <typename T = float>
struct InrParams {
  InrArch arch;
  std::vector<T> params;
};

struct TraceEntry {
  std::size_t step = 0;
  double lr = 0;
  double loss = 0;       // mini-batch objective as optimised
  double batch_sse = 0;  // mean per-pixel squared error over the mini-batch
};

template <typename T = float>
struct FitResult {
  InrParams<T> inr;
  std::vector<TraceEntry> trace;
};

/// Normalised coordinate of index i along an axis of `extent` pixels.
inline double grid_coordinate(std::size_t i, std::size_t extent) {
  if (extent <= 1) return 0.0;
  return 2.0 * static_cast<double>(i) / static_cast<double>(extent - 1) - 1.0;
}

/// Coordinates along one axis in [-1, 1].
inline std::vector<double> pixel_grid(std::size_t extent) {
  std::vector<double> out(extent);
  for (std::size_t i = 0; i < extent; ++i) out[i] = grid_coordinate(i, extent);
  return out;
}

/// [sin(2^0 pi d), cos(2^0 pi d), ..., sin(2^(F-1) pi d), cos(2^(F-1) pi d)]
inline std::vector<double> positional_encode(double d, std::size_t freqs) {
  std::vector<double> out;
  out.reserve(2 * freqs);
  double scale = std::numbers::pi;
  for (std::size_t f = 0; f < freqs; ++f, scale *= 2.0) {
    out.push_back(std::sin(scale * d));
    out.push_back(std::cos(scale * d));
  }
  return out;
}

/// Network inputs for every pixel of an rows x cols grid, row-major:
/// [rows*cols, 4F] with the row coordinate's features first.
template <typename T = float>
Tensor<T> encode_grid(std::size_t rows, std::size_t cols, std::size_t freqs) {
  Tensor<T> out({rows * cols, 4 * freqs});
  std::vector<std::vector<double>> row_enc(rows), col_enc(cols);
  for (std::size_t i = 0; i < rows; ++i) row_enc[i] = positional_encode(grid_coordinate(i, rows), freqs);
  for (std::size_t j = 0; j < cols; ++j) col_enc[j] = positional_encode(grid_coordinate(j, cols), freqs);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      T* dst = out.data() + (i * cols + j) * 4 * freqs;
      for (std::size_t f = 0; f < 2 * freqs; ++f) {
        dst[f] = static_cast<T>(row_enc[i][f]);
        dst[2 * freqs + f] = static_cast<T>(col_enc[j][f]);
      }
    }
  }
  return out;
}

/// Parameters every fit for `key` starts from.
template <typename T = float>
std::vector<T> initial_params(const InrArch& arch, PrivateKey key) {
  RngStream s = derive_stream(key, StreamLabel::init());
  return nn::init_params<T>(arch.network(), s);
}

/// Number of optimiser steps a fit performs: floor(I*J/M) * N.
inline std::size_t fit_steps(std::size_t rows, std::size_t cols, const FitConfig& cfg) {
  return (rows * cols / cfg.batch) * cfg.epochs;
}

/// Fits the MLP to an image [rows, cols, 3] with Adam and a cosine schedule.
///
/// Each epoch draws a fresh pixel permutation from the key's
/// shuffle-epoch(n) stream and visits floor(I*J/M) mini-batches of M pixels.
/// The objective is sum ||Phi(p) - x(p)||^2 / (M*I*J) over the batch.
template <typename T = float>
FitResult<T> fit_inr(const Tensor<T>& image, const FitConfig& cfg, const InrArch& arch,
                     bool record_trace = true) {
  cfg.validate();
  arch.validate();
  if (image.rank() != 3 || image.dim(2) != 3)
    throw std::invalid_argument("fit_inr expects an image [rows, cols, 3], got " +
                                dims_string(image.dims()));
  require_finite(image, "fit_inr image");
  const std::size_t rows = image.dim(0), cols = image.dim(1), pixels = rows * cols;
  const std::size_t per_epoch = pixels / cfg.batch;
  if (per_epoch == 0)
    throw std::invalid_argument("mini-batch of " + std::to_string(cfg.batch) +
                                " pixels exceeds image of " + std::to_string(pixels));
  const std::size_t total = per_epoch * cfg.epochs;
  const std::size_t M = cfg.batch, feat = arch.input_width();

  const nn::Network net = arch.network();
  FitResult<T> result;
  result.inr.arch = arch;
  result.inr.params = initial_params<T>(arch, cfg.key);
  auto& params = result.inr.params;
  if (record_trace) result.trace.reserve(total);

  const Tensor<T> grid = encode_grid<T>(rows, cols, arch.freqs);
  optim::AdamState<T> adam(params.size());
  Tensor<T> batch_in({M, feat});
  std::vector<T> target(M * 3);
  const double scale = 1.0 / static_cast<double>(M * pixels);
  const T grad_scale = static_cast<T>(2.0 * scale);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle = derive_stream(cfg.key, StreamLabel::shuffle_epoch(epoch));
    const std::vector<std::size_t> order = permutation(shuffle, pixels);
    for (std::size_t m = 0; m < per_epoch; ++m, ++step) {
      for (std::size_t k = 0; k < M; ++k) {
        const std::size_t px = order[m * M + k];
        std::copy_n(grid.data() + px * feat, feat, batch_in.data() + k * feat);
        std::copy_n(image.data() + px * 3, 3, target.data() + k * 3);
      }
      auto fwd = nn::forward<T>(net, params, batch_in);
      Tensor<T> dout(fwd.output.dims());
      double sse = 0;
      for (std::size_t i = 0; i < M * 3; ++i) {
        const T diff = fwd.output[i] - target[i];
        sse += static_cast<double>(diff) * static_cast<double>(diff);
        dout[i] = grad_scale * diff;
      }
      const double loss = sse * scale;
      if (!std::isfinite(loss))
        throw NonFiniteError("fit_inr: non-finite loss at step " + std::to_string(step));
      auto grads = nn::backward<T>(net, params, fwd.cache, dout, {.input_grad = false});
      const double lr = optim::cosine_lr(step, total, cfg.lr, cfg.alpha);
      optim::adam_step<T>(params, grads.params, adam, lr);
      if (record_trace) result.trace.push_back({step, lr, loss, sse / static_cast<double>(M)});
    }
  }
  return result;
}

/// Number of network layers evaluated to reach representation layer K.
/// K in [0, L) selects hidden layer K (0-based, post-activation); K = L is
/// the colour output.
inline std::size_t layers_through(const InrArch& arch, std::size_t K) {
  if (K > arch.layers)
    throw std::out_of_range("representation layer " + std::to_string(K) + " exceeds L=" +
                            std::to_string(arch.layers));
  return K == arch.layers ? 2 * arch.layers + 1 : 2 * (K + 1);
}

/// Post-activation output of hidden layer K at one coordinate pair.
template <typename T = float>
std::vector<T> hidden_activations(const InrParams<T>& inr, double row_coord, double col_coord,
                                  std::size_t K) {
  if (K >= inr.arch.layers)
    throw std::out_of_range("hidden layer index " + std::to_string(K) +
                            " must be below L=" + std::to_string(inr.arch.layers));
  const auto r = positional_encode(row_coord, inr.arch.freqs);
  const auto c = positional_encode(col_coord, inr.arch.freqs);
  Tensor<T> in({1, inr.arch.input_width()});
  for (std::size_t f = 0; f < r.size(); ++f) {
    in[f] = static_cast<T>(r[f]);
    in[r.size() + f] = static_cast<T>(c[f]);
  }
  auto out = nn::infer<T>(inr.arch.network(), inr.params, in, layers_through(inr.arch, K));
  return out.values();
}

/// Representation layer K evaluated over the full grid: [rows, cols, H]
/// (or [rows, cols, 3] when K = L).
template <typename T = float>
Tensor<T> activation_image(const InrParams<T>& inr, std::size_t rows, std::size_t cols,
                           std::size_t K) {
  const std::size_t n = layers_through(inr.arch, K);
  auto out = nn::infer<T>(inr.arch.network(), inr.params, encode_grid<T>(rows, cols, inr.arch.freqs), n);
  return out.reshaped({rows, cols, out.dim(1)});
}

/// The MLP's colour output over the grid.
template <typename T = float>
Tensor<T> reconstruct(const InrParams<T>& inr, std::size_t rows, std::size_t cols) {
  return activation_image(inr, rows, cols, inr.arch.layers);
}

/// Sum of squared channel differences, averaged over pixels.
template <typename T = float>
double reconstruction_error(const Tensor<T>& reconstruction, const Tensor<T>& image) {
  if (reconstruction.dims() != image.dims())
    throw std::invalid_argument("reconstruction and image dims differ");
  double sse = 0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double d = static_cast<double>(reconstruction[i]) - static_cast<double>(image[i]);
    sse += d * d;
  }
  return sse / static_cast<double>(image.dim(0) * image.dim(1));
}

}  // namespace linac::inr
