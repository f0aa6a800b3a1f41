#pragma once

// Input transformations: LINAC activation coding, its reconstruction
// mode, block pixel shuffling, dataset normalisation and CutMix.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "linac/inr.hpp"
#include "linac/parallel.hpp"
#include "linac/rng.hpp"
#include "linac/tensor.hpp"

namespace linac::transforms {

/// Activation image t(x): [rows, cols, H] for representation layer K < L.
inline Tensor<float> linac_transform(const Tensor<float>& image, const inr::FitConfig& cfg,
                                     const inr::InrArch& arch, std::size_t K) {
  if (K >= arch.layers)
    throw std::invalid_argument("LINAC representation layer K=" + std::to_string(K) +
                                " must be below L=" + std::to_string(arch.layers));
  auto fit = inr::fit_inr<float>(image, cfg, arch, false);
  return inr::activation_image(fit.inr, image.dim(0), image.dim(1), K);
}

/// K = L: the fitted MLP's RGB reconstruction of the image.
inline Tensor<float> linac_reconstruction_mode(const Tensor<float>& image,
                                               const inr::FitConfig& cfg,
                                               const inr::InrArch& arch) {
  auto fit = inr::fit_inr<float>(image, cfg, arch, false);
  return inr::reconstruct(fit.inr, image.dim(0), image.dim(1));
}

struct ShuffleKeySpec {
  std::size_t block = 4;
  PrivateKey key{};
};

/// The keyed permutation of block positions: output position q takes
/// input position perm[q].
inline std::vector<std::size_t> block_permutation(const ShuffleKeySpec& spec) {
  RngStream s = derive_stream(spec.key, StreamLabel::shuffle());
  return permutation(s, spec.block * spec.block);
}

namespace detail {

inline void check_blocks(const Dims& d, std::size_t b) {
  if (d.size() != 3) throw std::invalid_argument("block shuffle expects [rows, cols, channels]");
  if (b == 0 || d[0] % b || d[1] % b)
    throw std::invalid_argument("block size " + std::to_string(b) + " does not divide " +
                                dims_string(d));
}

template <typename T>
Tensor<T> permute_blocks(const Tensor<T>& x, std::size_t b, const std::vector<std::size_t>& perm,
                         bool inverse) {
  check_blocks(x.dims(), b);
  if (perm.size() != b * b) throw std::invalid_argument("permutation size mismatch");
  const std::size_t cols = x.dim(1), ch = x.dim(2);
  Tensor<T> y(x.dims());
  for (std::size_t by = 0; by < x.dim(0); by += b) {
    for (std::size_t bx = 0; bx < cols; bx += b) {
      for (std::size_t q = 0; q < b * b; ++q) {
        const std::size_t src = inverse ? q : perm[q];
        const std::size_t dst = inverse ? perm[q] : q;
        const std::size_t s_off = ((by + src / b) * cols + bx + src % b) * ch;
        const std::size_t d_off = ((by + dst / b) * cols + bx + dst % b) * ch;
        std::copy_n(x.data() + s_off, ch, y.data() + d_off);
      }
    }
  }
  return y;
}

}  // namespace detail

/// Applies one keyed permutation of b*b positions to every block; channels
/// travel with their pixel.
template <typename T>
Tensor<T> block_pixel_shuffle(const Tensor<T>& x, const ShuffleKeySpec& spec) {
  return detail::permute_blocks(x, spec.block, block_permutation(spec), false);
}

template <typename T>
Tensor<T> block_pixel_unshuffle(const Tensor<T>& x, const ShuffleKeySpec& spec) {
  return detail::permute_blocks(x, spec.block, block_permutation(spec), true);
}

/// Per-channel mean and standard deviation over a training set.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t channels() const { return mean.size(); }
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// Statistics of images [N, rows, cols, C]. Per-image partial sums are
/// added in sorted order, so the result does not depend on image order.
inline NormalizationStats fit_normalization(const Tensor<float>& images) {
  if (images.rank() != 4 || images.dim(0) == 0)
    throw std::invalid_argument("fit_normalization needs a nonempty [N, rows, cols, C] set");
  const std::size_t n = images.dim(0), ch = images.dim(3);
  const std::size_t pixels = images.dim(1) * images.dim(2);
  const double count = static_cast<double>(n * pixels);
  auto sorted_sum = [](std::vector<double>& parts) {
    std::sort(parts.begin(), parts.end());
    double s = 0;
    for (double p : parts) s += p;
    return s;
  };
  NormalizationStats st{std::vector<double>(ch), std::vector<double>(ch)};
  std::vector<double> parts(n);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const float* x = images.data() + i * pixels * ch;
      double s = 0;
      for (std::size_t p = 0; p < pixels; ++p) s += x[p * ch + c];
      parts[i] = s;
    }
    st.mean[c] = sorted_sum(parts) / count;
    for (std::size_t i = 0; i < n; ++i) {
      const float* x = images.data() + i * pixels * ch;
      double s = 0;
      for (std::size_t p = 0; p < pixels; ++p) {
        const double d = x[p * ch + c] - st.mean[c];
        s += d * d;
      }
      parts[i] = s;
    }
    st.stddev[c] = std::sqrt(sorted_sum(parts) / count);
    if (!(st.stddev[c] > 0))
      throw std::invalid_argument("channel " + std::to_string(c) + " has zero standard deviation");
  }
  return st;
}

/// (x - mean) / std per channel; x may be one image or a batch, channels last.
inline Tensor<float> apply_normalization(const Tensor<float>& x, const NormalizationStats& st) {
  const std::size_t ch = st.channels();
  if (x.rank() == 0 || x.dims().back() != ch)
    throw std::invalid_argument("normalisation channel count mismatch");
  Tensor<float> y(x.dims());
  std::vector<float> mean(ch), inv(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    mean[c] = static_cast<float>(st.mean[c]);
    inv[c] = static_cast<float>(1.0 / st.stddev[c]);
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean[i % ch]) * inv[i % ch];
  return y;
}

/// Pulls a gradient w.r.t. normalised inputs back to raw inputs.
inline void normalization_vjp(Tensor<float>& grad, const NormalizationStats& st) {
  const std::size_t ch = st.channels();
  std::vector<float> inv(ch);
  for (std::size_t c = 0; c < ch; ++c) inv[c] = static_cast<float>(1.0 / st.stddev[c]);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= inv[i % ch];
}

struct CutMixResult {
  Tensor<float> image;
  double weight_a = 1.0;  // label weight of the first image
  double weight_b = 0.0;
};

/// Pastes the box [top, top+h) x [left, left+w) of xb into xa, centred at
/// (cy, cx) with side fractions sqrt(1 - lambda), clipped at the borders.
/// Label weights follow the realised box area.
inline CutMixResult cutmix_with(const Tensor<float>& xa, const Tensor<float>& xb, double lambda,
                                std::size_t cy, std::size_t cx) {
  if (xa.dims() != xb.dims() || xa.rank() != 3)
    throw std::invalid_argument("cutmix needs two images of equal dims");
  const std::size_t rows = xa.dim(0), cols = xa.dim(1), ch = xa.dim(2);
  const double cut = std::sqrt(std::clamp(1.0 - lambda, 0.0, 1.0));
  const auto h = static_cast<std::ptrdiff_t>(std::floor(static_cast<double>(rows) * cut));
  const auto w = static_cast<std::ptrdiff_t>(std::floor(static_cast<double>(cols) * cut));
  const auto top = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cy) - h / 2, 0,
                                              static_cast<std::ptrdiff_t>(rows));
  const auto bottom = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cy) + (h - h / 2), 0,
                                                 static_cast<std::ptrdiff_t>(rows));
  const auto left = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cx) - w / 2, 0,
                                               static_cast<std::ptrdiff_t>(cols));
  const auto right = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cx) + (w - w / 2), 0,
                                                static_cast<std::ptrdiff_t>(cols));
  CutMixResult r{xa};
  for (auto y = top; y < bottom; ++y)
    for (auto x = left; x < right; ++x)
      std::copy_n(xb.data() + (static_cast<std::size_t>(y) * cols + static_cast<std::size_t>(x)) * ch, ch,
                  r.image.data() + (static_cast<std::size_t>(y) * cols + static_cast<std::size_t>(x)) * ch);
  const double area = static_cast<double>((bottom - top) * (right - left));
  r.weight_b = area / static_cast<double>(rows * cols);
  r.weight_a = 1.0 - r.weight_b;
  return r;
}

/// lambda ~ U(0, 1) and a uniformly placed box centre drawn from `s`.
inline CutMixResult cutmix(const Tensor<float>& xa, const Tensor<float>& xb, RngStream& s) {
  if (xa.rank() != 3) throw std::invalid_argument("cutmix needs [rows, cols, C] images");
  const double lambda = s.next_uniform();
  const auto cy = static_cast<std::size_t>(s.next_below(xa.dim(0)));
  const auto cx = static_cast<std::size_t>(s.next_below(xa.dim(1)));
  return cutmix_with(xa, xb, lambda, cy, cx);
}

enum class TransformKind { kNone, kLinac, kLinacReconstruction, kBlockShuffle };

std::string to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& s);

/// A keyed input transformation applied to normalised images.
struct TransformSpec {
  TransformKind kind = TransformKind::kNone;
  inr::InrArch arch{};
  inr::FitConfig fit{};  // fit.key is the private key for every keyed kind
  std::size_t repr_layer = 2;
  std::size_t block = 4;

  PrivateKey key() const { return fit.key; }
  TransformSpec with_key(PrivateKey k) const {
    TransformSpec t = *this;
    t.fit.key = k;
    return t;
  }

  /// Channel count of transformed images given `in_channels` raw ones.
  std::size_t output_channels(std::size_t in_channels) const {
    return kind == TransformKind::kLinac ? arch.width : in_channels;
  }

  void validate() const {
    if (kind == TransformKind::kLinac || kind == TransformKind::kLinacReconstruction) {
      arch.validate();
      fit.validate();
    }
    if (kind == TransformKind::kLinac && repr_layer >= arch.layers)
      throw std::invalid_argument("transform.repr_layer must be below transform.arch.layers");
    if (kind == TransformKind::kBlockShuffle && block == 0)
      throw std::invalid_argument("transform.block must be positive");
  }

  Tensor<float> apply(const Tensor<float>& image) const {
    switch (kind) {
      case TransformKind::kNone: return image;
      case TransformKind::kLinac: return linac_transform(image, fit, arch, repr_layer);
      case TransformKind::kLinacReconstruction:
        return linac_reconstruction_mode(image, fit, arch);
      case TransformKind::kBlockShuffle:
        return block_pixel_shuffle(image, ShuffleKeySpec{block, fit.key});
    }
    return image;
  }
};

inline std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::kNone: return "none";
    case TransformKind::kLinac: return "linac";
    case TransformKind::kLinacReconstruction: return "linac-reconstruction";
    case TransformKind::kBlockShuffle: return "block-shuffle";
  }
  return "none";
}

inline TransformKind transform_kind_from_string(const std::string& s) {
  if (s == "none") return TransformKind::kNone;
  if (s == "linac") return TransformKind::kLinac;
  if (s == "linac-reconstruction") return TransformKind::kLinacReconstruction;
  if (s == "block-shuffle") return TransformKind::kBlockShuffle;
  throw std::invalid_argument("unknown transform kind '" + s + "'");
}

/// Applies `spec` to every image of a batch [N, rows, cols, C].
inline Tensor<float> transform_batch(const TransformSpec& spec, const Tensor<float>& images,
                                     std::size_t workers = default_workers()) {
  if (spec.kind == TransformKind::kNone) return images;
  const std::size_t n = images.dim(0);
  std::vector<Tensor<float>> out(n);
  const Dims item(images.dims().begin() + 1, images.dims().end());
  parallel_for(n, workers, [&](std::size_t i) {
    out[i] = spec.apply(Tensor<float>(item, std::vector<float>(images.item(i).begin(), images.item(i).end())));
  });
  return stack<float>(out);
}

}  // namespace linac::transforms
