#pragma once

// Sequential networks with hand-written forward and backward passes.
//
// Tensors carry a leading batch axis. Spatial tensors are laid out as
// [batch, rows, cols, channels]. Parameters of a network live in one flat
// vector; each layer owns a contiguous slice (weights first, then bias).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "linac/gemm.hpp"
#include "linac/rng.hpp"
#include "linac/tensor.hpp"

namespace linac::nn {

enum class LayerKind {
  kDense,
  kConv2d,
  kRelu,
  kSwish,
  kGlobalAvgPool,
  kFlatten,
  kBlockLinear,
};

std::string to_string(LayerKind kind);

/// One layer of a sequential network.
///
/// dense: in_features -> out_features.
/// conv2d: in_features -> out_features channels, square kernel, zero
///   padding of kernel/2 on every side ("same" at stride 1).
/// block_linear: one shared bias-free linear map applied to every
///   non-overlapping kernel x kernel block; in_features is the channel count.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  bool has_bias = false;

  static LayerSpec dense(std::size_t in, std::size_t out, bool bias = true) {
    return {LayerKind::kDense, in, out, 1, 1, bias};
  }
  static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t k,
                          std::size_t stride = 1, bool bias = true) {
    return {LayerKind::kConv2d, in, out, k, stride, bias};
  }
  static LayerSpec relu() { return {LayerKind::kRelu}; }
  static LayerSpec swish() { return {LayerKind::kSwish}; }
  static LayerSpec global_avg_pool() { return {LayerKind::kGlobalAvgPool}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten}; }
  static LayerSpec block_linear(std::size_t block, std::size_t channels) {
    return {LayerKind::kBlockLinear, channels, channels, block, block, false};
  }

  std::size_t padding() const { return kind == LayerKind::kConv2d ? kernel / 2 : 0; }

  std::size_t weight_count() const {
    switch (kind) {
      case LayerKind::kDense: return in_features * out_features;
      case LayerKind::kConv2d: return kernel * kernel * in_features * out_features;
      case LayerKind::kBlockLinear: {
        const std::size_t n = kernel * kernel * in_features;
        return n * n;
      }
      default: return 0;
    }
  }
  std::size_t bias_count() const { return has_bias ? out_features : 0; }
  std::size_t param_count() const { return weight_count() + bias_count(); }

  /// Per-item output dims for per-item input dims; throws on mismatch.
  Dims output_dims(const Dims& in) const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

inline std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSwish: return "swish";
    case LayerKind::kGlobalAvgPool: return "global_avg_pool";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kBlockLinear: return "block_linear";
  }
  return "unknown";
}

inline Dims LayerSpec::output_dims(const Dims& in) const {
  auto fail = [&](const std::string& why) -> Dims {
    throw std::invalid_argument(to_string(kind) + " layer: " + why + " (input " +
                                dims_string(in) + ")");
  };
  switch (kind) {
    case LayerKind::kDense:
      if (in.size() != 1 || in[0] != in_features)
        return fail("expected [" + std::to_string(in_features) + "]");
      return {out_features};
    case LayerKind::kConv2d: {
      if (in.size() != 3 || in[2] != in_features)
        return fail("expected [rows, cols, " + std::to_string(in_features) + "]");
      if (stride == 0 || kernel == 0) return fail("zero kernel or stride");
      const std::size_t p = padding();
      if (in[0] + 2 * p < kernel || in[1] + 2 * p < kernel) return fail("kernel larger than input");
      return {(in[0] + 2 * p - kernel) / stride + 1, (in[1] + 2 * p - kernel) / stride + 1,
              out_features};
    }
    case LayerKind::kBlockLinear:
      if (in.size() != 3 || in[2] != in_features)
        return fail("expected [rows, cols, " + std::to_string(in_features) + "]");
      if (kernel == 0 || in[0] % kernel || in[1] % kernel)
        return fail("block size must divide rows and cols");
      return in;
    case LayerKind::kRelu:
    case LayerKind::kSwish:
      return in;
    case LayerKind::kGlobalAvgPool:
      if (in.size() != 3) return fail("expected [rows, cols, channels]");
      return {in[2]};
    case LayerKind::kFlatten:
      return {dims_product(in)};
  }
  return fail("unknown kind");
}

/// Validated chain of layers with a fixed per-item input shape.
class Network {
 public:
  Network() = default;
  Network(std::vector<LayerSpec> layers, Dims input_dims)
      : layers_(std::move(layers)), item_dims_{std::move(input_dims)} {
    std::size_t offset = 0;
    for (const auto& layer : layers_) {
      offsets_.push_back(offset);
      offset += layer.param_count();
      item_dims_.push_back(layer.output_dims(item_dims_.back()));
    }
    param_count_ = offset;
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }
  const Dims& input_dims() const { return item_dims_.front(); }
  const Dims& output_dims() const { return item_dims_.back(); }
  /// Per-item input dims of layer i (i == size() gives the output dims).
  const Dims& dims_at(std::size_t i) const { return item_dims_.at(i); }
  std::size_t param_count() const { return param_count_; }
  std::size_t param_offset(std::size_t i) const { return offsets_.at(i); }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Dims> item_dims_;
  std::vector<std::size_t> offsets_;
  std::size_t param_count_ = 0;
};

/// Inputs to every layer, retained for the backward pass.
template <typename T>
struct ForwardCache {
  std::vector<Tensor<T>> inputs;
  std::size_t layer_count = 0;
};

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  ForwardCache<T> cache;
};

template <typename T>
struct Gradients {
  Tensor<T> input;
  std::vector<T> params;
};

struct BackwardOptions {
  bool input_grad = true;
  bool param_grads = true;
};

namespace detail {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

inline Dims with_batch(std::size_t batch, const Dims& item) {
  Dims d{batch};
  d.insert(d.end(), item.begin(), item.end());
  return d;
}

// col[P, k*k*C] for one item with zero padding.
template <typename T>
void im2col(const LayerSpec& l, const Dims& in, const Dims& out, const T* x, T* col) {
  const std::size_t rows = in[0], cols = in[1], ch = in[2];
  const std::size_t k = l.kernel, s = l.stride, p = l.padding();
  const std::size_t width = k * k * ch;
  for (std::size_t oy = 0; oy < out[0]; ++oy) {
    for (std::size_t ox = 0; ox < out[1]; ++ox) {
      T* dst = col + (oy * out[1] + ox) * width;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
          T* d = dst + (ky * k + kx) * ch;
          if (y < 0 || xx < 0 || y >= static_cast<std::ptrdiff_t>(rows) ||
              xx >= static_cast<std::ptrdiff_t>(cols)) {
            std::fill(d, d + ch, T(0));
          } else {
            const T* src = x + (static_cast<std::size_t>(y) * cols + static_cast<std::size_t>(xx)) * ch;
            std::copy(src, src + ch, d);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const LayerSpec& l, const Dims& in, const Dims& out, const T* col, T* dx) {
  const std::size_t rows = in[0], cols = in[1], ch = in[2];
  const std::size_t k = l.kernel, s = l.stride, p = l.padding();
  const std::size_t width = k * k * ch;
  for (std::size_t oy = 0; oy < out[0]; ++oy) {
    for (std::size_t ox = 0; ox < out[1]; ++ox) {
      const T* src = col + (oy * out[1] + ox) * width;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
        if (y < 0 || y >= static_cast<std::ptrdiff_t>(rows)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
          if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(cols)) continue;
          const T* sv = src + (ky * k + kx) * ch;
          T* d = dx + (static_cast<std::size_t>(y) * cols + static_cast<std::size_t>(xx)) * ch;
          for (std::size_t c = 0; c < ch; ++c) d[c] += sv[c];
        }
      }
    }
  }
}

// Gathers each block of an item into a row of `rows` [blocks, b*b*C].
template <typename T>
void gather_blocks(std::size_t b, const Dims& in, const T* x, T* rows, bool scatter) {
  const std::size_t nr = in[0], nc = in[1], ch = in[2];
  const std::size_t width = b * b * ch;
  std::size_t blk = 0;
  for (std::size_t by = 0; by < nr / b; ++by) {
    for (std::size_t bx = 0; bx < nc / b; ++bx, ++blk) {
      for (std::size_t iy = 0; iy < b; ++iy) {
        for (std::size_t ix = 0; ix < b; ++ix) {
          const std::size_t pix = ((by * b + iy) * nc + (bx * b + ix)) * ch;
          const std::size_t r = blk * width + (iy * b + ix) * ch;
          for (std::size_t c = 0; c < ch; ++c) {
            if (scatter)
              rows[pix + c] = x[r + c];
            else
              rows[r + c] = x[pix + c];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> layer_forward(const LayerSpec& l, const Dims& in_item, const Dims& out_item,
                        std::span<const T> w, const Tensor<T>& x) {
  const std::size_t batch = x.dim(0);
  Tensor<T> y(with_batch(batch, out_item));
  switch (l.kind) {
    case LayerKind::kDense: {
      T* yd = y.data();
      if (l.has_bias) {
        const T* bias = w.data() + l.weight_count();
        for (std::size_t b = 0; b < batch; ++b)
          std::copy(bias, bias + l.out_features, yd + b * l.out_features);
      }
      gemm::matmul_acc(batch, l.out_features, l.in_features, x.data(), w.data(), yd);
      break;
    }
    case LayerKind::kConv2d: {
      const std::size_t positions = out_item[0] * out_item[1];
      const std::size_t width = l.kernel * l.kernel * l.in_features;
      std::vector<T> col(positions * width);
      const std::size_t in_n = dims_product(in_item), out_n = dims_product(out_item);
      for (std::size_t b = 0; b < batch; ++b) {
        T* yd = y.data() + b * out_n;
        if (l.has_bias) {
          const T* bias = w.data() + l.weight_count();
          for (std::size_t q = 0; q < positions; ++q)
            std::copy(bias, bias + l.out_features, yd + q * l.out_features);
        }
        im2col(l, in_item, out_item, x.data() + b * in_n, col.data());
        gemm::matmul_acc(positions, l.out_features, width, col.data(), w.data(), yd);
      }
      break;
    }
    case LayerKind::kBlockLinear: {
      const std::size_t n = dims_product(in_item);
      const std::size_t width = l.kernel * l.kernel * l.in_features;
      const std::size_t blocks = n / width;
      std::vector<T> rows(n), out(n);
      for (std::size_t b = 0; b < batch; ++b) {
        gather_blocks(l.kernel, in_item, x.data() + b * n, rows.data(), false);
        std::fill(out.begin(), out.end(), T(0));
        gemm::matmul_acc(blocks, width, width, rows.data(), w.data(), out.data());
        gather_blocks(l.kernel, in_item, out.data(), y.data() + b * n, true);
      }
      break;
    }
    case LayerKind::kRelu:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case LayerKind::kSwish:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
      break;
    case LayerKind::kGlobalAvgPool: {
      const std::size_t positions = in_item[0] * in_item[1], ch = in_item[2];
      const T inv = T(1) / static_cast<T>(positions);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* xd = x.data() + b * positions * ch;
        T* yd = y.data() + b * ch;
        for (std::size_t q = 0; q < positions; ++q)
          for (std::size_t c = 0; c < ch; ++c) yd[c] += xd[q * ch + c];
        for (std::size_t c = 0; c < ch; ++c) yd[c] *= inv;
      }
      break;
    }
    case LayerKind::kFlatten:
      y.values() = x.values();
      break;
  }
  return y;
}

template <typename T>
Tensor<T> layer_backward(const LayerSpec& l, const Dims& in_item, const Dims& out_item,
                         std::span<const T> w, const Tensor<T>& x, const Tensor<T>& dy,
                         std::span<T> dw, const BackwardOptions& opt) {
  const std::size_t batch = x.dim(0);
  Tensor<T> dx;
  if (opt.input_grad) dx = Tensor<T>(x.dims());
  switch (l.kind) {
    case LayerKind::kDense: {
      if (opt.param_grads) {
        gemm::matmul_tn_acc(l.in_features, l.out_features, batch, x.data(), dy.data(), dw.data());
        if (l.has_bias) {
          T* db = dw.data() + l.weight_count();
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < l.out_features; ++j) db[j] += dy[b * l.out_features + j];
        }
      }
      if (opt.input_grad) {
        std::vector<T> wt(l.weight_count());
        gemm::transpose(l.in_features, l.out_features, w.data(), wt.data());
        gemm::matmul_acc(batch, l.in_features, l.out_features, dy.data(), wt.data(), dx.data());
      }
      break;
    }
    case LayerKind::kConv2d: {
      const std::size_t positions = out_item[0] * out_item[1];
      const std::size_t width = l.kernel * l.kernel * l.in_features;
      const std::size_t in_n = dims_product(in_item), out_n = dims_product(out_item);
      std::vector<T> col(positions * width), wt;
      if (opt.input_grad) {
        wt.resize(l.weight_count());
        gemm::transpose(width, l.out_features, w.data(), wt.data());
      }
      for (std::size_t b = 0; b < batch; ++b) {
        const T* dyb = dy.data() + b * out_n;
        if (opt.param_grads) {
          im2col(l, in_item, out_item, x.data() + b * in_n, col.data());
          gemm::matmul_tn_acc(width, l.out_features, positions, col.data(), dyb, dw.data());
          if (l.has_bias) {
            T* db = dw.data() + l.weight_count();
            for (std::size_t q = 0; q < positions; ++q)
              for (std::size_t j = 0; j < l.out_features; ++j) db[j] += dyb[q * l.out_features + j];
          }
        }
        if (opt.input_grad) {
          std::fill(col.begin(), col.end(), T(0));
          gemm::matmul_acc(positions, width, l.out_features, dyb, wt.data(), col.data());
          col2im_acc(l, in_item, out_item, col.data(), dx.data() + b * in_n);
        }
      }
      break;
    }
    case LayerKind::kBlockLinear: {
      const std::size_t n = dims_product(in_item);
      const std::size_t width = l.kernel * l.kernel * l.in_features;
      const std::size_t blocks = n / width;
      std::vector<T> xr(n), dyr(n), dxr(n), wt;
      if (opt.input_grad) {
        wt.resize(l.weight_count());
        gemm::transpose(width, width, w.data(), wt.data());
      }
      for (std::size_t b = 0; b < batch; ++b) {
        gather_blocks(l.kernel, in_item, dy.data() + b * n, dyr.data(), false);
        if (opt.param_grads) {
          gather_blocks(l.kernel, in_item, x.data() + b * n, xr.data(), false);
          gemm::matmul_tn_acc(width, width, blocks, xr.data(), dyr.data(), dw.data());
        }
        if (opt.input_grad) {
          std::fill(dxr.begin(), dxr.end(), T(0));
          gemm::matmul_acc(blocks, width, width, dyr.data(), wt.data(), dxr.data());
          gather_blocks(l.kernel, in_item, dxr.data(), dx.data() + b * n, true);
        }
      }
      break;
    }
    case LayerKind::kRelu:
      if (opt.input_grad)
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
      break;
    case LayerKind::kSwish:
      if (opt.input_grad)
        for (std::size_t i = 0; i < x.size(); ++i) {
          const T s = sigmoid(x[i]);
          dx[i] = dy[i] * (s + x[i] * s * (T(1) - s));
        }
      break;
    case LayerKind::kGlobalAvgPool:
      if (opt.input_grad) {
        const std::size_t positions = in_item[0] * in_item[1], ch = in_item[2];
        const T inv = T(1) / static_cast<T>(positions);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t q = 0; q < positions; ++q)
            for (std::size_t c = 0; c < ch; ++c)
              dx[(b * positions + q) * ch + c] = dy[b * ch + c] * inv;
      }
      break;
    case LayerKind::kFlatten:
      if (opt.input_grad) dx.values() = dy.values();
      break;
  }
  return dx;
}

inline void check_batch_input(const Network& net, const Dims& dims) {
  if (dims.empty() || Dims(dims.begin() + 1, dims.end()) != net.input_dims())
    throw std::invalid_argument("network input " + dims_string(dims) + " does not match [batch]" +
                                dims_string(net.input_dims()));
}

}  // namespace detail

/// Runs the first `layer_count` layers (all by default) and keeps their inputs.
template <typename T>
ForwardResult<T> forward(const Network& net, std::span<const T> params, const Tensor<T>& input,
                         std::size_t layer_count = static_cast<std::size_t>(-1)) {
  detail::check_batch_input(net, input.dims());
  if (params.size() != net.param_count())
    throw std::invalid_argument("parameter count " + std::to_string(params.size()) +
                                " does not match network (" + std::to_string(net.param_count()) + ")");
  layer_count = std::min(layer_count, net.size());
  ForwardResult<T> r;
  r.cache.layer_count = layer_count;
  r.cache.inputs.reserve(layer_count);
  Tensor<T> x = input;
  for (std::size_t i = 0; i < layer_count; ++i) {
    const auto& l = net.layers()[i];
    auto w = params.subspan(net.param_offset(i), l.param_count());
    Tensor<T> y = detail::layer_forward(l, net.dims_at(i), net.dims_at(i + 1), w, x);
    r.cache.inputs.push_back(std::move(x));
    x = std::move(y);
  }
  require_finite(x, "network output");
  r.output = std::move(x);
  return r;
}

/// Forward pass without retaining a cache.
template <typename T>
Tensor<T> infer(const Network& net, std::span<const T> params, const Tensor<T>& input,
                std::size_t layer_count = static_cast<std::size_t>(-1)) {
  detail::check_batch_input(net, input.dims());
  if (params.size() != net.param_count())
    throw std::invalid_argument("parameter count does not match network");
  layer_count = std::min(layer_count, net.size());
  Tensor<T> x = input;
  for (std::size_t i = 0; i < layer_count; ++i) {
    const auto& l = net.layers()[i];
    x = detail::layer_forward(l, net.dims_at(i), net.dims_at(i + 1),
                              params.subspan(net.param_offset(i), l.param_count()), x);
  }
  require_finite(x, "network output");
  return x;
}

/// Reverse-mode pass through the layers recorded in `cache`.
template <typename T>
Gradients<T> backward(const Network& net, std::span<const T> params, const ForwardCache<T>& cache,
                      const Tensor<T>& output_grad, BackwardOptions opt = {}) {
  if (cache.inputs.size() != cache.layer_count || cache.layer_count > net.size())
    throw std::invalid_argument("forward cache does not match network");
  const std::size_t n = cache.layer_count;
  if (n == 0) return {output_grad, std::vector<T>(opt.param_grads ? net.param_count() : 0)};
  const std::size_t batch = cache.inputs.front().dim(0);
  if (output_grad.dims() != detail::with_batch(batch, net.dims_at(n)))
    throw std::invalid_argument("output gradient " + dims_string(output_grad.dims()) +
                                " does not match forward output");
  Gradients<T> g;
  if (opt.param_grads) g.params.assign(net.param_count(), T(0));
  Tensor<T> dy = output_grad;
  for (std::size_t i = n; i-- > 0;) {
    const auto& l = net.layers()[i];
    // Input gradients of earlier layers are always needed to continue the chain.
    BackwardOptions lo{opt.input_grad || i > 0, opt.param_grads};
    std::span<T> dw;
    if (opt.param_grads) dw = std::span<T>(g.params).subspan(net.param_offset(i), l.param_count());
    dy = detail::layer_backward(l, net.dims_at(i), net.dims_at(i + 1),
                                params.subspan(net.param_offset(i), l.param_count()),
                                cache.inputs[i], dy, dw, lo);
  }
  if (opt.input_grad) {
    require_finite(dy, "input gradient");
    g.input = std::move(dy);
  }
  return g;
}

/// Gaussian weights scaled by 1/sqrt(fan_in), zero biases; block-linear
/// layers start at the identity. Draws are consumed layer by layer in
/// row-major weight order.
template <typename T>
std::vector<T> init_params(const Network& net, RngStream& s) {
  std::vector<T> p(net.param_count(), T(0));
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& l = net.layers()[i];
    T* w = p.data() + net.param_offset(i);
    switch (l.kind) {
      case LayerKind::kDense:
      case LayerKind::kConv2d: {
        const std::size_t fan_in = l.weight_count() / l.out_features;
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t k = 0; k < l.weight_count(); ++k)
          w[k] = static_cast<T>(s.next_gaussian() * scale);
        break;
      }
      case LayerKind::kBlockLinear: {
        const std::size_t width = l.kernel * l.kernel * l.in_features;
        for (std::size_t k = 0; k < width; ++k) w[k * width + k] = T(1);
        break;
      }
      default:
        break;
    }
  }
  return p;
}

/// Loss and logit gradient of one softmax cross-entropy term.
template <typename T>
struct LossGrad {
  T loss{};
  Tensor<T> grad;
};

/// Mean soft-target cross-entropy over a batch of logits [batch, classes].
/// `targets` holds one probability row per example.
template <typename T>
LossGrad<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const T> targets) {
  if (logits.rank() != 2) throw std::invalid_argument("logits must be [batch, classes]");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (targets.size() != logits.size()) throw std::invalid_argument("target shape mismatch");
  LossGrad<T> r{T(0), Tensor<T>(logits.dims())};
  std::vector<T> prob(classes);
  const T inv_batch = T(1) / static_cast<T>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* z = logits.data() + b * classes;
    const T zmax = *std::max_element(z, z + classes);
    T sum = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      prob[c] = std::exp(z[c] - zmax);
      sum += prob[c];
    }
    const T lse = zmax + std::log(sum);
    for (std::size_t c = 0; c < classes; ++c) {
      const T t = targets[b * classes + c];
      if (t != T(0)) r.loss += t * (lse - z[c]) * inv_batch;
      r.grad[b * classes + c] = (prob[c] / sum - t) * inv_batch;
    }
  }
  return r;
}

/// Mean hard-label cross-entropy over a batch.
template <typename T>
LossGrad<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || labels.size() != logits.dim(0))
    throw std::invalid_argument("labels do not match logits batch");
  const std::size_t classes = logits.dim(1);
  std::vector<T> targets(logits.size(), T(0));
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes)
      throw std::out_of_range("label " + std::to_string(labels[b]) + " out of range");
    targets[b * classes + static_cast<std::size_t>(labels[b])] = T(1);
  }
  return softmax_cross_entropy(logits, std::span<const T>(targets));
}

/// Single rank-1 logit vector against one label.
template <typename T>
LossGrad<T> softmax_cross_entropy(const Tensor<T>& logits, int label) {
  if (logits.rank() != 1) throw std::invalid_argument("logits must be rank-1");
  const int labels[1] = {label};
  auto r = softmax_cross_entropy(logits.reshaped({1, logits.size()}), std::span<const int>(labels));
  r.grad = r.grad.reshaped({logits.size()});
  return r;
}

/// Row-wise softmax of [batch, classes].
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  Tensor<T> p(logits.dims());
  for (std::size_t b = 0; b < batch; ++b) {
    const T* z = logits.data() + b * classes;
    const T zmax = *std::max_element(z, z + classes);
    T sum = 0;
    for (std::size_t c = 0; c < classes; ++c) sum += (p[b * classes + c] = std::exp(z[c] - zmax));
    for (std::size_t c = 0; c < classes; ++c) p[b * classes + c] /= sum;
  }
  return p;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<int> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* z = logits.data() + b * classes;
    out[b] = static_cast<int>(std::max_element(z, z + classes) - z);
  }
  return out;
}

}  // namespace linac::nn
