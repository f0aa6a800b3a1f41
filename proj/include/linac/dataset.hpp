#pragma once

// Labelled image sets: CIFAR-10 binary batches and a keyed synthetic
// generator. Images are [N, rows, cols, 3] with intensities in [0, 1].

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "linac/lnt1.hpp"
#include "linac/rng.hpp"
#include "linac/tensor.hpp"

namespace linac::data {

struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;
  std::size_t num_classes = 10;

  std::size_t size() const { return labels.size(); }
  Dims image_dims() const { return Dims(images.dims().begin() + 1, images.dims().end()); }

  Tensor<float> image(std::size_t i) const {
    return Tensor<float>(image_dims(), std::vector<float>(images.item(i).begin(), images.item(i).end()));
  }

  Dataset slice(std::size_t first, std::size_t count) const {
    if (first + count > size()) throw std::out_of_range("dataset slice out of range");
    return {images.slice(first, count),
            std::vector<int>(labels.begin() + static_cast<std::ptrdiff_t>(first),
                             labels.begin() + static_cast<std::ptrdiff_t>(first + count)),
            num_classes};
  }

  void validate() const {
    if (images.rank() != 4 || images.dim(0) != labels.size())
      throw std::invalid_argument("dataset images must be [N, rows, cols, C] matching labels");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
        throw std::out_of_range("dataset label " + std::to_string(y) + " out of range");
  }
};

/// Reads CIFAR-10 binary records: 1 label byte then 3072 channel-planar
/// pixel bytes (1024 R, 1024 G, 1024 B), row-major within each plane.
inline Dataset read_cifar10(const std::filesystem::path& path, std::size_t max_records = 0) {
  constexpr std::size_t kSide = 32, kPlane = kSide * kSide, kRecord = 1 + 3 * kPlane;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open CIFAR-10 file " + path.string());
  is.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(is.tellg());
  is.seekg(0);
  if (bytes % kRecord)
    throw std::runtime_error(path.string() + " is not a whole number of CIFAR-10 records");
  std::size_t n = bytes / kRecord;
  if (max_records) n = std::min(n, max_records);
  Dataset ds{Tensor<float>({n, kSide, kSide, 3}), std::vector<int>(n), 10};
  std::vector<unsigned char> rec(kRecord);
  for (std::size_t i = 0; i < n; ++i) {
    is.read(reinterpret_cast<char*>(rec.data()), kRecord);
    if (!is) throw std::runtime_error("truncated CIFAR-10 record in " + path.string());
    ds.labels[i] = rec[0];
    float* dst = ds.images.data() + i * kPlane * 3;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < kPlane; ++p) dst[p * 3 + c] = rec[1 + c * kPlane + p] / 255.0f;
  }
  ds.validate();
  return ds;
}

/// Images and labels stored side by side as LNT1 tensors.
inline void save_dataset(const std::filesystem::path& stem, const Dataset& ds) {
  lnt1::save(stem.string() + ".images.lnt1", ds.images);
  Tensor<float> labels({ds.size()});
  for (std::size_t i = 0; i < ds.size(); ++i) labels[i] = static_cast<float>(ds.labels[i]);
  lnt1::save(stem.string() + ".labels.lnt1", labels);
}

inline Dataset load_dataset(const std::filesystem::path& stem, std::size_t num_classes = 10) {
  Dataset ds;
  ds.images = lnt1::load<float>(stem.string() + ".images.lnt1");
  const auto labels = lnt1::load<float>(stem.string() + ".labels.lnt1");
  ds.labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) ds.labels[i] = static_cast<int>(labels[i]);
  ds.num_classes = num_classes;
  ds.validate();
  return ds;
}

/// Knobs of the synthetic generator.
struct SyntheticSpec {
  std::uint64_t seed = 1;
  std::size_t count = 1000;
  std::size_t size = 16;
  std::size_t num_classes = 10;
  double texture = 0.12;      // amplitude of 1/f background texture
  double noise = 0.02;        // per-pixel Gaussian noise
  double min_contrast = 0.15;  // colour distance between shape and background
  double max_contrast = 0.45;
};

namespace detail {

// Signed distance style membership for shape `kind` at normalised (u, v) in
// [-1, 1]^2, returning a soft coverage in [0, 1].
inline double shape_coverage(std::size_t kind, double u, double v, double softness) {
  auto soft = [&](double d) { return std::clamp(0.5 - d / softness, 0.0, 1.0); };
  const double r = std::hypot(u, v);
  switch (kind % 10) {
    case 0: return soft(r - 0.75);                                        // disk
    case 1: return soft(std::max(std::abs(u), std::abs(v)) - 0.65);        // square
    case 2: return soft(std::max({v - 0.7, -0.9 * u - 0.5 * v - 0.45,     // triangle
                                  0.9 * u - 0.5 * v - 0.45}));
    case 3: return soft(std::abs(r - 0.6) - 0.18);                        // ring
    case 4: return soft(std::min(std::max(std::abs(u) - 0.22, std::abs(v) - 0.8),   // plus
                                 std::max(std::abs(v) - 0.22, std::abs(u) - 0.8)));
    case 5: return soft(std::max(std::abs(std::abs(u) - 0.45) - 0.16, std::abs(v) - 0.8));  // two bars
    case 6: return soft(std::max(std::abs(std::abs(v) - 0.45) - 0.16, std::abs(u) - 0.8));  // two rows
    case 7: return soft(std::max(std::abs(u - v) / std::numbers::sqrt2 - 0.22, r - 0.95));  // diagonal
    case 8: return soft(std::min(std::hypot(u + 0.42, v + 0.42), std::hypot(u - 0.42, v - 0.42)) - 0.36);
    default: return soft(std::max(std::min(std::abs(u + v), std::abs(u - v)) / std::numbers::sqrt2 - 0.17,  // X
                                  std::max(std::abs(u), std::abs(v)) - 0.8));
  }
}

// Random-phase field with amplitude ~ 1/|f| over all grid frequencies,
// scaled to unit standard deviation.
inline std::vector<double> pink_field(RngStream& s, std::size_t size) {
  std::vector<double> field(size * size, 0.0);
  const int half = static_cast<int>(size / 2);
  for (int fy = -half; fy <= half; ++fy) {
    for (int fx = 0; fx <= half; ++fx) {
      if (fx == 0 && fy <= 0) continue;
      const double amp = 1.0 / std::hypot(fx, fy) * s.next_gaussian();
      const double phase = 2.0 * std::numbers::pi * s.next_uniform();
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
          field[y * size + x] += amp * std::cos(2.0 * std::numbers::pi *
                                                    (fx * static_cast<double>(x) + fy * static_cast<double>(y)) /
                                                    static_cast<double>(size) + phase);
    }
  }
  double ss = 0;
  for (double v : field) ss += v * v;
  const double inv = ss > 0 ? 1.0 / std::sqrt(ss / static_cast<double>(field.size())) : 0.0;
  for (double& v : field) v *= inv;
  return field;
}

}  // namespace detail

/// Keyed 10-class image set: a class-specific shape of random colour, size
/// and position over a smooth gradient with 1/f texture and pixel noise.
/// Labels cycle through the classes in a seeded random order.
inline Dataset synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.count == 0 || spec.size < 4 || spec.num_classes == 0 || spec.num_classes > 10)
    throw std::invalid_argument("synthetic dataset needs count >= 1, size >= 4, 1..10 classes");
  const std::size_t S = spec.size;
  Dataset ds{Tensor<float>({spec.count, S, S, 3}), std::vector<int>(spec.count), spec.num_classes};
  const RngStream root = derive_stream(PrivateKey{static_cast<std::int64_t>(spec.seed)}, StreamLabel::data());
  for (std::size_t i = 0; i < spec.count; ++i) {
    RngStream s = root.fork(i);
    const auto label = static_cast<int>(s.next_below(spec.num_classes));
    ds.labels[i] = label;

    std::array<double, 3> bg0, bg1, fg;
    for (auto& c : bg0) c = 0.15 + 0.7 * s.next_uniform();
    for (std::size_t c = 0; c < 3; ++c) bg1[c] = std::clamp(bg0[c] + 0.3 * (s.next_uniform() - 0.5), 0.0, 1.0);
    // Foreground colour at a bounded distance from the background mean.
    const double contrast = spec.min_contrast + (spec.max_contrast - spec.min_contrast) * s.next_uniform();
    std::array<double, 3> dir;
    double norm = 0;
    for (auto& d : dir) {
      d = s.next_gaussian();
      norm += d * d;
    }
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < 3; ++c)
      fg[c] = std::clamp(0.5 * (bg0[c] + bg1[c]) + contrast * std::sqrt(3.0) * dir[c] / norm, 0.0, 1.0);

    const double grad_angle = 2.0 * std::numbers::pi * s.next_uniform();
    const double scale = 0.55 + 0.3 * s.next_uniform();
    const double cx = 0.25 * (2.0 * s.next_uniform() - 1.0), cy = 0.25 * (2.0 * s.next_uniform() - 1.0);
    const double rot = 0.35 * (2.0 * s.next_uniform() - 1.0);
    const auto texture = detail::pink_field(s, S);
    const auto tex_fg = detail::pink_field(s, S);
    const double softness = 2.0 / static_cast<double>(S) / scale;

    float* img = ds.images.data() + i * S * S * 3;
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        const double px = (2.0 * (static_cast<double>(x) + 0.5) / static_cast<double>(S)) - 1.0;
        const double py = (2.0 * (static_cast<double>(y) + 0.5) / static_cast<double>(S)) - 1.0;
        const double g = 0.5 + 0.5 * (std::cos(grad_angle) * px + std::sin(grad_angle) * py);
        const double qx = (px - cx) / scale, qy = (py - cy) / scale;
        const double u = std::cos(rot) * qx + std::sin(rot) * qy;
        const double v = -std::sin(rot) * qx + std::cos(rot) * qy;
        const double cover = detail::shape_coverage(static_cast<std::size_t>(label), u, v, softness);
        for (std::size_t c = 0; c < 3; ++c) {
          const double bg = (1.0 - g) * bg0[c] + g * bg1[c] + spec.texture * texture[y * S + x];
          const double fgv = fg[c] + 0.5 * spec.texture * tex_fg[y * S + x];
          const double val = (1.0 - cover) * bg + cover * fgv + spec.noise * s.next_gaussian();
          img[(y * S + x) * 3 + c] = static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
      }
    }
  }
  return ds;
}

}  // namespace linac::data
