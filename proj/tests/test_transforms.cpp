#include <gtest/gtest.h>

#include <algorithm>

#include "linac/dataset.hpp"
#include "linac/transforms.hpp"

using namespace linac;
using namespace linac::transforms;

namespace {

Tensor<float> random_image(std::size_t rows, std::size_t cols, std::size_t ch, std::uint64_t seed) {
  RngStream s(seed);
  Tensor<float> img({rows, cols, ch});
  for (auto& v : img.values()) v = static_cast<float>(s.next_gaussian());
  return img;
}

TransformSpec desk_linac(std::int64_t key) {
  TransformSpec t;
  t.kind = TransformKind::kLinac;
  t.arch = {5, 64, 5};
  t.fit.epochs = 2;
  t.fit.batch = 16;
  t.fit.lr = 5e-3;
  t.fit.key = PrivateKey{key};
  t.repr_layer = 2;
  return t;
}

}  // namespace

TEST(Linac, PaperShape) {
  const auto img = random_image(32, 32, 3, 1);
  inr::FitConfig cfg;
  cfg.key = PrivateKey{-2314326399425823309LL};
  const auto t = linac_transform(img, cfg, inr::InrArch{}, 2);
  EXPECT_EQ(t.dims(), (Dims{32, 32, 256}));
  EXPECT_THROW(linac_transform(img, cfg, inr::InrArch{}, 5), std::invalid_argument);
}

TEST(Linac, DeterministicAndKeySensitive) {
  const auto img = random_image(16, 16, 3, 2);
  const auto a = desk_linac(1).apply(img);
  EXPECT_EQ(a, desk_linac(1).apply(img));
  const auto b = desk_linac(2).apply(img);
  ASSERT_EQ(a.dims(), b.dims());
  double gap = 0;
  for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, double(std::abs(a[i] - b[i])));
  EXPECT_GT(gap, 1e-3);
}

TEST(Linac, ReconstructionModeShape) {
  auto t = desk_linac(3);
  t.kind = TransformKind::kLinacReconstruction;
  const auto img = random_image(16, 16, 3, 3);
  const auto r = t.apply(img);
  EXPECT_EQ(r.dims(), img.dims());
  EXPECT_EQ(r, t.apply(img));
  EXPECT_EQ(t.output_channels(3), 3u);
  EXPECT_EQ(desk_linac(3).output_channels(3), 64u);
}

TEST(Linac, BatchIndependentOfWorkerCount) {
  Tensor<float> batch({6, 8, 8, 3});
  RngStream s(4);
  for (auto& v : batch.values()) v = static_cast<float>(s.next_gaussian());
  auto t = desk_linac(5);
  t.fit.batch = 8;
  EXPECT_EQ(transform_batch(t, batch, 1), transform_batch(t, batch, 4));
}

TEST(Linac, ValidationRejectsBadLayer) {
  auto t = desk_linac(1);
  t.repr_layer = 5;
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(BlockShuffle, MatchesPositionMapping) {
  const auto img = random_image(8, 4, 3, 5);
  const ShuffleKeySpec spec{2, PrivateKey{17}};
  const auto perm = block_permutation(spec);
  const auto y = block_pixel_shuffle(img, spec);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      const std::size_t q = (r % 2) * 2 + c % 2;
      const std::size_t sr = r - r % 2 + perm[q] / 2, sc = c - c % 2 + perm[q] % 2;
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(y[(r * 4 + c) * 3 + k], img[(sr * 4 + sc) * 3 + k]);
    }
}

TEST(BlockShuffle, InverseRestoresExactly) {
  const auto img = random_image(16, 16, 3, 6);
  const ShuffleKeySpec spec{4, PrivateKey{99}};
  const auto y = block_pixel_shuffle(img, spec);
  EXPECT_NE(y, img);
  EXPECT_EQ(block_pixel_unshuffle(y, spec), img);
}

TEST(BlockShuffle, PreservesBlockMultisets) {
  const auto img = random_image(8, 8, 3, 7);
  const ShuffleKeySpec spec{4, PrivateKey{5}};
  const auto y = block_pixel_shuffle(img, spec);
  for (std::size_t by = 0; by < 8; by += 4)
    for (std::size_t bx = 0; bx < 8; bx += 4) {
      std::vector<float> a, b;
      for (std::size_t r = by; r < by + 4; ++r)
        for (std::size_t c = bx; c < bx + 4; ++c)
          for (std::size_t k = 0; k < 3; ++k) {
            a.push_back(img[(r * 8 + c) * 3 + k]);
            b.push_back(y[(r * 8 + c) * 3 + k]);
          }
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      EXPECT_EQ(a, b);
    }
}

TEST(BlockShuffle, IdentityKeyLeavesImage) {
  // Among 2x2 blocks (24 permutations) some small key yields the identity.
  std::int64_t found = -1;
  for (std::int64_t k = 0; k < 2000 && found < 0; ++k) {
    const auto p = block_permutation({2, PrivateKey{k}});
    if (std::is_sorted(p.begin(), p.end())) found = k;
  }
  ASSERT_GE(found, 0);
  const auto img = random_image(4, 4, 3, 8);
  EXPECT_EQ(block_pixel_shuffle(img, {2, PrivateKey{found}}), img);
}

TEST(BlockShuffle, RejectsIndivisibleDims) {
  EXPECT_THROW(block_pixel_shuffle(random_image(6, 8, 3, 1), {4, PrivateKey{1}}), std::invalid_argument);
}

TEST(Normalization, StandardisesTrainingSet) {
  data::SyntheticSpec spec;
  spec.count = 200;
  const auto ds = data::synthetic_dataset(spec);
  const auto st = fit_normalization(ds.images);
  const auto y = apply_normalization(ds.images, st);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    const std::size_t n = y.size() / 3;
    for (std::size_t i = c; i < y.size(); i += 3) s += y[i];
    const double mean = s / double(n);
    for (std::size_t i = c; i < y.size(); i += 3) ss += (y[i] - mean) * (y[i] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(std::sqrt(ss / double(n)), 1.0, 1e-4);
  }
}

TEST(Normalization, OrderIndependentAndRejectsConstantChannel) {
  data::SyntheticSpec spec;
  spec.count = 50;
  const auto ds = data::synthetic_dataset(spec);
  Tensor<float> reversed(ds.images.dims());
  for (std::size_t i = 0; i < 50; ++i)
    std::copy(ds.images.item(49 - i).begin(), ds.images.item(49 - i).end(), reversed.item(i).begin());
  EXPECT_EQ(fit_normalization(ds.images), fit_normalization(reversed));

  Tensor<float> flat({4, 2, 2, 3}, 0.5f);
  for (std::size_t i = 0; i < flat.size(); i += 3) flat[i] = float(i);
  EXPECT_THROW(fit_normalization(flat), std::invalid_argument);
}

TEST(Normalization, VjpScalesByInverseStd) {
  NormalizationStats st{{0.1, 0.2}, {2.0, 4.0}};
  Tensor<float> g({2, 2}, 1.0f);
  normalization_vjp(g, st);
  EXPECT_EQ(g.values(), (std::vector<float>{0.5f, 0.25f, 0.5f, 0.25f}));
}

TEST(CutMix, Extremes) {
  const auto a = random_image(8, 8, 3, 1), b = random_image(8, 8, 3, 2);
  const auto keep = cutmix_with(a, b, 1.0, 3, 3);
  EXPECT_EQ(keep.image, a);
  EXPECT_EQ(keep.weight_a, 1.0);
  const auto full = cutmix_with(a, b, 0.0, 4, 4);
  EXPECT_EQ(full.image, b);
  EXPECT_EQ(full.weight_b, 1.0);
}

TEST(CutMix, ClippedBoxWeights) {
  const auto a = random_image(8, 8, 1, 1), b = random_image(8, 8, 1, 2);
  // sqrt(1 - 0.75) = 0.5 -> 4x4 box centred at the corner, clipped to 2x2.
  const auto r = cutmix_with(a, b, 0.75, 0, 0);
  EXPECT_DOUBLE_EQ(r.weight_b, 4.0 / 64.0);
  std::size_t from_b = 0;
  for (std::size_t i = 0; i < 64; ++i) from_b += r.image[i] == b[i] && r.image[i] != a[i];
  EXPECT_EQ(from_b, 4u);
}

TEST(CutMix, RandomWeightsSumToOne) {
  const auto a = random_image(16, 16, 3, 1), b = random_image(16, 16, 3, 2);
  RngStream s(3);
  for (int i = 0; i < 200; ++i) {
    const auto r = cutmix(a, b, s);
    EXPECT_DOUBLE_EQ(r.weight_a + r.weight_b, 1.0);
    EXPECT_GE(r.weight_a, 0.0);
    EXPECT_GE(r.weight_b, 0.0);
  }
}
