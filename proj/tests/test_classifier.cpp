#include <gtest/gtest.h>

#include <cmath>

#include "linac/classifier.hpp"
#include "linac/dataset.hpp"

using namespace linac;
using namespace linac::classifier;

namespace {

data::Dataset small_set(std::size_t count, std::uint64_t seed = 1) {
  data::SyntheticSpec spec;
  spec.count = count;
  spec.seed = seed;
  return data::synthetic_dataset(spec);
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch = 32;
  c.lr = 0.05;
  c.lr_drops = TrainConfig::proportional_drops(epochs);
  return c;
}

}  // namespace

TEST(Spec, ArchitectureShape) {
  const ClassifierSpec spec;
  const auto net = spec.network();
  EXPECT_EQ(net.input_dims(), (Dims{16, 16, 3}));
  EXPECT_EQ(net.output_dims(), (Dims{10}));
  std::vector<nn::LayerKind> kinds;
  for (const auto& l : net.layers()) kinds.push_back(l.kind);
  using K = nn::LayerKind;
  EXPECT_EQ(kinds, (std::vector<K>{K::kConv2d, K::kSwish, K::kConv2d, K::kSwish, K::kConv2d, K::kSwish,
                                   K::kGlobalAvgPool, K::kDense}));
  EXPECT_EQ(net.dims_at(3), (Dims{8, 8, 64}));
  ClassifierSpec defended;
  defended.input_channels = 64;
  EXPECT_EQ(defended.network().layers()[0].in_features, 64u);
}

TEST(Train, InitialLossNearLogTen) {
  const auto ds = small_set(128);
  const auto stats = transforms::fit_normalization(ds.images);
  const ClassifierSpec spec;
  RngStream init = derive_stream(PrivateKey{1}, StreamLabel::training()).fork(0);
  const auto params = initial_params(spec, init);
  const auto x = transforms::apply_normalization(ds.images, stats);
  const auto logits = nn::infer<float>(spec.network(), params, x);
  const auto lg = nn::softmax_cross_entropy<float>(logits, std::span<const int>(ds.labels));
  EXPECT_NEAR(lg.loss, std::log(10.0), 0.2);
}

TEST(Train, ConvWeightsHeScaled) {
  const ClassifierSpec spec;
  const auto net = spec.network();
  RngStream a(3), b(3);
  const auto plain = nn::init_params<float>(net, a);
  const auto he = initial_params(spec, b);
  ASSERT_EQ(plain.size(), he.size());
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& l = net.layers()[i];
    const float gain = l.kind == nn::LayerKind::kConv2d ? std::sqrt(2.0f) : 1.0f;
    const std::size_t off = net.param_offset(i);
    for (std::size_t k = 0; k < l.weight_count(); ++k) ASSERT_FLOAT_EQ(he[off + k], plain[off + k] * gain);
  }
}

TEST(Train, DeterministicAndEmaTracked) {
  const auto ds = small_set(200);
  const auto stats = transforms::fit_normalization(ds.images);
  const auto pre = make_preprocess(stats, {}, 1);
  const auto s = derive_stream(PrivateKey{2}, StreamLabel::training());
  const auto a = train_classifier(ds, {}, quick(2), s, pre);
  const auto b = train_classifier(ds, {}, quick(2), s, pre);
  EXPECT_EQ(a.model.params, b.model.params);
  EXPECT_EQ(a.model.ema, b.model.ema);
  ASSERT_EQ(a.curve.size(), 2u);
  EXPECT_NE(a.model.ema, a.model.params);
  for (float v : a.model.ema) ASSERT_TRUE(std::isfinite(v));
  for (const auto& c : a.curve) EXPECT_TRUE(std::isfinite(c.loss));
  EXPECT_EQ(a.model.stage(true).params, a.model.ema);
  EXPECT_EQ(a.model.stage(false).params, a.model.params);
}

TEST(Train, CutMixPathDeterministic) {
  const auto ds = small_set(64);
  const auto stats = transforms::fit_normalization(ds.images);
  auto cfg = quick(1);
  cfg.cutmix = true;
  const auto s = derive_stream(PrivateKey{3}, StreamLabel::training());
  const auto a = train_classifier(ds, {}, cfg, s, make_preprocess(stats, {}, 1));
  const auto b = train_classifier(ds, {}, cfg, s, make_preprocess(stats, {}, 1));
  EXPECT_EQ(a.model.params, b.model.params);
  cfg.cutmix = false;
  EXPECT_NE(train_classifier(ds, {}, cfg, s, make_preprocess(stats, {}, 1)).model.params, a.model.params);
}

TEST(Train, MemorisesTinySet) {
  const auto ds = small_set(16);
  const auto stats = transforms::fit_normalization(ds.images);
  auto cfg = quick(120);
  cfg.batch = 16;
  cfg.lr = 0.02;
  cfg.lr_drops.clear();
  cfg.weight_decay = 0;
  cfg.ema_decay = 0.9;
  const auto r = train_classifier(ds, {}, cfg, derive_stream(PrivateKey{4}, StreamLabel::training()),
                                  make_preprocess(stats, {}, 1));
  EXPECT_DOUBLE_EQ(accuracy(undefended_model(stats, r.model), ds), 1.0);
  EXPECT_LT(r.curve.back().loss, r.curve.front().loss);
}

TEST(Train, DivergenceIsReported) {
  const auto ds = small_set(64);
  auto cfg = quick(3);
  cfg.lr = 1e12;
  EXPECT_THROW(train_classifier(ds, {}, cfg, derive_stream(PrivateKey{5}, StreamLabel::training())),
               NonFiniteError);
}

TEST(Train, RejectsBadConfig) {
  const auto ds = small_set(8);
  auto cfg = quick(1);
  cfg.batch = 0;
  EXPECT_THROW(train_classifier(ds, {}, cfg, RngStream(1)), std::invalid_argument);
  auto bad = ds;
  bad.labels[0] = 10;
  EXPECT_THROW(train_classifier(bad, {}, quick(1), RngStream(1)), std::out_of_range);
}

TEST(Predict, ProbabilitiesAndBatchConsistency) {
  const ClassifierSpec spec;
  RngStream s(6);
  NetworkStage stage{spec.network(), nn::init_params<float>(spec.network(), s)};
  Tensor<float> x({5, 16, 16, 3});
  for (auto& v : x.values()) v = static_cast<float>(s.next_gaussian());
  const auto batch = predict(stage, x);
  for (std::size_t i = 0; i < 5; ++i) {
    double sum = 0;
    for (std::size_t c = 0; c < 10; ++c) sum += batch.probabilities[i * 10 + c];
    EXPECT_NEAR(sum, 1.0, 1e-6);
    const auto one = predict(stage, x.slice(i, 1));
    EXPECT_EQ(one.labels[0], batch.labels[i]);
  }
}

TEST(Predict, ArgmaxShiftInvariant) {
  RngStream s(7);
  Tensor<float> z({4, 10});
  for (auto& v : z.values()) v = static_cast<float>(s.next_gaussian());
  auto shifted = z;
  for (auto& v : shifted.values()) v += 100.0f;
  EXPECT_EQ(nn::argmax_rows(z), nn::argmax_rows(shifted));
}

TEST(Accuracy, ChanceOnRandomLabels) {
  auto ds = small_set(1000, 9);
  RngStream s(10);
  for (auto& y : ds.labels) y = static_cast<int>(s.next_below(10));
  const ClassifierSpec spec;
  RngStream init(11);
  NetworkStage stage{spec.network(), nn::init_params<float>(spec.network(), init)};
  const double acc = accuracy(stage, ds);
  EXPECT_GE(acc, 0.07);
  EXPECT_LE(acc, 0.13);
}

TEST(Accuracy, EmptyTransformIsIdentityPath) {
  const auto ds = small_set(40);
  const ClassifierSpec spec;
  RngStream init(12);
  NetworkStage stage{spec.network(), nn::init_params<float>(spec.network(), init)};
  const auto stats = transforms::fit_normalization(ds.images);
  const auto normalized = transforms::apply_normalization(ds.images, stats);
  const data::Dataset nds{normalized, ds.labels, 10};
  EXPECT_EQ(accuracy(stage, nds), accuracy(stage, ds, make_preprocess(stats, {}, 1)));
  EXPECT_EQ(accuracy(stage, nds), accuracy(PipelineModel(stats, {stage}), ds));
}
