#include <gtest/gtest.h>

#include <cmath>

#include "linac/attacks.hpp"
#include "linac/classifier.hpp"
#include "linac/dataset.hpp"

using namespace linac;
using namespace linac::attacks;

namespace {

const transforms::NormalizationStats kUnit{{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};

NetworkStage linear_stage(std::size_t side, std::size_t classes, std::uint64_t seed) {
  NetworkStage st{nn::Network({nn::LayerSpec::flatten(), nn::LayerSpec::dense(side * side * 3, classes)},
                              {side, side, 3}),
                  {}};
  RngStream s(seed);
  st.params = nn::init_params<float>(st.net, s);
  return st;
}

Tensor<float> uniform_images(std::size_t n, std::size_t side, std::uint64_t seed) {
  RngStream s(seed);
  Tensor<float> x({n, side, side, 3});
  for (auto& v : x.values()) v = static_cast<float>(s.next_uniform());
  return x;
}

// Labels the model already predicts, so every example starts correct.
std::vector<int> own_labels(const ForwardModel& m, const Tensor<float>& x) { return predict_labels(m, x); }

double robust_accuracy(const AttackOutcome& o) {
  double c = 0;
  for (char s : o.success) c += !s;
  return c / static_cast<double>(o.success.size());
}

void expect_within_budget(const Tensor<float>& x, const AttackOutcome& o, const PerturbationBudget& b) {
  for (std::size_t i = 0; i < x.dim(0); ++i) EXPECT_TRUE(within_budget(x.item(i), o.adversarial.item(i), b)) << i;
}

}  // namespace

TEST(Project, L2ScalesOntoBall) {
  std::vector<float> d{2.0f, 0.0f, 0.0f, 0.0f};
  project(d, {}, PerturbationBudget::l2(0.5));
  EXPECT_FLOAT_EQ(d[0], 0.5f);
  std::vector<float> e{1.2f, 1.6f};  // norm 2
  project(e, {}, PerturbationBudget::l2(0.5));
  EXPECT_FLOAT_EQ(e[0], 0.3f);
  EXPECT_FLOAT_EQ(e[1], 0.4f);
}

TEST(Project, LinfInsideUnchangedAndZeroStaysZero) {
  std::vector<float> d{0.01f, -0.02f, 0.0f};
  const auto before = d;
  project(d, {}, PerturbationBudget::linf());
  EXPECT_EQ(d, before);
  std::vector<float> z(5, 0.0f);
  project(z, {}, PerturbationBudget::l2());
  EXPECT_EQ(z, std::vector<float>(5, 0.0f));
}

TEST(Project, ClampsIntoPixelBox) {
  std::vector<float> x{0.99f, 0.01f, 0.5f};
  std::vector<float> d{0.03f, -0.03f, 0.5f};
  project(d, x, PerturbationBudget::linf());
  EXPECT_FLOAT_EQ(x[0] + d[0], 1.0f);
  EXPECT_FLOAT_EQ(x[1] + d[1], 0.0f);
  EXPECT_FLOAT_EQ(d[2], static_cast<float>(8.0 / 255.0));
}

TEST(Budget, MaterializeAlwaysWithinBudget) {
  RngStream s(1);
  for (Norm norm : {Norm::kLinf, Norm::kL2}) {
    const PerturbationBudget b{norm, norm == Norm::kLinf ? 8.0 / 255.0 : 0.5};
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<float> x(48), d(48), out(48);
      for (auto& v : x) v = static_cast<float>(s.next_uniform());
      for (auto& v : d) v = static_cast<float>(s.next_gaussian());
      project(d, x, b);
      materialize(x, d, out, b);
      ASSERT_TRUE(within_budget(x, out, b));
    }
  }
  std::vector<float> x{0.5f}, bad{0.6f}, outside{1.01f};
  EXPECT_FALSE(within_budget(x, bad, PerturbationBudget::linf()));
  EXPECT_FALSE(within_budget(outside, outside, PerturbationBudget::linf()));
}

TEST(Pgd, LinearBinaryOneStepIsSignOfWeightGap) {
  const auto stage = linear_stage(2, 2, 3);
  const PipelineModel model(kUnit, {stage});
  Tensor<float> x({1, 2, 2, 3}, 0.5f);
  const std::vector<int> y{0};
  auto cfg = AttackConfig::pgd(1, 1);
  const auto b = PerturbationBudget::linf(0.05);
  // a 2*eps sign step saturates every coordinate whatever the random start
  cfg.step_size = 2 * b.epsilon;
  const auto o = pgd(model, x, y, b, cfg, RngStream(4));
  // dense weights are [in, out]
  for (std::size_t i = 0; i < 12; ++i) {
    const float gap = stage.params[i * 2 + 1] - stage.params[i * 2];
    const double expected = 0.5 + (gap > 0 ? 0.05 : -0.05);
    EXPECT_NEAR(o.adversarial[i], expected, 1e-6) << i;
  }
}

// p_y rounds to 1 in float here; the step must still follow the weight gap
// and the loss must still rank the stepped point above the start.
TEST(Pgd, ConfidentExampleKeepsTrueClassGradient) {
  auto stage = linear_stage(2, 2, 3);
  stage.params[24] = 40.0f;  // bias of class 0
  const PipelineModel model(kUnit, {stage});
  Tensor<float> x({1, 2, 2, 3}, 0.5f);
  const std::vector<int> y{0};
  auto cfg = AttackConfig::pgd(1, 1);
  const auto b = PerturbationBudget::linf(0.05);
  cfg.step_size = 2 * b.epsilon;
  const auto o = pgd(model, x, y, b, cfg, RngStream(4));
  for (std::size_t i = 0; i < 12; ++i) {
    const float gap = stage.params[i * 2 + 1] - stage.params[i * 2];
    EXPECT_NEAR(o.adversarial[i], 0.5 + (gap > 0 ? 0.05 : -0.05), 1e-6) << i;
  }
  EXPECT_GT(o.best_loss[0], 0.0);
  EXPECT_NEAR(attacks::detail::cross_entropy_row(std::vector<float>{45.0f, 0.0f}.data(), 2, 0), std::exp(-45.0), 1e-30);
}

TEST(Pgd, BudgetDeterminismAndEffect) {
  const PipelineModel model(kUnit, {linear_stage(8, 10, 5)});
  const auto x = uniform_images(24, 8, 6);
  const auto y = own_labels(model, x);
  for (const auto& b : {PerturbationBudget::linf(), PerturbationBudget::l2()}) {
    const auto a = pgd(model, x, y, b, AttackConfig::pgd(10, 2), RngStream(7));
    const auto again = pgd(model, x, y, b, AttackConfig::pgd(10, 2), RngStream(7));
    expect_within_budget(x, a, b);
    EXPECT_EQ(a.adversarial, again.adversarial);
    EXPECT_EQ(a.success, again.success);
    EXPECT_LT(robust_accuracy(a), 0.5);
    for (std::size_t q : a.queries) EXPECT_EQ(q, 2u * 11u);
    for (std::size_t i = 0; i < 24; ++i)
      EXPECT_EQ(bool(a.success[i]), predict_labels(model, a.adversarial.slice(i, 1))[0] != y[i]);
  }
}

TEST(Pgd, RejectsBadInputs) {
  const PipelineModel model(kUnit, {linear_stage(4, 10, 1)});
  const auto x = uniform_images(2, 4, 1);
  const std::vector<int> y{0};
  EXPECT_THROW(pgd(model, x, y, PerturbationBudget::linf(), AttackConfig::pgd(1, 1), RngStream(1)),
               std::invalid_argument);
  const std::vector<int> yy{0, 1};
  EXPECT_THROW(pgd(model, x, yy, PerturbationBudget::linf(0), AttackConfig::pgd(1, 1), RngStream(1)),
               std::invalid_argument);
  EXPECT_THROW(pgd(model, x, yy, PerturbationBudget::linf(), AttackConfig::pgd(0, 1), RngStream(1)),
               std::invalid_argument);
}

TEST(MultiTargeted, NoWeakerThanUntargetedAndWithinBudget) {
  const PipelineModel model(kUnit, {linear_stage(8, 10, 8)});
  const auto x = uniform_images(30, 8, 9);
  const auto y = own_labels(model, x);
  const auto b = PerturbationBudget::linf(2.0 / 255.0);
  const auto u = pgd(model, x, y, b, AttackConfig::pgd(10, 1), RngStream(10));
  const auto m = mt_pgd(model, x, y, b, AttackConfig::mt_pgd(10, 1), RngStream(10));
  expect_within_budget(x, m, b);
  EXPECT_LE(robust_accuracy(m), robust_accuracy(u) + 0.02);
  // one run per wrong class when restarts < classes - 1
  for (std::size_t q : m.queries) EXPECT_EQ(q, 9u * 11u);
}

TEST(MultiTargeted, SingleTargetFlipsBinaryModel) {
  const PipelineModel model(kUnit, {linear_stage(4, 2, 11)});
  const auto x = uniform_images(10, 4, 12);
  const auto y = own_labels(model, x);
  const auto b = PerturbationBudget::linf(0.5);
  const auto m = mt_pgd(model, x, y, b, AttackConfig::mt_pgd(5, 1), RngStream(13));
  for (char s : m.success) EXPECT_TRUE(s);
  const std::vector<int> one(10, 0);
  EXPECT_THROW(mt_pgd(PipelineModel(kUnit, {linear_stage(4, 1, 1)}), x, one, b, AttackConfig::mt_pgd(1, 1),
                      RngStream(1)),
               std::invalid_argument);
}

TEST(Square, GradientFreeQueryBoundedMonotone) {
  const PipelineModel model(kUnit, {linear_stage(8, 10, 14)});
  const auto x = uniform_images(12, 8, 15);
  const auto y = own_labels(model, x);
  for (const auto& b : {PerturbationBudget::linf(4.0 / 255.0), PerturbationBudget::l2(0.3)}) {
    auto cfg = AttackConfig::square(200, 2);
    cfg.record_history = true;
    const PipelineModel fresh(kUnit, {linear_stage(8, 10, 14)});
    const auto o = square_attack(fresh, x, y, b, cfg, RngStream(16));
    EXPECT_EQ(fresh.backward_calls(), 0u);
    EXPECT_LE(fresh.forward_calls(), 12u * 200u * 2u);
    expect_within_budget(x, o, b);
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_LE(o.queries[i], 400u);
      EXPECT_GE(o.queries[i], 1u);
    }
    EXPECT_EQ(o.adversarial, square_attack(model, x, y, b, cfg, RngStream(16)).adversarial);
    cfg.restarts = 1;
    const auto single = square_attack(model, x, y, b, cfg, RngStream(17));
    for (const auto& h : single.history) {
      ASSERT_FALSE(h.empty());
      for (std::size_t k = 1; k < h.size(); ++k) EXPECT_GT(h[k], h[k - 1]);
    }
  }
}

TEST(Square, SucceedsOnLinearModel) {
  const PipelineModel model(kUnit, {linear_stage(8, 10, 17)});
  const auto x = uniform_images(20, 8, 18);
  const auto y = own_labels(model, x);
  const auto o = square_attack(model, x, y, PerturbationBudget::linf(), AttackConfig::square(500, 1), RngStream(19));
  EXPECT_LT(robust_accuracy(o), 0.5);
}

TEST(RunAttack, GradientAttacksNeedDifferentiableModel) {
  const PipelineModel model(kUnit, {linear_stage(4, 10, 1)});
  const ForwardOnly hidden(model);
  const auto x = uniform_images(2, 4, 1);
  const std::vector<int> y{0, 1};
  EXPECT_THROW(run_attack(hidden, x, y, PerturbationBudget::linf(), AttackConfig::pgd(1, 1), RngStream(1)),
               std::invalid_argument);
  EXPECT_NO_THROW(run_attack(hidden, x, y, PerturbationBudget::linf(), AttackConfig::square(5, 1), RngStream(1)));
}

TEST(Bpda, IdentityDefenceReducesToPgd) {
  const auto stage = linear_stage(8, 10, 20);
  const PipelineModel plain(kUnit, {stage});
  const TransformedModel defended(kUnit, transforms::TransformSpec{}, stage, 1);
  const auto x = uniform_images(10, 8, 21);
  const auto y = own_labels(plain, x);
  const auto b = PerturbationBudget::linf();
  const auto cfg = AttackConfig::pgd(5, 2);
  const auto a = pgd(plain, x, y, b, cfg, RngStream(22));
  const auto c = bpda_attack(defended, {}, x, y, b, cfg, RngStream(22));
  EXPECT_EQ(a.adversarial, c.adversarial);
  EXPECT_EQ(a.success, c.success);
  EXPECT_EQ(a.best_loss, c.best_loss);
}

namespace {

transforms::TransformSpec shuffle_spec(std::int64_t key) {
  transforms::TransformSpec t;
  t.kind = transforms::TransformKind::kBlockShuffle;
  t.block = 4;
  t.fit.key = PrivateKey{key};
  return t;
}

}  // namespace

TEST(Pba, BlockLinearStartsAtIdentity) {
  PbaConfig cfg;
  cfg.arch = BypassArch::kBlockLinear;
  const auto net = bypass_network(cfg, 8, 8, 3);
  RngStream s(1);
  const auto params = nn::init_params<float>(net, s);
  const auto x = uniform_images(3, 8, 2);
  EXPECT_EQ(nn::infer<float>(net, params, x), x);
  PbaConfig conv;
  conv.out_channels = 7;
  EXPECT_EQ(bypass_network(conv, 8, 8, 3).output_dims(), (Dims{8, 8, 7}));
}

TEST(Pba, TrainsBypassOnlyAndLowersLoss) {
  const auto stage = linear_stage(8, 10, 23);
  const auto frozen = stage.params;
  const TransformedModel defended(kUnit, shuffle_spec(24), stage, 1);
  const auto x = uniform_images(64, 8, 25);
  const data::Dataset train{x, predict_labels(defended, x), 10};
  PbaConfig cfg;
  cfg.arch = BypassArch::kBlockLinear;
  cfg.epochs = 6;
  cfg.batch = 16;
  cfg.lr = 0.01;
  cfg.lr_drops = {};
  const auto bp = train_pba(stage, kUnit, train, cfg);
  EXPECT_EQ(stage.params, frozen);
  ASSERT_EQ(bp.epoch_loss.size(), 6u);
  EXPECT_LT(bp.epoch_loss.back(), bp.epoch_loss.front());
  const auto again = train_pba(stage, kUnit, train, cfg);
  EXPECT_EQ(bp.stage.params, again.stage.params);

  const auto bypass = bypass_model(bp, stage, kUnit);
  const auto y = train.labels;
  const auto b = PerturbationBudget::linf();
  const auto o = pba_attack(bp, stage, kUnit, x, y, b, AttackConfig::pgd(5, 1), RngStream(26));
  expect_within_budget(x, o, b);
  EXPECT_EQ(o.adversarial, pgd(bypass, x, y, b, AttackConfig::pgd(5, 1), RngStream(26)).adversarial);

  cfg.arch = BypassArch::kConv3x3;
  cfg.out_channels = 4;
  EXPECT_THROW(train_pba(stage, kUnit, train, cfg), std::invalid_argument);
}

TEST(BruteForce, SortedAndTrueKeyMatchesCleanAccuracy) {
  const auto stage = linear_stage(8, 10, 27);
  const auto truth = shuffle_spec(28);
  const TransformedModel defended(kUnit, truth, stage, 1);
  const auto x = uniform_images(40, 8, 29);
  const data::Dataset batch{x, predict_labels(defended, x), 10};
  std::vector<PrivateKey> keys;
  for (std::int64_t k = 100; k < 110; ++k) keys.push_back(PrivateKey{k});
  keys.insert(keys.begin() + 4, truth.key());
  const auto table = brute_force_keys(stage, kUnit, truth, keys, batch, 1);
  ASSERT_EQ(table.size(), 11u);
  for (std::size_t i = 1; i < table.size(); ++i) EXPECT_GE(table[i - 1].accuracy, table[i].accuracy);
  EXPECT_EQ(table.front().key, truth.key());
  EXPECT_EQ(table.front().index, 4u);
  EXPECT_DOUBLE_EQ(table.front().accuracy, 1.0);
  EXPECT_LT(table.back().accuracy, 1.0);
  EXPECT_THROW(brute_force_keys(stage, kUnit, truth, {}, batch, 1), std::invalid_argument);
}

TEST(Transfer, MatrixShapeAndWhiteBoxReduction) {
  const PipelineModel a(kUnit, {linear_stage(8, 10, 30)});
  const PipelineModel other(kUnit, {linear_stage(8, 10, 31)});
  const auto x = uniform_images(16, 8, 32);
  const data::Dataset ds{x, predict_labels(a, x), 10};
  const std::vector<SourceModel> sources{{"self", &a}, {"other", &other}};
  const std::vector<NamedAttack> atks{{"pgd", PerturbationBudget::linf(), AttackConfig::pgd(5, 1)},
                                      {"square", PerturbationBudget::linf(), AttackConfig::square(50, 1)}};
  const RngStream s(33);
  const auto m = transfer_attack(sources, a, atks, ds, s);
  ASSERT_EQ(m.cells.size(), 2u);
  ASSERT_EQ(m.cells[0].size(), 2u);
  EXPECT_EQ(m.sources, (std::vector<std::string>{"self", "other"}));
  for (std::size_t ai = 0; ai < 2; ++ai) {
    const auto direct = run_attack(a, x, ds.labels, atks[ai].budget, atks[ai].config, s.fork(ai));
    EXPECT_EQ(m.cells[0][ai], direct.robust_correct());
    EXPECT_EQ(m.cells[0][ai], evaluate_on(a, direct.adversarial, ds.labels));
  }
  const std::vector<SourceModel> null_source{{"none", nullptr}};
  EXPECT_THROW(transfer_attack(null_source, a, atks, ds, s), std::invalid_argument);
}
