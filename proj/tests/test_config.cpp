#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "linac/config.hpp"

using namespace linac;
using namespace linac::config;
using json_io::ConfigError;
using json_io::json;

namespace {

// Path of the ConfigError thrown by from_json, or "" if none is thrown.
std::string error_path(const json& j) {
  try {
    from_json(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

}  // namespace

TEST(Preset, PaperDefaults) {
  const auto c = *preset("paper-appendix-a");
  EXPECT_EQ(c.transform.arch.layers, 5u);
  EXPECT_EQ(c.transform.arch.width, 256u);
  EXPECT_EQ(c.transform.arch.freqs, 5u);
  EXPECT_EQ(c.transform.fit.epochs, 10u);
  EXPECT_EQ(c.transform.fit.batch, 32u);
  EXPECT_DOUBLE_EQ(c.transform.fit.lr, 1e-3);
  EXPECT_DOUBLE_EQ(c.transform.fit.alpha, 1e-4);
  EXPECT_EQ(c.transform.repr_layer, 2u);
  EXPECT_EQ(c.transform.key().value, -2314326399425823309LL);
  EXPECT_EQ(c.train.epochs, 1000u);
  EXPECT_EQ(c.train.batch, 1024u);
  EXPECT_DOUBLE_EQ(c.train.lr, 0.4);
  EXPECT_EQ(c.train.lr_drops, (std::vector<std::size_t>{650, 800, 900, 950}));
  EXPECT_DOUBLE_EQ(c.train.ema_decay, 0.995);
  EXPECT_TRUE(c.train.cutmix);
  EXPECT_EQ(c.pba.epochs, 100u);
  EXPECT_DOUBLE_EQ(c.pba.lr, 0.1);
  EXPECT_EQ(c.pba.lr_drops, (std::vector<std::size_t>{65, 80, 90, 95}));

  bool pgd = false, mt = false, square = false;
  for (const auto& a : c.attacks) {
    if (a.config.kind == attacks::AttackKind::kPgd) {
      pgd = true;
      EXPECT_EQ(a.config.steps, 100u);
      EXPECT_EQ(a.config.restarts, 10u);
    } else if (a.config.kind == attacks::AttackKind::kMultiTargetedPgd) {
      mt = true;
      EXPECT_EQ(a.config.steps, 200u);
      EXPECT_EQ(a.config.restarts, 20u);
    } else {
      square = true;
      EXPECT_EQ(a.config.queries, 10000u);
      EXPECT_EQ(a.config.restarts, 10u);
    }
    if (a.budget.norm == attacks::Norm::kLinf) EXPECT_DOUBLE_EQ(a.budget.epsilon, 8.0 / 255.0);
    else EXPECT_DOUBLE_EQ(a.budget.epsilon, 0.5);
  }
  EXPECT_TRUE(pgd && mt && square);
  EXPECT_FALSE(preset("nope").has_value());
}

TEST(Preset, DeskIsSmallAndSelfConsistent) {
  const auto c = desk_small();
  EXPECT_EQ(c.dataset.kind, "synthetic");
  EXPECT_EQ(c.classifier.input_channels, c.transform.output_channels(3));
  EXPECT_NO_THROW(c.transform.validate());
  EXPECT_NO_THROW(c.train.validate());
  EXPECT_FALSE(c.attacks.empty());
}

TEST(Json, RoundTripPreservesEverything) {
  for (const char* name : {"paper-appendix-a", "desk-small"}) {
    auto c = *preset(name);
    if (c.dataset.kind != "synthetic") c.dataset = DatasetConfig{};
    const json j = to_json(c);
    const auto back = from_json(j);
    EXPECT_EQ(to_json(back), j) << name;
  }
}

TEST(Json, OverridesApplyOnTopOfPreset) {
  const auto c = from_json(json::parse(R"({
    "preset": "desk-small",
    "dataset": {"train_size": 100},
    "transform": {"kind": "block-shuffle", "key": 7, "block": 4},
    "attacks": [{"name": "pgd", "norm": "l2", "epsilon": 0.5, "kind": "pgd", "steps": 3, "restarts": 1,
                 "source": {"kind": "pba"}}],
    "output_dir": "x"
  })"));
  EXPECT_EQ(c.dataset.train_size, 100u);
  EXPECT_EQ(c.dataset.test_size, desk_small().dataset.test_size);
  EXPECT_EQ(c.transform.kind, transforms::TransformKind::kBlockShuffle);
  EXPECT_EQ(c.transform.key().value, 7);
  EXPECT_EQ(c.pba.arch, attacks::BypassArch::kBlockLinear);
  EXPECT_EQ(c.pba.block, 4u);
  ASSERT_EQ(c.attacks.size(), 1u);
  EXPECT_EQ(c.attacks[0].budget.norm, attacks::Norm::kL2);
  EXPECT_EQ(c.attacks[0].config.steps, 3u);
  EXPECT_EQ(c.attacks[0].source.kind, SourceKind::kPba);
  EXPECT_EQ(c.output_dir, "x");
}

TEST(Validation, PathPreciseErrors) {
  EXPECT_EQ(error_path(json::parse(R"({"bogus": 1})")), "bogus");
  EXPECT_EQ(error_path(json::parse(R"({"preset": "huge"})")), "preset");
  EXPECT_EQ(error_path(json::parse(R"({"dataset": {"kind": "mnist"}})")), "dataset.kind");
  EXPECT_EQ(error_path(json::parse(R"({"dataset": {"kind": "cifar10", "path": "/no/such/dir"}})")), "dataset.path");
  EXPECT_EQ(error_path(json::parse(R"({"dataset": {"train_size": -3}})")), "dataset.train_size");
  EXPECT_EQ(error_path(json::parse(R"({"transform": {"kind": "linac", "key": 1, "repr_layer": 5}})")),
            "transform.repr_layer");
  EXPECT_EQ(error_path(json::parse(R"({"transform": {"kind": "linac", "key": 1, "arch": {"depth": 3}}})")),
            "transform.arch.depth");
  EXPECT_EQ(error_path(json::parse(R"({"classifier": {"widths": [8, 0, 8]}})")), "classifier.widths[1]");
  EXPECT_EQ(error_path(json::parse(R"({"pba": {"lr": 0}})")), "pba.lr");
  EXPECT_EQ(error_path(json::parse(R"({"attacks": [{"name": "a", "norm": "linf", "kind": "pgd", "steps": 1, "restarts": 1,
                                          "epsilon": 0.1, "source": {"kind": "bpda"}},
                                         {"name": "b", "norm": "linf", "kind": "pgd", "steps": 0, "restarts": 1,
                                          "epsilon": 0.1, "source": {"kind": "bpda"}}]})")),
            "attacks[1].steps");
  EXPECT_EQ(error_path(json::parse(R"({"attacks": [{"name": "a", "norm": "linf", "kind": "pgd", "epsilon": -1,
                                          "source": {"kind": "bpda"}}]})")),
            "attacks[0].epsilon");
  EXPECT_EQ(error_path(json::parse(R"({"output_dir": ""})")), "output_dir");
  EXPECT_EQ(error_path(json::parse(R"({"dataset": {"image_size": 18}, "transform": {"kind": "block-shuffle",
                                        "key": 1, "block": 4}})")),
            "transform.block");
}

TEST(Validation, KeyRequiredForKeyedTransforms) {
  EXPECT_EQ(error_path(json::parse(R"({"transform": {"kind": "linac"}})")), "transform.key");
  EXPECT_EQ(error_path(json::parse(R"({"transform": {"kind": "block-shuffle", "block": 4}})")), "transform.key");
  EXPECT_EQ(error_path(json::parse(R"({"transform": {"kind": "none"},
                                      "attacks": [{"name": "p", "norm": "linf", "kind": "pgd", "epsilon": 0.1,
                                                   "source": {"kind": "direct"}}]})")),
            "");
}

TEST(Validation, DuplicateAndKeyedDirectAttacksRejected) {
  const auto dup = json::parse(R"({"attacks": [
    {"name": "p", "norm": "linf", "kind": "pgd", "epsilon": 0.1, "source": {"kind": "bpda"}},
    {"name": "p", "norm": "linf", "kind": "mt-pgd", "epsilon": 0.1, "source": {"kind": "bpda"}}]})");
  EXPECT_EQ(error_path(dup), "attacks[1].name");
  const auto distinct = json::parse(R"({"attacks": [
    {"name": "p", "norm": "linf", "kind": "pgd", "epsilon": 0.1, "source": {"kind": "bpda"}},
    {"name": "p", "norm": "linf", "kind": "pgd", "epsilon": 0.1, "source": {"kind": "pba"}}]})");
  EXPECT_EQ(error_path(distinct), "");
  const auto direct = json::parse(R"({"attacks": [
    {"name": "p", "norm": "linf", "kind": "pgd", "epsilon": 0.1, "source": {"kind": "direct"}}]})");
  EXPECT_EQ(error_path(direct), "attacks[0].source.kind");
}

TEST(Load, ReadsFileAndReportsBadJson) {
  const auto dir = std::filesystem::temp_directory_path() / "linac_config_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "ok.json") << R"({"preset": "desk-small", "attack_seed": 9})";
  EXPECT_EQ(load(dir / "ok.json").attack_seed, 9u);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_ANY_THROW(load(dir / "bad.json"));
  EXPECT_ANY_THROW(load(dir / "missing.json"));
}
