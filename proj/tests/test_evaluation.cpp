#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "linac/evaluation.hpp"
#include "linac/rng.hpp"

using namespace linac;
using namespace linac::evaluation;
namespace fs = std::filesystem;

namespace {

std::vector<bool> bits(std::initializer_list<int> v) {
  std::vector<bool> out;
  for (int b : v) out.push_back(b != 0);
  return out;
}

std::vector<bool> random_bits(RngStream& s, std::size_t n, double p) {
  std::vector<bool> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = s.next_uniform() < p;
  return out;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("linac_eval_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(BestKnown, HandExample) {
  CorrectnessMask m(bits({1, 1, 1}));
  m.set("A", "s", bits({1, 0, 1}));
  m.set("B", "s", bits({1, 1, 0}));
  EXPECT_DOUBLE_EQ(best_known(m), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(robust_accuracy(m, "A", "s"), 2.0 / 3.0);
}

TEST(BestKnown, AllTrueAndNeutralColumn) {
  CorrectnessMask m(bits({1, 1, 1, 1}));
  m.set("A", "s", bits({1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(best_known(m), 1.0);
  m.set("B", "s", bits({1, 0, 1, 1}));
  const double before = best_known(m);
  m.set("C", "t", bits({1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(best_known(m), before);
}

TEST(BestKnown, CleanMistakesCountAgainst) {
  CorrectnessMask m(bits({0, 1}));
  m.set("A", "s", bits({1, 1}));
  EXPECT_DOUBLE_EQ(best_known(m), 0.5);
  EXPECT_DOUBLE_EQ(robust_accuracy(m, "A", "s"), 0.5);
}

TEST(BestKnown, Errors) {
  EXPECT_THROW(best_known(CorrectnessMask{}), std::invalid_argument);
  EXPECT_THROW(best_known(CorrectnessMask(bits({1}))), std::invalid_argument);
  CorrectnessMask m(bits({1, 1}));
  EXPECT_THROW(m.set("A", "s", bits({1})), std::invalid_argument);
  EXPECT_THROW(robust_accuracy(m, "A", "s"), std::invalid_argument);
}

TEST(BestKnown, MonotoneAsAttacksAndSourcesGrow) {
  RngStream s(1);
  for (int fixture = 0; fixture < 100; ++fixture) {
    const std::size_t n = 1 + s.next_below(40);
    CorrectnessMask m(random_bits(s, n, 0.9));
    double prev_known = 1.0;
    std::vector<double> prev_adv(3, 1.0);
    for (int step = 0; step < 6; ++step) {
      const std::string attack = "a" + std::to_string(s.next_below(3));
      const std::string source = "s" + std::to_string(s.next_below(3));
      // only fresh (attack, source) pairs so columns are added, never replaced
      if (m.get(attack, source)) continue;
      m.set(attack, source, random_bits(s, n, 0.7));
      const double known = best_known(m);
      ASSERT_LE(known, prev_known + 1e-15);
      ASSERT_LE(known, clean_accuracy(m));
      prev_known = known;
      const std::size_t ai = attack[1] - '0';
      const double adv = best_adversary(m, attack);
      ASSERT_LE(adv, prev_adv[ai] + 1e-15);
      ASSERT_LE(known, adv);
      prev_adv[ai] = adv;
    }
  }
}

TEST(BestAdversary, SingleSourceAndAllFalse) {
  CorrectnessMask m(bits({1, 1, 1, 0}));
  m.set("pgd", "a", bits({1, 0, 1, 1}));
  EXPECT_DOUBLE_EQ(best_adversary(m, "pgd"), robust_accuracy(m, "pgd", "a"));
  m.set("sq", "b", bits({0, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(best_adversary(m, "sq"), 0.0);
  EXPECT_THROW(best_adversary(m, "mt"), std::invalid_argument);
}

TEST(Report, TableShapeInvariantsAndFormatting) {
  CorrectnessMask m(bits({1, 1, 1, 1, 1, 1, 1, 0}));
  m.set("pgd", "nominal", bits({1, 0, 1, 1, 1, 1, 1, 1}));
  m.set("pgd", "bpda", bits({1, 1, 0, 1, 1, 1, 1, 1}));
  m.set("square", "direct", bits({1, 1, 1, 0, 1, 1, 1, 1}));
  const auto r = make_report(m, {{"norm", "linf"}});
  EXPECT_EQ(r.sources, (std::vector<std::string>{"nominal", "bpda", "direct"}));
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_FALSE(r.cells[1][0].has_value());
  EXPECT_DOUBLE_EQ(r.best_known, 4.0 / 8.0);
  for (std::size_t a = 0; a < r.attacks.size(); ++a)
    for (const auto& c : r.cells[a])
      if (c) {
        EXPECT_LE(r.best_known, *c);
        EXPECT_LE(*c, r.clean);
        EXPECT_LE(r.best_adversary[a], *c);
      }
  const std::string csv = report_csv(r);
  EXPECT_EQ(csv,
            "attack,nominal,bpda,direct,best_adversary\n"
            "pgd,75.00,75.00,,62.50\n"
            "square,,,75.00,75.00\n"
            "best_known,75.00,75.00,75.00,50.00\n");
  EXPECT_EQ(format_percent(0.81914), "81.91");
  EXPECT_EQ(format_percent(1.0 / 3.0), "33.33");
}

TEST(Report, CsvRoundTripReproducesValues) {
  RngStream s(2);
  CorrectnessMask m(random_bits(s, 37, 0.9));
  for (const char* a : {"pgd", "mt", "square"})
    for (const char* src : {"direct", "pba"}) m.set(a, src, random_bits(s, 37, 0.6));
  const auto r = make_report(m);
  const auto p = parse_report_csv(report_csv(r));
  EXPECT_EQ(p.sources, r.sources);
  ASSERT_EQ(p.rows.size(), 4u);
  for (std::size_t a = 0; a < 3; ++a) {
    EXPECT_EQ(p.rows[a], r.attacks[a]);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(*p.values[a][j], *r.cells[a][j] * 100, 0.005 + 1e-9);
    EXPECT_NEAR(*p.values[a][2], r.best_adversary[a] * 100, 0.005 + 1e-9);
  }
  EXPECT_NEAR(*p.values[3][2], r.best_known * 100, 0.005 + 1e-9);
  EXPECT_THROW(parse_report_csv("attack,a\n"), std::runtime_error);
  EXPECT_THROW(parse_report_csv("attack,a,best_adversary\npgd,1\nbest_known,1,1\n"), std::runtime_error);
}

TEST(Report, EmitWritesCsvAndJson) {
  const auto dir = scratch("emit");
  CorrectnessMask m(bits({1, 1}));
  m.set("pgd", "direct", bits({0, 1}));
  const auto r = emit_report(dir / "sub" / "report", m, {{"epsilon", 8.0 / 255.0}});
  EXPECT_EQ(slurp(dir / "sub" / "report.csv"), report_csv(r));
  const auto j = json::parse(slurp(dir / "sub" / "report.json"));
  EXPECT_DOUBLE_EQ(j["best_known"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j["metadata"]["epsilon"].get<double>(), 8.0 / 255.0);
}

TEST(Masks, SaveLoadAndMergeRecomputeExactly) {
  const auto dir = scratch("masks");
  RngStream s(3);
  CorrectnessMask m(random_bits(s, 50, 0.8));
  m.set("pgd", "direct", random_bits(s, 50, 0.5));
  m.set("pgd", "nominal", random_bits(s, 50, 0.5));
  save_masks(dir / "a.csv", m);
  const auto back = load_masks(dir / "a.csv");
  EXPECT_EQ(back.clean(), m.clean());
  EXPECT_EQ(*back.get("pgd", "nominal"), *m.get("pgd", "nominal"));
  EXPECT_EQ(report_csv(make_report(back)), report_csv(make_report(m)));

  CorrectnessMask late(m.clean());
  late.set("square", "direct", random_bits(s, 50, 0.5));
  auto merged = back;
  merged.merge(late);
  EXPECT_EQ(merged.column_count(), 3u);
  EXPECT_LE(best_known(merged), best_known(m));
  CorrectnessMask other(random_bits(s, 50, 0.1));
  EXPECT_THROW(merged.merge(other), std::invalid_argument);
}

TEST(Characterisation, HistogramCountsAndDump) {
  const std::vector<double> errors{0.1, 0.2, 0.2, 0.5, 0.9, 0.3};
  const auto h = histogram(errors, 4);
  std::size_t total = 0;
  for (auto c : h.counts) total += c;
  EXPECT_EQ(total, errors.size());
  EXPECT_DOUBLE_EQ(h.edges.front(), 0.1);
  EXPECT_DOUBLE_EQ(h.edges.back(), 0.9);
  EXPECT_EQ(h.counts.back(), 1u);
  EXPECT_THROW(histogram(errors, 0), std::invalid_argument);

  // two images, S = 3 steps per epoch, N = 2 epochs
  std::vector<std::vector<inr::TraceEntry>> traces(2);
  for (auto& t : traces)
    for (std::size_t k = 0; k < 6; ++k) t.push_back({k, 1e-3, 1.0 / double(k + 1), 0.5});
  const std::vector<double> finals{0.25, 0.75};
  Tensor<float> a({4}, 0.0f), b({4}, 0.0f);
  b[2] = 0.4f;
  const std::vector<KeyDifference> diffs{key_difference(0, PrivateKey{1}, PrivateKey{2}, a, b)};
  EXPECT_NEAR(diffs[0].max_abs, 0.4, 1e-7);
  EXPECT_NEAR(diffs[0].mean_abs, 0.1, 1e-7);

  const auto dir = scratch("char");
  const auto summary = characterisation_dump(dir, traces, finals, diffs, 5);
  EXPECT_EQ(summary.curve_rows, 2u * 3u * 2u);
  EXPECT_DOUBLE_EQ(summary.mean_final_error, 0.5);
  std::size_t counted = 0;
  for (auto c : summary.histogram.counts) counted += c;
  EXPECT_EQ(counted, 2u);
  for (const char* f : {"curves.csv", "final_errors.csv", "final_errors.lnt1", "histogram.csv",
                        "key_differences.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto stored = lnt1::load<double>(dir / "final_errors.lnt1");
  EXPECT_EQ(stored.values(), finals);
}
