#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "crashnarr/analysis.hpp"
#include "crashnarr/error.hpp"
#include "crashnarr/jsonl.hpp"
#include "crashnarr/rng.hpp"
#include "oracles.hpp"

using namespace crashnarr;
namespace fs = std::filesystem;

namespace {

std::vector<Prediction> as_pred(const std::vector<LabelToken>& xs) {
  return {xs.begin(), xs.end()};
}

std::vector<LabelToken> repeat(const std::vector<std::pair<const char*, int>>& spec) {
  std::vector<LabelToken> out;
  for (const auto& [label, n] : spec) {
    for (int i = 0; i < n; ++i) out.emplace_back(label);
  }
  return out;
}

}  // namespace

TEST(Baselines, ShippedFixtureIsCitedAndHasAnchors) {
  const auto rows = load_baselines(default_baselines_path());
  EXPECT_TRUE(lint_baselines(rows).empty());
  bool llama = false, gpt = false;
  for (const auto& r : rows) {
    if (r.model == "LLaMA3-8B" && r.steps == "1668" && r.task == "MANCOLL" && r.subgroup == "All" &&
        r.metric == "accuracy_pct") {
      EXPECT_EQ(r.value, "96.1");
      EXPECT_EQ(r.citation, "Table 3");
      llama = true;
    }
    if (r.model == "GPT-4o" && r.task == "CRASHTYPE" && r.subgroup == "=1" &&
        r.metric == "accuracy_pct") {
      EXPECT_EQ(r.value, "45.3");
      EXPECT_EQ(r.citation, "Table 4");
      gpt = true;
    }
  }
  EXPECT_TRUE(llama);
  EXPECT_TRUE(gpt);
}

TEST(Baselines, LintFlagsMissingCitation) {
  const auto path = fs::temp_directory_path() / "crashnarr_bad_baselines.tsv";
  write_text(path, std::string(kBaselineHeader) + "\nX\t1\tMANCOLL\tAll\taccuracy_pct\t50.0\t\n" +
                       "Y\t1\tMANCOLL\tAll\taccuracy_pct\t51.0\tTable 3\n");
  const auto rows = load_baselines(path);
  const auto issues = lint_baselines(rows);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_NE(issues[0].find("missing citation"), std::string::npos);
  fs::remove(path);
}

TEST(Baselines, ComparisonCopiesValuesVerbatim) {
  std::vector<BaselineRow> rows{{"M", "-", "MANCOLL", "All", "inference_time_ms", "< 1.0", "Table 3"}};
  std::vector<MetricRow> run{{"MANCOLL", "micro", "All", "-Unknown", "accuracy", 0.25}};
  EXPECT_EQ(baseline_comparison_tsv(rows, run),
            "source\tmodel\tsteps\ttask\tsubgroup\tmetric\tvalue\tcitation\n"
            "baseline\tM\t-\tMANCOLL\tAll\tinference_time_ms\t< 1.0\tTable 3\n"
            "run\tmicro\t-\tMANCOLL\tAll|-Unknown\taccuracy\t0.250000\tthis run\n");
}

TEST(Baselines, MetricRowsReadBack) {
  EvalReport r{"t", "x", {{"MANCOLL", "m", "All", "none", "accuracy", 0.125}}};
  const auto path = fs::temp_directory_path() / "crashnarr_rows.tsv";
  r.write(path);
  const auto rows = read_metric_rows(path);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].metric, "accuracy");
  EXPECT_DOUBLE_EQ(rows[0].value, 0.125);
  fs::remove(path);
}

TEST(Distributions, IdenticalSequences) {
  const auto gt = repeat({{"1", 3}, {"2", 2}, {"7", 1}});
  const auto a = analyze_distributions(gt, as_pred(gt), numeric_support(1, 16));
  EXPECT_EQ(a.jsd, 0.0);
  EXPECT_EQ(a.ground_truth.probabilities, a.predicted.probabilities);
  for (const auto& s : a.shifts) EXPECT_FALSE(s.flagged);
  EXPECT_EQ(a.ground_truth.support.size(), 16u);
}

TEST(Distributions, SupportRestrictionSkipsOtherCodes) {
  const auto gt = repeat({{"1", 2}, {"24", 3}});
  auto pred = as_pred(repeat({{"1", 1}, {"2", 1}, {"25", 3}}));
  pred[1] = std::nullopt;
  const auto a = analyze_distributions(gt, pred, numeric_support(1, 16));
  EXPECT_EQ(a.used, 1u);
  EXPECT_EQ(a.skipped, 4u);
}

TEST(Distributions, ComplementaryShiftIsFlagged) {
  const auto gt = repeat({{"1", 40}, {"2", 10}, {"6", 30}, {"7", 20}});
  const auto pred = as_pred(repeat({{"1", 25}, {"2", 25}, {"6", 45}, {"7", 5}}));
  const auto a = analyze_distributions(gt, pred, numeric_support(1, 16));
  EXPECT_GT(a.jsd, 0.0);
  ASSERT_EQ(a.shifts.size(), 2u);
  EXPECT_TRUE(a.shifts[0].flagged);
  EXPECT_TRUE(a.shifts[1].flagged);
  std::vector<double> p, q;
  for (std::size_t i = 0; i < 16; ++i) {
    p.push_back(a.ground_truth.probabilities[i]);
    q.push_back(a.predicted.probabilities[i]);
  }
  EXPECT_NEAR(a.jsd, oracle::jsd(p, q), 1e-12);
  EXPECT_NE(a.to_tsv().find("pair_shift 1/2"), std::string::npos);
}

TEST(Pairs, IdenticalPredictionsGiveZeroDifference) {
  std::vector<VehiclePairRow> rows{{24, 25, 24, 25}, {88, 89, 88, 89}, {1, 2, 1, 2}, {25, 24, 25, 24}};
  const auto a = analyze_pairs(rows);
  EXPECT_EQ(a.abs_difference, 0.0);
  EXPECT_EQ(a.tau_ground_truth, a.tau_predicted);
}

TEST(Pairs, MatchesPairCountingOracle) {
  Rng rng(3);
  std::vector<VehiclePairRow> rows;
  std::vector<double> g1, g2, p1, p2;
  for (int i = 0; i < 40; ++i) {
    VehiclePairRow r{double(20 + rng.index(10)), double(20 + rng.index(10)),
                     double(20 + rng.index(10)), double(20 + rng.index(10))};
    rows.push_back(r);
    g1.push_back(r.gt1);
    g2.push_back(r.gt2);
    p1.push_back(r.pred1);
    p2.push_back(r.pred2);
  }
  const auto a = analyze_pairs(rows);
  EXPECT_NEAR(a.tau_ground_truth, oracle::tau_b(g1, g2), 1e-12);
  EXPECT_NEAR(a.tau_predicted, oracle::tau_b(p1, p2), 1e-12);
  EXPECT_NEAR(a.abs_difference, std::abs(oracle::tau_b(g1, g2) - oracle::tau_b(p1, p2)), 1e-12);
}

TEST(Pairs, TooFewRows) {
  try {
    analyze_pairs({{1, 2, 1, 2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewPairs);
  }
}

TEST(Unknown, WatchedCategoriesReportedSeparately) {
  std::vector<PredictionRecord> recs;
  auto add = [&](const char* pred, const char* gold) {
    PredictionRecord r;
    r.example_id = std::to_string(recs.size());
    r.gold = LabelToken(gold);
    if (pred) r.predicted = LabelToken(pred);
    recs.push_back(r);
  };
  add("4", "9");
  add("4", "9");
  add("2", "9");
  add(nullptr, "9");
  add("6", "1");  // not gold-Unknown
  const std::vector<LabelToken> space{LabelToken("0"), LabelToken("1"), LabelToken("2"),
                                      LabelToken("4"), LabelToken("5"), LabelToken("6"),
                                      LabelToken("9")};
  const auto a = analyze_unknown(recs, space);
  EXPECT_EQ(a.cases, 4u);
  EXPECT_EQ(a.invalid, 1u);
  EXPECT_EQ(a.counts.at(LabelToken("4")), 2u);
  const auto tsv = a.to_tsv();
  EXPECT_NE(tsv.find("watch_category_2\t1\t0.250000"), std::string::npos);
  EXPECT_NE(tsv.find("watch_category_6\t0\t0.000000"), std::string::npos);
}
