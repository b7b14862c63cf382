#include <gtest/gtest.h>

#include <cmath>

#include "crashnarr/error.hpp"
#include "crashnarr/metrics.hpp"
#include "crashnarr/rng.hpp"
#include "oracles.hpp"

using namespace crashnarr;

namespace {

std::vector<Prediction> preds(std::initializer_list<const char*> xs) {
  std::vector<Prediction> out;
  for (const char* x : xs) {
    if (x) {
      out.emplace_back(LabelToken(x));
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

std::vector<LabelToken> labels(std::initializer_list<const char*> xs) {
  std::vector<LabelToken> out;
  for (const char* x : xs) out.emplace_back(x);
  return out;
}

std::vector<LabelToken> as_gold(const std::vector<Prediction>& p) {
  std::vector<LabelToken> out;
  for (const auto& x : p) out.push_back(*x);
  return out;
}

template <typename Fn>
Errc error_of(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::IoError;
}

const LabelSet kUnknown{LabelToken("9")};

}  // namespace

TEST(Accuracy, Examples) {
  EXPECT_DOUBLE_EQ(accuracy(preds({"1", "1", "2"}), labels({"1", "2", "2"})), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(accuracy(preds({"1", "4", "2"}), labels({"1", "9", "2"}), kUnknown), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(preds({nullptr, nullptr}), labels({"1", "2"})), 0.0);
  EXPECT_EQ(error_of([] { accuracy(preds({"1"}), labels({"9"}), kUnknown); }),
            Errc::EmptyAfterExclusion);
  EXPECT_EQ(error_of([] { accuracy(preds({"1"}), labels({"9", "1"})); }), Errc::LengthMismatch);
}

TEST(Accuracy, RecordsSkipDropped) {
  std::vector<PredictionRecord> r{{"a", "m", 1, LabelToken("1"), LabelToken("1"), 0, false, ""},
                                  {"b", "m", 1, std::nullopt, LabelToken("2"), 0, true, "x"},
                                  {"c", "m", 1, std::nullopt, LabelToken("2"), 0, false, "x"}};
  EXPECT_DOUBLE_EQ(accuracy(r), 0.5);
}

TEST(MacroF1, HandConfusionMatrix) {
  EXPECT_DOUBLE_EQ(macro_f1(preds({"0", "0", "1", "1"}), labels({"0", "1", "0", "1"})), 0.5);
  EXPECT_DOUBLE_EQ(macro_f1(preds({"0", "1", "4"}), labels({"0", "1", "4"})), 1.0);
}

TEST(MacroF1, LabelSpaceAveraging) {
  // category 2 never occurs: F1 0 under label-space averaging
  const auto p = preds({"0", "1"});
  const auto g = labels({"0", "1"});
  EXPECT_DOUBLE_EQ(macro_f1(p, g, {}, F1Average::LabelSpace, labels({"0", "1", "2"})), 2.0 / 3.0);
}

TEST(MacroF1, MatchesBruteForceOracle) {
  Rng rng(42);
  const std::vector<std::string> space{"0", "1", "2", "4", "5", "6", "9"};
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.index(50);
    const auto p = oracle::random_predictions(rng, n, space, 0.1);
    const auto g = as_gold(oracle::random_predictions(rng, n, space, 0.0));
    const LabelSet excl = t % 2 ? kUnknown : LabelSet{};
    bool any = false;
    for (const auto& x : g) any = any || !excl.count(x);
    if (!any) continue;
    EXPECT_NEAR(macro_f1(p, g, excl), oracle::macro_f1(p, g, excl), 1e-12);
    EXPECT_NEAR(accuracy(p, g, excl), oracle::accuracy(p, g, excl), 1e-12);
  }
}

TEST(Agreement, Examples) {
  EXPECT_DOUBLE_EQ(agreement(preds({"1", "2"}), preds({"1", "2"})), 1.0);
  EXPECT_DOUBLE_EQ(agreement(preds({"1", "2"}), preds({"2", "1"})), 0.0);
  EXPECT_DOUBLE_EQ(agreement(preds({"1", "2", "3"}), preds({"1", "2", "4"})), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(agreement(preds({nullptr}), preds({nullptr})), 0.0);
  EXPECT_EQ(error_of([] { agreement(preds({"1"}), preds({"1", "2"})); }), Errc::LengthMismatch);
}

TEST(Consistency, DeterministicParticipantsAndGroundTruth) {
  const auto gt = labels({"1", "2", "4", "4"});
  std::vector<Participant> ps{{"A", preds({"1", "2", "4", "5"}), preds({"1", "2", "4", "5"})},
                              {"B", preds({"1", "1", "4", "4"}), preds({"1", "1", "4", "4"})}};
  const auto m = consistency_matrix(ps, gt);
  ASSERT_EQ(m.participants.size(), 3u);
  EXPECT_EQ(m.participants.back(), kGroundTruthId);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(m.values(i, i), 1.0);
  EXPECT_TRUE(m.symmetric(1e-12));
  // GT column equals accuracy
  EXPECT_DOUBLE_EQ(m.values(0, 2), accuracy(ps[0].run1, gt));
  EXPECT_DOUBLE_EQ(m.values(2, 1), accuracy(ps[1].run1, gt));
  EXPECT_DOUBLE_EQ(m.overall(), 0.5);
  EXPECT_DOUBLE_EQ(m.overall(true), (0.5 + 0.75 + 0.75) / 3.0);
}

TEST(Consistency, MissingRepeatGivesNanDiagonal) {
  std::vector<Participant> ps{{"A", preds({"1"}), {}}, {"B", preds({"1"}), preds({"2"})}};
  const auto m = consistency_matrix(ps);
  EXPECT_TRUE(std::isnan(m.values(0, 0)));
  EXPECT_DOUBLE_EQ(m.values(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(m.overall(), 1.0);
}

TEST(Consistency, ReferenceFixtureAggregates) {
  const auto fx = oracle::load_consistency_fixture(std::string(CRASHNARR_TEST_DATA) +
                                              "/fixtures/consistency_predictions.tsv");
  std::vector<Participant> ps;
  for (std::size_t i = 0; i < fx.models.size(); ++i) {
    ps.push_back({fx.models[i], fx.predictions[i], fx.predictions[i]});
  }
  const auto m = consistency_matrix(ps, fx.ground_truth);
  EXPECT_NEAR(m.overall(false), 0.9443, 5e-5);
  EXPECT_NEAR(m.overall(true), 0.9438, 5e-5);
}

TEST(Distribution, Examples) {
  const auto d = label_distribution(labels({"1", "1", "2"}), labels({"1", "2", "9"}));
  EXPECT_DOUBLE_EQ(d.probabilities[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(d.probabilities[1], 1.0 / 3.0);
  EXPECT_EQ(d.probabilities[2], 0.0);
  EXPECT_EQ(error_of([] { label_distribution(labels({"3"}), labels({"1", "2"})); }),
            Errc::UnknownLabel);
  EXPECT_EQ(error_of([] { label_distribution(labels({"1"}), labels({"1", "1"})); }),
            Errc::SupportMismatch);
}

TEST(Distribution, UnknownMassSurvivesTextRoundTrip) {
  // 16 of 1000 cases Unknown (1.6%)
  std::vector<LabelToken> xs(1000, LabelToken("4"));
  for (int i = 0; i < 16; ++i) xs[i] = LabelToken("9");
  const auto d = label_distribution(xs, labels({"0", "1", "2", "4", "5", "6", "9"}));
  EXPECT_EQ(format_metric(d.probabilities[6]), "0.016000");
  EXPECT_DOUBLE_EQ(std::stod(format_metric(d.probabilities[6])), 0.016);
}

TEST(JsDivergence, Examples) {
  LabelDistribution p{labels({"a", "b"}), {1.0, 0.0}};
  LabelDistribution q{labels({"a", "b"}), {0.0, 1.0}};
  EXPECT_DOUBLE_EQ(js_divergence(p, p), 0.0);
  EXPECT_NEAR(js_divergence(p, q), 1.0, 1e-15);
  LabelDistribution h{labels({"a", "b"}), {0.5, 0.5}};
  EXPECT_NEAR(js_divergence(h, p), 0.31128, 1e-5);
  EXPECT_NEAR(js_divergence(h, p), oracle::jsd({0.5, 0.5}, {1.0, 0.0}), 1e-12);
  LabelDistribution other{labels({"a", "c"}), {0.5, 0.5}};
  EXPECT_EQ(error_of([&] { js_divergence(h, other); }), Errc::SupportMismatch);
}

TEST(KendallTau, Examples) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> rev{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(kendall_tau_b(x, x), 1.0);
  EXPECT_DOUBLE_EQ(kendall_tau_b(x, rev), -1.0);
  const std::vector<double> tx{1, 1, 2, 3}, ty{1, 2, 2, 3};
  // pairs: (1,2) tie x; (1,3) C; (1,4) C; (2,3) tie y; (2,4) C; (3,4) C
  const double expected = 4.0 / std::sqrt(5.0 * 5.0);
  EXPECT_NEAR(kendall_tau_b(tx, ty), expected, 1e-15);
  EXPECT_NEAR(kendall_tau_b(tx, ty), oracle::tau_b(tx, ty), 1e-15);
  EXPECT_EQ(error_of([] { kendall_tau_b(std::vector<double>{1}, std::vector<double>{1}); }),
            Errc::TooFewPairs);
  EXPECT_EQ(error_of([] {
              kendall_tau_b(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3});
            }),
            Errc::DegenerateVariance);
}

TEST(KendallTau, MatchesPairCountingOracle) {
  Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.index(60);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.index(6));
      y[i] = static_cast<double>(rng.index(6));
    }
    try {
      EXPECT_NEAR(kendall_tau_b(x, y), oracle::tau_b(x, y), 1e-12);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::DegenerateVariance);
    }
  }
}

TEST(Spearman, PerfectAndTied) {
  const std::vector<double> x{1, 2, 3, 4}, y{10, 20, 30, 40};
  EXPECT_NEAR(spearman_rho(x, y), 1.0, 1e-15);
  const std::vector<double> a{1, 1, 2}, b{1, 2, 3};
  // ranks a: 1.5 1.5 3; b: 1 2 3
  EXPECT_NEAR(spearman_rho(a, b), 0.8660254037844386, 1e-12);
}

TEST(Report, TsvLayout) {
  EvalReport r{"tpl/1", "tax/1", {{"MANCOLL", "m", "All", "none", "accuracy", 0.5}}};
  EXPECT_EQ(r.to_tsv(),
            "# template_version=tpl/1 taxonomy_version=tax/1\n"
            "task\tmodel\tsubgroup\texclusion\tmetric\tvalue\n"
            "MANCOLL\tm\tAll\tnone\taccuracy\t0.500000\n");
  EXPECT_EQ(format_metric(std::nan("")), "nan");
}
