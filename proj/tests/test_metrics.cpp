#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dqa/error.hpp"
#include "dqa/metrics.hpp"
#include "support.hpp"

using namespace dqa;
using namespace dqa::testing;

TEST(Metrics, CorrelationsMatchBruteForceWithTies) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 3 + rep % 8;
    ScorePairs p{tied_vector(rng, n, 4), tied_vector(rng, n, 5)};
    auto distinct = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return std::unique(v.begin(), v.end()) - v.begin();
    };
    if (distinct(p.predictions) < 2 || distinct(p.ground_truth) < 2) continue;
    EXPECT_NEAR(plcc(p), oracle_pearson(p.predictions, p.ground_truth), 1e-12);
    EXPECT_NEAR(srcc(p), oracle_spearman(p.predictions, p.ground_truth), 1e-12);
    EXPECT_NEAR(krcc(p), oracle_kendall_b(p.predictions, p.ground_truth), 1e-12);
  }
}

TEST(Metrics, KendallOnLargeInputMatchesOracle) {
  std::mt19937_64 rng(5);
  ScorePairs p{tied_vector(rng, 400, 30), tied_vector(rng, 400, 25)};
  EXPECT_NEAR(krcc(p), oracle_kendall_b(p.predictions, p.ground_truth), 1e-12);
}

TEST(Metrics, PerfectAndReversedOrder) {
  ScorePairs p{{1, 2, 3, 4}, {10, 20, 30, 40}};
  EXPECT_DOUBLE_EQ(srcc(p), 1.0);
  EXPECT_DOUBLE_EQ(krcc(p), 1.0);
  EXPECT_NEAR(plcc(p), 1.0, 1e-15);
  ScorePairs r{{4, 3, 2, 1}, {10, 20, 30, 40}};
  EXPECT_DOUBLE_EQ(krcc(r), -1.0);
  EXPECT_DOUBLE_EQ(srcc(r), -1.0);
}

TEST(Metrics, AverageRanks) {
  EXPECT_EQ(average_ranks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Metrics, RejectsBadInput) {
  EXPECT_THROW(plcc(ScorePairs{{1}, {1}}), PreconditionError);
  EXPECT_THROW(srcc(ScorePairs{{1, 2}, {1}}), PreconditionError);
  EXPECT_THROW(plcc(ScorePairs{{1, 1, 1}, {1, 2, 3}}), PreconditionError);
  EXPECT_THROW(krcc(ScorePairs{{1, std::nan(""), 3}, {1, 2, 3}}), PreconditionError);
}

TEST(Metrics, SaStMatchesPairEnumeration) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 100);
  const auto thresholds = default_thresholds();
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t n = 2 + rep % 7;
    std::vector<double> gt(n), pred;
    for (auto& g : gt) g = std::round(u(rng));
    pred = tied_vector(rng, n, 4);
    const SaStCurve curve = sa_st_curve(ScorePairs{pred, gt}, thresholds);
    std::size_t k = 0;
    for (double t : thresholds) {
      const auto expected = oracle_sa(pred, gt, t);
      if (!expected) continue;
      ASSERT_LT(k, curve.size());
      EXPECT_EQ(curve[k].threshold, t);
      EXPECT_NEAR(curve[k].accuracy, *expected, 1e-12);
      ++k;
    }
    EXPECT_EQ(k, curve.size());
  }
}

TEST(Metrics, SaStHandFixture) {
  // gt gaps: (1,2)=10, (1,3)=30, (2,3)=20. Prediction order gets (1,3) and (2,3) right, (1,2) wrong.
  ScorePairs p{{0.5, 0.6, 0.9}, {10, 20, 40}};
  // p: item1 0.5 < item2 0.6 agrees with gt 10 < 20; item3 highest. All right.
  const auto all_right = sa_st_curve(p, {0, 15, 25});
  ASSERT_EQ(all_right.size(), 3u);
  EXPECT_DOUBLE_EQ(all_right[0].accuracy, 1.0);
  ScorePairs q{{0.6, 0.5, 0.9}, {10, 20, 40}};
  const auto c = sa_st_curve(q, {0, 15, 25, 35});
  ASSERT_EQ(c.size(), 3u);  // no pair exceeds 35
  EXPECT_DOUBLE_EQ(c[0].accuracy, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c[1].accuracy, 1.0);
  EXPECT_DOUBLE_EQ(c[2].accuracy, 1.0);
  ScorePairs tie{{0.5, 0.5}, {10, 20}};
  EXPECT_DOUBLE_EQ(sa_st_curve(tie, {0})[0].accuracy, 0.0);
}

TEST(Metrics, AucHandTrapezoid) {
  // Trapezoids: (0..10) mean 0.75 -> 7.5, (10..30) mean 0.5 -> 10; span 30.
  SaStCurve c{{0, 1.0}, {10, 0.5}, {30, 0.5}};
  EXPECT_NEAR(pwrc_auc(c), 17.5 / 30.0, 1e-15);
  SaStCurve flat{{0, 0.8}, {100, 0.8}};
  EXPECT_NEAR(pwrc_auc(flat), 0.8, 1e-15);
  EXPECT_THROW(pwrc_auc(SaStCurve{{0, 1.0}}), PreconditionError);
}

TEST(Metrics, ThresholdValidation) {
  ScorePairs p{{1, 2}, {10, 20}};
  EXPECT_THROW(sa_st_curve(p, {5, 5}), PreconditionError);
  EXPECT_THROW(sa_st_curve(p, {-1, 5}), PreconditionError);
  EXPECT_THROW(sa_st_curve(p, {50, 60}), PreconditionError);  // no qualifying pair
}

TEST(Metrics, EvaluateConstantPredictions) {
  const EvalReport r = evaluate(ScorePairs{{0.5, 0.5, 0.5}, {10, 40, 70}});
  EXPECT_EQ(r.plcc, 0.0);
  EXPECT_EQ(r.srcc, 0.0);
  EXPECT_EQ(r.krcc, 0.0);
  EXPECT_EQ(r.auc, 0.0);
}

TEST(Metrics, MedianReport) {
  EvalReport a{5, 0.1, 0.2, 0.3, 0.4, {{0, 0.5}, {1, 0.6}}};
  EvalReport b{5, 0.5, 0.6, 0.7, 0.8, {{0, 0.7}}};
  EvalReport c{5, 0.3, 0.9, 0.1, 0.2, {{0, 0.9}, {1, 1.0}}};
  const EvalReport m = median_report({a, b, c});
  EXPECT_DOUBLE_EQ(m.plcc, 0.3);
  EXPECT_DOUBLE_EQ(m.srcc, 0.6);
  EXPECT_DOUBLE_EQ(m.krcc, 0.3);
  EXPECT_DOUBLE_EQ(m.auc, 0.4);
  ASSERT_EQ(m.sa_st.size(), 1u);
  EXPECT_DOUBLE_EQ(m.sa_st[0].accuracy, 0.7);
  const EvalReport even = median_report({a, b});
  EXPECT_DOUBLE_EQ(even.plcc, 0.3);
}

TEST(Metrics, ReportRoundTrip) {
  const EvalReport r = evaluate(ScorePairs{{0.1, 0.4, 0.35, 0.8}, {12.5, 40, 33.3, 90}});
  std::stringstream s;
  write_report(s, r);
  EXPECT_EQ(read_report(s), r);
}
