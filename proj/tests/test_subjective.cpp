#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dqa/error.hpp"
#include "dqa/subjective.hpp"
#include "support.hpp"

using namespace dqa;
using namespace dqa::testing;

namespace {

RawScoreTable random_table(std::mt19937_64& rng, std::size_t subjects, std::size_t items, double missing) {
  RawScoreTable t;
  for (std::size_t i = 0; i < subjects; ++i) t.subjects.push_back("s" + std::to_string(i));
  for (std::size_t j = 0; j < items; ++j) t.items.push_back({"img" + std::to_string(j / 3), "a" + std::to_string(j % 3)});
  std::uniform_real_distribution<double> u(1, 100), coin(0, 1);
  t.scores.assign(subjects, std::vector<std::optional<double>>(items));
  for (auto& row : t.scores) {
    for (auto& v : row) {
      if (coin(rng) >= missing) v = u(rng);
    }
    row[0] = u(rng);  // every subject has at least two ratings
    row[1] = u(rng);
  }
  for (std::size_t j = 0; j < items; ++j) t.scores[0][j] = u(rng);
  return t;
}

// 32 subjects; base quality per item, Gaussian rater noise, plus planted raters.
RawScoreTable screening_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> quality(30, 70);
  std::normal_distribution<double> noise(0, 8);
  const std::size_t n_items = 40;
  RawScoreTable t;
  for (int i = 0; i < 30; ++i) t.subjects.push_back("steady" + std::to_string(i));
  t.subjects.push_back("erratic");
  t.subjects.push_back("generous");
  for (std::size_t j = 0; j < n_items; ++j) t.items.push_back({"img" + std::to_string(j), "x"});
  t.scores.assign(t.subjects.size(), std::vector<std::optional<double>>(n_items));
  for (std::size_t j = 0; j < n_items; ++j) {
    const double q = quality(rng);
    for (int i = 0; i < 30; ++i) t.scores[i][j] = std::clamp(q + noise(rng), 1.0, 100.0);
    t.scores[30][j] = q + (j % 2 ? 22.0 : -22.0);
    t.scores[31][j] = q + 22.0;
  }
  return t;
}

}  // namespace

TEST(Subjective, ZScoresHaveZeroMeanUnitStd) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const RawScoreTable raw = random_table(rng, 3 + rep % 5, 9 + rep % 7, 0.3);
    const ZScoreTable z = zscore(raw);
    for (std::size_t i = 0; i < raw.subjects.size(); ++i) {
      std::vector<double> v;
      for (const auto& x : z.values[i]) {
        if (x) v.push_back(*x);
      }
      double mean = 0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0;
      for (double x : v) ss += (x - mean) * (x - mean);
      EXPECT_NEAR(mean, 0.0, 1e-9);
      EXPECT_NEAR(std::sqrt(ss / static_cast<double>(v.size() - 1)), 1.0, 1e-9);
    }
  }
}

TEST(Subjective, RescaleEndpoints) {
  EXPECT_EQ(rescale_value(-3.0), 0.0);
  EXPECT_EQ(rescale_value(0.0), 50.0);
  EXPECT_EQ(rescale_value(3.0), 100.0);
  EXPECT_EQ(rescale_value(-4.0), 0.0);
  EXPECT_EQ(rescale_value(7.0), 100.0);
}

TEST(Subjective, ConstantRaterIsNamed) {
  RawScoreTable t{{"a", "b"}, {{"i", "x"}, {"j", "x"}, {"k", "x"}}, {{50.0, 50.0, 50.0}, {10.0, 20.0, 30.0}}};
  try {
    zscore(t);
    FAIL();
  } catch (const ConstantRaterError& e) {
    EXPECT_EQ(e.subject(), "a");
  }
}

TEST(Subjective, MosHandValue) {
  // Subject rows with mean 20 and std 10: z = -1, 0, 1 -> 100(z+3)/6.
  RawScoreTable t{{"a", "b"}, {{"i", "x"}, {"j", "x"}, {"k", "x"}},
                  {{10.0, 20.0, 30.0}, {30.0, std::nullopt, 10.0}}};
  const MosTable m = mos(rescale(zscore(t)));
  ASSERT_EQ(m.entries.size(), 3u);
  const double lo = 100.0 * 2.0 / 6.0;
  const double hi = 100.0 * 4.0 / 6.0;
  // b: mean 20, std sqrt(200)
  const double zb = 10.0 / std::sqrt(200.0);
  EXPECT_NEAR(m.entries[0].mos, (lo + 100.0 * (zb + 3) / 6.0) / 2.0, 1e-12);
  EXPECT_NEAR(m.entries[1].mos, 50.0, 1e-12);
  EXPECT_EQ(m.entries[1].count, 1u);
  EXPECT_NEAR(m.entries[2].mos, (hi + 100.0 * (-zb + 3) / 6.0) / 2.0, 1e-12);
}

TEST(Subjective, MosInvariantUnderSubjectPermutation) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const RawScoreTable raw = random_table(rng, 6, 12, 0.2);
    RawScoreTable perm = raw;
    std::vector<std::size_t> order(raw.subjects.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size(); ++k) {
      perm.subjects[k] = raw.subjects[order[k]];
      perm.scores[k] = raw.scores[order[k]];
    }
    EXPECT_EQ(mos(rescale(zscore(raw))).entries, mos(rescale(zscore(perm))).entries);
  }
}

TEST(Subjective, ScreeningMatchesOracleAndRejectsErraticRater) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const RawScoreTable raw = screening_fixture(seed);
    RejectionReport report;
    const RawScoreTable kept = screen_subjects(raw, &report);
    EXPECT_EQ(report.rejected(), oracle_rejected(raw)) << "seed " << seed;
    const auto rejected = report.rejected();
    EXPECT_NE(std::find(rejected.begin(), rejected.end(), "erratic"), rejected.end()) << "seed " << seed;
    EXPECT_EQ(std::find(rejected.begin(), rejected.end(), "generous"), rejected.end()) << "seed " << seed;
    EXPECT_EQ(kept.subjects.size() + rejected.size(), raw.subjects.size());
  }
}

TEST(Subjective, ScreeningMatchesOracleOnRandomTables) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 30; ++rep) {
    const RawScoreTable raw = random_table(rng, 3 + rep % 10, 10, 0.25);
    RejectionReport report;
    try {
      screen_subjects(raw, &report);
    } catch (const IntegrityError&) {
    }
    EXPECT_EQ(report.rejected(), oracle_rejected(raw));
  }
}

TEST(Subjective, ScreeningPreconditions) {
  RawScoreTable two{{"a", "b"}, {{"i", "x"}}, {{1.0}, {2.0}}};
  EXPECT_THROW(screen_subjects(two), PreconditionError);
  RawScoreTable bad{{"a", "b", "c"}, {{"i", "x"}}, {{1.0}, {2.0}, {101.0}}};
  EXPECT_THROW(screen_subjects(bad), IntegrityError);
}

TEST(Subjective, PairedTMatchesBoostOracle) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  int disagreements = 0;
  for (int fixture = 0; fixture < 200; ++fixture) {
    const std::size_t len = 3 + fixture % 25;
    const double shift = (fixture % 7 - 3) * 0.25;
    std::vector<double> a(len), b(len);
    for (std::size_t k = 0; k < len; ++k) {
      b[k] = 50 + 10 * n(rng);
      a[k] = b[k] + shift + n(rng);
    }
    if (paired_t_decision(a, b, 0.95) != oracle_paired_t(a, b, 0.95)) ++disagreements;
  }
  EXPECT_EQ(disagreements, 0);
  const std::vector<double> x{1, 2, 3}, y{0, 1, 2};
  EXPECT_EQ(paired_t_decision(x, y, 0.95), 1);
  EXPECT_EQ(paired_t_decision(y, x, 0.95), -1);
  EXPECT_EQ(paired_t_decision(x, x, 0.95), 0);
}

TEST(Subjective, SignificanceMatrixAntisymmetric) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t algs = 2 + rep % 5;
    std::vector<std::vector<double>> cols(algs, std::vector<double>(15));
    std::vector<std::string> names;
    for (std::size_t a = 0; a < algs; ++a) {
      names.push_back("a" + std::to_string(a));
      for (auto& v : cols[a]) v = 50 + 0.3 * static_cast<double>(a) + n(rng);
    }
    const auto m = ttest_matrix(cols, names);
    for (std::size_t r = 0; r < algs; ++r) {
      EXPECT_EQ(m.entries[r][r], 0);
      for (std::size_t c = 0; c < algs; ++c) EXPECT_EQ(m.entries[r][c], -m.entries[c][r]);
    }
  }
}

TEST(Subjective, SummaryAndHistogram) {
  MosTable t;
  t.entries = {{{"i1", "a"}, 10, 3}, {{"i1", "b"}, 100, 3}, {{"i2", "a"}, 30, 3}, {{"i2", "b"}, 45, 3}};
  const auto s = algorithm_summary(t, {"a", "b"});
  EXPECT_DOUBLE_EQ(s[0].mean, 20.0);
  EXPECT_DOUBLE_EQ(s[0].std, std::sqrt(200.0));
  EXPECT_EQ(s[1].n, 2u);
  const Histogram h = mos_histogram(t, 10);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{0, 1, 0, 1, 1, 0, 0, 0, 0, 1}));
  EXPECT_EQ(h.edges.front(), 0.0);
  EXPECT_EQ(h.edges.back(), 100.0);
  MosTable gap;
  gap.entries = {{{"i1", "a"}, 10, 3}};
  EXPECT_THROW(algorithm_summary(gap, {"a", "b"}), IntegrityError);
}

TEST(Subjective, RawTableRoundTrip) {
  std::mt19937_64 rng(2);
  const RawScoreTable t = random_table(rng, 4, 6, 0.4);
  std::stringstream s;
  write_raw_scores(s, t);
  EXPECT_EQ(read_raw_scores(s), t);
  std::stringstream mos_text;
  const MosTable m = mos(rescale(zscore(t)));
  write_mos_table(mos_text, m);
  EXPECT_EQ(read_mos_table(mos_text).entries, m.entries);
}

TEST(Subjective, ParseErrors) {
  std::stringstream no_header("name,a:b\nx,1\n");
  EXPECT_THROW(read_raw_scores(no_header), ParseError);
  std::stringstream short_row("subject,a:b,c:d\nx,1\n");
  EXPECT_THROW(read_raw_scores(short_row), ParseError);
  std::stringstream bad_number("subject,a:b\nx,abc\n");
  EXPECT_THROW(read_raw_scores(bad_number), ParseError);
  std::stringstream bad_key("subject,ab\nx,1\n");
  EXPECT_THROW(read_raw_scores(bad_key), ParseError);
}
