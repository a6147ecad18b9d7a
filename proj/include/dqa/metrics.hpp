#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

namespace dqa {

// Predictions paired with ground-truth MOS; equal length, all finite.
struct ScorePairs {
  std::vector<double> predictions;
  std::vector<double> ground_truth;

  std::size_t size() const { return predictions.size(); }
  void validate(std::size_t min_size = 2) const;
};

struct CurvePoint {
  double threshold = 0.0;
  double accuracy = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

using SaStCurve = std::vector<CurvePoint>;

struct EvalReport {
  std::size_t n = 0;
  double plcc = 0.0;
  double srcc = 0.0;
  double krcc = 0.0;
  double auc = 0.0;
  SaStCurve sa_st;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

double plcc(const ScorePairs& pairs);
double srcc(const ScorePairs& pairs);
// Kendall tau-b, O(n log n) (Knight's merge-sort formulation).
double krcc(const ScorePairs& pairs);

// Fractional ranks starting at 1; ties receive the mean rank of their block.
std::vector<double> average_ranks(const std::vector<double>& v);

// Default significance-threshold grid 0, 1, ..., 100 (MOS units).
std::vector<double> default_thresholds();

// Sorting accuracy versus significance threshold. This is a stand-in for the
// perceptually weighted rank correlation: SA(T) is the fraction of pairs with
// |gt_i - gt_j| > T whose predictions are ordered the same way (strict sign
// agreement; prediction ties count as wrong). Thresholds with no qualifying
// pair are dropped.
SaStCurve sa_st_curve(const ScorePairs& pairs, const std::vector<double>& thresholds);

// Trapezoidal area under the curve divided by its threshold span.
double pwrc_auc(const SaStCurve& curve);

// All indicators on one test set. Constant predictions score 0 on the
// correlation indicators instead of raising.
EvalReport evaluate(const ScorePairs& pairs, const std::vector<double>& thresholds = default_thresholds());

// Element-wise median (mean of the middle two for even counts). Curves are
// reduced on the thresholds every report shares.
EvalReport median_report(const std::vector<EvalReport>& reports);

// "key = value" lines followed by a "[sa_st]" block of "threshold accuracy" rows.
void write_report(std::ostream& out, const EvalReport& report);
EvalReport read_report(std::istream& in);
void write_curve_csv(std::ostream& out, const SaStCurve& curve);

}  // namespace dqa
