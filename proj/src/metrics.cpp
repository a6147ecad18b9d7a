#include "dqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

#include "dqa/error.hpp"
#include "dqa/text.hpp"

namespace dqa {

void ScorePairs::validate(std::size_t min_size) const {
  if (predictions.size() != ground_truth.size()) {
    throw PreconditionError("score pairs differ in length");
  }
  if (predictions.size() < min_size) {
    throw PreconditionError("need at least " + std::to_string(min_size) + " score pairs");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(predictions.begin(), predictions.end(), finite) ||
      !std::all_of(ground_truth.begin(), ground_truth.end(), finite)) {
    throw PreconditionError("score pairs contain non-finite values");
  }
}

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw PreconditionError("correlation undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Number of tied pairs within runs of equal values of a sorted sequence.
template <typename Eq>
std::int64_t tied_pairs(std::size_t n, Eq equal) {
  std::int64_t total = 0;
  std::int64_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal(i - 1, i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Sorts `v` ascending and returns the number of inversions removed.
std::int64_t merge_count(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, scratch, lo, mid) + merge_count(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      scratch[k++] = v[j++];
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

double plcc(const ScorePairs& pairs) {
  pairs.validate();
  return pearson(pairs.predictions, pairs.ground_truth);
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srcc(const ScorePairs& pairs) {
  pairs.validate();
  return pearson(average_ranks(pairs.predictions), average_ranks(pairs.ground_truth));
}

double krcc(const ScorePairs& pairs) {
  pairs.validate();
  const std::size_t n = pairs.size();
  const auto& x = pairs.predictions;
  const auto& y = pairs.ground_truth;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
  });
  const auto total = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t ties_x = tied_pairs(n, [&](std::size_t i, std::size_t j) { return x[order[i]] == x[order[j]]; });
  const std::int64_t ties_xy = tied_pairs(n, [&](std::size_t i, std::size_t j) {
    return x[order[i]] == x[order[j]] && y[order[i]] == y[order[j]];
  });

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  std::vector<double> scratch(n);
  const std::int64_t swaps = merge_count(ys, scratch, 0, n);
  const std::int64_t ties_y = tied_pairs(n, [&](std::size_t i, std::size_t j) { return ys[i] == ys[j]; });

  const std::int64_t px = total - ties_x;
  const std::int64_t py = total - ties_y;
  if (px == 0 || py == 0) throw PreconditionError("Kendall tau undefined for an all-tied vector");
  // concordant - discordant = total - ties_x - ties_y + ties_xy - 2 * discordant
  const auto numerator = static_cast<double>(total - ties_x - ties_y + ties_xy - 2 * swaps);
  return std::clamp(numerator / std::sqrt(static_cast<double>(px) * static_cast<double>(py)), -1.0, 1.0);
}

std::vector<double> default_thresholds() {
  std::vector<double> t(101);
  std::iota(t.begin(), t.end(), 0.0);
  return t;
}

SaStCurve sa_st_curve(const ScorePairs& pairs, const std::vector<double>& thresholds) {
  pairs.validate();
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    if (!(thresholds[k] >= 0.0 && thresholds[k] <= 100.0)) {
      throw PreconditionError("SA-ST thresholds must lie in [0,100]");
    }
    if (k > 0 && !(thresholds[k] > thresholds[k - 1])) {
      throw PreconditionError("SA-ST thresholds must be strictly increasing");
    }
  }
  const auto& p = pairs.predictions;
  const auto& g = pairs.ground_truth;
  struct PairStat {
    double gap;
    bool agrees;
  };
  std::vector<PairStat> stats;
  stats.reserve(p.size() * (p.size() - 1) / 2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const double dg = g[i] - g[j];
      const double dp = p[i] - p[j];
      const bool agrees = (dg > 0 && dp > 0) || (dg < 0 && dp < 0);
      stats.push_back({std::abs(dg), agrees});
    }
  }
  std::sort(stats.begin(), stats.end(), [](const PairStat& a, const PairStat& b) { return a.gap < b.gap; });
  // agree_suffix[k] = agreeing pairs among stats[k..]
  std::vector<std::size_t> agree_suffix(stats.size() + 1, 0);
  for (std::size_t k = stats.size(); k-- > 0;) agree_suffix[k] = agree_suffix[k + 1] + (stats[k].agrees ? 1 : 0);

  SaStCurve curve;
  for (double t : thresholds) {
    const auto first = std::upper_bound(stats.begin(), stats.end(), t,
                                        [](double value, const PairStat& s) { return value < s.gap; });
    const auto idx = static_cast<std::size_t>(first - stats.begin());
    const std::size_t qualifying = stats.size() - idx;
    if (qualifying == 0) continue;
    curve.push_back({t, static_cast<double>(agree_suffix[idx]) / static_cast<double>(qualifying)});
  }
  if (curve.empty()) throw PreconditionError("SA-ST curve is empty: no pair exceeds any threshold");
  return curve;
}

double pwrc_auc(const SaStCurve& curve) {
  if (curve.size() < 2) throw PreconditionError("AUC needs at least two curve points");
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    const double dt = curve[k].threshold - curve[k - 1].threshold;
    if (!(dt > 0)) throw PreconditionError("curve thresholds must be strictly increasing");
    area += 0.5 * dt * (curve[k].accuracy + curve[k - 1].accuracy);
  }
  return area / (curve.back().threshold - curve.front().threshold);
}

EvalReport evaluate(const ScorePairs& pairs, const std::vector<double>& thresholds) {
  pairs.validate();
  EvalReport r;
  r.n = pairs.size();
  const auto& p = pairs.predictions;
  const bool constant = std::all_of(p.begin(), p.end(), [&](double v) { return v == p.front(); });
  if (constant) {
    r.plcc = r.srcc = r.krcc = 0.0;
  } else {
    r.plcc = plcc(pairs);
    r.srcc = srcc(pairs);
    r.krcc = krcc(pairs);
  }
  r.sa_st = sa_st_curve(pairs, thresholds);
  r.auc = r.sa_st.size() >= 2 ? pwrc_auc(r.sa_st) : r.sa_st.front().accuracy;
  return r;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

EvalReport median_report(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw PreconditionError("median_report needs at least one report");
  auto field = [&](auto member) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(static_cast<double>(r.*member));
    return median(std::move(v));
  };
  EvalReport out;
  out.n = static_cast<std::size_t>(field(&EvalReport::n));
  out.plcc = field(&EvalReport::plcc);
  out.srcc = field(&EvalReport::srcc);
  out.krcc = field(&EvalReport::krcc);
  out.auc = field(&EvalReport::auc);

  std::map<double, std::vector<double>> by_threshold;
  for (const auto& r : reports) {
    for (const auto& pt : r.sa_st) by_threshold[pt.threshold].push_back(pt.accuracy);
  }
  for (auto& [t, values] : by_threshold) {
    if (values.size() == reports.size()) out.sa_st.push_back({t, median(std::move(values))});
  }
  const bool any_curve = std::any_of(reports.begin(), reports.end(), [](const auto& r) { return !r.sa_st.empty(); });
  if (any_curve && out.sa_st.empty()) throw PreconditionError("SA-ST curves share no threshold");
  return out;
}

void write_report(std::ostream& out, const EvalReport& r) {
  out << "n = " << r.n << '\n'
      << "plcc = " << text::format_double(r.plcc) << '\n'
      << "srcc = " << text::format_double(r.srcc) << '\n'
      << "krcc = " << text::format_double(r.krcc) << '\n'
      << "auc = " << text::format_double(r.auc) << '\n'
      << "[sa_st]\n";
  for (const auto& pt : r.sa_st) {
    out << text::format_double(pt.threshold) << ' ' << text::format_double(pt.accuracy) << '\n';
  }
}

EvalReport read_report(std::istream& in) {
  EvalReport r;
  std::string line;
  bool in_curve = false;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (t.empty()) continue;
    if (t == "[sa_st]") {
      in_curve = true;
      continue;
    }
    if (in_curve) {
      const auto sp = t.find(' ');
      if (sp == std::string_view::npos) throw ParseError("malformed curve row: " + line);
      r.sa_st.push_back({text::parse_double(t.substr(0, sp), "threshold"),
                         text::parse_double(t.substr(sp + 1), "accuracy")});
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value: " + line);
    const auto key = text::trim(t.substr(0, eq));
    const auto value = t.substr(eq + 1);
    if (key == "n") r.n = static_cast<std::size_t>(text::parse_int(value, "n"));
    else if (key == "plcc") r.plcc = text::parse_double(value, key);
    else if (key == "srcc") r.srcc = text::parse_double(value, key);
    else if (key == "krcc") r.krcc = text::parse_double(value, key);
    else if (key == "auc") r.auc = text::parse_double(value, key);
    else throw ParseError("unknown report key: " + std::string(key));
  }
  return r;
}

void write_curve_csv(std::ostream& out, const SaStCurve& curve) {
  out << "threshold,sa\n";
  for (const auto& pt : curve) out << text::format_double(pt.threshold) << ',' << text::format_double(pt.accuracy) << '\n';
}

}  // namespace dqa
