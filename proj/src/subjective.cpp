#include "dqa/subjective.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "dqa/student_t.hpp"
#include "dqa/text.hpp"

namespace dqa {

namespace {

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double sample_std = 0.0;
  double m2 = 0.0;  // population central moments
  double m4 = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = v.size();
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  double s4 = 0.0;
  for (double x : v) {
    const double d = x - m.mean;
    ss += d * d;
    s4 += d * d * d * d;
  }
  m.m2 = ss / static_cast<double>(v.size());
  m.m4 = s4 / static_cast<double>(v.size());
  m.sample_std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return m;
}

// Sorted, so per-item statistics do not depend on subject order.
std::vector<double> column(const ScoreMatrix& m, std::size_t j) {
  std::vector<double> out;
  for (const auto& row : m) {
    if (row[j]) out.push_back(*row[j]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> present(const std::vector<std::optional<double>>& row) {
  std::vector<double> out;
  for (const auto& v : row) {
    if (v) out.push_back(*v);
  }
  return out;
}

}  // namespace

void RawScoreTable::validate() const {
  if (scores.size() != subjects.size()) {
    throw IntegrityError("score table has " + std::to_string(scores.size()) + " rows for " +
                         std::to_string(subjects.size()) + " subjects");
  }
  std::vector<bool> item_has_score(items.size(), false);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != items.size()) {
      throw IntegrityError("subject '" + subjects[i] + "' row has wrong width");
    }
    bool any = false;
    for (std::size_t j = 0; j < items.size(); ++j) {
      const auto& s = scores[i][j];
      if (!s) continue;
      if (!(*s >= 1.0 && *s <= 100.0)) {
        throw IntegrityError("subject '" + subjects[i] + "' score out of [1,100] for " +
                             items[j].item_id + ":" + items[j].algorithm_id);
      }
      any = true;
      item_has_score[j] = true;
    }
    if (!any) throw IntegrityError("subject '" + subjects[i] + "' has no ratings");
  }
  for (std::size_t j = 0; j < items.size(); ++j) {
    if (!item_has_score[j]) {
      throw IntegrityError("item " + items[j].item_id + ":" + items[j].algorithm_id + " has no ratings");
    }
  }
}

std::size_t RawScoreTable::present_count() const {
  std::size_t n = 0;
  for (const auto& row : scores) {
    n += static_cast<std::size_t>(std::count_if(row.begin(), row.end(), [](const auto& v) { return v.has_value(); }));
  }
  return n;
}

std::vector<std::string> MosTable::algorithms() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (std::find(out.begin(), out.end(), e.key.algorithm_id) == out.end()) out.push_back(e.key.algorithm_id);
  }
  return out;
}

std::vector<std::string> MosTable::item_ids() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (seen.insert(e.key.item_id).second) out.push_back(e.key.item_id);
  }
  return out;
}

std::optional<double> MosTable::find(const ItemKey& key) const {
  for (const auto& e : entries) {
    if (e.key == key) return e.mos;
  }
  return std::nullopt;
}

std::vector<std::string> RejectionReport::rejected() const {
  std::vector<std::string> out;
  for (const auto& s : subjects) {
    if (s.rejected) out.push_back(s.subject);
  }
  return out;
}

RawScoreTable screen_subjects(const RawScoreTable& raw, RejectionReport* report) {
  if (raw.subjects.size() < 3) {
    throw PreconditionError("screen_subjects needs at least 3 subjects, got " +
                            std::to_string(raw.subjects.size()));
  }
  raw.validate();

  RejectionReport local;
  local.subjects.resize(raw.subjects.size());
  for (std::size_t i = 0; i < raw.subjects.size(); ++i) local.subjects[i].subject = raw.subjects[i];
  local.item_kurtosis.assign(raw.items.size(), std::nan(""));

  static const double kWideBound = std::sqrt(20.0);
  for (std::size_t j = 0; j < raw.items.size(); ++j) {
    const Moments m = moments(column(raw.scores, j));
    if (m.n < 2) continue;
    const double beta2 = m.m2 > 0.0 ? m.m4 / (m.m2 * m.m2) : std::nan("");
    local.item_kurtosis[j] = beta2;
    const double k = (beta2 >= 2.0 && beta2 <= 4.0) ? 2.0 : kWideBound;
    const double upper = m.mean + k * m.sample_std;
    const double lower = m.mean - k * m.sample_std;
    for (std::size_t i = 0; i < raw.subjects.size(); ++i) {
      const auto& s = raw.scores[i][j];
      if (!s) continue;
      if (*s > upper) ++local.subjects[i].above;
      if (*s < lower) ++local.subjects[i].below;
    }
  }

  RawScoreTable kept;
  kept.items = raw.items;
  for (std::size_t i = 0; i < raw.subjects.size(); ++i) {
    auto& s = local.subjects[i];
    s.rated = static_cast<std::size_t>(
        std::count_if(raw.scores[i].begin(), raw.scores[i].end(), [](const auto& v) { return v.has_value(); }));
    const double outside = static_cast<double>(s.above + s.below);
    if (outside > 0.0) {
      const double ratio = outside / static_cast<double>(s.rated);
      const double asymmetry =
          std::abs((static_cast<double>(s.above) - static_cast<double>(s.below)) / outside);
      s.rejected = ratio > 0.05 && asymmetry < 0.3;
    }
    if (!s.rejected) {
      kept.subjects.push_back(raw.subjects[i]);
      kept.scores.push_back(raw.scores[i]);
    }
  }
  if (report) *report = local;
  if (kept.subjects.empty()) throw IntegrityError("screening rejected every subject");
  return kept;
}

ZScoreTable zscore(const RawScoreTable& raw) {
  ZScoreTable out;
  out.subjects = raw.subjects;
  out.items = raw.items;
  out.values.resize(raw.subjects.size());
  out.subject_mean.resize(raw.subjects.size());
  out.subject_std.resize(raw.subjects.size());
  for (std::size_t i = 0; i < raw.subjects.size(); ++i) {
    const Moments m = moments(present(raw.scores[i]));
    if (m.n < 2 || !(m.sample_std > 0.0)) throw ConstantRaterError(raw.subjects[i]);
    out.subject_mean[i] = m.mean;
    out.subject_std[i] = m.sample_std;
    out.values[i].resize(raw.items.size());
    for (std::size_t j = 0; j < raw.items.size(); ++j) {
      if (raw.scores[i][j]) out.values[i][j] = (*raw.scores[i][j] - m.mean) / m.sample_std;
    }
  }
  return out;
}

double rescale_value(double z) { return std::clamp(100.0 * (z + 3.0) / 6.0, 0.0, 100.0); }

ZScoreTable rescale(const ZScoreTable& z) {
  ZScoreTable out = z;
  for (auto& row : out.values) {
    for (auto& v : row) {
      if (v) v = rescale_value(*v);
    }
  }
  return out;
}

MosTable mos(const ZScoreTable& rescaled) {
  MosTable out;
  out.entries.reserve(rescaled.items.size());
  for (std::size_t j = 0; j < rescaled.items.size(); ++j) {
    const auto values = column(rescaled.values, j);
    if (values.empty()) {
      throw IntegrityError("item " + rescaled.items[j].item_id + ":" + rescaled.items[j].algorithm_id +
                           " has no valid ratings");
    }
    const double sum = std::accumulate(values.begin(), values.end(), 0.0);
    out.entries.push_back({rescaled.items[j], sum / static_cast<double>(values.size()), values.size()});
  }
  return out;
}

std::vector<std::vector<double>> mos_columns(const MosTable& table,
                                             const std::vector<std::string>& algorithms) {
  std::map<ItemKey, double> lookup;
  for (const auto& e : table.entries) lookup[e.key] = e.mos;
  const auto items = table.item_ids();
  std::vector<std::vector<double>> columns;
  for (const auto& a : algorithms) {
    std::vector<double> col;
    col.reserve(items.size());
    for (const auto& item : items) {
      auto it = lookup.find({item, a});
      if (it == lookup.end()) throw IntegrityError("missing MOS for " + item + ":" + a);
      col.push_back(it->second);
    }
    columns.push_back(std::move(col));
  }
  return columns;
}

std::vector<AlgorithmSummary> algorithm_summary(const MosTable& table,
                                                const std::vector<std::string>& algorithms) {
  const auto columns = mos_columns(table, algorithms);
  std::vector<AlgorithmSummary> out;
  for (std::size_t a = 0; a < algorithms.size(); ++a) {
    const Moments m = moments(columns[a]);
    out.push_back({algorithms[a], m.mean, m.sample_std, m.n});
  }
  return out;
}

int paired_t_decision(const std::vector<double>& a, const std::vector<double>& b, double confidence) {
  if (a.size() != b.size()) throw PreconditionError("paired t-test: columns differ in length");
  if (a.size() < 2) throw PreconditionError("paired t-test: need at least 2 pairs");
  if (!(confidence > 0.5 && confidence < 1.0)) throw PreconditionError("confidence must lie in (0.5,1)");
  std::vector<double> d(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
  const Moments m = moments(d);
  double t = 0.0;
  if (m.sample_std > 0.0) {
    t = m.mean / (m.sample_std / std::sqrt(static_cast<double>(m.n)));
  } else if (m.mean != 0.0) {
    t = m.mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  } else {
    return 0;
  }
  const double cdf = stats::student_t_cdf(t, static_cast<double>(m.n - 1));
  const double alpha = 1.0 - confidence;
  if (1.0 - cdf < alpha) return 1;
  if (cdf < alpha) return -1;
  return 0;
}

SignificanceMatrix ttest_matrix(const std::vector<std::vector<double>>& columns,
                                const std::vector<std::string>& algorithms, double confidence) {
  if (columns.size() != algorithms.size()) throw PreconditionError("ttest_matrix: label count mismatch");
  SignificanceMatrix out;
  out.algorithms = algorithms;
  out.confidence = confidence;
  const std::size_t n = columns.size();
  out.entries.assign(n, std::vector<int>(n, 0));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = r + 1; c < n; ++c) {
      const int e = paired_t_decision(columns[r], columns[c], confidence);
      out.entries[r][c] = e;
      out.entries[c][r] = -e;
    }
  }
  return out;
}

Histogram mos_histogram(const MosTable& table, std::size_t bins) {
  if (bins < 1) throw PreconditionError("histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  const double width = 100.0 / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = width * static_cast<double>(b);
  h.edges.back() = 100.0;
  for (const auto& e : table.entries) {
    auto b = static_cast<std::size_t>(std::floor(e.mos / width));
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

namespace {

ItemKey parse_item_key(const std::string& cell) {
  const auto pos = cell.rfind(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 == cell.size()) {
    throw ParseError("score table header cell must be item:algorithm, got '" + cell + "'");
  }
  return {cell.substr(0, pos), cell.substr(pos + 1)};
}

}  // namespace

RawScoreTable read_raw_scores(std::istream& in) {
  RawScoreTable t;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    auto cells = text::split(line, ',');
    if (!header) {
      if (text::trim(cells[0]) != "subject") throw ParseError("score table header must start with 'subject'");
      for (std::size_t c = 1; c < cells.size(); ++c) {
        t.items.push_back(parse_item_key(std::string(text::trim(cells[c]))));
      }
      header = true;
      continue;
    }
    if (cells.size() != t.items.size() + 1) {
      throw ParseError("score table line " + std::to_string(line_no) + ": expected " +
                       std::to_string(t.items.size() + 1) + " cells, got " + std::to_string(cells.size()));
    }
    t.subjects.emplace_back(text::trim(cells[0]));
    std::vector<std::optional<double>> row(t.items.size());
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (!text::trim(cells[c]).empty()) {
        row[c - 1] = text::parse_double(cells[c], "score on line " + std::to_string(line_no));
      }
    }
    t.scores.push_back(std::move(row));
  }
  if (!header) throw ParseError("score table is empty");
  return t;
}

RawScoreTable read_raw_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open score table: " + path.string());
  return read_raw_scores(in);
}

void write_raw_scores(std::ostream& out, const RawScoreTable& table) {
  out << "subject";
  for (const auto& k : table.items) out << ',' << k.item_id << ':' << k.algorithm_id;
  out << '\n';
  for (std::size_t i = 0; i < table.subjects.size(); ++i) {
    out << table.subjects[i];
    for (const auto& v : table.scores[i]) {
      out << ',';
      if (v) out << text::format_double(*v);
    }
    out << '\n';
  }
}

void write_mos_table(std::ostream& out, const MosTable& table) {
  out << "item_id,algorithm_id,mos,n\n";
  for (const auto& e : table.entries) {
    out << e.key.item_id << ',' << e.key.algorithm_id << ',' << text::format_double(e.mos) << ','
        << e.count << '\n';
  }
}

MosTable read_mos_table(std::istream& in) {
  MosTable t;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto cells = text::split(line, ',');
    if (cells.size() != 4) throw ParseError("MOS table row must have 4 cells: " + line);
    t.entries.push_back({{cells[0], cells[1]},
                         text::parse_double(cells[2], "mos"),
                         static_cast<std::size_t>(text::parse_int(cells[3], "n"))});
  }
  return t;
}

}  // namespace dqa
