#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dqa/error.hpp"

namespace dqa {

struct ItemKey {
  std::string item_id;
  std::string algorithm_id;

  friend auto operator<=>(const ItemKey&, const ItemKey&) = default;
};

using ScoreMatrix = std::vector<std::vector<std::optional<double>>>;  // [subject][item]

// Subject x item matrix of raw ratings on the continuous [1,100] scale.
struct RawScoreTable {
  std::vector<std::string> subjects;
  std::vector<ItemKey> items;
  ScoreMatrix scores;

  // Shape, range, and at-least-one-score-per-row/column checks. Throws IntegrityError.
  void validate() const;
  std::size_t present_count() const;

  friend bool operator==(const RawScoreTable&, const RawScoreTable&) = default;
};

struct ZScoreTable {
  std::vector<std::string> subjects;
  std::vector<ItemKey> items;
  ScoreMatrix values;
  std::vector<double> subject_mean;
  std::vector<double> subject_std;  // sample (n-1) standard deviation
};

struct MosEntry {
  ItemKey key;
  double mos = 0.0;
  std::size_t count = 0;  // valid ratings

  friend bool operator==(const MosEntry&, const MosEntry&) = default;
};

struct MosTable {
  std::vector<MosEntry> entries;

  // Distinct algorithm ids in first-appearance order.
  std::vector<std::string> algorithms() const;
  // Distinct item ids in first-appearance order.
  std::vector<std::string> item_ids() const;
  std::optional<double> find(const ItemKey& key) const;
};

struct SubjectScreening {
  std::string subject;
  std::size_t above = 0;  // P_i
  std::size_t below = 0;  // Q_i
  std::size_t rated = 0;  // N_i
  bool rejected = false;
};

struct RejectionReport {
  std::vector<SubjectScreening> subjects;
  std::vector<double> item_kurtosis;  // beta2 per item, NaN when undefined
  std::vector<std::string> rejected() const;
};

struct AlgorithmSummary {
  std::string algorithm;
  double mean = 0.0;
  double std = 0.0;  // sample std; 0 when fewer than two images
  std::size_t n = 0;
};

// Row algorithm compared against column algorithm: +1 superior, 0 equivalent, -1 inferior.
struct SignificanceMatrix {
  std::vector<std::string> algorithms;
  std::vector<std::vector<int>> entries;
  double confidence = 0.95;
};

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges spanning [0,100]
  std::vector<std::size_t> counts;
};

// Raised by zscore for a subject whose present ratings are all identical.
class ConstantRaterError : public NumericError {
 public:
  explicit ConstantRaterError(std::string subject)
      : NumericError("subject '" + subject + "' has zero rating variance"), subject_(std::move(subject)) {}
  const std::string& subject() const { return subject_; }

 private:
  std::string subject_;
};

// ITU-R BT.500 Annex 2 beta2 subject screening. Runs on raw ratings.
// Returns the retained table; throws PreconditionError with fewer than three subjects
// and IntegrityError when every subject would be rejected.
RawScoreTable screen_subjects(const RawScoreTable& raw, RejectionReport* report = nullptr);

ZScoreTable zscore(const RawScoreTable& raw);

// 100 * (z + 3) / 6 clamped to [0,100].
double rescale_value(double z);
ZScoreTable rescale(const ZScoreTable& z);

MosTable mos(const ZScoreTable& rescaled);

std::vector<AlgorithmSummary> algorithm_summary(const MosTable& table,
                                                const std::vector<std::string>& algorithms);

// Per-algorithm MOS columns aligned by item id (item order of first appearance).
std::vector<std::vector<double>> mos_columns(const MosTable& table,
                                             const std::vector<std::string>& algorithms);

// One-sided paired t decision for a versus b: +1, -1, or 0.
int paired_t_decision(const std::vector<double>& a, const std::vector<double>& b, double confidence);

SignificanceMatrix ttest_matrix(const std::vector<std::vector<double>>& columns,
                                const std::vector<std::string>& algorithms,
                                double confidence = 0.95);

Histogram mos_histogram(const MosTable& table, std::size_t bins);

// Delimited text: header "subject,<item>:<algorithm>,...", one row per subject, empty = missing.
RawScoreTable read_raw_scores(std::istream& in);
RawScoreTable read_raw_scores(const std::filesystem::path& path);
void write_raw_scores(std::ostream& out, const RawScoreTable& table);

// item_id,algorithm_id,mos,n
void write_mos_table(std::ostream& out, const MosTable& table);
MosTable read_mos_table(std::istream& in);

}  // namespace dqa
