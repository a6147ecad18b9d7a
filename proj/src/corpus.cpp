#include "dqa/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "dqa/error.hpp"
#include "dqa/image.hpp"
#include "dqa/text.hpp"

namespace dqa {

namespace fs = std::filesystem;

Corpus::Corpus(std::vector<std::string> algorithms, std::vector<RainItem> items)
    : algorithms_(std::move(algorithms)), items_(std::move(items)) {
  std::set<std::string> seen_algorithms;
  for (const auto& a : algorithms_) {
    if (a.empty()) throw IntegrityError("empty algorithm id");
    if (!seen_algorithms.insert(a).second) throw IntegrityError("duplicate algorithm id: " + a);
  }
  std::set<std::string> seen_items;
  for (const auto& item : items_) {
    if (item.item_id.empty()) throw IntegrityError("empty item id");
    if (!seen_items.insert(item.item_id).second) {
      throw IntegrityError("duplicate item id: " + item.item_id);
    }
    for (const auto& a : algorithms_) {
      if (!item.derained.contains(a)) {
        throw IntegrityError("item '" + item.item_id + "' lacks a variant for algorithm '" + a + "'");
      }
    }
    if (item.derained.size() != algorithms_.size()) {
      throw IntegrityError("item '" + item.item_id + "' references an undeclared algorithm");
    }
    for (const auto& [a, v] : item.mos) {
      if (!seen_algorithms.contains(a)) {
        throw IntegrityError("item '" + item.item_id + "' has MOS for unknown algorithm '" + a + "'");
      }
      if (!(v >= 0.0 && v <= 100.0)) {
        throw IntegrityError("item '" + item.item_id + "' MOS out of [0,100] for '" + a + "'");
      }
    }
  }
}

std::optional<std::size_t> Corpus::find_item(const std::string& item_id) const {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].item_id == item_id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Corpus::find_algorithm(const std::string& algorithm_id) const {
  auto it = std::find(algorithms_.begin(), algorithms_.end(), algorithm_id);
  if (it == algorithms_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - algorithms_.begin());
}

const fs::path& Corpus::image_path(SampleRef s) const {
  return items_.at(s.item).derained.at(algorithms_.at(s.algorithm));
}

std::optional<double> Corpus::mos(SampleRef s) const {
  const auto& m = items_.at(s.item).mos;
  auto it = m.find(algorithms_.at(s.algorithm));
  if (it == m.end()) return std::nullopt;
  return it->second;
}

bool Corpus::fully_labeled() const {
  return std::all_of(items_.begin(), items_.end(),
                     [&](const RainItem& item) { return item.mos.size() == algorithms_.size(); });
}

std::vector<SampleRef> Corpus::all_samples() const {
  std::vector<SampleRef> out;
  out.reserve(sample_count());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    for (std::size_t a = 0; a < algorithms_.size(); ++a) out.push_back({i, a});
  }
  return out;
}

namespace {

constexpr std::string_view kAlgorithmsHeader = "algorithms:";
constexpr std::string_view kMosPrefix = "mos:";

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal();
}

std::string where(const fs::path& manifest, std::size_t line) {
  return manifest.string() + ":" + std::to_string(line) + ": ";
}

}  // namespace

Corpus load_manifest(const fs::path& path, const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest: " + path.string());
  const fs::path base = fs::absolute(path).parent_path();

  std::vector<std::string> algorithms;
  std::vector<RainItem> items;
  bool have_header = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;

    if (!have_header) {
      if (!trimmed.starts_with(kAlgorithmsHeader)) {
        throw ParseError(where(path, line_no) + "expected 'algorithms:' header");
      }
      for (const auto& a : text::split(trimmed.substr(kAlgorithmsHeader.size()), ',')) {
        algorithms.emplace_back(text::trim(a));
      }
      if (algorithms.empty() || algorithms.front().empty()) {
        throw ParseError(where(path, line_no) + "empty algorithm list");
      }
      have_header = true;
      continue;
    }

    auto fields = text::split(line, '\t');
    const std::size_t base_fields = 2 + algorithms.size();
    std::optional<std::string> mos_field;
    if (fields.size() == base_fields + 1 && text::trim(fields.back()).starts_with(kMosPrefix)) {
      mos_field = std::string(text::trim(fields.back()));
      fields.pop_back();
    }
    if (fields.size() < base_fields) {
      // Short record: report which algorithm variant is absent.
      const std::string id = fields.empty() ? std::string() : std::string(text::trim(fields[0]));
      const std::size_t have = fields.size() >= 2 ? fields.size() - 2 : 0;
      throw IntegrityError(where(path, line_no) + "item '" + id + "' lacks a variant for algorithm '" +
                           algorithms[std::min(have, algorithms.size() - 1)] + "'");
    }
    if (fields.size() != base_fields) {
      throw ParseError(where(path, line_no) + "expected " + std::to_string(base_fields) +
                       " tab-separated fields, got " + std::to_string(fields.size()));
    }
    RainItem item;
    item.item_id = std::string(text::trim(fields[0]));
    item.rain_image = resolve(base, std::string(text::trim(fields[1])));
    for (std::size_t a = 0; a < algorithms.size(); ++a) {
      const auto p = text::trim(fields[2 + a]);
      if (p.empty()) {
        throw IntegrityError(where(path, line_no) + "item '" + item.item_id +
                             "' lacks a variant for algorithm '" + algorithms[a] + "'");
      }
      item.derained[algorithms[a]] = resolve(base, std::string(p));
    }
    if (mos_field) {
      const auto body = std::string_view(*mos_field).substr(kMosPrefix.size());
      for (const auto& entry : text::split(body, ';')) {
        if (text::trim(entry).empty()) continue;
        const auto kv = text::split(entry, '=');
        if (kv.size() != 2) throw ParseError(where(path, line_no) + "malformed mos entry '" + entry + "'");
        const std::string alg(text::trim(kv[0]));
        if (item.mos.contains(alg)) {
          throw IntegrityError(where(path, line_no) + "duplicate MOS for algorithm '" + alg + "'");
        }
        item.mos[alg] = text::parse_double(kv[1], "mos of " + item.item_id + "/" + alg);
      }
    }
    items.push_back(std::move(item));
  }
  if (!have_header) throw ParseError(path.string() + ": missing 'algorithms:' header");

  Corpus corpus(std::move(algorithms), std::move(items));

  auto check = [&](const fs::path& p, const std::string& owner) {
    if (!fs::exists(p)) throw IntegrityError("item '" + owner + "': missing file " + p.string());
    if (!is_lossless_format(p)) {
      throw IntegrityError("item '" + owner + "': not a lossless image format " + p.string());
    }
    if (options.verify_decode) (void)load_image(p);
  };
  for (const auto& item : corpus.items()) {
    check(item.rain_image, item.item_id);
    for (const auto& [a, p] : item.derained) check(p, item.item_id);
  }
  return corpus;
}

void save_manifest(const Corpus& corpus, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  auto rel = [&](const fs::path& p) { return fs::absolute(p).lexically_relative(base).generic_string(); };

  std::ostringstream out;
  out << kAlgorithmsHeader << ' ';
  for (std::size_t a = 0; a < corpus.algorithms().size(); ++a) {
    out << (a ? "," : "") << corpus.algorithms()[a];
  }
  out << '\n';
  for (const auto& item : corpus.items()) {
    out << item.item_id << '\t' << rel(item.rain_image);
    for (const auto& a : corpus.algorithms()) out << '\t' << rel(item.derained.at(a));
    if (!item.mos.empty()) {
      out << '\t' << kMosPrefix;
      bool first = true;
      for (const auto& a : corpus.algorithms()) {
        auto it = item.mos.find(a);
        if (it == item.mos.end()) continue;
        out << (first ? "" : ";") << a << '=' << text::format_double(it->second);
        first = false;
      }
    }
    out << '\n';
  }
  std::ofstream file(path);
  if (!file) throw Error("cannot write manifest: " + path.string());
  file << out.str();
}

std::vector<SampleRef> SplitSpec::train_samples(const Corpus& corpus) const {
  std::vector<SampleRef> out;
  const auto held = held_out_algorithm ? corpus.find_algorithm(*held_out_algorithm) : std::nullopt;
  for (const auto& id : train_item_ids) {
    const std::size_t i = corpus.find_item(id).value();
    for (std::size_t a = 0; a < corpus.algorithm_count(); ++a) {
      if (held && *held == a) continue;
      out.push_back({i, a});
    }
  }
  return out;
}

std::vector<SampleRef> SplitSpec::test_samples(const Corpus& corpus) const {
  std::vector<SampleRef> out;
  const auto held = held_out_algorithm ? corpus.find_algorithm(*held_out_algorithm) : std::nullopt;
  for (const auto& id : test_item_ids) {
    const std::size_t i = corpus.find_item(id).value();
    for (std::size_t a = 0; a < corpus.algorithm_count(); ++a) {
      if (held && *held != a) continue;
      out.push_back({i, a});
    }
  }
  return out;
}

SplitSpec split_random(const Corpus& corpus, double test_fraction, std::uint64_t seed) {
  const std::size_t n = corpus.item_count();
  if (n == 0) throw PreconditionError("split_random: empty corpus");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw PreconditionError("split_random: test fraction must lie in (0,1)");
  }
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_test == n) {
    throw PreconditionError("split_random: fraction " + text::format_double(test_fraction) +
                            " of " + std::to_string(n) + " items leaves an empty side");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_test(n, false);
  for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;

  SplitSpec spec;
  spec.kind = SplitKind::random_ratio;
  for (std::size_t i = 0; i < n; ++i) {
    (is_test[i] ? spec.test_item_ids : spec.train_item_ids).push_back(corpus.items()[i].item_id);
  }
  return spec;
}

SplitSpec split_leave_one_algorithm_out(const Corpus& corpus, const std::string& held_out) {
  if (!corpus.find_algorithm(held_out)) {
    throw NotFoundError("unknown algorithm id: " + held_out);
  }
  SplitSpec spec;
  spec.kind = SplitKind::leave_one_algorithm_out;
  spec.held_out_algorithm = held_out;
  for (const auto& item : corpus.items()) {
    spec.train_item_ids.push_back(item.item_id);
    spec.test_item_ids.push_back(item.item_id);
  }
  return spec;
}

}  // namespace dqa
