#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dqa {

// One source rain image together with every algorithm's de-rained output.
struct RainItem {
  std::string item_id;
  std::filesystem::path rain_image;
  std::map<std::string, std::filesystem::path> derained;  // algorithm id -> image
  std::map<std::string, double> mos;                      // subset of algorithm ids, [0,100]

  friend bool operator==(const RainItem&, const RainItem&) = default;
};

// (item, algorithm) coordinate of a single de-rained sample, as indices into a Corpus.
struct SampleRef {
  std::size_t item = 0;
  std::size_t algorithm = 0;

  friend auto operator<=>(const SampleRef&, const SampleRef&) = default;
};

class Corpus {
 public:
  Corpus() = default;
  // Validates id uniqueness and algorithm coverage; throws IntegrityError.
  Corpus(std::vector<std::string> algorithms, std::vector<RainItem> items);

  const std::vector<std::string>& algorithms() const { return algorithms_; }
  const std::vector<RainItem>& items() const { return items_; }
  std::size_t item_count() const { return items_.size(); }
  std::size_t algorithm_count() const { return algorithms_.size(); }
  std::size_t sample_count() const { return items_.size() * algorithms_.size(); }

  std::optional<std::size_t> find_item(const std::string& item_id) const;
  std::optional<std::size_t> find_algorithm(const std::string& algorithm_id) const;

  const std::filesystem::path& image_path(SampleRef s) const;
  const std::string& item_id(SampleRef s) const { return items_[s.item].item_id; }
  const std::string& algorithm_id(SampleRef s) const { return algorithms_[s.algorithm]; }
  std::optional<double> mos(SampleRef s) const;
  // True when every (item, algorithm) sample carries a MOS label.
  bool fully_labeled() const;

  std::vector<SampleRef> all_samples() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;

 private:
  std::vector<std::string> algorithms_;
  std::vector<RainItem> items_;
};

struct ManifestOptions {
  // Decode every referenced image during load, not just check existence.
  bool verify_decode = true;
};

// Parses the tab-separated manifest; relative paths resolve against its directory.
// Throws ParseError on malformed text and IntegrityError on invariant violations.
Corpus load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});

// Writes the manifest with image paths relative to the manifest directory.
void save_manifest(const Corpus& corpus, const std::filesystem::path& path);

enum class SplitKind { random_ratio, leave_one_algorithm_out };

struct SplitSpec {
  SplitKind kind = SplitKind::random_ratio;
  std::vector<std::string> train_item_ids;  // corpus order
  std::vector<std::string> test_item_ids;   // corpus order
  std::optional<std::string> held_out_algorithm;

  std::vector<SampleRef> train_samples(const Corpus& corpus) const;
  std::vector<SampleRef> test_samples(const Corpus& corpus) const;
};

// Partitions source images (all variants of an image land on the same side).
SplitSpec split_random(const Corpus& corpus, double test_fraction, std::uint64_t seed);

SplitSpec split_leave_one_algorithm_out(const Corpus& corpus, const std::string& held_out);

}  // namespace dqa
