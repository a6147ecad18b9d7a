#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dqa/bfen/model.hpp"
#include "dqa/corpus.hpp"
#include "dqa/image.hpp"
#include "dqa/metrics.hpp"

namespace dqa {

using Rng = std::mt19937_64;

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 16;
  int epochs = 30;
  int crop_height = 320;
  int crop_width = 320;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<EvalReport> validation;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// A decoded de-rained image with its MOS label.
struct TrainingSample {
  SampleRef ref;
  Image image;
  double mos = 0.0;  // [0,100]; targets are mos / 100
};

// Every labeled sample of `refs`, decoded. Throws IntegrityError for unlabeled samples.
std::vector<TrainingSample> load_samples(const Corpus& corpus, std::span<const SampleRef> refs);

// Pixels scaled to [0,1], channel-planar.
bfen::FeatureMap to_feature_map(const Image& image);
bfen::FeatureMap hflip(const bfen::FeatureMap& map);

// Mirror padding (edge pixel not repeated) up to at least min_height x min_width, centered.
Image reflect_pad(const Image& image, int min_height, int min_width);

struct CropDraw {
  int top = 0;
  int left = 0;
  bool flip = false;
};

// Uniform crop origin over all valid positions, then a fair coin for the flip.
CropDraw draw_crop(int height, int width, int crop_height, int crop_width, Rng& rng);
bfen::FeatureMap apply_crop(const Image& image, int crop_height, int crop_width, const CropDraw& draw);
// Random crop plus horizontal flip; smaller images are reflection-padded first.
bfen::FeatureMap augment(const Image& image, int crop_height, int crop_width, Rng& rng);
bfen::FeatureMap center_crop(const Image& image, int crop_height, int crop_width);

// Classical momentum: v <- m v + (g + decay * theta); theta <- theta - lr v.
void sgd_step(bfen::Model& model, const bfen::Gradients& gradients, const TrainConfig& config,
              bfen::Gradients& velocity);

struct TrainHooks {
  // Called with the samples of every mini-batch before its update.
  std::function<void(int epoch, std::span<const SampleRef> batch)> on_batch;
  // Evaluated after every epoch when non-empty.
  std::span<const TrainingSample> validation;
};

// Seeded shuffled mini-batch SGD on the mean squared error. Throws NumericError on a non-finite loss.
TrainHistory train(bfen::Model& model, std::span<const TrainingSample> samples, const TrainConfig& config,
                   const TrainHooks& hooks = {});

// Center crop at the training crop size; predictions are reported on the MOS scale (x100).
EvalReport evaluate_model(const bfen::Model& model, std::span<const TrainingSample> samples, int crop_height,
                          int crop_width);

struct TrialSeeds {
  std::uint64_t split = 0;
  std::uint64_t init = 0;
  std::uint64_t train = 0;
};

// Independent per-trial streams derived from the master seed.
TrialSeeds derive_trial_seeds(std::uint64_t master, std::uint64_t trial);

struct TrialResult {
  int trial = 0;
  TrialSeeds seeds;
  SplitSpec split;
  TrainHistory history;
  EvalReport report;
};

struct ProtocolOptions {
  double test_fraction = 0.2;
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(int trial, std::span<const SampleRef> batch)> on_batch;
  // Test samples of each trial, reported before training starts.
  std::function<void(int trial, std::span<const SampleRef> test)> on_split;
  // Leave-one-out only: algorithms to hold out (empty = all). Trial seeds depend
  // on the algorithm's corpus index, so a subset reproduces the full run's trials.
  std::vector<std::string> held_out;
};

struct ProtocolResult {
  std::vector<TrialResult> trials;
  EvalReport median;
};

ProtocolResult run_random_split_protocol(const Corpus& corpus, const bfen::ModelConfig& model_config,
                                         const TrainConfig& train_config, int n_trials,
                                         const ProtocolOptions& options = {});

struct LooReport {
  std::vector<std::string> algorithms;
  std::vector<TrialResult> trials;  // one per held-out algorithm
  EvalReport overall;               // arithmetic mean of the per-algorithm indicators
};

// Mean of each indicator; curves are averaged on the thresholds all reports share.
EvalReport mean_report(const std::vector<EvalReport>& reports);

LooReport run_loo_protocol(const Corpus& corpus, const bfen::ModelConfig& model_config,
                           const TrainConfig& train_config, const ProtocolOptions& options = {});

nlohmann::json report_json(const EvalReport& report);
nlohmann::json protocol_json(const ProtocolResult& result, const bfen::ModelConfig& model_config,
                             const TrainConfig& train_config);
nlohmann::json loo_json(const LooReport& result, const bfen::ModelConfig& model_config,
                        const TrainConfig& train_config);

}  // namespace dqa
