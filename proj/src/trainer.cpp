#include "dqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "dqa/error.hpp"

namespace dqa {

using bfen::FeatureMap;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw PreconditionError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw PreconditionError("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw PreconditionError("weight_decay must be non-negative");
  if (batch_size < 1) throw PreconditionError("batch_size must be >= 1");
  if (epochs < 0) throw PreconditionError("epochs must be >= 0");
  if (crop_height < 32 || crop_width < 32 || crop_height % 32 != 0 || crop_width % 32 != 0) {
    throw PreconditionError("crop size must be a positive multiple of 32");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"momentum", c.momentum},
                     {"weight_decay", c.weight_decay},   {"batch_size", c.batch_size},
                     {"epochs", c.epochs},               {"crop_height", c.crop_height},
                     {"crop_width", c.crop_width},       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> kKeys = {"learning_rate", "momentum",    "weight_decay", "batch_size",
                                              "epochs",        "crop_height", "crop_width",   "seed"};
  if (!j.is_object()) throw ParseError("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) throw ParseError("unknown train config key: " + key);
  }
  try {
    if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
    if (j.contains("momentum")) j.at("momentum").get_to(c.momentum);
    if (j.contains("weight_decay")) j.at("weight_decay").get_to(c.weight_decay);
    if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
    if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
    if (j.contains("crop_height")) j.at("crop_height").get_to(c.crop_height);
    if (j.contains("crop_width")) j.at("crop_width").get_to(c.crop_width);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
}

std::vector<TrainingSample> load_samples(const Corpus& corpus, std::span<const SampleRef> refs) {
  std::vector<TrainingSample> out;
  out.reserve(refs.size());
  for (const auto& ref : refs) {
    const auto label = corpus.mos(ref);
    if (!label) {
      throw IntegrityError("sample " + corpus.item_id(ref) + ":" + corpus.algorithm_id(ref) + " has no MOS label");
    }
    out.push_back({ref, load_image(corpus.image_path(ref)), *label});
  }
  return out;
}

FeatureMap to_feature_map(const Image& image) {
  FeatureMap out(3, image.height, image.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(y, x, c) / 255.0;
    }
  }
  return out;
}

FeatureMap hflip(const FeatureMap& map) {
  FeatureMap out(map.shape);
  for (int c = 0; c < map.channels(); ++c) {
    for (int y = 0; y < map.height(); ++y) {
      for (int x = 0; x < map.width(); ++x) out.at(c, y, x) = map.at(c, y, map.width() - 1 - x);
    }
  }
  return out;
}

namespace {

// Index into [0, n) under repeated mirroring about the edge pixels.
int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Image reflect_pad(const Image& image, int min_height, int min_width) {
  if (image.height >= min_height && image.width >= min_width) return image;
  const int h = std::max(image.height, min_height);
  const int w = std::max(image.width, min_width);
  const int top = (h - image.height) / 2;
  const int left = (w - image.width) / 2;
  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    const int sy = mirror(y - top, image.height);
    for (int x = 0; x < w; ++x) {
      const int sx = mirror(x - left, image.width);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  }
  return out;
}

CropDraw draw_crop(int height, int width, int crop_height, int crop_width, Rng& rng) {
  CropDraw d;
  d.top = std::uniform_int_distribution<int>(0, std::max(0, height - crop_height))(rng);
  d.left = std::uniform_int_distribution<int>(0, std::max(0, width - crop_width))(rng);
  d.flip = std::bernoulli_distribution(0.5)(rng);
  return d;
}

FeatureMap apply_crop(const Image& image, int crop_height, int crop_width, const CropDraw& draw) {
  if (draw.top < 0 || draw.left < 0 || draw.top + crop_height > image.height || draw.left + crop_width > image.width) {
    throw PreconditionError("crop window outside the image");
  }
  FeatureMap out(3, crop_height, crop_width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < crop_height; ++y) {
      for (int x = 0; x < crop_width; ++x) {
        const int sx = draw.flip ? draw.left + crop_width - 1 - x : draw.left + x;
        out.at(c, y, x) = image.at(draw.top + y, sx, c) / 255.0;
      }
    }
  }
  return out;
}

FeatureMap augment(const Image& image, int crop_height, int crop_width, Rng& rng) {
  const Image padded = reflect_pad(image, crop_height, crop_width);
  return apply_crop(padded, crop_height, crop_width, draw_crop(padded.height, padded.width, crop_height, crop_width, rng));
}

FeatureMap center_crop(const Image& image, int crop_height, int crop_width) {
  const Image padded = reflect_pad(image, crop_height, crop_width);
  return apply_crop(padded, crop_height, crop_width,
                    {(padded.height - crop_height) / 2, (padded.width - crop_width) / 2, false});
}

void sgd_step(bfen::Model& model, const bfen::Gradients& gradients, const TrainConfig& config,
              bfen::Gradients& velocity) {
  if (gradients.size() != model.params.size()) throw PreconditionError("sgd_step: gradient count mismatch");
  if (velocity.empty()) velocity = model.zero_gradients();
  if (velocity.size() != model.params.size()) throw PreconditionError("sgd_step: velocity count mismatch");
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    auto& theta = model.params[p].values;
    const auto& g = gradients[p];
    auto& v = velocity[p];
    if (g.size() != theta.size() || v.size() != theta.size()) {
      throw PreconditionError("sgd_step: shape mismatch for " + model.params[p].name);
    }
    for (std::size_t k = 0; k < theta.size(); ++k) {
      v[k] = config.momentum * v[k] + g[k] + config.weight_decay * theta[k];
      theta[k] -= config.learning_rate * v[k];
    }
  }
}

TrainHistory train(bfen::Model& model, std::span<const TrainingSample> samples, const TrainConfig& config,
                   const TrainHooks& hooks) {
  config.validate();
  TrainHistory history;
  if (config.epochs == 0) return history;
  if (samples.empty()) throw PreconditionError("train: empty training set");

  Rng rng(config.seed);
  bfen::Gradients velocity = model.zero_gradients();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<FeatureMap> inputs;
      std::vector<double> targets;
      std::vector<SampleRef> refs;
      for (std::size_t k = start; k < end; ++k) {
        const TrainingSample& s = samples[order[k]];
        inputs.push_back(augment(s.image, config.crop_height, config.crop_width, rng));
        targets.push_back(s.mos / 100.0);
        refs.push_back(s.ref);
      }
      if (hooks.on_batch) hooks.on_batch(epoch, refs);
      auto result = bfen::gradients(model, inputs, targets);
      if (!std::isfinite(result.loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start));
      }
      loss_sum += result.loss * static_cast<double>(end - start);
      sgd_step(model, result.gradients, config, velocity);
    }
    EpochRecord record{epoch, loss_sum / static_cast<double>(samples.size()), std::nullopt};
    if (!hooks.validation.empty()) {
      record.validation = evaluate_model(model, hooks.validation, config.crop_height, config.crop_width);
    }
    history.epochs.push_back(std::move(record));
  }
  return history;
}

EvalReport evaluate_model(const bfen::Model& model, std::span<const TrainingSample> samples, int crop_height,
                          int crop_width) {
  ScorePairs pairs;
  for (const auto& s : samples) {
    pairs.predictions.push_back(100.0 * bfen::predict(model, center_crop(s.image, crop_height, crop_width)));
    pairs.ground_truth.push_back(s.mos);
  }
  return evaluate(pairs);
}

TrialSeeds derive_trial_seeds(std::uint64_t master, std::uint64_t trial) {
  const std::uint64_t base = splitmix64(master ^ splitmix64(trial + 1));
  return {splitmix64(base + 1), splitmix64(base + 2), splitmix64(base + 3)};
}

namespace {

std::vector<TrainingSample> select(const std::vector<TrainingSample>& all, const Corpus& corpus,
                                   const std::vector<SampleRef>& refs) {
  std::vector<TrainingSample> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back(all[r.item * corpus.algorithm_count() + r.algorithm]);
  return out;
}

TrialResult run_trial(const Corpus& corpus, const std::vector<TrainingSample>& all, int trial, const SplitSpec& split,
                      const TrialSeeds& seeds, const bfen::ModelConfig& model_config, const TrainConfig& train_config,
                      const ProtocolOptions& options) {
  const auto train_refs = split.train_samples(corpus);
  const auto test_refs = split.test_samples(corpus);
  if (options.on_split) options.on_split(trial, test_refs);
  const std::set<SampleRef> test_set(test_refs.begin(), test_refs.end());
  const std::set<std::size_t> test_items = [&] {
    std::set<std::size_t> s;
    for (const auto& r : test_refs) s.insert(r.item);
    return s;
  }();
  const bool item_level = split.kind == SplitKind::random_ratio;

  const auto train_samples = select(all, corpus, train_refs);
  const auto test_samples = select(all, corpus, test_refs);

  bfen::Model model = bfen::init_model(model_config, seeds.init);
  TrainConfig tc = train_config;
  tc.seed = seeds.train;
  TrainHooks hooks;
  hooks.on_batch = [&](int, std::span<const SampleRef> batch) {
    for (const auto& r : batch) {
      if (item_level ? test_items.contains(r.item) : test_set.contains(r)) {
        throw IntegrityError("test sample " + corpus.item_id(r) + ":" + corpus.algorithm_id(r) +
                             " reached a training batch");
      }
    }
    if (options.on_batch) options.on_batch(trial, batch);
  };

  TrialResult result;
  result.trial = trial;
  result.seeds = seeds;
  result.split = split;
  result.history = train(model, train_samples, tc, hooks);
  result.report = evaluate_model(model, test_samples, tc.crop_height, tc.crop_width);
  if (options.checkpoint_dir) {
    std::filesystem::create_directories(*options.checkpoint_dir);
    bfen::save_checkpoint(model, *options.checkpoint_dir / ("trial_" + std::to_string(trial) + ".json"));
  }
  return result;
}

void require_labels(const Corpus& corpus) {
  if (corpus.item_count() == 0) throw PreconditionError("protocol: empty corpus");
  if (!corpus.fully_labeled()) throw PreconditionError("protocol: every sample needs a MOS label");
}

}  // namespace

ProtocolResult run_random_split_protocol(const Corpus& corpus, const bfen::ModelConfig& model_config,
                                         const TrainConfig& train_config, int n_trials,
                                         const ProtocolOptions& options) {
  if (n_trials < 1) throw PreconditionError("protocol: n_trials must be >= 1");
  require_labels(corpus);
  train_config.validate();
  const auto refs = corpus.all_samples();
  const auto all = load_samples(corpus, refs);

  ProtocolResult result;
  std::vector<EvalReport> reports;
  for (int t = 0; t < n_trials; ++t) {
    const TrialSeeds seeds = derive_trial_seeds(train_config.seed, static_cast<std::uint64_t>(t));
    const SplitSpec split = split_random(corpus, options.test_fraction, seeds.split);
    result.trials.push_back(run_trial(corpus, all, t, split, seeds, model_config, train_config, options));
    reports.push_back(result.trials.back().report);
  }
  result.median = median_report(reports);
  return result;
}

EvalReport mean_report(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw PreconditionError("mean_report needs at least one report");
  const double n = static_cast<double>(reports.size());
  EvalReport out;
  std::map<double, std::pair<double, std::size_t>> curve;
  double count = 0.0;
  for (const auto& r : reports) {
    count += static_cast<double>(r.n);
    out.plcc += r.plcc / n;
    out.srcc += r.srcc / n;
    out.krcc += r.krcc / n;
    out.auc += r.auc / n;
    for (const auto& pt : r.sa_st) {
      curve[pt.threshold].first += pt.accuracy;
      curve[pt.threshold].second += 1;
    }
  }
  out.n = static_cast<std::size_t>(std::llround(count / n));
  for (const auto& [t, acc] : curve) {
    if (acc.second == reports.size()) out.sa_st.push_back({t, acc.first / n});
  }
  return out;
}

LooReport run_loo_protocol(const Corpus& corpus, const bfen::ModelConfig& model_config,
                           const TrainConfig& train_config, const ProtocolOptions& options) {
  if (corpus.algorithm_count() < 2) throw PreconditionError("leave-one-out needs at least 2 algorithms");
  require_labels(corpus);
  train_config.validate();
  const auto refs = corpus.all_samples();
  const auto all = load_samples(corpus, refs);

  for (const auto& name : options.held_out) {
    if (!corpus.find_algorithm(name)) throw NotFoundError("unknown algorithm '" + name + "'");
  }
  LooReport result;
  std::vector<EvalReport> reports;
  for (std::size_t a = 0; a < corpus.algorithm_count(); ++a) {
    const std::string& name = corpus.algorithms()[a];
    if (!options.held_out.empty() &&
        std::find(options.held_out.begin(), options.held_out.end(), name) == options.held_out.end()) {
      continue;
    }
    result.algorithms.push_back(name);
    const int trial = static_cast<int>(a);
    const TrialSeeds seeds = derive_trial_seeds(train_config.seed, a);
    const SplitSpec split = split_leave_one_algorithm_out(corpus, name);
    result.trials.push_back(run_trial(corpus, all, trial, split, seeds, model_config, train_config, options));
    reports.push_back(result.trials.back().report);
  }
  result.overall = mean_report(reports);
  return result;
}

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& pt : r.sa_st) curve.push_back({pt.threshold, pt.accuracy});
  return {{"n", r.n}, {"plcc", r.plcc}, {"srcc", r.srcc}, {"krcc", r.krcc}, {"auc", r.auc}, {"sa_st", curve}};
}

namespace {

nlohmann::json trial_json(const TrialResult& t) {
  nlohmann::json losses = nlohmann::json::array();
  for (const auto& e : t.history.epochs) losses.push_back(e.train_loss);
  nlohmann::json j{{"trial", t.trial},
                   {"seeds", {{"split", t.seeds.split}, {"init", t.seeds.init}, {"train", t.seeds.train}}},
                   {"train_items", t.split.train_item_ids},
                   {"test_items", t.split.test_item_ids},
                   {"train_loss", losses},
                   {"report", report_json(t.report)}};
  if (t.split.held_out_algorithm) j["held_out_algorithm"] = *t.split.held_out_algorithm;
  return j;
}

}  // namespace

nlohmann::json protocol_json(const ProtocolResult& result, const bfen::ModelConfig& model_config,
                             const TrainConfig& train_config) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : result.trials) trials.push_back(trial_json(t));
  return {{"protocol", "random_split"},
          {"master_seed", train_config.seed},
          {"model_config", model_config},
          {"train_config", train_config},
          {"trials", trials},
          {"median", report_json(result.median)}};
}

nlohmann::json loo_json(const LooReport& result, const bfen::ModelConfig& model_config,
                        const TrainConfig& train_config) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : result.trials) trials.push_back(trial_json(t));
  return {{"protocol", "leave_one_algorithm_out"},
          {"master_seed", train_config.seed},
          {"model_config", model_config},
          {"train_config", train_config},
          {"algorithms", result.algorithms},
          {"trials", trials},
          {"overall", report_json(result.overall)}};
}

}  // namespace dqa
