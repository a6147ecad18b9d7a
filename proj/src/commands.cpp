#include "dqa/commands.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include "dqa/error.hpp"
#include "dqa/subjective.hpp"
#include "dqa/text.hpp"

namespace dqa {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ParseError("unknown config key '" + where + "." + key + "'");
    }
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IntegrityError("cannot write " + path.string());
  return out;
}

fs::path write_file(const fs::path& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  out.close();
  if (!out) throw IntegrityError("write failed: " + path.string());
  return path;
}

fs::path write_json(const fs::path& path, const json& j) { return write_file(path, j.dump(2) + "\n"); }

std::string report_text(const EvalReport& r, const std::string& title) {
  std::ostringstream out;
  out << "# " << title << '\n';
  write_report(out, r);
  return out.str();
}

Corpus load_corpus(const fs::path& manifest) { return load_manifest(manifest); }

std::vector<SampleRef> labeled(const Corpus& corpus) {
  std::vector<SampleRef> refs;
  for (const auto& r : corpus.all_samples()) {
    if (corpus.mos(r)) refs.push_back(r);
  }
  if (refs.empty()) throw PreconditionError("manifest has no MOS-labeled samples");
  return refs;
}

}  // namespace

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  RunConfig c;
  try {
    reject_unknown(j, {"model", "train", "protocol", "scores", "complexity"}, "config");
    if (j.contains("model")) c.model = j.at("model").get<bfen::ModelConfig>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("protocol")) {
      reject_unknown(j.at("protocol"), {"test_fraction"}, "protocol");
      c.test_fraction = j.at("protocol").value("test_fraction", c.test_fraction);
    }
    if (j.contains("scores")) {
      reject_unknown(j.at("scores"), {"histogram_bins", "confidence"}, "scores");
      c.histogram_bins = j.at("scores").value("histogram_bins", c.histogram_bins);
      c.confidence = j.at("scores").value("confidence", c.confidence);
    }
    if (j.contains("complexity")) {
      reject_unknown(j.at("complexity"), {"benchmark_images"}, "complexity");
      c.benchmark_images = j.at("complexity").value("benchmark_images", c.benchmark_images);
    }
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  c.model.validate();
  c.train.validate();
  return c;
}

json run_config_json(const RunConfig& c) {
  return {{"model", c.model},
          {"train", c.train},
          {"protocol", {{"test_fraction", c.test_fraction}}},
          {"scores", {{"histogram_bins", c.histogram_bins}, {"confidence", c.confidence}}},
          {"complexity", {{"benchmark_images", c.benchmark_images}}}};
}

ScoresOutcome cmd_process_scores(const fs::path& scores, const fs::path& out_dir, const RunConfig& config,
                                 std::ostream& log) {
  if (config.histogram_bins < 1) throw PreconditionError("histogram_bins must be >= 1");
  if (!(config.confidence > 0.0 && config.confidence < 1.0)) throw PreconditionError("confidence must be in (0,1)");
  const RawScoreTable raw = read_raw_scores(scores);
  raw.validate();

  ScoresOutcome outcome;
  RejectionReport screening;
  RawScoreTable kept = screen_subjects(raw, &screening);
  outcome.rejected = screening.rejected();

  ZScoreTable z;
  for (;;) {
    try {
      z = zscore(kept);
      break;
    } catch (const ConstantRaterError& e) {
      log << "warning: " << e.what() << "; rater dropped\n";
      outcome.constant_raters.push_back(e.subject());
      const auto it = std::find(kept.subjects.begin(), kept.subjects.end(), e.subject());
      const auto row = static_cast<std::size_t>(it - kept.subjects.begin());
      kept.subjects.erase(it);
      kept.scores.erase(kept.scores.begin() + static_cast<std::ptrdiff_t>(row));
      if (kept.subjects.empty()) throw IntegrityError("no subjects left after dropping constant raters");
    }
  }
  const ZScoreTable scaled = rescale(z);
  const MosTable table = mos(scaled);
  const auto algorithms = table.algorithms();
  const auto summary = algorithm_summary(table, algorithms);
  const auto matrix = ttest_matrix(mos_columns(table, algorithms), algorithms, config.confidence);
  const Histogram hist = mos_histogram(table, static_cast<std::size_t>(config.histogram_bins));

  fs::create_directories(out_dir);
  {
    std::ostringstream out;
    out << "# process-scores\n"
        << "config = " << run_config_json(config).dump() << '\n'
        << "input = " << scores.filename().string() << '\n'
        << "subjects = " << raw.subjects.size() << '\n'
        << "rejected = " << outcome.rejected.size() << '\n';
    for (const auto& s : outcome.rejected) out << "rejected_subject = " << s << '\n';
    out << "constant_raters = " << outcome.constant_raters.size() << '\n';
    for (const auto& s : outcome.constant_raters) out << "constant_rater = " << s << '\n';
    out << "retained = " << z.subjects.size() << '\n' << "items = " << table.entries.size() << '\n';
    for (std::size_t i = 0; i < screening.subjects.size(); ++i) {
      const auto& s = screening.subjects[i];
      out << "screen " << s.subject << " P=" << s.above << " Q=" << s.below << " N=" << s.rated
          << (s.rejected ? " rejected" : " kept") << '\n';
    }
    outcome.files.push_back(write_file(out_dir / "report.txt", out.str()));
  }
  {
    std::ostringstream out;
    out << "subject";
    for (const auto& k : z.items) out << ',' << k.item_id << ':' << k.algorithm_id;
    out << ",mean,std\n";
    for (std::size_t i = 0; i < z.subjects.size(); ++i) {
      out << z.subjects[i];
      for (const auto& v : z.values[i]) {
        out << ',';
        if (v) out << text::format_double(*v);
      }
      out << ',' << text::format_double(z.subject_mean[i]) << ',' << text::format_double(z.subject_std[i]) << '\n';
    }
    outcome.files.push_back(write_file(out_dir / "zscores.csv", out.str()));
  }
  {
    std::ostringstream out;
    write_mos_table(out, table);
    outcome.files.push_back(write_file(out_dir / "mos.csv", out.str()));
  }
  {
    std::ostringstream out;
    out << "algorithm,mean,std,n\n";
    for (const auto& s : summary) {
      out << s.algorithm << ',' << text::format_double(s.mean) << ',' << text::format_double(s.std) << ',' << s.n
          << '\n';
    }
    outcome.files.push_back(write_file(out_dir / "summary.csv", out.str()));
  }
  {
    std::ostringstream out;
    out << "algorithm";
    for (const auto& a : matrix.algorithms) out << ',' << a;
    out << '\n';
    for (std::size_t i = 0; i < matrix.algorithms.size(); ++i) {
      out << matrix.algorithms[i];
      for (int v : matrix.entries[i]) out << ',' << v;
      out << '\n';
    }
    outcome.files.push_back(write_file(out_dir / "ttest.csv", out.str()));
  }
  {
    std::ostringstream out;
    out << "low,high,count\n";
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
      out << text::format_double(hist.edges[b]) << ',' << text::format_double(hist.edges[b + 1]) << ','
          << hist.counts[b] << '\n';
    }
    outcome.files.push_back(write_file(out_dir / "histogram.csv", out.str()));
  }
  log << "process-scores: " << z.subjects.size() << " of " << raw.subjects.size() << " subjects retained, "
      << table.entries.size() << " MOS values written to " << out_dir.string() << '\n';
  return outcome;
}

TrainHistory cmd_train(const fs::path& manifest, const fs::path& out_dir, const RunConfig& config, std::ostream& log) {
  config.model.validate();
  config.train.validate();
  const Corpus corpus = load_corpus(manifest);
  const auto refs = labeled(corpus);
  const auto samples = load_samples(corpus, refs);
  const TrialSeeds seeds = derive_trial_seeds(config.train.seed, 0);
  bfen::Model model = bfen::init_model(config.model, seeds.init);
  TrainConfig tc = config.train;
  tc.seed = seeds.train;
  log << "train: " << samples.size() << " samples, " << model.parameter_count() << " parameters, "
      << config.train.epochs << " epochs\n";
  const TrainHistory history = train(model, samples, tc);

  fs::create_directories(out_dir);
  bfen::save_checkpoint(model, out_dir / "model.json");
  json losses = json::array();
  for (const auto& e : history.epochs) losses.push_back(e.train_loss);
  write_json(out_dir / "train.json", {{"config", run_config_json(config)},
                                      {"master_seed", config.train.seed},
                                      {"seeds", {{"init", seeds.init}, {"train", seeds.train}}},
                                      {"samples", samples.size()},
                                      {"train_loss", losses}});
  if (!history.epochs.empty()) log << "train: final loss " << history.epochs.back().train_loss << '\n';
  return history;
}

EvalReport cmd_eval(const fs::path& manifest, const fs::path& checkpoint, const fs::path& out_dir,
                    const RunConfig& config, std::ostream& log) {
  const bfen::Model model = bfen::load_checkpoint(checkpoint);
  const Corpus corpus = load_corpus(manifest);
  const auto refs = labeled(corpus);
  const auto samples = load_samples(corpus, refs);
  const EvalReport report = evaluate_model(model, samples, config.train.crop_height, config.train.crop_width);

  fs::create_directories(out_dir);
  write_file(out_dir / "report.txt", report_text(report, "eval"));
  RunConfig echoed = config;
  echoed.model = model.config;
  write_json(out_dir / "report.json", {{"config", run_config_json(echoed)},
                                       {"checkpoint", checkpoint.string()},
                                       {"checkpoint_seed", model.seed},
                                       {"report", report_json(report)}});
  std::ostringstream curve;
  write_curve_csv(curve, report.sa_st);
  write_file(out_dir / "sa_st.csv", curve.str());
  log << "eval: n=" << report.n << " plcc=" << text::format_fixed(report.plcc, 4)
      << " srcc=" << text::format_fixed(report.srcc, 4) << " krcc=" << text::format_fixed(report.krcc, 4)
      << " auc=" << text::format_fixed(report.auc, 4) << '\n';
  return report;
}

ProtocolResult cmd_protocol(const fs::path& manifest, const fs::path& out_dir, const RunConfig& config, int n_trials,
                            std::ostream& log) {
  config.model.validate();
  const Corpus corpus = load_corpus(manifest);
  ProtocolOptions options;
  options.test_fraction = config.test_fraction;
  const ProtocolResult result = run_random_split_protocol(corpus, config.model, config.train, n_trials, options);

  fs::create_directories(out_dir);
  json j = protocol_json(result, config.model, config.train);
  j["config"] = run_config_json(config);
  write_json(out_dir / "protocol.json", j);
  write_file(out_dir / "report.txt", report_text(result.median, "median over " + std::to_string(n_trials) + " trials"));
  for (const auto& t : result.trials) {
    log << "protocol: trial " << t.trial << " srcc=" << text::format_fixed(t.report.srcc, 4) << '\n';
  }
  log << "protocol: median srcc=" << text::format_fixed(result.median.srcc, 4) << '\n';
  return result;
}

LooReport cmd_loo(const fs::path& manifest, const fs::path& out_dir, const RunConfig& config,
                  const std::vector<std::string>& held_out, std::ostream& log) {
  config.model.validate();
  const Corpus corpus = load_corpus(manifest);
  ProtocolOptions options;
  options.held_out = held_out;
  const LooReport result = run_loo_protocol(corpus, config.model, config.train, options);

  fs::create_directories(out_dir);
  json j = loo_json(result, config.model, config.train);
  j["config"] = run_config_json(config);
  write_json(out_dir / "loo.json", j);
  write_file(out_dir / "report.txt", report_text(result.overall, "mean over held-out algorithms"));
  for (std::size_t a = 0; a < result.trials.size(); ++a) {
    log << "loo: " << result.algorithms[a] << " srcc=" << text::format_fixed(result.trials[a].report.srcc, 4) << '\n';
  }
  return result;
}

ComplexityReport cmd_complexity(const fs::path& out_dir, const RunConfig& config, std::ostream& log) {
  config.model.validate();
  if (config.benchmark_images < 0) throw PreconditionError("benchmark_images must be >= 0");
  const bfen::Model model = bfen::init_model(config.model, config.train.seed);
  const int h = config.model.input_height;
  const int w = config.model.input_width;
  const FlopReport flops = count_flops(model, h, w);

  ComplexityReport report;
  report.height = h;
  report.width = w;
  report.param_count = count_params(model);
  report.flops = flops.total();
  if (config.benchmark_images > 0) {
    report.images_per_sec = benchmark_throughput(model, h, w, config.benchmark_images);
    report.environment = hardware_note();
  }

  fs::create_directories(out_dir);
  std::ostringstream text_out;
  write_complexity_report(text_out, report);
  write_file(out_dir / "complexity.txt", text_out.str());
  std::ostringstream layers;
  static const char* kinds[] = {"conv", "conv_transpose", "pooled_conv", "linear", "pool", "activation", "elementwise"};
  layers << "layer,kind,flops\n";
  for (const auto& l : flops.layers) layers << l.name << ',' << kinds[static_cast<int>(l.kind)] << ',' << l.flops << '\n';
  write_file(out_dir / "layers.csv", layers.str());
  json j = {{"config", run_config_json(config)},
            {"input", {h, w}},
            {"params", report.param_count},
            {"flops", report.flops},
            {"spatial_conv_flops", flops.spatial_conv_total()}};
  if (report.images_per_sec > 0.0) {
    j["images_per_sec"] = report.images_per_sec;
    j["environment"] = report.environment;
  }
  write_json(out_dir / "complexity.json", j);
  log << "complexity: " << report.param_count << " params, " << report.flops << " FLOPs at " << h << "x" << w << '\n';
  return report;
}

}  // namespace dqa
