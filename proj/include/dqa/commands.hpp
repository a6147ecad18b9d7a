#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dqa/bfen/config.hpp"
#include "dqa/complexity.hpp"
#include "dqa/trainer.hpp"

namespace dqa {

// Effective configuration of one CLI invocation. The file form is JSON:
//   {"model": {...}, "train": {...}, "protocol": {"test_fraction": ...},
//    "scores": {"histogram_bins": ..., "confidence": ...},
//    "complexity": {"benchmark_images": ...}}
// Missing sections keep defaults; unknown keys are rejected.
struct RunConfig {
  bfen::ModelConfig model;
  TrainConfig train;  // train.seed is the master seed
  double test_fraction = 0.2;
  int histogram_bins = 10;
  double confidence = 0.95;
  int benchmark_images = 0;
};

RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_json(const RunConfig& config);

struct ScoresOutcome {
  std::vector<std::string> rejected;          // screening
  std::vector<std::string> constant_raters;   // dropped before z-scoring
  std::vector<std::filesystem::path> files;
};

// screen -> zscore -> rescale -> mos -> summary -> ttest -> histogram.
// Writes report.txt, zscores.csv, mos.csv, summary.csv, ttest.csv, histogram.csv.
ScoresOutcome cmd_process_scores(const std::filesystem::path& scores, const std::filesystem::path& out_dir,
                                 const RunConfig& config, std::ostream& log);

// Trains on every labeled sample. Writes model.json and train.json.
TrainHistory cmd_train(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                       const RunConfig& config, std::ostream& log);

// Writes report.txt, report.json, sa_st.csv.
EvalReport cmd_eval(const std::filesystem::path& manifest, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& out_dir, const RunConfig& config, std::ostream& log);

// Writes protocol.json and report.txt (median).
ProtocolResult cmd_protocol(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                            const RunConfig& config, int n_trials, std::ostream& log);

// Writes loo.json and report.txt (mean over held-out algorithms).
LooReport cmd_loo(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                  const RunConfig& config, const std::vector<std::string>& held_out, std::ostream& log);

// Writes complexity.txt, layers.csv, complexity.json.
ComplexityReport cmd_complexity(const std::filesystem::path& out_dir, const RunConfig& config, std::ostream& log);

}  // namespace dqa
