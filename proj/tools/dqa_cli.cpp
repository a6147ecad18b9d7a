#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dqa/commands.hpp"
#include "dqa/error.hpp"
#include "dqa/study_http.hpp"
#include "dqa/study_service.hpp"

namespace {

dqa::StudyServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed (overrides train.seed)");
  if (needs_out) cmd->add_option("--out", c.out, "output directory")->required();
}

dqa::RunConfig effective(const Common& c) {
  dqa::RunConfig rc = c.config.empty() ? dqa::RunConfig{} : dqa::load_run_config(c.config);
  if (c.seed) rc.train.seed = *c.seed;
  std::cout << "config " << dqa::run_config_json(rc).dump() << '\n';
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"De-raining quality assessment toolkit"};
  app.require_subcommand(1);

  Common scores_opts, train_opts, eval_opts, protocol_opts, loo_opts, complexity_opts, serve_opts;
  std::string scores_path, manifest, checkpoint, host = "127.0.0.1", log_path = "study_log.jsonl";
  int trials = 10;
  int port = 8080;
  std::vector<std::string> hold_out;

  auto* process = app.add_subcommand("process-scores", "raw ratings -> screening, z-scores, MOS and statistics");
  add_common(process, scores_opts);
  process->add_option("--scores", scores_path, "raw score table (CSV)")->required()->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "train on every labeled sample of a manifest");
  add_common(train, train_opts);
  train->add_option("--manifest", manifest, "corpus manifest")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a labeled manifest");
  add_common(eval, eval_opts);
  eval->add_option("--manifest", manifest, "corpus manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);

  auto* protocol = app.add_subcommand("protocol", "repeated random 80/20 splits, median report");
  add_common(protocol, protocol_opts);
  protocol->add_option("--manifest", manifest, "corpus manifest")->required()->check(CLI::ExistingFile);
  protocol->add_option("--trials", trials, "number of trials")->check(CLI::PositiveNumber);

  auto* loo = app.add_subcommand("loo", "leave-one-algorithm-out evaluation");
  add_common(loo, loo_opts);
  loo->add_option("--manifest", manifest, "corpus manifest")->required()->check(CLI::ExistingFile);
  loo->add_option("--hold-out", hold_out, "algorithm(s) to hold out; default all");

  auto* complexity = app.add_subcommand("complexity", "parameter and FLOP counts, optional throughput");
  add_common(complexity, complexity_opts);

  auto* serve = app.add_subcommand("serve", "run the rating study HTTP service");
  add_common(serve, serve_opts, false);
  serve->add_option("--port", port, "listen port (0 = any)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "listen address");
  serve->add_option("--log", log_path, "append-only study record log");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*process) {
      dqa::cmd_process_scores(scores_path, scores_opts.out, effective(scores_opts), std::cerr);
    } else if (*train) {
      dqa::cmd_train(manifest, train_opts.out, effective(train_opts), std::cerr);
    } else if (*eval) {
      dqa::cmd_eval(manifest, checkpoint, eval_opts.out, effective(eval_opts), std::cerr);
    } else if (*protocol) {
      dqa::cmd_protocol(manifest, protocol_opts.out, effective(protocol_opts), trials, std::cerr);
    } else if (*loo) {
      dqa::cmd_loo(manifest, loo_opts.out, effective(loo_opts), hold_out, std::cerr);
    } else if (*complexity) {
      dqa::cmd_complexity(complexity_opts.out, effective(complexity_opts), std::cerr);
    } else if (*serve) {
      const dqa::RunConfig rc = effective(serve_opts);
      dqa::StudyService service(log_path);
      dqa::StudyServer server(service, rc.train.seed);
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ':' << bound << " (log " << log_path << ")" << std::endl;
      server.run();
      g_server = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
