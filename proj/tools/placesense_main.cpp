// placesense CLI: pipeline subcommands over one JSON config, with flag
// overrides. Exit 0 on success; otherwise one `error: ...` line on stderr.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "placesense/commands.hpp"

namespace {

std::string one_line(std::string msg) {
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ';';
  return msg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"predict binary attributes of physical places from visit logs"};
  app.require_subcommand(1);

  std::string config_path, out_dir, source;
  std::uint64_t seed = 0;
  int workers = 0;
  auto* o_config = app.add_option("--config", config_path, "JSON config file (per-command sections)");
  auto* o_seed = app.add_option("--seed", seed, "global RNG seed (overrides config)");
  auto* o_workers = app.add_option("--workers", workers, "worker thread count (overrides config)");
  auto* o_out = app.add_option("--out", out_dir, "output directory (overrides config)");
  auto* o_source =
      app.add_option("--source", source, "feature source: steps|embedding|combined")
          ->check(CLI::IsMember({"steps", "embedding", "combined"}));

  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "generate a synthetic world: places, visits, labels, ground truth"},
      {"featurize", "build spatio-temporal features from places + visits"},
      {"embed", "factorize the person-place co-visit matrix into embeddings"},
      {"train", "fit linear models for each labeled attribute"},
      {"evaluate", "cross-validated AUC per attribute for the chosen source"},
      {"ablate", "per-feature-group AUC with a shared fold assignment"},
      {"report", "qualitative exports: distributions, top features, coverage"},
  };
  for (const auto& [name, desc] : commands) app.add_subcommand(name, desc)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }

  try {
    placesense::RunConfig cfg;
    if (o_config->count()) cfg = placesense::load_run_config(config_path);
    if (o_seed->count()) cfg.seed = seed;
    if (o_workers->count()) cfg.workers = workers;
    if (o_out->count()) cfg.out_dir = out_dir;
    if (o_source->count()) cfg.source = source;

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "simulate") placesense::cmd_simulate(cfg);
    else if (cmd == "featurize") placesense::cmd_featurize(cfg);
    else if (cmd == "embed") placesense::cmd_embed(cfg);
    else if (cmd == "train") placesense::cmd_train(cfg);
    else if (cmd == "evaluate") placesense::cmd_evaluate(cfg);
    else if (cmd == "ablate") placesense::cmd_ablate(cfg);
    else if (cmd == "report") placesense::cmd_report(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
