#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "storecast/config.hpp"
#include "storecast/error.hpp"
#include "storecast/pipeline.hpp"

using namespace storecast;

namespace {

struct Flags {
  std::optional<std::string> config, data, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, window;
  std::optional<double> train_frac;
};

void add_common(CLI::App* cmd, Flags& f) {
  const RunConfig d;
  cmd->add_option("--config", f.config, "key = value config file; flags override it");
  cmd->add_option("--data", f.data, "raw department-level CSV");
  cmd->add_option("--out", f.out, "artifact directory")->default_str(d.out.string());
  cmd->add_option("--seed", f.seed, "random seed")->default_str(std::to_string(d.train.seed));
  cmd->add_option("--epochs", f.epochs, "training epochs")->default_str(std::to_string(d.train.epochs));
  cmd->add_option("--window", f.window, "lookback window in weeks")->default_str(std::to_string(d.window));
  cmd->add_option("--train-frac", f.train_frac, "chronological training fraction")
      ->default_str(csv::format_double(d.train_frac));
}

// defaults <- config file <- flags
RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (f.config) cfg = load_config(*f.config, cfg);
  if (f.data) cfg.data = *f.data;
  if (f.out) cfg.out = *f.out;
  if (f.seed) cfg.train.seed = *f.seed;
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.window) cfg.window = *f.window;
  if (f.train_frac) cfg.train_frac = *f.train_frac;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-store weekly sales forecasting with a spatio-temporal graph network"};
  app.require_subcommand(1);

  Flags flags;
  synthetic::WalmartSimConfig sim;
  auto* ingest = app.add_subcommand("ingest", "aggregate a raw CSV into out/panel.csv");
  auto* features = app.add_subcommand("features", "engineer features into out/features.csv");
  auto* train = app.add_subcommand("train-stgnn", "train the STGNN and forecast the test windows");
  auto* arimax = app.add_subcommand("fit-arimax", "fit per-store ARIMAX(1,0,1) baselines");
  auto* evaluate = app.add_subcommand("evaluate", "score every forecasts_*.csv against persistence");
  auto* graph = app.add_subcommand("graph-report", "export the learned adjacency and store centrality");
  auto* simulate = app.add_subcommand("simulate", "write a synthetic raw CSV to out/synthetic_walmart.csv");
  for (auto* cmd : {ingest, features, train, arimax, evaluate, graph, simulate}) add_common(cmd, flags);
  simulate->add_option("--stores", sim.stores, "number of stores")->capture_default_str();
  simulate->add_option("--weeks", sim.weeks, "number of weeks")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const RunConfig cfg = resolve(flags);
    auto& log = std::cout;
    if (ingest->parsed()) pipeline::cmd_ingest(cfg, log);
    else if (features->parsed()) pipeline::cmd_features(cfg, log);
    else if (train->parsed()) pipeline::cmd_train_stgnn(cfg, log);
    else if (arimax->parsed()) pipeline::cmd_fit_arimax(cfg, log);
    else if (evaluate->parsed()) pipeline::cmd_evaluate(cfg, log);
    else if (graph->parsed()) pipeline::cmd_graph_report(cfg, log);
    else if (simulate->parsed()) {
      sim.seed = cfg.train.seed;
      pipeline::cmd_simulate(cfg, sim, log);
    }
  } catch (const Error& e) {
    std::cerr << "storecast: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "storecast: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
