#pragma once

// Command implementations behind the storecast executable. Each command
// reads its prerequisites from the output directory, writes its artifacts
// there atomically, and reports progress to `log`.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "storecast/baselines.hpp"
#include "storecast/checkpoint.hpp"
#include "storecast/config.hpp"
#include "storecast/csv.hpp"
#include "storecast/dataset.hpp"
#include "storecast/error.hpp"
#include "storecast/features.hpp"
#include "storecast/graph_analysis.hpp"
#include "storecast/metrics.hpp"
#include "storecast/stgnn.hpp"
#include "storecast/synthetic.hpp"
#include "storecast/trainer.hpp"

namespace storecast::pipeline {

namespace fs = std::filesystem;

/// Artifact file names inside the output directory.
struct Paths {
  fs::path dir;
  fs::path panel() const { return dir / "panel.csv"; }
  fs::path features() const { return dir / "features.csv"; }
  fs::path checkpoint() const { return dir / "stgnn.ckpt"; }
  fs::path history() const { return dir / "stgnn_history.csv"; }
  fs::path forecasts(const std::string& model) const { return dir / ("forecasts_" + model + ".csv"); }
  fs::path arimax_params() const { return dir / "arimax_params.csv"; }
  fs::path metrics_json() const { return dir / "metrics.json"; }
  fs::path metrics_txt() const { return dir / "metrics.txt"; }
  fs::path per_store_metrics() const { return dir / "per_store_metrics.csv"; }
  fs::path heatmap() const { return dir / "adjacency_heatmap.csv"; }
  fs::path centrality() const { return dir / "centrality.json"; }
};

inline void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    fail(ErrorKind::MissingPrerequisite, path.string() + " not found; run `storecast " + producer + "` first");
  }
}

// ---------------------------------------------------------------------------
// Forecast files: long format "store,date,actual,forecast".
// ---------------------------------------------------------------------------

struct ForecastRow {
  int store = 0;
  Date date;
  double actual = 0.0;
  double forecast = 0.0;
};

inline std::string forecasts_to_csv(std::vector<ForecastRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ForecastRow& a, const ForecastRow& b) {
    return a.store != b.store ? a.store < b.store : a.date < b.date;
  });
  std::ostringstream out;
  out << "store,date,actual,forecast\n";
  for (const auto& r : rows)
    out << r.store << ',' << r.date.iso() << ',' << csv::format_double(r.actual) << ','
        << csv::format_double(r.forecast) << '\n';
  return out.str();
}

inline std::vector<ForecastRow> read_forecasts(const fs::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) fail(ErrorKind::EmptyFile, path.string());
  const auto header = csv::split_line(lines[0]);
  const int c_store = csv::find_column(header, "store"), c_date = csv::find_column(header, "date"),
            c_actual = csv::find_column(header, "actual"), c_fc = csv::find_column(header, "forecast");
  if (c_store < 0 || c_date < 0 || c_actual < 0 || c_fc < 0) {
    fail(ErrorKind::MissingColumn, path.string() + " needs store,date,actual,forecast");
  }
  std::vector<ForecastRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (csv::trim(lines[i]).empty()) continue;
    const auto cells = csv::split_line(lines[i]);
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    if (cells.size() != header.size()) fail(ErrorKind::MalformedRow, where);
    ForecastRow r;
    long store = 0;
    const auto date = parse_date(cells[static_cast<std::size_t>(c_date)], DateFormat::Iso);
    if (!csv::parse_long(cells[static_cast<std::size_t>(c_store)], store) || !date) fail(ErrorKind::MalformedRow, where);
    r.store = static_cast<int>(store);
    r.date = *date;
    r.actual = csv::parse_double(cells[static_cast<std::size_t>(c_actual)]);
    r.forecast = csv::parse_double(cells[static_cast<std::size_t>(c_fc)]);
    if (!std::isfinite(r.forecast)) fail(ErrorKind::MalformedRow, where + ": forecast is not finite");
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Raw CSV -> panel.csv (aggregated, aligned, imputed).
inline void cmd_ingest(const RunConfig& cfg, std::ostream& log) {
  if (cfg.data.empty()) fail(ErrorKind::ConfigError, "data: no raw CSV given (use --data or the config file)");
  const Paths paths{cfg.out};
  const auto panel = load_panel(cfg.data);
  write_panel_csv(panel, paths.panel());
  log << "ingest: " << panel.store_count() << " stores x " << panel.week_count() << " weeks -> "
      << paths.panel().string() << '\n';
}

/// panel.csv -> features.csv.
inline void cmd_features(const RunConfig& cfg, std::ostream& log) {
  const Paths paths{cfg.out};
  require_artifact(paths.panel(), "ingest");
  const auto fm = engineer_features(load_panel(paths.panel()));
  write_features_csv(fm, paths.features());
  log << "features: " << fm.rows() << " rows x " << fm.cols() << " columns -> " << paths.features().string() << '\n';
}

struct StgnnData {
  stgnn::PanelTensors tensors;
  stgnn::WindowSet train;
  stgnn::WindowSet test;
};

inline StgnnData prepare_stgnn_data(const FeatureMatrix& fm, const RunConfig& cfg) {
  StgnnData d;
  d.tensors = stgnn::build_panel_tensors(fm, cfg.train_frac, cfg.window);
  auto split = stgnn::split_windows(stgnn::make_windows(d.tensors, cfg.window), cfg.train_frac);
  d.train = std::move(split.first);
  d.test = std::move(split.second);
  return d;
}

inline std::vector<ForecastRow> forecast_rows(const stgnn::Forecasts& fc) {
  std::vector<ForecastRow> rows;
  const std::size_t S = fc.store_ids.size();
  for (std::size_t i = 0; i < fc.dates.size(); ++i)
    for (std::size_t s = 0; s < S; ++s)
      rows.push_back({fc.store_ids[s], fc.dates[i], fc.actuals[i * S + s], fc.dollars[i * S + s]});
  return rows;
}

/// features.csv -> stgnn.ckpt, stgnn_history.csv, forecasts_stgnn.csv.
inline void cmd_train_stgnn(const RunConfig& cfg, std::ostream& log) {
  const Paths paths{cfg.out};
  require_artifact(paths.features(), "features");
  const auto data = prepare_stgnn_data(read_features_csv(paths.features()), cfg);

  stgnn::ModelConfig mc;
  mc.stores = data.tensors.stores;
  mc.features = data.tensors.features;
  mc.window = cfg.window;
  mc.hidden = cfg.hidden;
  mc.embed_dim = cfg.embed_dim;
  mc.seed = cfg.train.seed;
  auto params = stgnn::init_params(mc);
  log << "train-stgnn: " << data.train.count() << " training windows, " << data.test.count() << " test windows, "
      << params.parameter_count() << " parameters\n";

  auto result = stgnn::train(data.train, std::move(params), cfg.train);
  ad::save_checkpoint(stgnn::to_checkpoint(result.params, data.tensors.store_ids, &result.optimizer),
                      paths.checkpoint());
  csv::write_atomic(paths.history(), stgnn::history_to_csv(result.history));
  csv::write_atomic(paths.forecasts("stgnn"), forecasts_to_csv(forecast_rows(stgnn::predict(data.test, result.params))));
  const auto& last = result.history.back();
  log << "train-stgnn: final train loss " << csv::format_double(last.train_loss) << ", val loss "
      << csv::format_double(last.val_loss) << ", lr " << csv::format_double(last.lr) << '\n';
}

/// Per-store ARIMAX on the first train_frac of each series; one-step
/// forecasts over the rest.
inline void cmd_fit_arimax(const RunConfig& cfg, std::ostream& log) {
  const Paths paths{cfg.out};
  require_artifact(paths.features(), "features");
  const auto fm = read_features_csv(paths.features());
  for (const auto& name : cfg.arimax_exog)
    if (!fm.has(name)) fail(ErrorKind::ConfigError, "arimax_exog: no feature column named '" + name + "'");

  std::ostringstream params_csv;
  params_csv << "store,c,phi,theta,sigma2,css,iterations";
  for (const auto& name : cfg.arimax_exog) params_csv << ",beta_" << name;
  params_csv << '\n';

  std::vector<ForecastRow> rows;
  const auto& sales = fm.col("weekly_sales");
  for (const auto& [first, last] : fm.groups()) {
    const int store = fm.store_ids()[first];
    const std::size_t T = last - first;
    const auto n_train = static_cast<std::size_t>(std::floor(cfg.train_frac * static_cast<double>(T)));
    const std::vector<double> y(sales.begin() + static_cast<long>(first), sales.begin() + static_cast<long>(last));
    baselines::Exogenous exog;
    for (const auto& name : cfg.arimax_exog) {
      const auto& col = fm.col(name);
      exog.names.push_back(name);
      exog.columns.emplace_back(col.begin() + static_cast<long>(first), col.begin() + static_cast<long>(last));
    }
    baselines::ArimaxParams p;
    try {
      p = baselines::fit_arimax(y, exog, n_train);
    } catch (const Error& e) {
      fail(e.kind(), "store " + std::to_string(store) + ": " + e.what());
    }
    const auto fc = baselines::arimax_forecast(p, y, exog, n_train, T);
    for (std::size_t t = n_train; t < T; ++t) rows.push_back({store, fm.dates()[first + t], y[t], fc[t - n_train]});
    params_csv << store << ',' << csv::format_double(p.c) << ',' << csv::format_double(p.phi) << ','
               << csv::format_double(p.theta) << ',' << csv::format_double(p.sigma2) << ','
               << csv::format_double(p.css) << ',' << p.iterations;
    for (double b : p.beta) params_csv << ',' << csv::format_double(b);
    params_csv << '\n';
  }
  csv::write_atomic(paths.arimax_params(), params_csv.str());
  csv::write_atomic(paths.forecasts("arimax"), forecasts_to_csv(rows));
  log << "fit-arimax: " << fm.groups().size() << " stores fitted -> " << paths.arimax_params().string() << '\n';
}

/// Model names with a forecasts_<name>.csv in the output directory, sorted.
inline std::vector<std::string> forecast_models(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("forecasts_", 0) == 0 && entry.path().extension() == ".csv") {
      out.push_back(name.substr(10, name.size() - 14));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Scores every forecasts_*.csv plus one-step persistence on the dates that
/// all models cover, using actuals from panel.csv.
inline std::vector<metrics::MetricsReport> cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  const Paths paths{cfg.out};
  const auto models = forecast_models(paths.dir);
  if (models.empty()) {
    fail(ErrorKind::MissingPrerequisite, "no forecasts_*.csv in " + paths.dir.string() +
                                             "; run `storecast train-stgnn` or `storecast fit-arimax` first");
  }
  require_artifact(paths.panel(), "ingest");
  const auto panel = load_panel(paths.panel());
  const std::size_t S = panel.store_count();
  const auto& grid = panel.stores.front().dates;

  std::map<std::string, std::map<std::pair<int, Date>, double>> by_model;
  for (const auto& m : models)
    for (const auto& r : read_forecasts(paths.forecasts(m))) by_model[m][{r.store, r.date}] = r.forecast;

  // Week t is scored when every model forecasts every store and week t - 1 exists.
  std::vector<std::size_t> steps;
  for (std::size_t t = 1; t < grid.size(); ++t) {
    bool covered = true;
    for (const auto& [m, fc] : by_model)
      for (const auto& s : panel.stores) covered = covered && fc.count({s.store, grid[t]}) > 0;
    if (covered) steps.push_back(t);
  }
  if (steps.empty()) fail(ErrorKind::AlignmentMismatch, "forecast files share no complete week with the panel");

  metrics::EvalPanel base;
  base.steps = steps.size();
  base.stores = S;
  base.store_ids = panel.store_ids();
  for (std::size_t t : steps) {
    base.dates.push_back(grid[t]);
    for (const auto& s : panel.stores) {
      base.actual.push_back(s.weekly_sales[t]);
      base.baseline.push_back(s.weekly_sales[t - 1]);
    }
  }
  std::vector<metrics::NamedPanel> named;
  for (const auto& [m, fc] : by_model) {
    metrics::EvalPanel p = base;
    for (std::size_t t : steps)
      for (const auto& s : panel.stores) p.forecast.push_back(fc.at({s.store, grid[t]}));
    named.push_back({m, std::move(p)});
  }
  if (!by_model.count("persistence")) {
    metrics::EvalPanel p = base;
    p.forecast = base.baseline;
    named.push_back({"persistence", std::move(p)});
  }
  const auto reports = metrics::build_report(named);

  auto json = metrics::to_json(reports);
  nlohmann::ordered_json doc;
  doc["test_weeks"] = steps.size();
  doc["first_date"] = base.dates.front().iso();
  doc["last_date"] = base.dates.back().iso();
  if (fs::exists(paths.arimax_params())) {
    const auto header = csv::split_line(csv::read_lines(paths.arimax_params()).at(0));
    std::vector<std::string> exog;
    for (const auto& h : header)
      if (h.rfind("beta_", 0) == 0) exog.push_back(h.substr(5));
    doc["arimax_exogenous"] = exog;
  }
  doc["models"] = std::move(json["models"]);
  const auto table = metrics::comparison_table(reports);
  csv::write_atomic(paths.metrics_json(), doc.dump(2) + "\n");
  csv::write_atomic(paths.metrics_txt(), table);
  csv::write_atomic(paths.per_store_metrics(), metrics::per_store_csv(reports));
  log << "evaluate: " << steps.size() << " test weeks (" << base.dates.front().iso() << " .. "
      << base.dates.back().iso() << ")\n"
      << table;
  return reports;
}

/// stgnn.ckpt -> adjacency_heatmap.csv, centrality.json.
inline graph::AdjacencyAnalysis cmd_graph_report(const RunConfig& cfg, std::ostream& log) {
  const Paths paths{cfg.out};
  require_artifact(paths.checkpoint(), "train-stgnn");
  const auto model = stgnn::from_checkpoint(ad::load_checkpoint(paths.checkpoint()));
  const auto an = graph::analyze(graph::Adjacency::from_tensor(stgnn::adjacency(model.params)), model.store_ids);
  graph::export_heatmap_data(an, paths.heatmap(), paths.centrality());
  log << "graph-report: top stores by centrality:";
  for (std::size_t i = 0; i < std::min<std::size_t>(5, an.ranking.size()); ++i) log << ' ' << an.ranking[i];
  log << "\n";
  return an;
}

/// Write a synthetic department-level CSV in the raw input schema.
inline fs::path cmd_simulate(const RunConfig& cfg, const synthetic::WalmartSimConfig& sim, std::ostream& log) {
  const fs::path path = cfg.out / "synthetic_walmart.csv";
  synthetic::write_walmart_csv(sim, path);
  log << "simulate: " << sim.stores << " stores x " << sim.weeks << " weeks -> " << path.string() << '\n';
  return path;
}

}  // namespace storecast::pipeline
