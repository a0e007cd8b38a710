#pragma once

// Forecast evaluation: NTAE, per-store MAE/RMSE/MAPE, P90 and variance of
// store MAPEs, and win rate against one-step persistence.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "storecast/csv.hpp"
#include "storecast/date.hpp"
#include "storecast/error.hpp"

namespace storecast::metrics {

/// Aligned (T' x S) actuals, forecasts and persistence forecasts, row-major
/// with time as the slowest axis.
struct EvalPanel {
  std::size_t steps = 0;
  std::size_t stores = 0;
  std::vector<double> actual;
  std::vector<double> forecast;
  std::vector<double> baseline;
  std::vector<int> store_ids;
  std::vector<Date> dates;

  double y(std::size_t t, std::size_t s) const { return actual[t * stores + s]; }
  double yhat(std::size_t t, std::size_t s) const { return forecast[t * stores + s]; }
  double ybase(std::size_t t, std::size_t s) const { return baseline[t * stores + s]; }

  void validate() const {
    const std::size_t n = steps * stores;
    if (actual.size() != n || forecast.size() != n || (!baseline.empty() && baseline.size() != n)) {
      fail(ErrorKind::AlignmentMismatch, "panel arrays do not match " + std::to_string(steps) + "x" +
                                             std::to_string(stores));
    }
    if (!store_ids.empty() && store_ids.size() != stores) fail(ErrorKind::AlignmentMismatch, "store id count");
    if (!dates.empty() && dates.size() != steps) fail(ErrorKind::AlignmentMismatch, "date count");
  }
};

/// Rows with y <= 0 cannot enter MAPE or NTAE denominators.
inline std::size_t excluded_count(const EvalPanel& p) {
  return static_cast<std::size_t>(std::count_if(p.actual.begin(), p.actual.end(), [](double v) { return !(v > 0.0); }));
}

/// 100 * sum|y - yhat| / sum y over points with y > 0.
inline double ntae(const EvalPanel& p) {
  p.validate();
  double err = 0.0, volume = 0.0;
  for (std::size_t i = 0; i < p.actual.size(); ++i) {
    if (!(p.actual[i] > 0.0)) continue;
    err += std::abs(p.actual[i] - p.forecast[i]);
    volume += p.actual[i];
  }
  if (!(volume > 0.0)) fail(ErrorKind::ZeroVolume, "total actual volume is zero");
  return 100.0 * err / volume;
}

inline double store_mae(const EvalPanel& p, std::size_t s) {
  if (p.steps == 0) fail(ErrorKind::EmptyStore, "no time steps");
  double sum = 0.0;
  for (std::size_t t = 0; t < p.steps; ++t) sum += std::abs(p.y(t, s) - p.yhat(t, s));
  return sum / static_cast<double>(p.steps);
}

inline double store_rmse(const EvalPanel& p, std::size_t s) {
  if (p.steps == 0) fail(ErrorKind::EmptyStore, "no time steps");
  double sum = 0.0;
  for (std::size_t t = 0; t < p.steps; ++t) {
    const double d = p.y(t, s) - p.yhat(t, s);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(p.steps));
}

/// Mean absolute percentage error over the store's rows with y > 0.
inline double store_mape(const EvalPanel& p, std::size_t s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < p.steps; ++t) {
    const double y = p.y(t, s);
    if (!(y > 0.0)) continue;
    sum += std::abs((y - p.yhat(t, s)) / y);
    ++n;
  }
  if (n == 0) fail(ErrorKind::EmptyStore, "store index " + std::to_string(s) + " has no rows with positive sales");
  return 100.0 * sum / static_cast<double>(n);
}

/// Linear interpolation between order statistics at zero-based rank q (S - 1).
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorKind::EmptyStore, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double rank = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double p90_mape(const std::vector<double>& mapes) { return percentile(mapes, 0.9); }

/// Population variance (1/S).
inline double var_mape(const std::vector<double>& mapes) {
  if (mapes.empty()) fail(ErrorKind::EmptyStore, "variance of an empty set");
  double mean = 0.0;
  for (double m : mapes) mean += m;
  mean /= static_cast<double>(mapes.size());
  double v = 0.0;
  for (double m : mapes) v += (m - mean) * (m - mean);
  return v / static_cast<double>(mapes.size());
}

/// Percentage of points where the model strictly beats persistence.
inline double win_rate(const EvalPanel& p) {
  p.validate();
  if (p.baseline.empty()) fail(ErrorKind::AlignmentMismatch, "win rate needs baseline forecasts");
  if (p.actual.empty()) fail(ErrorKind::EmptyStore, "no points to score");
  std::size_t wins = 0;
  for (std::size_t i = 0; i < p.actual.size(); ++i) {
    if (std::abs(p.actual[i] - p.forecast[i]) < std::abs(p.actual[i] - p.baseline[i])) ++wins;
  }
  return 100.0 * static_cast<double>(wins) / static_cast<double>(p.actual.size());
}

struct MetricsReport {
  std::string model;
  std::vector<int> store_ids;
  std::vector<double> mae;
  std::vector<double> rmse;
  std::vector<double> mape;
  double ntae = 0.0;
  double win_rate = 0.0;
  double p90_mape = 0.0;
  double var_mape = 0.0;
  std::size_t excluded_rows = 0;
};

inline MetricsReport evaluate(const std::string& model, const EvalPanel& p) {
  p.validate();
  MetricsReport r;
  r.model = model;
  r.store_ids = p.store_ids;
  for (std::size_t s = 0; s < p.stores; ++s) {
    r.mae.push_back(store_mae(p, s));
    r.rmse.push_back(store_rmse(p, s));
    r.mape.push_back(store_mape(p, s));
  }
  r.ntae = ntae(p);
  r.win_rate = win_rate(p);
  r.p90_mape = p90_mape(r.mape);
  r.var_mape = var_mape(r.mape);
  r.excluded_rows = excluded_count(p);
  return r;
}

struct NamedPanel {
  std::string model;
  EvalPanel panel;
};

/// One report per model, sorted by NTAE ascending (ties by name). All panels
/// must share shape, stores, dates and actuals.
inline std::vector<MetricsReport> build_report(const std::vector<NamedPanel>& panels) {
  std::vector<MetricsReport> out;
  for (const auto& np : panels) {
    const auto& ref = panels.front().panel;
    const auto& p = np.panel;
    if (p.steps != ref.steps || p.stores != ref.stores || p.store_ids != ref.store_ids || p.dates != ref.dates ||
        p.actual != ref.actual) {
      fail(ErrorKind::AlignmentMismatch, "model '" + np.model + "' is not aligned with '" + panels.front().model + "'");
    }
    out.push_back(evaluate(np.model, p));
  }
  std::stable_sort(out.begin(), out.end(), [](const MetricsReport& a, const MetricsReport& b) {
    if (a.ntae != b.ntae) return a.ntae < b.ntae;
    return a.model < b.model;
  });
  return out;
}

inline nlohmann::ordered_json to_json(const std::vector<MetricsReport>& reports) {
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json stores = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < r.mape.size(); ++s) {
      stores.push_back({{"store", r.store_ids.empty() ? static_cast<int>(s) : r.store_ids[s]},
                        {"mae", r.mae[s]},
                        {"rmse", r.rmse[s]},
                        {"mape", r.mape[s]}});
    }
    models.push_back({{"model", r.model},
                      {"ntae", r.ntae},
                      {"win_rate", r.win_rate},
                      {"p90_mape", r.p90_mape},
                      {"var_mape", r.var_mape},
                      {"excluded_rows", r.excluded_rows},
                      {"stores", std::move(stores)}});
  }
  return {{"models", std::move(models)}};
}

/// Aligned-column comparison table: Model, NTAE (%), Win Rate (%), P90 MAPE (%), Var. of MAPE.
inline std::string comparison_table(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.model.size());
  out << std::left << std::setw(static_cast<int>(width)) << "Model" << std::right << "  " << std::setw(9) << "NTAE (%)"
      << "  " << std::setw(13) << "Win Rate (%)" << "  " << std::setw(13) << "P90 MAPE (%)" << "  " << std::setw(12)
      << "Var. of MAPE" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(width)) << r.model << std::right << "  " << std::setw(9) << r.ntae
        << "  " << std::setw(13) << r.win_rate << "  " << std::setw(13) << r.p90_mape << "  " << std::setw(12)
        << r.var_mape << '\n';
  }
  return out.str();
}

inline std::string per_store_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "model,store,mae,rmse,mape\n";
  for (const auto& r : reports)
    for (std::size_t s = 0; s < r.mape.size(); ++s)
      out << r.model << ',' << (r.store_ids.empty() ? static_cast<int>(s) : r.store_ids[s]) << ','
          << csv::format_double(r.mae[s]) << ',' << csv::format_double(r.rmse[s]) << ','
          << csv::format_double(r.mape[s]) << '\n';
  return out.str();
}

}  // namespace storecast::metrics
