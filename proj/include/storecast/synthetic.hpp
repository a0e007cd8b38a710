#pragma once

// Synthetic Walmart-schema data for fixtures and tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "storecast/csv.hpp"
#include "storecast/dataset.hpp"
#include "storecast/date.hpp"
#include "storecast/features.hpp"

namespace storecast::synthetic {

struct WalmartSimConfig {
  std::size_t stores = 5;
  std::size_t weeks = 143;
  std::size_t departments = 3;
  std::size_t regions = 2;  // stores share a latent demand factor per region
  std::uint64_t seed = 2024;
  Date first_week = *Date::from_ymd(2010, 2, 5);
};

/// Weeks flagged as holidays in the source data: Super Bowl, Labor Day,
/// Thanksgiving and Christmas.
inline bool simulated_holiday_flag(Date week_ending) {
  const int y = week_ending.year();
  using namespace std::chrono;
  const Date super_bowl(sys_days{year{y} / February / Sunday[2]});
  const Date labor_day(sys_days{year{y} / September / Monday[1]});
  for (Date d : {super_bowl, labor_day, thanksgiving_date(y), christmas_date(y), christmas_date(y - 1)}) {
    if (week_contains(week_ending, d)) return true;
  }
  return false;
}

/// Department-level records. Log store sales combine a store level, an
/// annual cycle, holiday uplift, a regional AR(1) factor and store noise.
inline std::vector<RawRecord> simulate_walmart(const WalmartSimConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const std::size_t S = cfg.stores, T = cfg.weeks, R = std::max<std::size_t>(1, cfg.regions);
  std::vector<double> level(S), cpi0(S), unemp0(S), temp0(S);
  for (std::size_t s = 0; s < S; ++s) {
    level[s] = std::log(3e5 + 1.5e6 * uniform(rng));
    cpi0[s] = 130.0 + 90.0 * uniform(rng);
    unemp0[s] = 5.0 + 6.0 * uniform(rng);
    temp0[s] = 45.0 + 30.0 * uniform(rng);
  }
  std::vector<double> shares(cfg.departments);
  double share_total = 0.0;
  for (auto& sh : shares) share_total += (sh = 0.5 + uniform(rng));
  for (auto& sh : shares) sh /= share_total;

  std::vector<std::vector<double>> region(R, std::vector<double>(T, 0.0));
  for (auto& f : region)
    for (std::size_t t = 1; t < T; ++t) f[t] = 0.6 * f[t - 1] + 0.03 * normal(rng);
  std::vector<double> fuel(T, 2.6);
  for (std::size_t t = 1; t < T; ++t) fuel[t] = fuel[t - 1] + 0.03 * normal(rng);

  std::vector<RawRecord> out;
  for (std::size_t s = 0; s < S; ++s) {
    double unemp = unemp0[s];
    for (std::size_t t = 0; t < T; ++t) {
      const Date d = cfg.first_week.plus_days(static_cast<int>(7 * t));
      const double phase = 2.0 * std::numbers::pi * d.iso_week() / 52.0;
      double log_sales = level[s] + 0.06 * std::sin(phase + 0.3 * static_cast<double>(s)) + region[s % R][t] +
                         0.015 * normal(rng);
      if (week_contains(d, thanksgiving_date(d.year()))) log_sales += 0.25;
      if (week_contains(d.plus_days(7), christmas_date(d.year()))) log_sales += 0.35;
      const double sales = std::exp(log_sales);
      unemp += 0.02 * normal(rng);
      const double temp = temp0[s] - 22.0 * std::cos(phase) + 3.0 * normal(rng);
      const double cpi = cpi0[s] * (1.0 + 0.0004 * static_cast<double>(t));
      for (std::size_t k = 0; k < cfg.departments; ++k) {
        RawRecord r;
        r.store = static_cast<int>(s + 1);
        r.dept = static_cast<int>(k + 1);
        r.date = d;
        r.weekly_sales = sales * shares[k];
        r.is_holiday = simulated_holiday_flag(d);
        r.temperature = temp;
        r.fuel_price = fuel[t];
        r.cpi = cpi;
        r.unemployment = unemp;
        out.push_back(r);
      }
    }
  }
  return out;
}

inline std::string records_to_csv(const std::vector<RawRecord>& records) {
  std::ostringstream out;
  out << "Store,Dept,Date,Weekly_Sales,IsHoliday,Temperature,Fuel_Price,CPI,Unemployment\n";
  for (const auto& r : records) {
    out << r.store << ',' << (r.dept ? std::to_string(*r.dept) : "") << ',' << r.date.iso() << ','
        << csv::format_double(r.weekly_sales) << ',' << (r.is_holiday ? "TRUE" : "FALSE") << ','
        << csv::format_double(r.temperature) << ',' << csv::format_double(r.fuel_price) << ','
        << csv::format_double(r.cpi) << ',' << csv::format_double(r.unemployment) << '\n';
  }
  return out.str();
}

inline void write_walmart_csv(const WalmartSimConfig& cfg, const std::filesystem::path& path) {
  csv::write_atomic(path, records_to_csv(simulate_walmart(cfg)));
}

}  // namespace storecast::synthetic
