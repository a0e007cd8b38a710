#pragma once

// Ingest of Walmart-schema weekly sales CSVs: parsing, department
// aggregation and per-store imputation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "storecast/csv.hpp"
#include "storecast/date.hpp"
#include "storecast/error.hpp"
#include "storecast/log.hpp"

namespace storecast {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct RawRecord {
  int store = 0;
  std::optional<int> dept;
  Date date;
  double weekly_sales = kMissing;
  bool is_holiday = false;
  double temperature = kMissing;
  double fuel_price = kMissing;
  double cpi = kMissing;
  double unemployment = kMissing;
};

/// One store's aligned weekly series.
struct StoreSeries {
  int store = 0;
  std::vector<Date> dates;
  std::vector<double> weekly_sales;
  std::vector<double> temperature;
  std::vector<double> fuel_price;
  std::vector<double> cpi;
  std::vector<double> unemployment;
  std::vector<int> is_holiday;

  std::size_t size() const { return dates.size(); }
};

/// Store-level panel, sorted by store id then date. Every store shares one date grid.
struct StorePanel {
  std::vector<StoreSeries> stores;

  std::size_t store_count() const { return stores.size(); }
  std::size_t week_count() const { return stores.empty() ? 0 : stores.front().size(); }
  std::vector<int> store_ids() const {
    std::vector<int> ids;
    for (const auto& s : stores) ids.push_back(s.store);
    return ids;
  }
};

namespace detail {

inline bool parse_bool_cell(std::string_view cell) {
  cell = csv::trim(cell);
  std::string v(cell);
  for (auto& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return v == "true" || v == "1" || v == "t" || v == "yes";
}

template <typename F>
void for_each_numeric(StoreSeries& s, F&& f) {
  f(s.weekly_sales);
  f(s.temperature);
  f(s.fuel_price);
  f(s.cpi);
  f(s.unemployment);
}

}  // namespace detail

/// Parse a CSV with columns Store, Date, Weekly_Sales, IsHoliday, Temperature,
/// Fuel_Price, CPI, Unemployment and an optional Dept. Header match is
/// case-insensitive; `Holiday_Flag` is accepted for IsHoliday. Unparseable
/// numeric cells become NaN.
inline std::vector<RawRecord> parse_raw_csv(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  std::size_t first = 0;
  while (first < lines.size() && csv::trim(lines[first]).empty()) ++first;
  if (first == lines.size()) fail(ErrorKind::EmptyFile, path.string());

  const auto header = csv::split_line(lines[first]);
  auto require = [&](std::string_view name, std::string_view alias = {}) {
    int idx = csv::find_column(header, name);
    if (idx < 0 && !alias.empty()) idx = csv::find_column(header, alias);
    if (idx < 0) fail(ErrorKind::MissingColumn, std::string(name));
    return static_cast<std::size_t>(idx);
  };
  const auto c_store = require("Store");
  const auto c_date = require("Date");
  const auto c_sales = require("Weekly_Sales");
  const auto c_hol = require("IsHoliday", "Holiday_Flag");
  const auto c_temp = require("Temperature");
  const auto c_fuel = require("Fuel_Price");
  const auto c_cpi = require("CPI");
  const auto c_unemp = require("Unemployment");
  const int c_dept = csv::find_column(header, "Dept");

  std::vector<RawRecord> out;
  std::optional<DateFormat> fmt;
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    if (csv::trim(lines[i]).empty()) continue;
    const auto cells = csv::split_line(lines[i]);
    auto cell = [&](std::size_t c) -> std::string_view {
      return c < cells.size() ? std::string_view(cells[c]) : std::string_view{};
    };
    const std::string where = path.filename().string() + ":" + std::to_string(i + 1);

    RawRecord r;
    long store = 0;
    if (!csv::parse_long(cell(c_store), store) || store < 1) {
      fail(ErrorKind::MalformedRow, where + ": bad store id '" + std::string(cell(c_store)) + "'");
    }
    r.store = static_cast<int>(store);
    if (c_dept >= 0) {
      long dept = 0;
      if (csv::parse_long(cell(static_cast<std::size_t>(c_dept)), dept)) r.dept = static_cast<int>(dept);
    }
    const auto date_cell = csv::trim(cell(c_date));
    if (!fmt) {
      fmt = detect_date_format(date_cell);
      if (!fmt) fail(ErrorKind::MalformedRow, where + ": unrecognised date format '" + std::string(date_cell) + "'");
    }
    const auto date = parse_date(date_cell, *fmt);
    if (!date) fail(ErrorKind::MalformedRow, where + ": invalid date '" + std::string(date_cell) + "'");
    r.date = *date;
    r.weekly_sales = csv::parse_double(cell(c_sales));
    r.is_holiday = detail::parse_bool_cell(cell(c_hol));
    r.temperature = csv::parse_double(cell(c_temp));
    r.fuel_price = csv::parse_double(cell(c_fuel));
    r.cpi = csv::parse_double(cell(c_cpi));
    r.unemployment = csv::parse_double(cell(c_unemp));
    out.push_back(r);
  }
  if (out.empty()) fail(ErrorKind::EmptyFile, path.string() + " has a header but no data rows");
  return out;
}

/// Sum department rows into one row per (store, week). Exogenous fields come
/// from the first record of each group after ordering by department; a
/// conflicting value inside a group produces a warning. All stores must share
/// an identical date grid.
inline StorePanel aggregate_to_store_week(std::vector<RawRecord> records) {
  if (records.empty()) fail(ErrorKind::NoRecordsForStore, "no records to aggregate");

  std::stable_sort(records.begin(), records.end(), [](const RawRecord& a, const RawRecord& b) {
    if (a.store != b.store) return a.store < b.store;
    if (a.date != b.date) return a.date < b.date;
    return a.dept.value_or(-1) < b.dept.value_or(-1);
  });

  StorePanel panel;
  std::size_t conflicts = 0;
  for (std::size_t i = 0; i < records.size();) {
    std::size_t j = i;
    const RawRecord& head = records[i];
    double sales = 0.0;
    bool any_sales = false;
    bool holiday = false;
    while (j < records.size() && records[j].store == head.store && records[j].date == head.date) {
      const auto& r = records[j];
      if (!std::isnan(r.weekly_sales)) {
        sales += r.weekly_sales;
        any_sales = true;
      }
      holiday = holiday || r.is_holiday;
      auto differs = [](double a, double b) { return !std::isnan(a) && !std::isnan(b) && a != b; };
      if (differs(r.temperature, head.temperature) || differs(r.fuel_price, head.fuel_price) ||
          differs(r.cpi, head.cpi) || differs(r.unemployment, head.unemployment)) {
        ++conflicts;
      }
      ++j;
    }
    if (panel.stores.empty() || panel.stores.back().store != head.store) {
      panel.stores.emplace_back();
      panel.stores.back().store = head.store;
    }
    auto& s = panel.stores.back();
    s.dates.push_back(head.date);
    s.weekly_sales.push_back(any_sales ? sales : kMissing);
    s.temperature.push_back(head.temperature);
    s.fuel_price.push_back(head.fuel_price);
    s.cpi.push_back(head.cpi);
    s.unemployment.push_back(head.unemployment);
    s.is_holiday.push_back(holiday ? 1 : 0);
    i = j;
  }
  if (conflicts > 0) {
    warn(std::to_string(conflicts) + " department rows disagree with their (store, week) group on exogenous values; "
         "kept the first");
  }

  const auto& grid = panel.stores.front().dates;
  for (const auto& s : panel.stores) {
    if (s.dates != grid) {
      std::ostringstream msg;
      msg << "store " << s.store << " has " << s.dates.size() << " weeks but store " << panel.stores.front().store
          << " has " << grid.size() << " (or the week sets differ)";
      fail(ErrorKind::RaggedPanel, msg.str());
    }
  }
  return panel;
}

/// Fill NaN with forward fill, then backward fill, then zero.
inline void fill_series(std::vector<double>& v) {
  double last = kMissing;
  for (auto& x : v) {
    if (std::isnan(x)) x = last;
    else last = x;
  }
  double next = kMissing;
  for (auto it = v.rbegin(); it != v.rend(); ++it) {
    if (std::isnan(*it)) *it = next;
    else next = *it;
  }
  for (auto& x : v) {
    if (std::isnan(x)) x = 0.0;
  }
}

/// Per-store forward/backward/zero fill of every numeric field. Each store
/// is processed in isolation. Output is sorted by store then date.
inline StorePanel impute_per_store(StorePanel panel) {
  for (auto& s : panel.stores) {
    std::vector<std::size_t> order(s.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.dates[a] < s.dates[b]; });
    auto permute = [&](auto& v) {
      auto copy = v;
      for (std::size_t i = 0; i < order.size(); ++i) v[i] = copy[order[i]];
    };
    permute(s.dates);
    permute(s.is_holiday);
    detail::for_each_numeric(s, [&](std::vector<double>& v) {
      permute(v);
      fill_series(v);
    });
  }
  std::stable_sort(panel.stores.begin(), panel.stores.end(),
                   [](const StoreSeries& a, const StoreSeries& b) { return a.store < b.store; });
  return panel;
}

/// Parse, aggregate and impute in one step.
inline StorePanel load_panel(const std::filesystem::path& path) {
  return impute_per_store(aggregate_to_store_week(parse_raw_csv(path)));
}

/// Canonical panel CSV, sorted by Store then Date, ISO dates.
inline std::string panel_to_csv(const StorePanel& panel) {
  std::ostringstream out;
  out << "Store,Date,Weekly_Sales,IsHoliday,Temperature,Fuel_Price,CPI,Unemployment\n";
  for (const auto& s : panel.stores) {
    for (std::size_t t = 0; t < s.size(); ++t) {
      out << s.store << ',' << s.dates[t].iso() << ',' << csv::format_double(s.weekly_sales[t]) << ','
          << (s.is_holiday[t] ? "TRUE" : "FALSE") << ',' << csv::format_double(s.temperature[t]) << ','
          << csv::format_double(s.fuel_price[t]) << ',' << csv::format_double(s.cpi[t]) << ','
          << csv::format_double(s.unemployment[t]) << '\n';
    }
  }
  return out.str();
}

inline void write_panel_csv(const StorePanel& panel, const std::filesystem::path& path) {
  csv::write_atomic(path, panel_to_csv(panel));
}

}  // namespace storecast
