#pragma once

// Engineered feature table: calendar and cyclical encodings, holiday flags,
// per-store lags, trailing rolling statistics, EWMAs and log1p sales.
//
// Every sales-derived column at (store, t) uses only that store's rows
// strictly before t.

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "storecast/csv.hpp"
#include "storecast/dataset.hpp"
#include "storecast/date.hpp"
#include "storecast/error.hpp"

namespace storecast {

inline constexpr std::array<int, 7> kLagHorizons{1, 2, 3, 7, 14, 28, 52};
inline constexpr std::array<int, 5> kRollingMeanWindows{3, 4, 8, 12, 52};
inline constexpr std::array<int, 4> kRollingStdWindows{3, 4, 8, 52};
inline constexpr std::array<int, 3> kEwmaSpans{3, 7, 14};

/// Column-oriented feature table. Rows are grouped by store (ascending id)
/// and ordered by date within each store.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  std::size_t rows() const { return dates_.size(); }
  std::size_t cols() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<int>& store_ids() const { return stores_; }
  const std::vector<Date>& dates() const { return dates_; }

  /// Half-open row range [first, last) of each store.
  const std::vector<std::pair<std::size_t, std::size_t>>& groups() const { return groups_; }

  bool has(std::string_view name) const { return index_of(name) >= 0; }
  int index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<int>(i);
    return -1;
  }

  const std::vector<double>& col(std::string_view name) const { return columns_[checked_index(name)]; }
  std::vector<double>& col(std::string_view name) { return columns_[checked_index(name)]; }
  const std::vector<double>& col(std::size_t i) const { return columns_[i]; }

  /// Add (or replace) a column.
  void set(const std::string& name, std::vector<double> values) {
    if (values.size() != rows()) {
      fail(ErrorKind::ShapeMismatch, "column " + name + " has " + std::to_string(values.size()) + " rows, expected " +
                                         std::to_string(rows()));
    }
    const int idx = index_of(name);
    if (idx >= 0) {
      columns_[static_cast<std::size_t>(idx)] = std::move(values);
    } else {
      names_.push_back(name);
      columns_.push_back(std::move(values));
    }
  }

  void set_keys(std::vector<int> stores, std::vector<Date> dates) {
    stores_ = std::move(stores);
    dates_ = std::move(dates);
    groups_.clear();
    for (std::size_t i = 0; i < stores_.size();) {
      std::size_t j = i;
      while (j < stores_.size() && stores_[j] == stores_[i]) ++j;
      groups_.emplace_back(i, j);
      i = j;
    }
  }

 private:
  std::size_t checked_index(std::string_view name) const {
    const int idx = index_of(name);
    if (idx < 0) fail(ErrorKind::MissingColumn, std::string(name));
    return static_cast<std::size_t>(idx);
  }

  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::vector<int> stores_;
  std::vector<Date> dates_;
  std::vector<std::pair<std::size_t, std::size_t>> groups_;
};

inline std::string lag_name(int k) { return "lag_" + std::to_string(k); }
inline std::string roll_mean_name(int w) { return "roll_mean_" + std::to_string(w); }
inline std::string roll_std_name(int w) { return "roll_std_" + std::to_string(w); }
inline std::string ewma_name(int s) { return "ewma_" + std::to_string(s); }

/// Flatten the panel into a row table and add year, month, ISO week,
/// day of week (Monday = 0) and the sin/cos encodings of week (period 52)
/// and month (period 12).
inline FeatureMatrix add_calendar_features(const StorePanel& panel) {
  std::vector<int> stores;
  std::vector<Date> dates;
  std::vector<double> sales, holiday, temp, fuel, cpi, unemp;
  for (const auto& s : panel.stores) {
    for (std::size_t t = 0; t < s.size(); ++t) {
      stores.push_back(s.store);
      dates.push_back(s.dates[t]);
      sales.push_back(s.weekly_sales[t]);
      holiday.push_back(s.is_holiday[t]);
      temp.push_back(s.temperature[t]);
      fuel.push_back(s.fuel_price[t]);
      cpi.push_back(s.cpi[t]);
      unemp.push_back(s.unemployment[t]);
    }
  }
  FeatureMatrix fm;
  fm.set_keys(std::move(stores), std::move(dates));
  fm.set("weekly_sales", std::move(sales));
  fm.set("is_holiday", std::move(holiday));
  fm.set("temperature", std::move(temp));
  fm.set("fuel_price", std::move(fuel));
  fm.set("cpi", std::move(cpi));
  fm.set("unemployment", std::move(unemp));

  const auto n = fm.rows();
  std::vector<double> year(n), month(n), week(n), dow(n), wsin(n), wcos(n), msin(n), mcos(n);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const Date& d = fm.dates()[i];
    year[i] = d.year();
    month[i] = d.month();
    week[i] = d.iso_week();
    dow[i] = d.iso_weekday() - 1.0;
    wsin[i] = std::sin(two_pi * week[i] / 52.0);
    wcos[i] = std::cos(two_pi * week[i] / 52.0);
    msin[i] = std::sin(two_pi * month[i] / 12.0);
    mcos[i] = std::cos(two_pi * month[i] / 12.0);
  }
  fm.set("year", std::move(year));
  fm.set("month", std::move(month));
  fm.set("week_of_year", std::move(week));
  fm.set("day_of_week", std::move(dow));
  fm.set("week_sin", std::move(wsin));
  fm.set("week_cos", std::move(wcos));
  fm.set("month_sin", std::move(msin));
  fm.set("month_cos", std::move(mcos));
  return fm;
}

/// True when `day` falls in the week (week_ending - 6, week_ending].
inline bool week_contains(Date week_ending, Date day) {
  return day <= week_ending && day >= week_ending.plus_days(-6);
}

inline bool is_major_holiday_week(Date week_ending) {
  for (int y : {week_ending.year() - 1, week_ending.year()}) {
    if (week_contains(week_ending, christmas_date(y)) || week_contains(week_ending, thanksgiving_date(y))) return true;
  }
  return false;
}

/// is_major_holiday marks Christmas and Thanksgiving weeks; is_minor_holiday
/// marks every other week the source flags as a holiday.
inline FeatureMatrix add_holiday_flags(FeatureMatrix fm) {
  const auto& flag = fm.col("is_holiday");
  std::vector<double> major(fm.rows()), minor(fm.rows());
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    major[i] = is_major_holiday_week(fm.dates()[i]) ? 1.0 : 0.0;
    minor[i] = (flag[i] != 0.0 && major[i] == 0.0) ? 1.0 : 0.0;
  }
  fm.set("is_major_holiday", std::move(major));
  fm.set("is_minor_holiday", std::move(minor));
  return fm;
}

namespace detail {

/// Apply `f(series, out)` to each store's slice of `source`.
template <typename F>
std::vector<double> per_store(const FeatureMatrix& fm, const std::vector<double>& source, F&& f) {
  std::vector<double> out(fm.rows(), kMissing);
  for (const auto& [first, last] : fm.groups()) {
    std::vector<double> series(source.begin() + static_cast<long>(first), source.begin() + static_cast<long>(last));
    std::vector<double> res(series.size(), kMissing);
    f(series, res);
    std::copy(res.begin(), res.end(), out.begin() + static_cast<long>(first));
  }
  return out;
}

inline void fill_per_store(const FeatureMatrix& fm, std::vector<double>& column) {
  for (const auto& [first, last] : fm.groups()) {
    std::vector<double> slice(column.begin() + static_cast<long>(first), column.begin() + static_cast<long>(last));
    fill_series(slice);
    std::copy(slice.begin(), slice.end(), column.begin() + static_cast<long>(first));
  }
}

}  // namespace detail

/// lag_k(s, t) = weekly_sales(s, t - k); positions without history are
/// filled per store (forward, backward, zero).
inline FeatureMatrix add_lags(FeatureMatrix fm) {
  const auto sales = fm.col("weekly_sales");
  for (int k : kLagHorizons) {
    auto col = detail::per_store(fm, sales, [k](const std::vector<double>& y, std::vector<double>& out) {
      for (std::size_t t = static_cast<std::size_t>(k); t < y.size(); ++t) out[t] = y[t - static_cast<std::size_t>(k)];
    });
    detail::fill_per_store(fm, col);
    fm.set(lag_name(k), std::move(col));
  }
  return fm;
}

/// Trailing mean over y[t-w .. t-1] (needs at least one past point).
inline std::vector<double> trailing_mean(const std::vector<double>& y, int window) {
  std::vector<double> out(y.size(), kMissing);
  for (std::size_t t = 1; t < y.size(); ++t) {
    const std::size_t first = t >= static_cast<std::size_t>(window) ? t - static_cast<std::size_t>(window) : 0;
    double sum = 0.0;
    for (std::size_t i = first; i < t; ++i) sum += y[i];
    out[t] = sum / static_cast<double>(t - first);
  }
  return out;
}

/// Trailing sample standard deviation over y[t-w .. t-1] (needs two past points).
inline std::vector<double> trailing_std(const std::vector<double>& y, int window) {
  std::vector<double> out(y.size(), kMissing);
  for (std::size_t t = 2; t < y.size(); ++t) {
    const std::size_t first = t >= static_cast<std::size_t>(window) ? t - static_cast<std::size_t>(window) : 0;
    const auto n = static_cast<double>(t - first);
    if (n < 2) continue;
    double mean = 0.0;
    for (std::size_t i = first; i < t; ++i) mean += y[i];
    mean /= n;
    double ss = 0.0;
    for (std::size_t i = first; i < t; ++i) ss += (y[i] - mean) * (y[i] - mean);
    out[t] = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

inline FeatureMatrix add_rolling_stats(FeatureMatrix fm) {
  const auto sales = fm.col("weekly_sales");
  for (int w : kRollingMeanWindows) {
    auto col = detail::per_store(fm, sales, [w](const std::vector<double>& y, std::vector<double>& out) {
      out = trailing_mean(y, w);
    });
    detail::fill_per_store(fm, col);
    fm.set(roll_mean_name(w), std::move(col));
  }
  for (int w : kRollingStdWindows) {
    auto col = detail::per_store(fm, sales, [w](const std::vector<double>& y, std::vector<double>& out) {
      out = trailing_std(y, w);
    });
    detail::fill_per_store(fm, col);
    fm.set(roll_std_name(w), std::move(col));
  }
  return fm;
}

/// Recursive EWMA with alpha = 2 / (span + 1) and e_0 = y_0, shifted one
/// step so position t holds e_{t-1}.
inline std::vector<double> shifted_ewma(const std::vector<double>& y, int span) {
  std::vector<double> out(y.size(), kMissing);
  if (y.empty()) return out;
  const double alpha = 2.0 / (span + 1.0);
  double e = y[0];
  for (std::size_t t = 1; t < y.size(); ++t) {
    out[t] = e;
    e = alpha * y[t] + (1.0 - alpha) * e;
  }
  return out;
}

inline FeatureMatrix add_ewma(FeatureMatrix fm) {
  const auto sales = fm.col("weekly_sales");
  for (int span : kEwmaSpans) {
    auto col = detail::per_store(fm, sales, [span](const std::vector<double>& y, std::vector<double>& out) {
      out = shifted_ewma(y, span);
    });
    detail::fill_per_store(fm, col);
    fm.set(ewma_name(span), std::move(col));
  }
  return fm;
}

inline FeatureMatrix log1p_transform(FeatureMatrix fm) {
  const auto& sales = fm.col("weekly_sales");
  std::vector<double> out(sales.size());
  for (std::size_t i = 0; i < sales.size(); ++i) {
    if (!(sales[i] > -1.0)) {
      fail(ErrorKind::DomainError, "weekly_sales " + csv::format_double(sales[i]) + " <= -1 for store " +
                                       std::to_string(fm.store_ids()[i]) + " on " + fm.dates()[i].iso());
    }
    out[i] = std::log1p(sales[i]);
  }
  fm.set("sales_log1p", std::move(out));
  return fm;
}

/// Full feature pipeline in the documented column order, followed by a
/// final per-store fill of every column.
inline FeatureMatrix engineer_features(const StorePanel& panel) {
  auto fm = add_calendar_features(panel);
  fm = add_holiday_flags(std::move(fm));
  fm = add_lags(std::move(fm));
  fm = add_rolling_stats(std::move(fm));
  fm = add_ewma(std::move(fm));
  fm = log1p_transform(std::move(fm));
  for (std::size_t c = 0; c < fm.cols(); ++c) {
    auto column = fm.col(c);
    detail::fill_per_store(fm, column);
    fm.set(fm.names()[c], std::move(column));
  }
  return fm;
}

inline std::string features_to_csv(const FeatureMatrix& fm) {
  std::ostringstream out;
  out << "store,date";
  for (const auto& n : fm.names()) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < fm.rows(); ++r) {
    out << fm.store_ids()[r] << ',' << fm.dates()[r].iso();
    for (std::size_t c = 0; c < fm.cols(); ++c) out << ',' << csv::format_double(fm.col(c)[r]);
    out << '\n';
  }
  return out.str();
}

inline void write_features_csv(const FeatureMatrix& fm, const std::filesystem::path& path) {
  csv::write_atomic(path, features_to_csv(fm));
}

inline FeatureMatrix read_features_csv(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) fail(ErrorKind::EmptyFile, path.string());
  const auto header = csv::split_line(lines[0]);
  if (header.size() < 2 || header[0] != "store" || header[1] != "date") {
    fail(ErrorKind::MissingColumn, "features file must start with store,date");
  }
  std::vector<int> stores;
  std::vector<Date> dates;
  std::vector<std::vector<double>> cols(header.size() - 2);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = csv::split_line(lines[i]);
    if (cells.size() != header.size()) fail(ErrorKind::MalformedRow, path.string() + ":" + std::to_string(i + 1));
    long store = 0;
    const auto date = parse_date(cells[1], DateFormat::Iso);
    if (!csv::parse_long(cells[0], store) || !date) {
      fail(ErrorKind::MalformedRow, path.string() + ":" + std::to_string(i + 1));
    }
    stores.push_back(static_cast<int>(store));
    dates.push_back(*date);
    for (std::size_t c = 2; c < cells.size(); ++c) cols[c - 2].push_back(csv::parse_double(cells[c]));
  }
  FeatureMatrix fm;
  fm.set_keys(std::move(stores), std::move(dates));
  for (std::size_t c = 0; c < cols.size(); ++c) fm.set(header[c + 2], std::move(cols[c]));
  return fm;
}

}  // namespace storecast
