#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "storecast/metrics.hpp"

using namespace storecast;
using namespace storecast::metrics;
using Catch::Approx;

namespace {

EvalPanel panel(std::size_t steps, std::size_t stores, std::vector<double> y, std::vector<double> yhat,
                std::vector<double> base = {}) {
  EvalPanel p;
  p.steps = steps;
  p.stores = stores;
  p.actual = std::move(y);
  p.forecast = std::move(yhat);
  p.baseline = base.empty() ? p.actual : std::move(base);
  for (std::size_t s = 0; s < stores; ++s) p.store_ids.push_back(static_cast<int>(s + 1));
  return p;
}

EvalPanel random_panel(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 10), steps(1, 20);
  std::uniform_real_distribution<double> level(100.0, 1e6), noise(-0.3, 0.3);
  const std::size_t S = dim(rng), T = steps(rng);
  std::vector<double> y, f, b;
  for (std::size_t i = 0; i < S * T; ++i) {
    const double v = level(rng);
    y.push_back(v);
    f.push_back(v * (1.0 + noise(rng)));
    b.push_back(v * (1.0 + noise(rng)));
  }
  return panel(T, S, y, f, b);
}

// Straightforward re-derivation of each metric from its formula.
struct Brute {
  std::vector<double> mae, rmse, mape;
  double ntae, win, p90, var;
};

Brute brute_force(const EvalPanel& p) {
  Brute r{};
  double abs_err = 0.0, volume = 0.0, wins = 0.0;
  for (std::size_t s = 0; s < p.stores; ++s) {
    double a = 0.0, sq = 0.0, pct = 0.0;
    for (std::size_t t = 0; t < p.steps; ++t) {
      const std::size_t i = t * p.stores + s;
      const double err = p.actual[i] - p.forecast[i];
      a += std::fabs(err);
      sq += err * err;
      pct += std::fabs(err) / p.actual[i];
      abs_err += std::fabs(err);
      volume += p.actual[i];
      if (std::fabs(err) < std::fabs(p.actual[i] - p.baseline[i])) wins += 1.0;
    }
    r.mae.push_back(a / p.steps);
    r.rmse.push_back(std::sqrt(sq / p.steps));
    r.mape.push_back(100.0 * pct / p.steps);
  }
  r.ntae = 100.0 * abs_err / volume;
  r.win = 100.0 * wins / static_cast<double>(p.steps * p.stores);
  std::vector<double> sorted = r.mape;
  std::sort(sorted.begin(), sorted.end());
  const double pos = 0.9 * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  r.p90 = lo + 1 < sorted.size() ? sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac : sorted[lo];
  double mean = 0.0;
  for (double m : r.mape) mean += m / static_cast<double>(r.mape.size());
  for (double m : r.mape) r.var += (m - mean) * (m - mean) / static_cast<double>(r.mape.size());
  return r;
}

}  // namespace

TEST_CASE("NTAE", "[metrics]") {
  CHECK(ntae(panel(2, 1, {100, 100}, {90, 110})) == Approx(10.0).epsilon(1e-15));
  CHECK(ntae(panel(2, 1, {100, 100}, {100, 100})) == 0.0);
  try {
    ntae(panel(2, 1, {0, 0}, {1, 1}));
    FAIL("expected ZeroVolume");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroVolume);
  }
}

TEST_CASE("per-store MAE, RMSE and MAPE", "[metrics]") {
  const auto p = panel(2, 1, {10, 20}, {12, 16});
  CHECK(store_mae(p, 0) == 3.0);
  CHECK(store_rmse(p, 0) == Approx(std::sqrt(10.0)).epsilon(1e-15));
  CHECK(store_mape(p, 0) == Approx(20.0).epsilon(1e-14));
  const auto perfect = panel(3, 1, {1, 2, 3}, {1, 2, 3});
  CHECK(store_mae(perfect, 0) == 0.0);
  CHECK(store_rmse(perfect, 0) == 0.0);
  CHECK(store_mape(perfect, 0) == 0.0);
  CHECK_THROWS_AS(store_mape(panel(1, 1, {0}, {3}), 0), Error);
}

TEST_CASE("P90 and variance of store MAPEs", "[metrics]") {
  CHECK(p90_mape({5, 5, 5, 5}) == 5.0);
  CHECK(var_mape({5, 5, 5, 5}) == 0.0);
  const std::vector<double> m{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(p90_mape(m) == Approx(9.1).epsilon(1e-14));
  CHECK(var_mape(m) == Approx(8.25).epsilon(1e-14));
  CHECK(p90_mape({4.0}) == 4.0);
}

TEST_CASE("win rate uses strict improvement", "[metrics]") {
  CHECK(win_rate(panel(2, 2, {1, 2, 3, 4}, {2, 3, 4, 5}, {2, 3, 4, 5})) == 0.0);
  CHECK(win_rate(panel(2, 2, {1, 2, 3, 4}, {1, 2, 3, 4}, {2, 3, 4, 5})) == 100.0);
  CHECK(win_rate(panel(2, 1, {10, 10}, {10.5, 12}, {11, 11})) == 50.0);
  CHECK(win_rate(panel(2, 1, {10, 10}, {9, 12}, {11, 11})) == 0.0);
}

TEST_CASE("rows with non-positive actuals are excluded", "[metrics]") {
  const auto p = panel(3, 1, {100, 0, 50}, {90, 5, 55});
  CHECK(excluded_count(p) == 1);
  CHECK(ntae(p) == Approx(100.0 * 15.0 / 150.0));
  CHECK(store_mape(p, 0) == Approx(10.0));
}

TEST_CASE("metrics agree with a brute-force implementation", "[metrics][property]") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_panel(rng);
    const auto r = evaluate("m", p);
    const auto b = brute_force(p);
    CHECK(r.ntae == Approx(b.ntae).margin(1e-10));
    CHECK(r.win_rate == Approx(b.win).margin(1e-10));
    CHECK(r.p90_mape == Approx(b.p90).margin(1e-10));
    CHECK(r.var_mape == Approx(b.var).margin(1e-10));
    for (std::size_t s = 0; s < p.stores; ++s) {
      CHECK(r.mae[s] == Approx(b.mae[s]).margin(1e-10 * std::max(1.0, b.mae[s])));
      CHECK(r.rmse[s] == Approx(b.rmse[s]).margin(1e-10 * std::max(1.0, b.rmse[s])));
      CHECK(r.mape[s] == Approx(b.mape[s]).margin(1e-10));
      CHECK(r.rmse[s] >= r.mae[s] * (1.0 - 1e-12));
    }
  }
}

TEST_CASE("scale invariance and the NTAE identity", "[metrics][property]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_panel(rng);
    auto scaled = p;
    const double k = 3.75;
    for (auto* v : {&scaled.actual, &scaled.forecast, &scaled.baseline})
      for (auto& x : *v) x *= k;
    const auto r = evaluate("m", p), rs = evaluate("m", scaled);
    CHECK(rs.ntae == Approx(r.ntae).epsilon(1e-12));
    CHECK(rs.win_rate == r.win_rate);
    for (std::size_t s = 0; s < p.stores; ++s) {
      CHECK(rs.mape[s] == Approx(r.mape[s]).epsilon(1e-12));
      CHECK(rs.mae[s] == Approx(k * r.mae[s]).epsilon(1e-12));
      CHECK(rs.rmse[s] == Approx(k * r.rmse[s]).epsilon(1e-12));
    }
    double weighted = 0.0, volume = 0.0;
    for (std::size_t s = 0; s < p.stores; ++s) weighted += r.mae[s] * static_cast<double>(p.steps);
    for (double y : p.actual) volume += y;
    CHECK(r.ntae == Approx(100.0 * weighted / volume).epsilon(1e-12));
  }
}

TEST_CASE("report assembly", "[metrics]") {
  const std::vector<double> y{10, 20, 30, 40};
  const std::vector<double> base{12, 18, 33, 36};
  NamedPanel good{"good", panel(2, 2, y, {10, 21, 30, 41}, base)};
  NamedPanel perfect{"perfect", panel(2, 2, y, y, base)};
  NamedPanel bad{"bad", panel(2, 2, y, {1, 2, 3, 4}, base)};
  const auto reports = build_report({bad, good, perfect});
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].model == "perfect");
  CHECK(reports[1].model == "good");
  CHECK(reports[2].model == "bad");
  CHECK(reports[0].ntae == 0.0);
  CHECK(reports[0].p90_mape == 0.0);
  CHECK(reports[0].var_mape == 0.0);
  CHECK(reports[0].win_rate == 100.0);

  const auto table = comparison_table(reports);
  for (const char* col : {"Model", "NTAE (%)", "Win Rate (%)", "P90 MAPE (%)", "Var. of MAPE"})
    CHECK(table.find(col) != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);

  const auto json = to_json(reports);
  CHECK(json["models"][0]["model"] == "perfect");
  CHECK(json["models"][1]["stores"].size() == 2);

  const auto csv = per_store_csv(reports);
  CHECK(csv.rfind("model,store,mae,rmse,mape\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

  NamedPanel shifted{"shifted", panel(2, 2, {10, 20, 30, 41}, y, base)};
  try {
    build_report({good, shifted});
    FAIL("expected AlignmentMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AlignmentMismatch);
  }
}
