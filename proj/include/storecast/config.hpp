#pragma once

// Run configuration: a key = value text file, with command-line flags
// applied on top.
//
//   # comment
//   data = data/walmart.csv
//   epochs = 100
//   arimax_exog = temperature, fuel_price, cpi

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "storecast/baselines.hpp"
#include "storecast/csv.hpp"
#include "storecast/error.hpp"
#include "storecast/trainer.hpp"

namespace storecast {

struct RunConfig {
  std::filesystem::path data;
  std::filesystem::path out = "out";
  std::size_t window = stgnn::kDefaultWindow;
  double train_frac = 0.8;
  std::size_t hidden = 32;
  std::size_t embed_dim = 16;
  stgnn::TrainConfig train;
  std::vector<std::string> arimax_exog = baselines::default_arimax_exogenous();

  std::uint64_t seed() const { return train.seed; }

  void validate() const {
    if (!(train_frac > 0.0 && train_frac < 1.0)) fail(ErrorKind::ConfigError, "train_frac must lie in (0, 1)");
    if (window < 1) fail(ErrorKind::ConfigError, "window must be >= 1");
    if (hidden < 1 || embed_dim < 1) fail(ErrorKind::ConfigError, "hidden and embed_dim must be >= 1");
    if (out.empty()) fail(ErrorKind::ConfigError, "out must not be empty");
    train.validate();
  }
};

namespace detail {

inline double config_real(const std::string& key, const std::string& value) {
  const double v = csv::parse_double(value);
  if (std::isnan(v)) fail(ErrorKind::ConfigError, key + ": '" + value + "' is not a number");
  return v;
}

inline std::size_t config_count(const std::string& key, const std::string& value) {
  long v = 0;
  if (!csv::parse_long(value, v) || v < 0) fail(ErrorKind::ConfigError, key + ": '" + value + "' is not a count");
  return static_cast<std::size_t>(v);
}

inline std::vector<std::string> config_list(const std::string& value) {
  std::vector<std::string> out;
  for (const auto& item : csv::split_line(value)) {
    const auto t = csv::trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

}  // namespace detail

/// Apply one key/value pair. Unknown keys are a ConfigError.
inline void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  auto& t = cfg.train;
  if (key == "data") cfg.data = value;
  else if (key == "out") cfg.out = value;
  else if (key == "window") cfg.window = config_count(key, value);
  else if (key == "train_frac") cfg.train_frac = config_real(key, value);
  else if (key == "hidden") cfg.hidden = config_count(key, value);
  else if (key == "embed_dim") cfg.embed_dim = config_count(key, value);
  else if (key == "seed") t.seed = config_count(key, value);
  else if (key == "epochs") t.epochs = config_count(key, value);
  else if (key == "lr") t.lr = config_real(key, value);
  else if (key == "weight_decay") t.weight_decay = config_real(key, value);
  else if (key == "plateau_factor") t.plateau_factor = config_real(key, value);
  else if (key == "plateau_patience") t.plateau_patience = config_count(key, value);
  else if (key == "plateau_min_delta") t.plateau_min_delta = config_real(key, value);
  else if (key == "min_lr") t.min_lr = config_real(key, value);
  else if (key == "val_fraction_of_train") t.val_fraction_of_train = config_real(key, value);
  else if (key == "smooth_l1_beta") t.smooth_l1_beta = config_real(key, value);
  else if (key == "arimax_exog") cfg.arimax_exog = config_list(value);
  else fail(ErrorKind::ConfigError, "unknown config key '" + key + "'");
}

inline RunConfig parse_config(const std::string& text, RunConfig cfg = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trimmed = csv::trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::ConfigError, "line " + std::to_string(number) + ": expected key = value");
    const std::string key(csv::trim(trimmed.substr(0, eq)));
    const std::string value(csv::trim(trimmed.substr(eq + 1)));
    apply_config_value(cfg, key, value);
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig cfg = {}) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::ConfigError, "config file not found: " + path.string());
  std::string text;
  for (const auto& l : csv::read_lines(path)) text += l + "\n";
  return parse_config(text, std::move(cfg));
}

/// Canonical key = value rendering; parse_config(to_text(c)) reproduces c.
inline std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream out;
  const auto& t = cfg.train;
  out << "data = " << cfg.data.string() << '\n'
      << "out = " << cfg.out.string() << '\n'
      << "window = " << cfg.window << '\n'
      << "train_frac = " << csv::format_double(cfg.train_frac) << '\n'
      << "hidden = " << cfg.hidden << '\n'
      << "embed_dim = " << cfg.embed_dim << '\n'
      << "seed = " << t.seed << '\n'
      << "epochs = " << t.epochs << '\n'
      << "lr = " << csv::format_double(t.lr) << '\n'
      << "weight_decay = " << csv::format_double(t.weight_decay) << '\n'
      << "plateau_factor = " << csv::format_double(t.plateau_factor) << '\n'
      << "plateau_patience = " << t.plateau_patience << '\n'
      << "plateau_min_delta = " << csv::format_double(t.plateau_min_delta) << '\n'
      << "min_lr = " << csv::format_double(t.min_lr) << '\n'
      << "val_fraction_of_train = " << csv::format_double(t.val_fraction_of_train) << '\n'
      << "smooth_l1_beta = " << csv::format_double(t.smooth_l1_beta) << '\n'
      << "arimax_exog = ";
  for (std::size_t i = 0; i < cfg.arimax_exog.size(); ++i) out << (i ? "," : "") << cfg.arimax_exog[i];
  out << '\n';
  return out.str();
}

}  // namespace storecast
