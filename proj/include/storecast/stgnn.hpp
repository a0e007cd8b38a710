#pragma once

// Spatiotemporal graph network over a (week x store) panel.
//
// Target: log-difference of log1p sales. Inputs: standardized exogenous
// features shifted one week. Architecture: adaptive adjacency from store
// embeddings, a causal dilated TCN per store, one graph convolution at the
// final time step with a residual from the input projection, and a linear
// output head per store.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "storecast/checkpoint.hpp"
#include "storecast/date.hpp"
#include "storecast/error.hpp"
#include "storecast/features.hpp"
#include "storecast/log.hpp"
#include "storecast/optim.hpp"
#include "storecast/tensor.hpp"

namespace storecast::stgnn {

using ad::Shape;
using ad::Tensor;
using ad::Var;

inline constexpr std::size_t kDefaultWindow = 12;

/// Dense panel arrays, all row-major with time as the slowest axis.
/// y_* are (T, S); x is (T, S, F). y_diff and y_base are NaN at t = 0.
struct PanelTensors {
  std::size_t weeks = 0;
  std::size_t stores = 0;
  std::size_t features = 0;
  std::vector<int> store_ids;
  std::vector<Date> dates;
  std::vector<std::string> feature_names;

  std::vector<double> y_raw;
  std::vector<double> y_log;
  std::vector<double> y_diff;
  std::vector<double> y_base;
  std::vector<double> x;

  std::vector<double> scaler_mean;
  std::vector<double> scaler_std;
  std::size_t scaler_rows = 0;  // feature rows [0, scaler_rows) fitted the scaler

  double at(const std::vector<double>& m, std::size_t t, std::size_t s) const { return m[t * stores + s]; }
  double x_at(std::size_t t, std::size_t s, std::size_t f) const { return x[(t * stores + s) * features + f]; }
};

/// Every numeric feature column except the raw dollar target.
inline std::vector<std::string> default_feature_columns(const FeatureMatrix& fm) {
  std::vector<std::string> out;
  for (const auto& n : fm.names())
    if (n != "weekly_sales") out.push_back(n);
  return out;
}

/// Number of windows for a series of `weeks` steps.
inline std::size_t window_count(std::size_t weeks, std::size_t window) {
  return weeks > window + 1 ? weeks - 1 - window : 0;
}

/// Build the stationary target, reconstruction bases and shifted standardized
/// features. The scaler is fit on the feature rows that training windows
/// read: with N windows and n_train = floor(train_fraction * N), rows
/// [0, n_train + window - 1).
inline PanelTensors build_panel_tensors(const FeatureMatrix& fm, double train_fraction,
                                        std::size_t window = kDefaultWindow,
                                        std::vector<std::string> feature_columns = {}) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail(ErrorKind::ConfigError, "train fraction must lie in (0, 1)");
  }
  if (feature_columns.empty()) feature_columns = default_feature_columns(fm);
  const auto& groups = fm.groups();
  if (groups.empty()) fail(ErrorKind::RaggedPanel, "feature matrix has no rows");

  PanelTensors pt;
  pt.stores = groups.size();
  pt.weeks = groups.front().second - groups.front().first;
  pt.features = feature_columns.size();
  pt.feature_names = feature_columns;
  pt.dates.assign(fm.dates().begin() + static_cast<long>(groups.front().first),
                  fm.dates().begin() + static_cast<long>(groups.front().second));
  for (const auto& [first, last] : groups) {
    if (last - first != pt.weeks ||
        !std::equal(pt.dates.begin(), pt.dates.end(), fm.dates().begin() + static_cast<long>(first))) {
      fail(ErrorKind::RaggedPanel, "store " + std::to_string(fm.store_ids()[first]) + " is not on the shared week grid");
    }
    pt.store_ids.push_back(fm.store_ids()[first]);
  }
  const std::size_t T = pt.weeks, S = pt.stores, F = pt.features;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  const auto& sales = fm.col("weekly_sales");
  pt.y_raw.resize(T * S);
  pt.y_log.resize(T * S);
  pt.y_diff.assign(T * S, nan);
  pt.y_base.assign(T * S, nan);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      const double y = sales[groups[s].first + t];
      if (!(y > -1.0)) fail(ErrorKind::DomainError, "sales <= -1 cannot be log-transformed");
      pt.y_raw[t * S + s] = y;
      pt.y_log[t * S + s] = std::log1p(y);
    }
    for (std::size_t t = 1; t < T; ++t) {
      pt.y_base[t * S + s] = pt.y_log[(t - 1) * S + s];
      pt.y_diff[t * S + s] = pt.y_log[t * S + s] - pt.y_base[t * S + s];
    }
  }

  const std::size_t n_windows = window_count(T, window);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_windows)));
  pt.scaler_rows = n_train > 0 ? n_train + window - 1
                               : std::max<std::size_t>(1, static_cast<std::size_t>(train_fraction * static_cast<double>(T)));
  pt.scaler_rows = std::min(pt.scaler_rows, T);

  pt.scaler_mean.assign(F, 0.0);
  pt.scaler_std.assign(F, 1.0);
  std::vector<const std::vector<double>*> cols;
  for (const auto& name : feature_columns) cols.push_back(&fm.col(name));
  const double count = static_cast<double>(pt.scaler_rows * S);
  for (std::size_t f = 0; f < F; ++f) {
    double mean = 0.0;
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t t = 0; t < pt.scaler_rows; ++t) mean += (*cols[f])[groups[s].first + t];
    mean /= count;
    double var = 0.0;
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t t = 0; t < pt.scaler_rows; ++t) {
        const double d = (*cols[f])[groups[s].first + t] - mean;
        var += d * d;
      }
    const double sd = std::sqrt(var / count);
    pt.scaler_mean[f] = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      pt.scaler_std[f] = sd;
    } else {
      warn("feature '" + feature_columns[f] + "' is constant over the training range; using std = 1");
    }
  }

  pt.x.assign(T * S * F, 0.0);
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t f = 0; f < F; ++f) {
        const double raw = (*cols[f])[groups[s].first + t - 1];
        pt.x[(t * S + s) * F + f] = (raw - pt.scaler_mean[f]) / pt.scaler_std[f];
      }
  return pt;
}

/// Batched rolling windows. inputs is (N, F, S, L); targets, bases and
/// actuals are (N, S). Window i reads X at times i+1 .. i+L and predicts the
/// log-difference at time i+L+1, whose date is target_dates[i].
struct WindowSet {
  Tensor inputs;
  Tensor targets;
  Tensor bases;
  Tensor actuals;
  std::vector<Date> target_dates;
  std::vector<int> store_ids;

  std::size_t count() const { return target_dates.size(); }
  std::size_t stores() const { return store_ids.size(); }

  /// Windows [first, last), order preserved.
  WindowSet slice(std::size_t first, std::size_t last) const {
    if (first > last || last > count()) fail(ErrorKind::ShapeMismatch, "window slice out of range");
    WindowSet out;
    const std::size_t n = last - first;
    auto cut = [&](const Tensor& t) {
      Shape shape = t.shape();
      const std::size_t row = ad::numel(shape) / shape[0];
      shape[0] = n;
      std::vector<double> data(t.data().begin() + static_cast<long>(first * row),
                               t.data().begin() + static_cast<long>(last * row));
      return Tensor(std::move(shape), std::move(data));
    };
    out.inputs = cut(inputs);
    out.targets = cut(targets);
    out.bases = cut(bases);
    out.actuals = cut(actuals);
    out.target_dates.assign(target_dates.begin() + static_cast<long>(first),
                            target_dates.begin() + static_cast<long>(last));
    out.store_ids = store_ids;
    return out;
  }
};

inline WindowSet make_windows(const PanelTensors& pt, std::size_t window = kDefaultWindow) {
  if (window < 1) fail(ErrorKind::ConfigError, "window length must be positive");
  if (!(pt.weeks > window + 1)) {
    fail(ErrorKind::DomainError, "need more than " + std::to_string(window) + " log-difference steps, have " +
                                     std::to_string(pt.weeks > 0 ? pt.weeks - 1 : 0));
  }
  const std::size_t N = window_count(pt.weeks, window);
  const std::size_t F = pt.features, S = pt.stores, L = window;
  WindowSet ws;
  ws.inputs = Tensor(Shape{N, F, S, L});
  ws.targets = Tensor(Shape{N, S});
  ws.bases = Tensor(Shape{N, S});
  ws.actuals = Tensor(Shape{N, S});
  ws.store_ids = pt.store_ids;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t j = 0; j < L; ++j) ws.inputs[((i * F + f) * S + s) * L + j] = pt.x_at(i + j + 1, s, f);
    const std::size_t target_t = i + L + 1;
    for (std::size_t s = 0; s < S; ++s) {
      ws.targets[i * S + s] = pt.at(pt.y_diff, target_t, s);
      ws.bases[i * S + s] = pt.at(pt.y_base, target_t, s);
      ws.actuals[i * S + s] = pt.at(pt.y_raw, target_t, s);
    }
    ws.target_dates.push_back(pt.dates[target_t]);
  }
  return ws;
}

/// Chronological split: the first floor(train_fraction * N) windows train.
inline std::pair<WindowSet, WindowSet> split_windows(const WindowSet& ws, double train_fraction = 0.8) {
  if (ws.count() < 2) fail(ErrorKind::DomainError, "need at least two windows to split");
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(ws.count())));
  if (n_train == 0 || n_train == ws.count()) {
    fail(ErrorKind::ConfigError, "train fraction leaves an empty train or test split");
  }
  return {ws.slice(0, n_train), ws.slice(n_train, ws.count())};
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ModelConfig {
  std::size_t stores = 0;
  std::size_t features = 0;
  std::size_t window = kDefaultWindow;
  std::size_t hidden = 32;
  std::size_t embed_dim = 16;
  std::size_t kernel = 3;
  std::vector<std::size_t> dilations{1, 2};
  std::uint64_t seed = 42;
};

struct ModelParams {
  ModelConfig config;
  Tensor e1;       // (S, d)
  Tensor e2;       // (S, d)
  Tensor in_w;     // (C, F) input projection
  Tensor in_b;     // (C)
  std::vector<Tensor> tcn_w;  // (C, C, K) per layer
  std::vector<Tensor> tcn_b;  // (C) per layer
  Tensor graph_w;  // (C, C)
  Tensor out_w;    // (1, C) output projection
  Tensor out_b;    // (1)

  std::vector<std::pair<std::string, Tensor*>> named() {
    std::vector<std::pair<std::string, Tensor*>> out{{"e1", &e1}, {"e2", &e2}, {"in_w", &in_w}, {"in_b", &in_b}};
    for (std::size_t l = 0; l < tcn_w.size(); ++l) {
      out.emplace_back("tcn" + std::to_string(l) + "_w", &tcn_w[l]);
      out.emplace_back("tcn" + std::to_string(l) + "_b", &tcn_b[l]);
    }
    out.emplace_back("graph_w", &graph_w);
    out.emplace_back("out_w", &out_w);
    out.emplace_back("out_b", &out_b);
    return out;
  }

  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* t : tensors()) n += t->size();
    return n;
  }
};

/// Weights uniform in +-1/sqrt(fan_in), embeddings N(0, 1) * 0.1, zero biases.
inline ModelParams init_params(const ModelConfig& cfg) {
  if (cfg.stores == 0 || cfg.features == 0 || cfg.hidden == 0 || cfg.embed_dim == 0 || cfg.kernel == 0) {
    fail(ErrorKind::ConfigError, "model dimensions must be positive");
  }
  std::mt19937_64 rng(cfg.seed);
  auto normal = [&](Shape shape, double scale) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = scale * dist(rng);
    return t;
  };
  auto uniform = [&](Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = dist(rng);
    return t;
  };
  const std::size_t S = cfg.stores, F = cfg.features, C = cfg.hidden, K = cfg.kernel;
  ModelParams p;
  p.config = cfg;
  p.e1 = normal(Shape{S, cfg.embed_dim}, 0.1);
  p.e2 = normal(Shape{S, cfg.embed_dim}, 0.1);
  p.in_w = uniform(Shape{C, F}, F);
  p.in_b = Tensor(Shape{C});
  for (std::size_t l = 0; l < cfg.dilations.size(); ++l) {
    p.tcn_w.push_back(uniform(Shape{C, C, K}, C * K));
    p.tcn_b.emplace_back(Shape{C});
  }
  p.graph_w = uniform(Shape{C, C}, C);
  p.out_w = uniform(Shape{1, C}, C);
  p.out_b = Tensor(Shape{1});
  return p;
}

/// Parameters as tape variables.
struct BoundParams {
  Var e1, e2, in_w, in_b, graph_w, out_w, out_b;
  std::vector<Var> tcn_w, tcn_b;
  const ModelConfig* config = nullptr;
};

/// Bind as trainable parameters (gradients flow into the tensors).
inline BoundParams bind(ad::Tape& tape, ModelParams& p) {
  BoundParams b;
  auto param = [&](Tensor& t) {
    t.set_requires_grad(true);
    return tape.parameter(t);
  };
  b.e1 = param(p.e1);
  b.e2 = param(p.e2);
  b.in_w = param(p.in_w);
  b.in_b = param(p.in_b);
  for (std::size_t l = 0; l < p.tcn_w.size(); ++l) {
    b.tcn_w.push_back(param(p.tcn_w[l]));
    b.tcn_b.push_back(param(p.tcn_b[l]));
  }
  b.graph_w = param(p.graph_w);
  b.out_w = param(p.out_w);
  b.out_b = param(p.out_b);
  b.config = &p.config;
  return b;
}

/// Bind as constants for inference.
inline BoundParams bind_const(ad::Tape& tape, const ModelParams& p) {
  BoundParams b;
  b.e1 = tape.view(p.e1);
  b.e2 = tape.view(p.e2);
  b.in_w = tape.view(p.in_w);
  b.in_b = tape.view(p.in_b);
  for (std::size_t l = 0; l < p.tcn_w.size(); ++l) {
    b.tcn_w.push_back(tape.view(p.tcn_w[l]));
    b.tcn_b.push_back(tape.view(p.tcn_b[l]));
  }
  b.graph_w = tape.view(p.graph_w);
  b.out_w = tape.view(p.out_w);
  b.out_b = tape.view(p.out_b);
  b.config = &p.config;
  return b;
}

/// A = row-softmax(ReLU(E1 E2^T)).
inline Var graph_learner(Var e1, Var e2) { return ad::softmax_rows(ad::relu(ad::matmul(e1, ad::transpose(e2)))); }

struct TcnOutput {
  Var projection;  // (B, C, S, L) input projection
  Var hidden;      // (B, C, S, L) after the dilated stack
};

/// Input projection followed by causal dilated convolutions with ReLU. Each
/// store's temporal slice is processed with the same weights.
/// With causal_pad = false the dilated layers are unpadded and each shortens
/// the sequence by (K - 1) * d.
inline TcnOutput tcn_forward(const BoundParams& p, Var x, bool causal_pad = true) {
  const auto& cfg = *p.config;
  const Tensor& X = x.value();
  if (X.rank() != 4 || X.dim(1) != cfg.features || X.dim(2) != cfg.stores) {
    ad::shape_mismatch("tcn_forward input", Shape{X.rank() == 4 ? X.dim(0) : 0, cfg.features, cfg.stores, cfg.window},
                       X.shape());
  }
  TcnOutput out;
  out.projection = ad::conv1x1(x, p.in_w, p.in_b);
  Var h = out.projection;
  for (std::size_t l = 0; l < p.tcn_w.size(); ++l) {
    const std::size_t d = cfg.dilations[l];
    h = ad::relu(ad::conv1d_dilated(h, p.tcn_w[l], p.tcn_b[l], d, causal_pad ? (cfg.kernel - 1) * d : 0));
  }
  out.hidden = h;
  return out;
}

/// Number of trailing time steps that influence the final TCN output.
inline std::size_t receptive_field(const ModelConfig& cfg) {
  std::size_t r = 1;
  for (auto d : cfg.dilations) r += (cfg.kernel - 1) * d;
  return r;
}

/// tcn_forward restricted to the final time step: (B, C, S, 1) projection
/// and hidden state. Only the receptive field of the last step is computed;
/// values equal the last step of tcn_forward.
inline TcnOutput tcn_last_step(const BoundParams& p, Var x) {
  const auto& cfg = *p.config;
  const std::size_t L = x.value().rank() == 4 ? x.value().dim(3) : 0;
  const std::size_t field = receptive_field(cfg);
  if (L < field) {
    TcnOutput full = tcn_forward(p, x);
    return {ad::last_steps(full.projection, 1), ad::last_steps(full.hidden, 1)};
  }
  TcnOutput out = tcn_forward(p, ad::last_steps(x, field), /*causal_pad=*/false);
  out.projection = ad::last_steps(out.projection, 1);
  return out;
}

/// Next-step log-difference per store: (B, F, S, L) -> (B, S).
inline Var model_forward(const BoundParams& p, Var x) {
  const auto& cfg = *p.config;
  const std::size_t B = x.value().dim(0), S = cfg.stores, C = cfg.hidden;
  const TcnOutput tcn = tcn_last_step(p, x);
  const Var h_last = ad::last_step(tcn.hidden);
  const Var residual = ad::reshape(ad::last_step(tcn.projection), Shape{B * S, C});
  const Var adjacency = graph_learner(p.e1, p.e2);
  const Var z = ad::matmul(ad::reshape(ad::graph_aggregate(adjacency, h_last), Shape{B * S, C}), p.graph_w);
  const Var combined = ad::relu(ad::add(z, residual));
  const Var y = ad::add_row_bias(ad::matmul(combined, ad::transpose(p.out_w)), p.out_b);
  return ad::reshape(y, Shape{B, S});
}

/// Forward pass without gradient tracking.
inline Tensor forward_values(const ModelParams& params, const Tensor& inputs) {
  ad::Tape tape;
  const auto bound = bind_const(tape, params);
  return model_forward(bound, tape.view(inputs)).value();
}

inline Tensor adjacency(const ModelParams& params) {
  ad::Tape tape;
  const auto bound = bind_const(tape, params);
  return graph_learner(bound.e1, bound.e2).value();
}

/// Dollar forecast exp(base + diff) - 1 per element.
inline std::vector<double> reconstruct_sales(std::span<const double> diff, std::span<const double> base) {
  if (diff.size() != base.size()) ad::shape_mismatch("reconstruct_sales", Shape{base.size()}, Shape{diff.size()});
  std::vector<double> out(diff.size());
  for (std::size_t i = 0; i < diff.size(); ++i) {
    const double level = base[i] + diff[i];
    if (!std::isfinite(level) || level > 700.0) {
      fail(ErrorKind::OverflowGuard, "reconstructed log level " + csv::format_double(level) + " signals divergence");
    }
    out[i] = std::expm1(level);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

namespace detail {
template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}
template <typename T>
std::vector<T> split_numbers(const std::string& s) {
  std::vector<T> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    long v = 0;
    if (!csv::parse_long(item, v)) fail(ErrorKind::IoError, "bad checkpoint list '" + s + "'");
    out.push_back(static_cast<T>(v));
  }
  return out;
}
}  // namespace detail

inline ad::Checkpoint to_checkpoint(ModelParams& params, const std::vector<int>& store_ids,
                                    const ad::AdamWState* optimizer = nullptr) {
  const auto& c = params.config;
  ad::Checkpoint ck;
  ck.meta = {{"model", "stgnn"},
             {"window", std::to_string(c.window)},
             {"hidden", std::to_string(c.hidden)},
             {"embed_dim", std::to_string(c.embed_dim)},
             {"kernel", std::to_string(c.kernel)},
             {"dilations", detail::join(c.dilations)},
             {"seed", std::to_string(c.seed)},
             {"stores", std::to_string(c.stores)},
             {"features", std::to_string(c.features)},
             {"store_ids", detail::join(store_ids)}};
  const auto named = params.named();
  for (const auto& [name, t] : named) ck.tensors.push_back({name, Tensor(t->shape(), std::vector(t->data().begin(), t->data().end()))});
  if (optimizer != nullptr && !optimizer->m.empty()) {
    ck.optimizer_step = optimizer->step;
    for (std::size_t i = 0; i < named.size(); ++i) {
      ck.optimizer_slots.push_back({named[i].first + ".m", Tensor(named[i].second->shape(), optimizer->m[i])});
      ck.optimizer_slots.push_back({named[i].first + ".v", Tensor(named[i].second->shape(), optimizer->v[i])});
    }
  }
  return ck;
}

struct LoadedModel {
  ModelParams params;
  std::vector<int> store_ids;
  ad::AdamWState optimizer;
};

inline LoadedModel from_checkpoint(const ad::Checkpoint& ck) {
  auto meta = [&](const std::string& key) {
    const auto* v = ck.find_meta(key);
    if (v == nullptr) fail(ErrorKind::IoError, "checkpoint lacks '" + key + "'");
    return *v;
  };
  auto number = [&](const std::string& key) {
    long v = 0;
    if (!csv::parse_long(meta(key), v) || v < 0) fail(ErrorKind::IoError, "bad checkpoint field '" + key + "'");
    return static_cast<std::size_t>(v);
  };
  if (meta("model") != "stgnn") fail(ErrorKind::IoError, "checkpoint does not hold an stgnn model");
  ModelConfig cfg;
  cfg.window = number("window");
  cfg.hidden = number("hidden");
  cfg.embed_dim = number("embed_dim");
  cfg.kernel = number("kernel");
  cfg.dilations = detail::split_numbers<std::size_t>(meta("dilations"));
  cfg.seed = std::stoull(meta("seed"));
  cfg.stores = number("stores");
  cfg.features = number("features");

  LoadedModel out;
  out.params = init_params(cfg);
  out.store_ids = detail::split_numbers<int>(meta("store_ids"));
  const auto named = out.params.named();
  for (const auto& [name, t] : named) {
    const Tensor* src = ck.find_tensor(name);
    if (src == nullptr) fail(ErrorKind::IoError, "checkpoint lacks tensor '" + name + "'");
    if (src->shape() != t->shape()) ad::shape_mismatch("checkpoint tensor " + name, t->shape(), src->shape());
    *t = *src;
  }
  if (!ck.optimizer_slots.empty()) {
    if (ck.optimizer_slots.size() != 2 * named.size()) fail(ErrorKind::IoError, "optimizer state is incomplete");
    out.optimizer.step = ck.optimizer_step;
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto& m = ck.optimizer_slots[2 * i].tensor;
      const auto& v = ck.optimizer_slots[2 * i + 1].tensor;
      out.optimizer.m.emplace_back(m.data().begin(), m.data().end());
      out.optimizer.v.emplace_back(v.data().begin(), v.data().end());
    }
  }
  return out;
}

}  // namespace storecast::stgnn
