#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "storecast/csv.hpp"
#include "storecast/error.hpp"
#include "storecast/optim.hpp"
#include "storecast/stgnn.hpp"

namespace storecast::stgnn {

struct TrainConfig {
  std::size_t epochs = 100;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  double plateau_min_delta = 1e-6;
  double min_lr = 1e-5;
  double val_fraction_of_train = 0.1;
  std::uint64_t seed = 42;
  double smooth_l1_beta = 1.0;

  void validate() const {
    if (epochs < 1) fail(ErrorKind::ConfigError, "epochs must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) fail(ErrorKind::ConfigError, "plateau_factor must lie in (0, 1)");
    if (!(val_fraction_of_train >= 0.0 && val_fraction_of_train < 0.5)) {
      fail(ErrorKind::ConfigError, "val_fraction_of_train must lie in [0, 0.5)");
    }
    if (!(lr > 0.0)) fail(ErrorKind::ConfigError, "lr must be positive");
    if (!(weight_decay >= 0.0)) fail(ErrorKind::ConfigError, "weight_decay must be non-negative");
    if (!(smooth_l1_beta > 0.0)) fail(ErrorKind::ConfigError, "smooth_l1_beta must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_mae = 0.0;
  double val_loss = 0.0;
  double val_mae = 0.0;
  double lr = 0.0;
};

using TrainHistory = std::vector<EpochRecord>;

/// Multiplies the learning rate by `factor` once the monitored loss has gone
/// `patience` consecutive epochs without improving on the best by at least
/// `min_delta`. Never goes below `min_lr`.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, std::size_t patience, double min_delta, double min_lr)
      : lr_(lr), factor_(factor), patience_(patience), min_delta_(min_delta), min_lr_(min_lr) {}

  double lr() const { return lr_; }

  void step(double loss) {
    if (loss < best_ - min_delta_) {
      best_ = loss;
      bad_epochs_ = 0;
      return;
    }
    if (++bad_epochs_ >= patience_) {
      lr_ = std::max(lr_ * factor_, min_lr_);
      bad_epochs_ = 0;
    }
  }

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double min_delta_;
  double min_lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
  ad::AdamWState optimizer;
};

namespace detail {
inline double mean_abs_error(const Tensor& pred, const Tensor& target) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}
}  // namespace detail

/// Full-batch AdamW on Smooth L1 over the log-difference target. The last
/// floor(val_fraction * N) training windows are held out for validation and
/// drive the plateau scheduler; without them the training loss does.
inline TrainResult train(const WindowSet& windows, ModelParams params, const TrainConfig& cfg) {
  cfg.validate();
  if (windows.count() < 2) fail(ErrorKind::DomainError, "need at least two training windows");
  const auto n_val =
      static_cast<std::size_t>(std::floor(cfg.val_fraction_of_train * static_cast<double>(windows.count())));
  const WindowSet fit = windows.slice(0, windows.count() - n_val);
  const WindowSet val = windows.slice(windows.count() - n_val, windows.count());

  TrainResult result;
  PlateauScheduler scheduler(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_min_delta, cfg.min_lr);
  ad::AdamWConfig opt{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8};
  const auto tensors = params.tensors();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = scheduler.lr();
    {
      for (auto* t : tensors) t->zero_grad();
      ad::Tape tape;
      const auto bound = bind(tape, params);
      const Var pred = model_forward(bound, tape.view(fit.inputs));
      const Var loss = ad::smooth_l1(pred, tape.view(fit.targets), cfg.smooth_l1_beta);
      rec.train_loss = loss.value().item();
      rec.train_mae = detail::mean_abs_error(pred.value(), fit.targets);
      if (!std::isfinite(rec.train_loss)) {
        fail(ErrorKind::DivergenceDetected, "training loss is not finite at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
    }
    opt.lr = scheduler.lr();
    ad::adamw_step(tensors, result.optimizer, opt);

    if (val.count() > 0) {
      ad::Tape tape;
      const auto bound = bind_const(tape, params);
      const Var pred = model_forward(bound, tape.view(val.inputs));
      rec.val_loss = ad::smooth_l1(pred, tape.view(val.targets), cfg.smooth_l1_beta).value().item();
      rec.val_mae = detail::mean_abs_error(pred.value(), val.targets);
      if (!std::isfinite(rec.val_loss)) {
        fail(ErrorKind::DivergenceDetected, "validation loss is not finite at epoch " + std::to_string(epoch));
      }
    } else {
      rec.val_loss = rec.train_loss;
      rec.val_mae = rec.train_mae;
    }
    scheduler.step(rec.val_loss);
    result.history.push_back(rec);
  }
  for (auto* t : tensors) t->clear_grad();
  result.params = std::move(params);
  return result;
}

/// Dollar forecasts, one row per window: (N, S) aligned with target_dates.
struct Forecasts {
  Tensor dollars;
  Tensor actuals;
  std::vector<Date> dates;
  std::vector<int> store_ids;
};

inline Forecasts predict(const WindowSet& windows, const ModelParams& params) {
  Forecasts out;
  const Tensor diff = forward_values(params, windows.inputs);
  out.dollars = Tensor(diff.shape(), reconstruct_sales(diff.data(), windows.bases.data()));
  out.actuals = windows.actuals;
  out.dates = windows.target_dates;
  out.store_ids = windows.store_ids;
  return out;
}

inline std::string history_to_csv(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,train_loss,train_mae,val_loss,val_mae,lr\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << csv::format_double(r.train_loss) << ',' << csv::format_double(r.train_mae) << ','
        << csv::format_double(r.val_loss) << ',' << csv::format_double(r.val_mae) << ',' << csv::format_double(r.lr)
        << '\n';
  }
  return out.str();
}

}  // namespace storecast::stgnn
