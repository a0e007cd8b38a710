#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "storecast/error.hpp"
#include "storecast/tensor.hpp"

namespace storecast::ad {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One AdamW update. Weight decay is decoupled (p -= lr * wd * p) and applied
/// before the bias-corrected Adam step.
inline void adamw_step(std::span<Tensor* const> params, AdamWState& state, const AdamWConfig& cfg) {
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    fail(ErrorKind::ShapeMismatch, "optimizer state holds " + std::to_string(state.m.size()) + " slots for " +
                                       std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->has_grad()) fail(ErrorKind::MissingGradient, "parameter " + std::to_string(i) + " has no gradient");
    if (state.m[i].size() != params[i]->size()) {
      fail(ErrorKind::ShapeMismatch, "optimizer slot " + std::to_string(i) + " size mismatch");
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i]->data();
    const auto grad = params[i]->grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      data[j] -= cfg.lr * cfg.weight_decay * data[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      data[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

/// Builds a scalar loss on the given tape, binding parameters via Tape::parameter.
using LossFn = std::function<Var(Tape&)>;

/// Compare autodiff gradients with central differences. Returns the maximum of
/// |g_ad - g_fd| / max(1, |g_fd|) over every parameter element.
inline double grad_check(const LossFn& f, std::span<Tensor* const> params, double epsilon = 1e-6) {
  if (epsilon < 1e-7 || epsilon > 1e-3) fail(ErrorKind::DomainError, "grad_check epsilon must lie in [1e-7, 1e-3]");
  for (Tensor* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    Tape tape;
    tape.backward(f(tape));
  }
  auto evaluate = [&] {
    Tape tape;
    return f(tape).value().item();
  };
  double worst = 0.0;
  for (Tensor* p : params) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    auto data = p->data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + epsilon;
      const double up = evaluate();
      data[j] = saved - epsilon;
      const double down = evaluate();
      data[j] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      worst = std::max(worst, std::abs(analytic[j] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace storecast::ad
