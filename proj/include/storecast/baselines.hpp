#pragma once

// Persistence and per-store ARIMAX(1,0,1) baselines.
//
// ARIMAX here is regression with ARMA(1,1) errors:
//   y_t = c + beta' x_t + u_t,   u_t = phi u_{t-1} + theta e_{t-1} + e_t
// fitted by conditional sum of squares with u and e starting at zero.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "storecast/error.hpp"

namespace storecast::baselines {

/// Default regressors: raw economic, cyclical calendar and holiday columns.
inline const std::vector<std::string>& default_arimax_exogenous() {
  static const std::vector<std::string> cols{"temperature", "fuel_price", "cpi",       "unemployment",
                                             "week_sin",    "week_cos",   "month_sin", "month_cos",
                                             "is_major_holiday", "is_minor_holiday"};
  return cols;
}

/// One-step persistence: forecast for t is y[t-1], for t in [first, last).
inline std::vector<double> persistence_forecast(std::span<const double> y, std::size_t first, std::size_t last) {
  if (first < 1) fail(ErrorKind::DomainError, "persistence needs one observed value before the test range");
  if (last > y.size() || first > last) fail(ErrorKind::ShapeMismatch, "persistence test range out of bounds");
  return std::vector<double>(y.begin() + static_cast<long>(first - 1), y.begin() + static_cast<long>(last - 1));
}

/// Exogenous regressors, one column per variable, each the length of y.
struct Exogenous {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
};

struct ArimaxParams {
  double c = 0.0;
  double phi = 0.0;
  double theta = 0.0;
  std::vector<double> beta;       // one per exogenous column; zero for dropped columns
  std::vector<std::string> exog;  // names aligned with beta
  std::vector<bool> dropped;      // constant over the training range
  double sigma2 = 0.0;
  double css = 0.0;
  double css_start = 0.0;  // CSS at c = beta = phi = theta = 0
  std::size_t iterations = 0;
};

struct ArimaxFitOptions {
  std::size_t max_iterations = 500;
  double tolerance = 1e-8;  // relative CSS change that ends the search
};

namespace detail {

/// Innovations e_t and, optionally, de_t/dq for q = [c, beta..., phi, theta].
inline double innovations(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double c, const Eigen::VectorXd& beta,
                          double phi, double theta, Eigen::VectorXd* e_out, Eigen::MatrixXd* jac) {
  const Eigen::Index n = y.size(), k = X.cols(), p = k + 3;
  Eigen::VectorXd e(n);
  Eigen::RowVectorXd du_prev = Eigen::RowVectorXd::Zero(p), de_prev = Eigen::RowVectorXd::Zero(p);
  if (jac) jac->resize(n, p);
  double u_prev = 0.0, e_prev = 0.0, css = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double u = y(t) - c - (k > 0 ? X.row(t).dot(beta) : 0.0);
    e(t) = u - phi * u_prev - theta * e_prev;
    css += e(t) * e(t);
    if (jac) {
      Eigen::RowVectorXd du = Eigen::RowVectorXd::Zero(p);
      du(0) = -1.0;
      if (k > 0) du.segment(1, k) = -X.row(t);
      Eigen::RowVectorXd de = du - phi * du_prev - theta * de_prev;
      de(k + 1) -= u_prev;
      de(k + 2) -= e_prev;
      jac->row(t) = de;
      du_prev = du;
      de_prev = de;
    }
    u_prev = u;
    e_prev = e(t);
  }
  if (e_out) *e_out = std::move(e);
  return css;
}

}  // namespace detail

/// Fit on observations [0, n_train). Exogenous columns that are constant over
/// that range are dropped (beta = 0). phi and theta are optimized through
/// tanh so |phi|, |theta| < 1 at every iterate.
inline ArimaxParams fit_arimax(std::span<const double> y_all, const Exogenous& exog, std::size_t n_train,
                               const ArimaxFitOptions& opts = {}) {
  if (n_train < 3 || n_train > y_all.size()) fail(ErrorKind::DomainError, "ARIMAX needs at least 3 training points");
  for (const auto& col : exog.columns)
    if (col.size() != y_all.size()) fail(ErrorKind::ShapeMismatch, "exogenous column length differs from y");

  ArimaxParams out;
  out.exog = exog.names;
  out.beta.assign(exog.columns.size(), 0.0);
  out.dropped.assign(exog.columns.size(), false);

  // Standardize y and the kept regressors over the training range.
  const auto n = static_cast<Eigen::Index>(n_train);
  Eigen::VectorXd y(n);
  for (Eigen::Index t = 0; t < n; ++t) y(t) = y_all[static_cast<std::size_t>(t)];
  for (Eigen::Index t = 0; t < n; ++t)
    if (!std::isfinite(y(t))) fail(ErrorKind::DomainError, "non-finite value in ARIMAX target");
  const double y_mean = y.mean();
  const double y_sd_raw = std::sqrt((y.array() - y_mean).square().mean());
  const double y_sd = y_sd_raw > 0.0 ? y_sd_raw : 1.0;
  const Eigen::VectorXd ys = (y.array() - y_mean) / y_sd;

  std::vector<std::size_t> kept;
  std::vector<double> x_mean, x_sd;
  for (std::size_t j = 0; j < exog.columns.size(); ++j) {
    const auto& col = exog.columns[j];
    double m = 0.0;
    for (std::size_t t = 0; t < n_train; ++t) m += col[t];
    m /= static_cast<double>(n_train);
    double v = 0.0;
    for (std::size_t t = 0; t < n_train; ++t) v += (col[t] - m) * (col[t] - m);
    const double sd = std::sqrt(v / static_cast<double>(n_train));
    if (!std::isfinite(sd)) fail(ErrorKind::DomainError, "non-finite value in exogenous column " + exog.names[j]);
    if (sd <= 1e-12 * std::max(1.0, std::abs(m))) {
      out.dropped[j] = true;
      continue;
    }
    kept.push_back(j);
    x_mean.push_back(m);
    x_sd.push_back(sd);
  }
  const auto k = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd X(n, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index t = 0; t < n; ++t)
      X(t, j) = (exog.columns[kept[static_cast<std::size_t>(j)]][static_cast<std::size_t>(t)] - x_mean[static_cast<std::size_t>(j)]) /
                x_sd[static_cast<std::size_t>(j)];

  // Zero-parameter CSS, reported in raw units.
  {
    double css0 = 0.0;
    for (std::size_t t = 0; t < n_train; ++t) css0 += y_all[t] * y_all[t];
    out.css_start = css0;
  }

  // OLS start for (c, beta) with phi = theta = 0.
  Eigen::MatrixXd D(n, k + 1);
  D.col(0).setOnes();
  if (k > 0) D.rightCols(k) = X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
  if (qr.rank() < D.cols()) {
    fail(ErrorKind::SingularDesign, "exogenous design has rank " + std::to_string(qr.rank()) + " < " +
                                        std::to_string(D.cols()));
  }
  const Eigen::VectorXd ols = qr.solve(ys);

  const Eigen::Index p = k + 3;
  Eigen::VectorXd q(p);  // [c, beta..., atanh(phi), atanh(theta)]
  q.head(k + 1) = ols;
  q(k + 1) = 0.0;
  q(k + 2) = 0.0;

  auto unpack = [&](const Eigen::VectorXd& v, double& c, Eigen::VectorXd& beta, double& phi, double& theta) {
    c = v(0);
    beta = v.segment(1, k);
    phi = std::tanh(v(k + 1));
    theta = std::tanh(v(k + 2));
  };
  auto evaluate = [&](const Eigen::VectorXd& v, Eigen::VectorXd* e, Eigen::MatrixXd* J) {
    double c, phi, theta;
    Eigen::VectorXd beta;
    unpack(v, c, beta, phi, theta);
    const double css = detail::innovations(ys, X, c, beta, phi, theta, e, J);
    if (J) {
      J->col(k + 1) *= 1.0 - phi * phi;
      J->col(k + 2) *= 1.0 - theta * theta;
    }
    return css;
  };

  Eigen::VectorXd e;
  Eigen::MatrixXd J;
  double css = evaluate(q, &e, &J);
  double lambda = 1e-3;
  bool converged = false;
  std::size_t iter = 0;
  for (; iter < opts.max_iterations && !converged; ++iter) {
    if (css <= 1e-24 * static_cast<double>(n)) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * e;
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal().array() += lambda * (JtJ.diagonal().array() + 1e-12);
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      const Eigen::VectorXd trial = q + step;
      Eigen::VectorXd e_trial;
      Eigen::MatrixXd J_trial;
      const double css_trial = evaluate(trial, &e_trial, &J_trial);
      if (std::isfinite(css_trial) && css_trial < css) {
        const double change = (css - css_trial) / std::max(css, 1e-300);
        q = trial;
        e = std::move(e_trial);
        J = std::move(J_trial);
        css = css_trial;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        if (change < opts.tolerance) converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          converged = true;  // no descent direction left: stationary point
          break;
        }
      }
    }
  }
  if (!converged) fail(ErrorKind::NonConvergence, "ARIMAX CSS did not converge in " + std::to_string(iter) + " iterations");

  double c_s, phi, theta;
  Eigen::VectorXd beta_s;
  unpack(q, c_s, beta_s, phi, theta);
  out.phi = phi;
  out.theta = theta;
  out.c = y_mean + y_sd * c_s;
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    const double b = y_sd * beta_s(j) / x_sd[idx];
    out.beta[kept[idx]] = b;
    out.c -= b * x_mean[idx];
  }
  out.css = css * y_sd * y_sd;
  out.sigma2 = out.css / static_cast<double>(n_train);
  out.iterations = iter;
  return out;
}

/// Conditional sum of squares of the fitted model over [0, n) in raw units.
inline double arimax_css(const ArimaxParams& p, std::span<const double> y, const Exogenous& exog, std::size_t n) {
  double u_prev = 0.0, e_prev = 0.0, css = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double reg = p.c;
    for (std::size_t j = 0; j < p.beta.size(); ++j) reg += p.beta[j] * exog.columns[j][t];
    const double u = y[t] - reg;
    const double e = u - p.phi * u_prev - p.theta * e_prev;
    css += e * e;
    u_prev = u;
    e_prev = e;
  }
  return css;
}

/// One-step-ahead forecasts for t in [first, last), using the true y before t
/// to update the ARMA state.
inline std::vector<double> arimax_forecast(const ArimaxParams& p, std::span<const double> y, const Exogenous& exog,
                                           std::size_t first, std::size_t last) {
  if (last > y.size() || first > last) fail(ErrorKind::ShapeMismatch, "ARIMAX forecast range out of bounds");
  if (exog.columns.size() != p.beta.size()) fail(ErrorKind::ShapeMismatch, "exogenous columns do not match the fit");
  auto regression = [&](std::size_t t) {
    double r = p.c;
    for (std::size_t j = 0; j < p.beta.size(); ++j)
      if (p.beta[j] != 0.0) r += p.beta[j] * exog.columns[j][t];
    return r;
  };
  std::vector<double> out;
  double u_prev = 0.0, e_prev = 0.0;
  for (std::size_t t = 0; t < last; ++t) {
    const double mean = regression(t);
    if (t >= first) out.push_back(mean + p.phi * u_prev + p.theta * e_prev);
    const double u = y[t] - mean;
    const double e = u - p.phi * u_prev - p.theta * e_prev;
    u_prev = u;
    e_prev = e;
  }
  return out;
}

}  // namespace storecast::baselines
