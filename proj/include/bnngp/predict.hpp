#pragma once

// Posterior predictive moments under the Nystrom factor, and the point and
// uncertainty-aware evaluation metrics (MAE, MSE, RMSE, MESE, SDESE).

#include <span>
#include <vector>

#include "bnngp/core.hpp"
#include "bnngp/kernel.hpp"
#include "bnngp/lowrank.hpp"

namespace bnngp {

struct PredictiveMoments {
  double mean = 0.0;
  double variance = 0.0;  // includes the noise variance
};

/// Caches K_hat^{-1} y so that many test points can be scored against one
/// training factorization.
class Predictor {
 public:
  Predictor(const Design& X_train, const Vector& y_train, const HyperParams& theta,
            const NystromFactor& factor)
      : X_(X_train), theta_(theta), factor_(factor) {
    if (y_train.size() != X_train.rows() || factor.n() != X_train.rows()) {
      throw InputError("Predictor: training sizes do not match the factor");
    }
    weights_ = lowrank_solve(factor_, y_train);
  }

  PredictiveMoments operator()(std::span<const double> x_star) const {
    if (static_cast<Eigen::Index>(x_star.size()) != X_.cols()) {
      throw InputError("predictive_moments: test point dimension mismatch");
    }
    Design xs(1, X_.cols());
    for (Eigen::Index k = 0; k < X_.cols(); ++k) xs(0, k) = x_star[static_cast<std::size_t>(k)];
    return from_cross(cross_kernel(X_, xs, theta_).col(0), k_mix(x_star, x_star, theta_));
  }

  std::vector<PredictiveMoments> predict(const Design& X_test) const {
    if (X_test.cols() != X_.cols()) throw InputError("predict: dimension mismatch");
    std::vector<PredictiveMoments> out(static_cast<std::size_t>(X_test.rows()));
    constexpr Eigen::Index kBlock = 256;
    for (Eigen::Index start = 0; start < X_test.rows(); start += kBlock) {
      const Eigen::Index len = std::min(kBlock, X_test.rows() - start);
      const Design block = X_test.middleRows(start, len);
      const Matrix Ks = cross_kernel(X_, block, theta_);
      const Vector kss = kernel_diagonal(block, theta_);
      const Matrix solved = lowrank_solve(factor_, Ks);
      for (Eigen::Index j = 0; j < len; ++j) {
        out[static_cast<std::size_t>(start + j)] =
            finish(Ks.col(j).dot(weights_), kss[j], Ks.col(j).dot(solved.col(j)));
      }
    }
    return out;
  }

 private:
  PredictiveMoments from_cross(const Vector& k_star, double k_ss) const {
    return finish(k_star.dot(weights_), k_ss, k_star.dot(lowrank_solve(factor_, k_star)));
  }

  PredictiveMoments finish(double mean, double k_ss, double explained) const {
    // Low-rank roundoff can push the epistemic part below zero.
    const double epistemic = std::max(0.0, k_ss - explained);
    return {mean, epistemic + theta_.sigma_eps2};
  }

  const Design& X_;
  HyperParams theta_;
  const NystromFactor& factor_;
  Vector weights_;
};

inline PredictiveMoments predictive_moments(std::span<const double> x_star,
                                            const Design& X_train, const Vector& y_train,
                                            const HyperParams& theta_hat,
                                            const NystromFactor& factor) {
  return Predictor(X_train, y_train, theta_hat, factor)(x_star);
}

// ---------------------------------------------------------------------------

enum class MetricScale { original, standardized };

inline const char* to_string(MetricScale s) {
  return s == MetricScale::original ? "original" : "standardized";
}

struct MetricsReport {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double mese = 0.0;
  double sdese = 0.0;
  double mean_variance = 0.0;
  std::size_t n_test = 0;
  MetricScale scale = MetricScale::standardized;
};

/// ESE_i = (mu_i - y_i)^2 + sigma_i^2; SDESE uses the n-1 denominator.
/// Sums run in input order with compensated accumulation.
inline MetricsReport compute_metrics(std::span<const PredictiveMoments> preds,
                                     std::span<const double> y_true,
                                     MetricScale scale = MetricScale::standardized) {
  if (preds.size() != y_true.size()) throw InputError("compute_metrics: length mismatch");
  if (preds.size() < 2) throw InputError("compute_metrics: SDESE needs at least 2 test points");
  const std::size_t n = preds.size();
  const auto nd = static_cast<double>(n);
  CompensatedSum abs_err, sq_err, var_sum, ese_sum;
  std::vector<double> ese(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = preds[i].mean - y_true[i];
    abs_err.add(std::abs(e));
    sq_err.add(e * e);
    var_sum.add(preds[i].variance);
    ese[i] = e * e + preds[i].variance;
    ese_sum.add(ese[i]);
  }
  MetricsReport m;
  m.n_test = n;
  m.scale = scale;
  m.mae = abs_err.value() / nd;
  m.mse = sq_err.value() / nd;
  m.rmse = std::sqrt(m.mse);
  m.mean_variance = var_sum.value() / nd;
  m.mese = ese_sum.value() / nd;
  CompensatedSum dev;
  const double mean_ese = m.mese;
  for (double e : ese) dev.add((e - mean_ese) * (e - mean_ese));
  m.sdese = std::sqrt(dev.value() / (nd - 1.0));
  return m;
}

}  // namespace bnngp
