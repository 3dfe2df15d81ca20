#pragma once

// Reference computations written independently of the library: closed forms
// typed in directly from their definitions, dense Cholesky linear algebra,
// and random instance generators.

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "bnngp/core.hpp"

namespace oracle {

using bnngp::Design;
using bnngp::HyperParams;
using bnngp::Matrix;
using bnngp::Vector;

inline constexpr double pi = std::numbers::pi;

inline double clamp1(double v) { return std::min(1.0, std::max(-1.0, v)); }

/// Mixed kernel straight from the definitions, no shared helpers.
inline double kmix(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& xp, const HyperParams& t) {
  const double vz = t.sigma_a2 + t.sigma_u2 * x.squaredNorm();
  const double vzp = t.sigma_a2 + t.sigma_u2 * xp.squaredNorm();
  const double c = t.sigma_a2 + t.sigma_u2 * x.dot(xp);
  const double rho = clamp1(c / std::sqrt(vz * vzp));
  const double sz = std::sqrt(vz), szp = std::sqrt(vzp);
  const double arg = clamp1((pi / 2) * rho * sz * szp /
                            std::sqrt((1 + (pi / 2) * vz) * (1 + (pi / 2) * vzp)));
  const double ktanh = (2 / pi) * std::asin(arg);
  const double S = (std::sqrt(1 - rho * rho) + rho * (pi - std::acos(rho))) / (2 * pi);
  const double kleaky = sz * szp * (t.alpha * rho + (1 - t.alpha) * (1 - t.alpha) * S);
  return t.sigma_b2 + t.sigma_v2 * (t.w * ktanh + (1 - t.w) * kleaky);
}

inline Matrix kernel(const Design& A, const Design& B, const HyperParams& t) {
  Matrix K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) K(i, j) = kmix(A.row(i), B.row(j), t);
  }
  return K;
}

inline Matrix noisy_kernel(const Design& X, const HyperParams& t) {
  Matrix K = kernel(X, X, t);
  K.diagonal().array() += t.sigma_eps2;
  return K;
}

inline double dense_logdet(const Matrix& K) {
  Eigen::LLT<Matrix> llt(K);
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline double dense_nll(const Vector& y, const Matrix& K) {
  Eigen::LLT<Matrix> llt(K);
  const double n = static_cast<double>(y.size());
  return 0.5 * y.dot(llt.solve(y)) + 0.5 * dense_logdet(K) + 0.5 * n * std::log(2 * pi);
}

/// Inverse-gamma and Beta log densities up to constants.
inline double log_prior(const HyperParams& t, double a_ig, double b_ig, double a_beta, double b_beta) {
  double lp = 0.0;
  for (double v : {t.sigma_eps2, t.sigma_a2, t.sigma_u2, t.sigma_b2, t.sigma_v2}) {
    lp += -(a_ig + 1) * std::log(v) - b_ig / v;
  }
  for (double p : {t.alpha, t.w}) lp += (a_beta - 1) * std::log(p) + (b_beta - 1) * std::log(1 - p);
  return lp;
}

struct DensePrediction {
  double mean;
  double variance;
};

inline DensePrediction dense_predict(const Eigen::RowVectorXd& xs, const Design& X, const Vector& y,
                                     const HyperParams& t) {
  const Matrix K = noisy_kernel(X, t);
  Eigen::LLT<Matrix> llt(K);
  Vector ks(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) ks[i] = kmix(xs, X.row(i), t);
  return {ks.dot(llt.solve(y)), kmix(xs, xs, t) - ks.dot(llt.solve(ks)) + t.sigma_eps2};
}

inline Design random_design(Eigen::Index n, Eigen::Index dim, std::uint64_t seed, double lo = -0.5,
                            double hi = 0.5) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Design X(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < dim; ++k) X(i, k) = u(gen);
  }
  return X;
}

/// Random interior hyperparameters with variances in [0.3, 2] and alpha, w in [0.15, 0.85].
inline HyperParams random_theta(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> var(0.3, 2.0), frac(0.15, 0.85);
  HyperParams t;
  t.sigma_eps2 = var(gen) * 0.2;
  t.sigma_a2 = var(gen);
  t.sigma_u2 = var(gen);
  t.sigma_b2 = var(gen);
  t.sigma_v2 = var(gen);
  t.alpha = frac(gen);
  t.w = frac(gen);
  return t;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
