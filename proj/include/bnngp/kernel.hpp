#pragma once

// Closed-form kernels induced by one-hidden-layer networks in the
// infinite-width limit, the reduced tanh/LeakyReLU mixture, its analytic
// parameter gradient and matrix assembly.

#include <algorithm>
#include <functional>
#include <span>
#include <vector>

#include "bnngp/core.hpp"

namespace bnngp {

/// Second-order statistics of the pre-activation pair (z, z') at (x, x').
struct PreactMoments {
  double var_z = 1.0;
  double var_zp = 1.0;
  double cov = 0.0;
  double rho = 0.0;

  double sd_product() const { return std::sqrt(var_z * var_zp); }
};

namespace detail {

inline PreactMoments moments_from_stats(double norm2_x, double norm2_xp, double inner,
                                        double sigma_a2, double sigma_u2) {
  PreactMoments m;
  m.var_z = sigma_a2 + sigma_u2 * norm2_x;
  m.var_zp = sigma_a2 + sigma_u2 * norm2_xp;
  m.cov = sigma_a2 + sigma_u2 * inner;
  m.rho = clamp_unit(m.cov / std::sqrt(m.var_z * m.var_zp));
  return m;
}

inline void check_variances(double sigma_a2, double sigma_u2) {
  if (!(sigma_a2 > 0.0) || !(sigma_u2 > 0.0) || !std::isfinite(sigma_a2) ||
      !std::isfinite(sigma_u2)) {
    throw ParameterError("pre-activation variances must be positive and finite");
  }
}

}  // namespace detail

inline PreactMoments preactivation_moments(std::span<const double> x,
                                           std::span<const double> x_prime, double sigma_a2,
                                           double sigma_u2) {
  if (x.size() != x_prime.size() || x.empty()) {
    throw InputError("input dimension mismatch (" + std::to_string(x.size()) + " vs " +
                     std::to_string(x_prime.size()) + ")");
  }
  detail::check_variances(sigma_a2, sigma_u2);
  return detail::moments_from_stats(dot(x, x), dot(x_prime, x_prime), dot(x, x_prime), sigma_a2,
                                    sigma_u2);
}

// ---------------------------------------------------------------------------
// Activation kernels E[h(z) h(z')].

namespace detail {

/// Arcsine-family kernel with scale constant `beta` (pi/2 for tanh, pi/8 for sigmoid).
inline double arcsine_argument(const PreactMoments& m, double beta) {
  const double num = beta * m.rho * m.sd_product();
  const double den = std::sqrt((1.0 + beta * m.var_z) * (1.0 + beta * m.var_zp));
  return clamp_unit(num / den);
}

/// s * S(rho) with S the normalized arc-cosine term shared by ReLU and LeakyReLU.
inline double relu_core(const PreactMoments& m) {
  const double rho = m.rho;
  const double tail = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  return m.sd_product() / (2.0 * kPi) * (tail + rho * (kPi - std::acos(rho)));
}

}  // namespace detail

/// erf-approximated tanh kernel.
inline double k_tanh(const PreactMoments& m) {
  return 2.0 / kPi * std::asin(detail::arcsine_argument(m, kPi / 2.0));
}

/// erf-approximated logistic-sigmoid kernel.
inline double k_sigmoid(const PreactMoments& m) {
  return 0.25 + 1.0 / (2.0 * kPi) * std::asin(detail::arcsine_argument(m, kPi / 8.0));
}

inline double k_relu(const PreactMoments& m) { return detail::relu_core(m); }

/// max(z, alpha z). alpha = 0 gives ReLU, alpha = 1 the linear kernel.
inline double k_leaky_relu(const PreactMoments& m, double alpha) {
  const double s = m.sd_product();
  return alpha * m.rho * s + (1.0 - alpha) * (1.0 - alpha) * detail::relu_core(m);
}

// ---------------------------------------------------------------------------
// Reduced mixed kernel.

namespace detail {

/// Mixed kernel from pre-computed moments; no parameter validation.
inline double mix_from_moments(const PreactMoments& m, const HyperParams& t) {
  return t.sigma_b2 + t.sigma_v2 * (t.w * k_tanh(m) + (1.0 - t.w) * k_leaky_relu(m, t.alpha));
}

inline double mix_from_stats(double n2x, double n2xp, double inner, const HyperParams& t) {
  return mix_from_moments(moments_from_stats(n2x, n2xp, inner, t.sigma_a2, t.sigma_u2), t);
}

/// Analytic gradient of the noiseless mixed kernel in the library's
/// coordinate order; the noise slot is left at zero.
inline ParamVector mix_gradient_from_stats(double n2x, double n2xp, double inner,
                                           const HyperParams& t) {
  const PreactMoments m = moments_from_stats(n2x, n2xp, inner, t.sigma_a2, t.sigma_u2);
  const double s = m.sd_product();
  const double rho = m.rho;
  const double c = rho * s;  // equals m.cov unless clamped

  // Smooth component T = (2/pi) asin(u), u = beta c / sqrt((1+beta vz)(1+beta vzp)).
  constexpr double beta = kPi / 2.0;
  const double u = arcsine_argument(m, beta);
  const double dT_du = 2.0 / kPi / std::sqrt(std::max(1e-300, 1.0 - u * u));
  const double den = std::sqrt((1.0 + beta * m.var_z) * (1.0 + beta * m.var_zp));
  const double dT_dc = dT_du * beta / den;
  const double dT_dvz = -dT_du * u * beta / (2.0 * (1.0 + beta * m.var_z));
  const double dT_dvzp = -dT_du * u * beta / (2.0 * (1.0 + beta * m.var_zp));
  const double T = 2.0 / kPi * std::asin(u);

  // Angular component L = alpha c + (1-alpha)^2 R, R = s S(rho).
  const double tail = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const double R = s / (2.0 * kPi) * (tail + rho * (kPi - std::acos(rho)));
  const double dR_dc = (kPi - std::acos(rho)) / (2.0 * kPi);
  const double dR_dvz = tail / (2.0 * kPi) * s / (2.0 * m.var_z);
  const double dR_dvzp = tail / (2.0 * kPi) * s / (2.0 * m.var_zp);
  const double a = t.alpha;
  const double q = (1.0 - a) * (1.0 - a);
  const double L = a * c + q * R;
  const double dL_dc = a + q * dR_dc;
  const double dL_dvz = q * dR_dvz;
  const double dL_dvzp = q * dR_dvzp;
  const double dL_dalpha = c - 2.0 * (1.0 - a) * R;

  const double w = t.w;
  const double g_c = t.sigma_v2 * (w * dT_dc + (1.0 - w) * dL_dc);
  const double g_vz = t.sigma_v2 * (w * dT_dvz + (1.0 - w) * dL_dvz);
  const double g_vzp = t.sigma_v2 * (w * dT_dvzp + (1.0 - w) * dL_dvzp);

  ParamVector g{};
  g[static_cast<std::size_t>(Param::sigma_a2)] = g_vz + g_vzp + g_c;
  g[static_cast<std::size_t>(Param::sigma_u2)] = g_vz * n2x + g_vzp * n2xp + g_c * inner;
  g[static_cast<std::size_t>(Param::sigma_b2)] = 1.0;
  g[static_cast<std::size_t>(Param::sigma_v2)] = w * T + (1.0 - w) * L;
  g[static_cast<std::size_t>(Param::alpha)] = t.sigma_v2 * (1.0 - w) * dL_dalpha;
  g[static_cast<std::size_t>(Param::w)] = t.sigma_v2 * (T - L);
  return g;
}

/// Central finite-difference gradient of a scalar function of the
/// hyperparameters; step = rel_step * max(|theta_j|, 1e-3).
inline ParamVector fd_gradient(const std::function<double(const HyperParams&)>& f,
                               const HyperParams& theta, double rel_step) {
  ParamVector g{};
  for (std::size_t j = 0; j < kNumParams; ++j) {
    HyperParams hi = theta, lo = theta;
    const double h = rel_step * std::max(std::abs(theta.to_array()[j]), 1e-3);
    hi.at(j) += h;
    lo.at(j) -= h;
    g[j] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

}  // namespace detail

/// sigma_b2 + sigma_v2 [w k_tanh + (1-w) k_leaky_relu]. Noise is not added.
inline double k_mix(std::span<const double> x, std::span<const double> x_prime,
                    const HyperParams& theta) {
  return detail::mix_from_moments(
      preactivation_moments(x, x_prime, theta.sigma_a2, theta.sigma_u2), theta);
}

enum class GradientMode { analytic, finite_difference };

/// Gradient of k_mix(x, x') plus the noise term, in the order
/// (sigma_eps2, sigma_a2, sigma_u2, sigma_b2, sigma_v2, alpha, w).
/// `same_observation` marks a diagonal entry, where d/d sigma_eps2 = 1.
inline ParamVector kernel_grad(std::span<const double> x, std::span<const double> x_prime,
                               const HyperParams& theta, bool same_observation = false,
                               GradientMode mode = GradientMode::analytic) {
  theta.validate();
  if (x.size() != x_prime.size() || x.empty()) throw InputError("input dimension mismatch");
  ParamVector g;
  if (mode == GradientMode::analytic) {
    g = detail::mix_gradient_from_stats(dot(x, x), dot(x_prime, x_prime), dot(x, x_prime), theta);
  } else {
    g = detail::fd_gradient(
        [&](const HyperParams& t) {
          return detail::mix_from_moments(
              detail::moments_from_stats(dot(x, x), dot(x_prime, x_prime), dot(x, x_prime),
                                         t.sigma_a2, t.sigma_u2),
              t);
        },
        theta, 1e-6);
  }
  g[0] = same_observation ? 1.0 : 0.0;
  return g;
}

// ---------------------------------------------------------------------------
// Matrix assembly.

inline Vector squared_row_norms(const Design& X) { return X.rowwise().squaredNorm(); }

/// Symmetric n x n noiseless kernel matrix; each unordered pair evaluated once.
inline Matrix kernel_matrix(const Design& X, const HyperParams& theta) {
  detail::check_variances(theta.sigma_a2, theta.sigma_u2);
  const Eigen::Index n = X.rows();
  const Vector norms = squared_row_norms(X);
  Matrix K(n, n);
#pragma omp parallel for schedule(dynamic, 16)
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double inner = dot(row_span(X, i), row_span(X, j));
      const double v = detail::mix_from_stats(norms[i], norms[j], inner, theta);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

/// na x nb cross-covariance between the rows of Xa and Xb.
inline Matrix cross_kernel(const Design& Xa, const Design& Xb, const HyperParams& theta) {
  if (Xa.cols() != Xb.cols()) throw InputError("cross_kernel: input dimension mismatch");
  detail::check_variances(theta.sigma_a2, theta.sigma_u2);
  const Vector na = squared_row_norms(Xa);
  const Vector nb = squared_row_norms(Xb);
  const Matrix G = Xa * Xb.transpose();
  Matrix K(Xa.rows(), Xb.rows());
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < Xb.rows(); ++j) {
    for (Eigen::Index i = 0; i < Xa.rows(); ++i) {
      K(i, j) = detail::mix_from_stats(na[i], nb[j], G(i, j), theta);
    }
  }
  return K;
}

/// k_mix(x_i, x_i) for every row.
inline Vector kernel_diagonal(const Design& X, const HyperParams& theta) {
  detail::check_variances(theta.sigma_a2, theta.sigma_u2);
  Vector d(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double n2 = X.row(i).squaredNorm();
    d[i] = detail::mix_from_stats(n2, n2, n2, theta);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Shape comparison of activation kernels as functions of rho at unit scale.

enum class Activation { tanh, sigmoid, relu, leaky_relu };

struct KernelShape {
  Activation activation = Activation::relu;
  double alpha = 0.0;  // LeakyReLU slope only
};

inline double activation_kernel(const KernelShape& k, const PreactMoments& m) {
  switch (k.activation) {
    case Activation::tanh: return k_tanh(m);
    case Activation::sigmoid: return k_sigmoid(m);
    case Activation::relu: return k_relu(m);
    case Activation::leaky_relu: return k_leaky_relu(m, k.alpha);
  }
  return 0.0;
}

/// `points` equally spaced values of rho on [-edge, edge].
inline std::vector<double> rho_grid(std::size_t points = 401, double edge = 0.999) {
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    g[i] = -edge + 2.0 * edge * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return g;
}

/// Pearson correlation of two kernel curves sampled over `grid` with
/// sigma_z = sigma_z' = 1.
inline double shape_correlation(const KernelShape& a, const KernelShape& b,
                                std::span<const double> grid) {
  if (grid.size() < 100) throw InputError("shape_correlation needs at least 100 grid points");
  std::vector<double> fa(grid.size()), fb(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > -1.0 && grid[i] < 1.0)) throw InputError("rho grid must lie inside (-1, 1)");
    const PreactMoments m{1.0, 1.0, grid[i], grid[i]};
    fa[i] = activation_kernel(a, m);
    fb[i] = activation_kernel(b, m);
  }
  const auto n = static_cast<double>(grid.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ma += fa[i];
    mb += fb[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double da = fa[i] - ma, db = fb[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  const auto [alo, ahi] = std::minmax_element(fa.begin(), fa.end());
  const auto [blo, bhi] = std::minmax_element(fb.begin(), fb.end());
  if (*alo == *ahi || *blo == *bhi || !(saa > 0.0) || !(sbb > 0.0)) {
    throw NumericError("shape_correlation: constant curve, correlation undefined");
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace bnngp
