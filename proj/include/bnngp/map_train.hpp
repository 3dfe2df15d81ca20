#pragma once

// MAP estimation of the mixed-kernel hyperparameters: Gaussian negative
// log-likelihood under the Nystrom covariance, inverse-gamma / Beta priors,
// analytic gradients in O(n r^2), and a fixed-budget Adam loop.

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "bnngp/core.hpp"
#include "bnngp/kernel.hpp"
#include "bnngp/lowrank.hpp"

namespace bnngp {

struct InvGammaPrior {
  double shape = 2.0;
  double scale = 1.0;
};

struct BetaPrior {
  double a = 2.0;
  double b = 2.0;
};

/// Priors on every coordinate. Variance priors are indexed in the order
/// (eps, a, u, b, v), matching Param.
struct PriorConfig {
  std::array<InvGammaPrior, 5> inv_gamma{};
  BetaPrior alpha{};
  BetaPrior w{};

  void validate() const {
    for (const auto& p : inv_gamma) {
      if (!(p.shape > 0) || !(p.scale > 0)) throw ConfigError("inverse-gamma shape/scale must be positive");
    }
    for (const auto& p : {alpha, w}) {
      if (!(p.a > 0) || !(p.b > 0)) throw ConfigError("Beta shapes must be positive");
    }
  }
};

/// Log prior density up to additive constants.
inline double log_prior(const HyperParams& theta, const PriorConfig& priors) {
  theta.validate();
  const auto v = theta.to_array();
  double lp = 0.0;
  for (std::size_t q = 0; q < 5; ++q) {
    const auto& p = priors.inv_gamma[q];
    lp -= (p.shape + 1.0) * std::log(v[q]) + p.scale / v[q];
  }
  lp += (priors.alpha.a - 1.0) * std::log(theta.alpha) +
        (priors.alpha.b - 1.0) * std::log(1.0 - theta.alpha);
  lp += (priors.w.a - 1.0) * std::log(theta.w) + (priors.w.b - 1.0) * std::log(1.0 - theta.w);
  return lp;
}

inline ParamVector log_prior_grad(const HyperParams& theta, const PriorConfig& priors) {
  theta.validate();
  const auto v = theta.to_array();
  ParamVector g{};
  for (std::size_t q = 0; q < 5; ++q) {
    const auto& p = priors.inv_gamma[q];
    g[q] = -(p.shape + 1.0) / v[q] + p.scale / (v[q] * v[q]);
  }
  g[5] = (priors.alpha.a - 1.0) / theta.alpha - (priors.alpha.b - 1.0) / (1.0 - theta.alpha);
  g[6] = (priors.w.a - 1.0) / theta.w - (priors.w.b - 1.0) / (1.0 - theta.w);
  return g;
}

/// 1/2 y^T K^{-1} y + 1/2 log det K + n/2 log(2 pi) under the factor.
inline double nll(const Vector& y, const NystromFactor& f) {
  if (y.size() != f.n()) throw InputError("nll: target length does not match the factor");
  const Vector alpha = lowrank_solve(f, y);
  const auto n = static_cast<double>(y.size());
  return 0.5 * y.dot(alpha) + 0.5 * lowrank_logdet(f) + 0.5 * n * std::log(2.0 * kPi);
}

/// Analytic gradient of nll() with respect to theta, never forming an n x n
/// matrix. Requires the low-rank-plus-noise factor built from (X, theta).
///
/// With a = K^{-1} y and dK = d(sigma2) I + dC W^{-1} C^T + C W^{-1} dC^T
///  - C W^{-1} dW W^{-1} C^T, the trace identity reduces to contractions of
/// dC with (a u^T - P) and of dW with (Q - u u^T)/2, where u = W^{-1} C^T a,
/// P = K^{-1} C W^{-1} and Q = W^{-1} C^T K^{-1} C W^{-1}.
inline ParamVector nll_grad(const Vector& y, const Design& X, const HyperParams& theta,
                            const NystromFactor& f) {
  if (f.mode != NystromMode::low_rank_plus_noise) {
    throw ParameterError("analytic gradient requires the low-rank-plus-noise Nystrom mode");
  }
  const Eigen::Index n = f.n();
  const Eigen::Index r = f.rank();
  if (y.size() != n || X.rows() != n) throw InputError("nll_grad: size mismatch");
  const double s2 = f.sigma_eps2;
  const auto LT = f.chol_W.matrixU();

  const Vector a = lowrank_solve(f, y);
  const Vector u = LT.solve(Vector(f.B.transpose() * a));

  const Matrix G = f.B.transpose() * f.B;
  const Matrix Z = f.chol_core.solve(Matrix::Identity(r, r));  // (s2 I + G)^{-1}
  // P^T = L^{-T} Z B^T  (r x n)
  const Matrix Pt = LT.solve(Matrix(Z * f.B.transpose()));
  // Q = L^{-T} (G Z) L^{-1}
  Matrix GZ = G * Z;
  Matrix Q = LT.solve(Matrix(LT.solve(GZ.transpose()).transpose()));
  Q = 0.5 * (Q + Q.transpose()).eval();

  const double trace_inv = (static_cast<double>(n) - (Z * G).trace()) / s2;

  // Data and anchor statistics for the entrywise kernel derivatives.
  const Design XS = gather_rows(X, f.anchors.indices);
  const Vector norms = squared_row_norms(X);
  const Vector norms_s = squared_row_norms(XS);

  ParamVector dlogp{};  // gradient of log p(y | theta)
  dlogp[0] = 0.5 * (a.squaredNorm() - trace_inv);

  // Cross block: sum_ik dC_ik (a_i u_k - P_ik)
  for (Eigen::Index k = 0; k < r; ++k) {
    const auto xs = row_span(XS, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double weight = a[i] * u[k] - Pt(k, i);
      const auto g = detail::mix_gradient_from_stats(norms[i], norms_s[k],
                                                     dot(row_span(X, i), xs), theta);
      for (std::size_t j = 1; j < kNumParams; ++j) dlogp[j] += weight * g[j];
    }
  }
  // Anchor block: 1/2 sum_kl dW_kl (Q_kl - u_k u_l)
  for (Eigen::Index l = 0; l < r; ++l) {
    for (Eigen::Index k = l; k < r; ++k) {
      const double mult = (k == l) ? 0.5 : 1.0;  // symmetric pairs counted once
      const double weight = mult * (Q(k, l) - u[k] * u[l]);
      const auto g = detail::mix_gradient_from_stats(norms_s[k], norms_s[l],
                                                     dot(row_span(XS, k), row_span(XS, l)), theta);
      for (std::size_t j = 1; j < kNumParams; ++j) dlogp[j] += weight * g[j];
    }
  }
  ParamVector out{};
  for (std::size_t j = 0; j < kNumParams; ++j) out[j] = -dlogp[j];
  return out;
}

// ---------------------------------------------------------------------------
// Unconstrained parameterization: log for variances, logit for alpha and w.

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double logistic(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline ParamVector to_unconstrained(const HyperParams& theta) {
  theta.validate();
  const auto v = theta.to_array();
  ParamVector z{};
  for (std::size_t j = 0; j < 5; ++j) z[j] = std::log(v[j]);
  z[5] = logit(v[5]);
  z[6] = logit(v[6]);
  return z;
}

inline double from_unconstrained(std::size_t j, double z) {
  return j < 5 ? std::exp(z) : logistic(z);
}

inline HyperParams from_unconstrained(const ParamVector& z) {
  ParamVector v{};
  for (std::size_t j = 0; j < kNumParams; ++j) v[j] = from_unconstrained(j, z[j]);
  return HyperParams::from_array(v);
}

/// d theta_j / d z_j.
inline ParamVector unconstrained_jacobian(const HyperParams& theta) {
  const auto v = theta.to_array();
  ParamVector d{};
  for (std::size_t j = 0; j < 5; ++j) d[j] = v[j];
  d[5] = v[5] * (1.0 - v[5]);
  d[6] = v[6] * (1.0 - v[6]);
  return d;
}

// ---------------------------------------------------------------------------
// MAP objective.

struct ObjectiveOptions {
  NystromOptions nystrom{};
  GradientMode gradient = GradientMode::analytic;
  double fd_step = 1e-5;  // relative, finite-difference mode only
};

struct LossAndGrad {
  double loss = 0.0;
  double nll = 0.0;
  ParamVector grad{};
};

/// L(theta) = nll(theta) - log_prior(theta) on a fixed data set and anchor set.
class MapObjective {
 public:
  MapObjective(const Design& X, const Vector& y, AnchorSet anchors, PriorConfig priors,
               ObjectiveOptions options = {})
      : X_(X), y_(y), anchors_(std::move(anchors)), priors_(priors), options_(options) {
    if (X_.rows() != y_.size()) throw InputError("design and target lengths differ");
    priors_.validate();
  }

  double loss(const HyperParams& theta) const {
    const auto f = nystrom_factorize(X_, theta, anchors_, options_.nystrom);
    return nll(y_, f) - log_prior(theta, priors_);
  }

  LossAndGrad evaluate(const HyperParams& theta) const {
    LossAndGrad out;
    const auto f = nystrom_factorize(X_, theta, anchors_, options_.nystrom);
    out.nll = nll(y_, f);
    out.loss = out.nll - log_prior(theta, priors_);
    if (options_.gradient == GradientMode::analytic &&
        options_.nystrom.mode == NystromMode::low_rank_plus_noise) {
      const auto gn = nll_grad(y_, X_, theta, f);
      const auto gp = log_prior_grad(theta, priors_);
      for (std::size_t j = 0; j < kNumParams; ++j) out.grad[j] = gn[j] - gp[j];
    } else {
      out.grad = detail::fd_gradient([this](const HyperParams& t) { return loss(t); }, theta,
                                     options_.fd_step);
    }
    return out;
  }

  const AnchorSet& anchors() const { return anchors_; }
  const PriorConfig& priors() const { return priors_; }

 private:
  const Design& X_;
  const Vector& y_;
  AnchorSet anchors_;
  PriorConfig priors_;
  ObjectiveOptions options_;
};

inline double map_loss(const Vector& y, const Design& X, const HyperParams& theta,
                       const PriorConfig& priors, const AnchorSet& anchors,
                       const ObjectiveOptions& opt = {}) {
  return MapObjective(X, y, anchors, priors, opt).loss(theta);
}

inline ParamVector map_grad(const Vector& y, const Design& X, const HyperParams& theta,
                            const PriorConfig& priors, const AnchorSet& anchors,
                            const ObjectiveOptions& opt = {}) {
  return MapObjective(X, y, anchors, priors, opt).evaluate(theta).grad;
}

// ---------------------------------------------------------------------------
// Training loop.

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-3;
  double nugget_learning_rate = 1e-3;
  Eigen::Index rank = 500;
  AnchorStrategy anchors = AnchorStrategy::first;
  std::uint64_t anchor_seed = 0;
  GradientMode gradient = GradientMode::analytic;
  NystromOptions nystrom{};
  AdamConfig adam{};

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (!(learning_rate >= 0) || !(nugget_learning_rate >= 0)) {
      throw ConfigError("learning rates must be nonnegative");
    }
    if (rank < 1) throw ConfigError("rank must be >= 1");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) ||
        !(adam.epsilon > 0)) {
      throw ConfigError("invalid Adam moments");
    }
  }
};

struct FitResult {
  HyperParams theta_hat;
  std::vector<double> loss_trajectory;  // loss at the start of every epoch
  double wall_time = 0.0;               // seconds
  AnchorSet anchors;
};

/// Runs exactly `epochs` full-batch Adam steps in unconstrained coordinates.
/// The noise coordinate uses its own learning rate. Anchors are chosen once,
/// before the first step.
inline FitResult fit(const Vector& y, const Design& X, const HyperParams& theta0,
                     const PriorConfig& priors, const TrainConfig& config) {
  config.validate();
  theta0.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const Eigen::Index r = std::min<Eigen::Index>(config.rank, X.rows());
  FitResult out;
  out.anchors = select_anchors(X, r, config.anchors, config.anchor_seed);

  ObjectiveOptions opt;
  opt.nystrom = config.nystrom;
  opt.gradient = config.gradient;
  const MapObjective objective(X, y, out.anchors, priors, opt);

  ParamVector z = to_unconstrained(theta0);
  ParamVector m{}, v{};
  double b1t = 1.0, b2t = 1.0;
  HyperParams theta = theta0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    LossAndGrad lg;
    try {
      lg = objective.evaluate(theta);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what() + " at " +
                         theta.describe());
    }
    bool finite = std::isfinite(lg.loss);
    for (double g : lg.grad) finite = finite && std::isfinite(g);
    if (!finite) {
      throw NumericError("non-finite MAP loss or gradient at epoch " + std::to_string(epoch) +
                         ": " + theta.describe());
    }
    out.loss_trajectory.push_back(lg.loss);

    const ParamVector jac = unconstrained_jacobian(theta);
    b1t *= config.adam.beta1;
    b2t *= config.adam.beta2;
    for (std::size_t j = 0; j < kNumParams; ++j) {
      const double g = lg.grad[j] * jac[j];
      m[j] = config.adam.beta1 * m[j] + (1.0 - config.adam.beta1) * g;
      v[j] = config.adam.beta2 * v[j] + (1.0 - config.adam.beta2) * g * g;
      const double mhat = m[j] / (1.0 - b1t);
      const double vhat = v[j] / (1.0 - b2t);
      const double lr = j == 0 ? config.nugget_learning_rate : config.learning_rate;
      const double step = lr * mhat / (std::sqrt(vhat) + config.adam.epsilon);
      if (step != 0.0) {
        z[j] -= step;
        theta.at(j) = from_unconstrained(j, z[j]);
      }
    }
    if (!theta.interior()) {
      throw NumericError("parameters left the interior at epoch " + std::to_string(epoch) +
                         ": " + theta.describe());
    }
  }
  out.theta_hat = theta;
  out.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

}  // namespace bnngp
