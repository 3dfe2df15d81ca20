#pragma once

// Finite-width Monte-Carlo sampler for one-hidden-layer networks with
// Gaussian priors, used to check the closed-form limit kernels empirically.

#include <cstdint>
#include <string>
#include <vector>

#include "bnngp/core.hpp"
#include "bnngp/kernel.hpp"

namespace bnngp {

struct BnnComponent {
  Activation activation = Activation::relu;
  double alpha = 0.0;   // LeakyReLU slope
  double weight = 1.0;  // mixture weight w_m
};

struct BnnSpec {
  Eigen::Index width = 1000;
  std::vector<BnnComponent> components{BnnComponent{}};
  HyperParams theta = HyperParams::unit();  // sigma_eps2 unused
  Eigen::Index n_samples = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (width < 1) throw ConfigError("BNN width must be >= 1");
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (components.empty()) throw ConfigError("at least one activation block is required");
    double total = 0.0;
    for (const auto& c : components) {
      if (!(c.weight >= 0.0)) throw ConfigError("block weights must be nonnegative");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("block weights must sum to 1");
    if (!(theta.sigma_a2 >= 0 && theta.sigma_u2 >= 0 && theta.sigma_b2 >= 0 &&
          theta.sigma_v2 >= 0)) {
      throw ConfigError("prior variances must be nonnegative");
    }
  }
};

inline double apply_activation(const BnnComponent& c, double z) {
  switch (c.activation) {
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::leaky_relu: return z > 0.0 ? z : c.alpha * z;
  }
  return 0.0;
}

/// n_samples x n matrix of prior function draws at the rows of X. Each draw
/// uses its own seed substream, so rows are reproducible independently.
///
///   f(x) = b + sum_m sqrt(w_m) sum_j v_j^(m) h_m(a_j + u_j^T x)
inline Matrix sample_bnn(const BnnSpec& spec, const Design& X) {
  spec.validate();
  const Eigen::Index n = X.rows(), dim = X.cols(), H = spec.width;
  const auto& t = spec.theta;
  const double sd_a = std::sqrt(t.sigma_a2), sd_u = std::sqrt(t.sigma_u2);
  const double sd_b = std::sqrt(t.sigma_b2);
  const double sd_v = std::sqrt(t.sigma_v2 / static_cast<double>(H));
  Matrix out(spec.n_samples, n);

#pragma omp parallel
  {
    Matrix U(H, dim);
    Vector a(H), v(H);
    Matrix Z(H, n);
#pragma omp for schedule(static)
    for (Eigen::Index d = 0; d < spec.n_samples; ++d) {
      Rng rng(substream_seed(spec.seed, static_cast<std::uint64_t>(d)));
      const double b = sd_b * rng.normal();
      for (Eigen::Index j = 0; j < H; ++j) a[j] = sd_a * rng.normal();
      for (Eigen::Index j = 0; j < H; ++j) {
        for (Eigen::Index k = 0; k < dim; ++k) U(j, k) = sd_u * rng.normal();
      }
      Z.noalias() = U * X.transpose();
      Z.colwise() += a;
      Eigen::RowVectorXd f = Eigen::RowVectorXd::Constant(n, b);
      for (const auto& c : spec.components) {
        for (Eigen::Index j = 0; j < H; ++j) v[j] = sd_v * rng.normal();
        const double scale = std::sqrt(c.weight);
        for (Eigen::Index i = 0; i < n; ++i) {
          double s = 0.0;
          for (Eigen::Index j = 0; j < H; ++j) s += v[j] * apply_activation(c, Z(j, i));
          f[i] += scale * s;
        }
      }
      out.row(d) = f;
    }
  }
  return out;
}

/// Unbiased sample covariance of the columns (n_samples - 1 denominator).
inline Matrix empirical_kernel(const Matrix& samples) {
  if (samples.rows() < 2) throw InputError("empirical_kernel needs at least 2 draws");
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Matrix centered = samples.rowwise() - mean;
  Matrix K = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
  return 0.5 * (K + K.transpose());
}

/// sigma_b2 + sigma_v2 sum_m w_m K_m at the rows of X.
inline Matrix analytic_bnn_kernel(const BnnSpec& spec, const Design& X) {
  const Eigen::Index n = X.rows();
  const auto& t = spec.theta;
  Matrix K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto m = preactivation_moments(row_span(X, i), row_span(X, j), t.sigma_a2, t.sigma_u2);
      double s = 0.0;
      for (const auto& c : spec.components) {
        s += c.weight * activation_kernel(KernelShape{c.activation, c.alpha}, m);
      }
      K(i, j) = K(j, i) = t.sigma_b2 + t.sigma_v2 * s;
    }
  }
  return K;
}

struct ConvergenceRow {
  Eigen::Index width = 0;
  Eigen::Index n_samples = 0;
  std::string probe_set_id;
  double max_abs_error = 0.0;
};

/// Max abs deviation of the empirical covariance from the analytic kernel for
/// every width in the grid. All widths share the base seed.
inline std::vector<ConvergenceRow> width_convergence_report(const BnnSpec& base,
                                                            const std::vector<Eigen::Index>& widths,
                                                            const Design& X_probe,
                                                            const std::string& probe_set_id) {
  const Matrix target = analytic_bnn_kernel(base, X_probe);
  std::vector<ConvergenceRow> rows;
  for (auto H : widths) {
    BnnSpec s = base;
    s.width = H;
    const Matrix emp = empirical_kernel(sample_bnn(s, X_probe));
    rows.push_back({H, s.n_samples, probe_set_id, (emp - target).cwiseAbs().maxCoeff()});
  }
  return rows;
}

}  // namespace bnngp
