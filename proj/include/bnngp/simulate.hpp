#pragma once

// Synthetic benchmark data: uniform and stratified input designs, nugget
// calibration from the mean marginal variance, and sequential Vecchia-type
// sampling of the latent GP.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "bnngp/core.hpp"
#include "bnngp/kernel.hpp"
#include "bnngp/lowrank.hpp"

namespace bnngp {

enum class DesignKind { uniform, stratified };

inline const char* to_string(DesignKind d) {
  return d == DesignKind::uniform ? "uniform" : "stratified";
}

struct DesignSpec {
  Eigen::Index n = 1;
  Eigen::Index dim = 1;
  DesignKind design = DesignKind::uniform;
  std::uint64_t seed = 0;
  int radial_strata = 10;
  int angular_strata = 0;  // 0 selects 2^min(dim, 6)

  int effective_angular_strata() const {
    if (angular_strata > 0) return angular_strata;
    return 1 << std::min<Eigen::Index>(dim, 6);
  }
};

namespace detail {

inline Design uniform_design(Eigen::Index n, Eigen::Index dim, Rng& rng) {
  Design X(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < dim; ++k) X(i, k) = rng.uniform();
  }
  return X;
}

/// Stratified design on [0,1]^I. Point i is assigned radial shell i mod Q_r and
/// angular stratum (i / Q_r) mod Q_a. Shells are the equal-probability bands of
/// ||u - 0.5|| under the uniform design (estimated from a pilot sample); the
/// innermost shell extends to the center and the outermost to the cube
/// boundary along the sampled direction. Angular strata are random orthant
/// sign patterns imposed on the direction of a uniform draw.
inline Design stratified_design(const DesignSpec& spec) {
  const Eigen::Index n = spec.n, dim = spec.dim;
  const int q_r = spec.radial_strata;
  const int q_a = spec.effective_angular_strata();

  Rng pilot_rng(substream_seed(spec.seed, 1));
  constexpr Eigen::Index kPilot = 16384;
  std::vector<double> pilot(kPilot);
  for (auto& r : pilot) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < dim; ++k) {
      const double d = pilot_rng.uniform() - 0.5;
      s += d * d;
    }
    r = std::sqrt(s);
  }
  std::sort(pilot.begin(), pilot.end());
  std::vector<double> bounds(static_cast<std::size_t>(q_r) + 1);
  for (int q = 0; q <= q_r; ++q) {
    const double pos = static_cast<double>(q) / q_r * static_cast<double>(kPilot - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min<std::size_t>(lo + 1, kPilot - 1);
    const double frac = pos - static_cast<double>(lo);
    bounds[static_cast<std::size_t>(q)] = pilot[lo] * (1.0 - frac) + pilot[hi] * frac;
  }

  Rng sign_rng(substream_seed(spec.seed, 2));
  std::vector<std::vector<double>> signatures(static_cast<std::size_t>(q_a),
                                              std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& sig : signatures) {
    for (auto& s : sig) s = sign_rng.uniform() < 0.5 ? -1.0 : 1.0;
  }

  Rng rng(substream_seed(spec.seed, 3));
  Design X(n, dim);
  std::vector<double> dir(static_cast<std::size_t>(dim));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto shell = static_cast<std::size_t>(i % q_r);
    const auto& sig = signatures[static_cast<std::size_t>((i / q_r) % q_a)];
    double norm = 0.0;
    do {
      norm = 0.0;
      for (Eigen::Index k = 0; k < dim; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        dir[kk] = sig[kk] * std::abs(rng.uniform() - 0.5);
        norm += dir[kk] * dir[kk];
      }
      norm = std::sqrt(norm);
    } while (norm <= 0.0);
    double max_abs = 0.0;
    for (auto& d : dir) {
      d /= norm;
      max_abs = std::max(max_abs, std::abs(d));
    }
    const double reach = 0.5 / max_abs;
    double hi = shell + 1 == static_cast<std::size_t>(q_r) ? reach : bounds[shell + 1];
    hi = std::min(hi, reach);
    const double lo = std::min(shell == 0 ? 0.0 : bounds[shell], hi);
    const double radius = rng.uniform(lo, hi);
    for (Eigen::Index k = 0; k < dim; ++k) {
      X(i, k) = std::clamp(0.5 + radius * dir[static_cast<std::size_t>(k)], 0.0, 1.0);
    }
  }
  return X;
}

}  // namespace detail

/// Input design on the unit hypercube, deterministic per seed.
inline Design generate_design(const DesignSpec& spec) {
  if (spec.n < 1 || spec.dim < 1) throw InputError("design needs n >= 1 and dim >= 1");
  if (spec.design == DesignKind::uniform) {
    Rng rng(spec.seed);
    return detail::uniform_design(spec.n, spec.dim, rng);
  }
  if (spec.radial_strata < 1 || spec.angular_strata < 0) {
    throw InputError("invalid strata counts");
  }
  return detail::stratified_design(spec);
}

/// x - 0.5 elementwise.
inline Design center(const Design& X) { return X.array() - 0.5; }

/// Mean of k_mix(x_i, x_i) over the rows, evaluated in fixed-size batches.
inline double mean_marginal_variance(const Design& X, const HyperParams& theta,
                                     Eigen::Index batch = 4096) {
  if (X.rows() < 1) throw InputError("empty design");
  CompensatedSum total;
  for (Eigen::Index start = 0; start < X.rows(); start += batch) {
    const Eigen::Index len = std::min(batch, X.rows() - start);
    const Vector d = kernel_diagonal(X.middleRows(start, len), theta);
    double s = 0.0;
    for (Eigen::Index i = 0; i < len; ++i) s += d[i];
    total.add(s);
  }
  return total.value() / static_cast<double>(X.rows());
}

/// sigma_eps2 = eta * mean_i k_mix(x_i, x_i).
inline double calibrate_nugget(const Design& X_centered, const HyperParams& theta, double eta) {
  if (!(eta >= 0.0)) throw ParameterError("nugget fraction eta must be nonnegative");
  return eta * mean_marginal_variance(X_centered, theta);
}

// ---------------------------------------------------------------------------
// Vecchia-type sequential sampler.

struct VecchiaConfig {
  Eigen::Index n_init = 500;
  Eigen::Index n_neighbors = 500;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_init < 1 || n_neighbors < 1) throw ConfigError("n_init and n_neighbors must be >= 1");
  }
};

/// Conditional law of f_i given its conditioning set:
/// mean = weights^T f[neighbors], variance = cond_var.
struct VecchiaStep {
  std::vector<Eigen::Index> neighbors;
  Vector weights;
  double cond_var = 0.0;
};

/// Everything in the sampler that depends on (X, theta) only; draws for
/// different seeds reuse it.
struct VecchiaPlan {
  Eigen::Index n = 0;
  Eigen::Index n_exact = 0;
  Matrix exact_factor;  // lower Cholesky factor of the initial block
  double exact_jitter = 0.0;
  std::vector<VecchiaStep> steps;  // one per index >= n_exact
};

namespace detail {

/// Indices of the m nearest rows among [0, i), ties broken by index.
inline std::vector<Eigen::Index> previous_neighbors(const Design& X, Eigen::Index i,
                                                    Eigen::Index m) {
  std::vector<std::pair<double, Eigen::Index>> d(static_cast<std::size_t>(i));
  const auto xi = row_span(X, i);
  for (Eigen::Index j = 0; j < i; ++j) {
    d[static_cast<std::size_t>(j)] = {squared_distance(xi, row_span(X, j)), j};
  }
  const auto take = static_cast<std::size_t>(std::min(m, i));
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end());
  std::vector<Eigen::Index> out(take);
  for (std::size_t k = 0; k < take; ++k) out[k] = d[k].second;
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

inline VecchiaPlan build_vecchia_plan(const Design& X, const HyperParams& theta,
                                      const VecchiaConfig& cfg) {
  cfg.validate();
  detail::check_variances(theta.sigma_a2, theta.sigma_u2);
  VecchiaPlan plan;
  plan.n = X.rows();
  if (plan.n < 1) throw InputError("vecchia: empty design");
  plan.n_exact = std::min(plan.n, cfg.n_init);

  const Matrix K0 = kernel_matrix(X.topRows(plan.n_exact), theta);
  auto jc = jittered_cholesky(K0, 0.0, 1e-4, "Vecchia initial block");
  plan.exact_factor = jc.llt.matrixL();
  plan.exact_jitter = jc.jitter;

  plan.steps.resize(static_cast<std::size_t>(plan.n - plan.n_exact));
#pragma omp parallel for schedule(dynamic, 4)
  for (Eigen::Index i = plan.n_exact; i < plan.n; ++i) {
    VecchiaStep step;
    step.neighbors = detail::previous_neighbors(X, i, cfg.n_neighbors);
    const Design XN = gather_rows(X, step.neighbors);
    const Matrix KN = kernel_matrix(XN, theta);
    Design xi(1, X.cols());
    xi.row(0) = X.row(i);
    const Vector kiN = cross_kernel(XN, xi, theta).col(0);
    const double kii = k_mix(row_span(X, i), row_span(X, i), theta);
    auto chol = jittered_cholesky(KN, 0.0, 1e-4,
                                  "Vecchia neighbor block at index " + std::to_string(i));
    step.weights = chol.llt.solve(kiN);
    step.cond_var = std::max(0.0, kii - kiN.dot(step.weights));
    plan.steps[static_cast<std::size_t>(i - plan.n_exact)] = std::move(step);
  }
  return plan;
}

/// One latent draw from the plan.
inline Vector vecchia_draw(const VecchiaPlan& plan, std::uint64_t seed) {
  Rng rng(seed);
  Vector f(plan.n);
  Vector z(plan.n_exact);
  for (Eigen::Index i = 0; i < plan.n_exact; ++i) z[i] = rng.normal();
  f.head(plan.n_exact) = plan.exact_factor * z;
  for (Eigen::Index i = plan.n_exact; i < plan.n; ++i) {
    const auto& step = plan.steps[static_cast<std::size_t>(i - plan.n_exact)];
    double mean = 0.0;
    for (std::size_t k = 0; k < step.neighbors.size(); ++k) {
      mean += step.weights[static_cast<Eigen::Index>(k)] * f[step.neighbors[k]];
    }
    f[i] = mean + std::sqrt(step.cond_var) * rng.normal();
  }
  return f;
}

inline Vector vecchia_sample(const Design& X_centered, const HyperParams& theta,
                             const VecchiaConfig& cfg) {
  return vecchia_draw(build_vecchia_plan(X_centered, theta, cfg), cfg.seed);
}

// ---------------------------------------------------------------------------
// Scenarios.

struct ScenarioGrid {
  std::string id;
  DesignKind design;
  Eigen::Index dim;
  Eigen::Index n;
};

inline const std::vector<ScenarioGrid>& scenario_table() {
  static const std::vector<ScenarioGrid> table = {
      {"C1", DesignKind::uniform, 20, 10000},    {"C2", DesignKind::uniform, 80, 10000},
      {"C3", DesignKind::uniform, 20, 20000},    {"C4", DesignKind::uniform, 80, 20000},
      {"C5", DesignKind::uniform, 20, 50000},    {"C6", DesignKind::uniform, 80, 50000},
      {"C7", DesignKind::stratified, 20, 50000}, {"C8", DesignKind::stratified, 80, 50000},
  };
  return table;
}

inline ScenarioGrid lookup_scenario(const std::string& id) {
  for (const auto& s : scenario_table()) {
    if (s.id == id) return s;
  }
  throw ConfigError("unknown scenario id '" + id + "' (expected C1..C8 or custom)");
}

struct ScenarioSpec {
  std::string id = "C1";  // C1..C8 or "custom"
  double scale = 1.0;
  // Used when id == "custom"; ignored otherwise.
  DesignKind design = DesignKind::uniform;
  Eigen::Index dim = 20;
  Eigen::Index n = 1000;

  HyperParams theta = HyperParams::unit();  // sigma_eps2 replaced by calibration
  double eta = 0.04;
  std::uint64_t seed_x = 1;
  std::uint64_t seed_f = 2;
  std::uint64_t seed_eps = 3;
  VecchiaConfig vecchia{};

  /// Grid values after applying the scale factor.
  ScenarioGrid resolved() const {
    ScenarioGrid g = id == "custom" ? ScenarioGrid{"custom", design, dim, n} : lookup_scenario(id);
    if (!(scale > 0.0)) throw ConfigError("scenario scale must be positive");
    g.n = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(g.n * scale)));
    return g;
  }
};

struct ScenarioDataset {
  Design X_centered;
  Vector f;
  Vector y;
  double sigma_eps2_true = 0.0;
  double mean_marginal_variance = 0.0;
  HyperParams theta_true;
  ScenarioSpec spec;
  ScenarioGrid grid;
  bool exact = false;  // true when n <= n_init (no Vecchia approximation)
};

/// Observation noise added to a latent draw with its own seed stream.
inline Vector add_noise(const Vector& f, double sigma_eps2, std::uint64_t seed) {
  Rng rng(seed);
  Vector y = f;
  const double sd = std::sqrt(sigma_eps2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sd * rng.normal();
  return y;
}

inline ScenarioDataset make_scenario(const ScenarioSpec& spec,
                                     const VecchiaPlan* reuse_plan = nullptr) {
  ScenarioDataset ds;
  ds.spec = spec;
  ds.grid = spec.resolved();
  DesignSpec d;
  d.n = ds.grid.n;
  d.dim = ds.grid.dim;
  d.design = ds.grid.design;
  d.seed = spec.seed_x;
  ds.X_centered = center(generate_design(d));

  ds.theta_true = spec.theta;
  ds.mean_marginal_variance = mean_marginal_variance(ds.X_centered, spec.theta);
  ds.sigma_eps2_true = spec.eta * ds.mean_marginal_variance;
  ds.theta_true.sigma_eps2 = ds.sigma_eps2_true;

  VecchiaConfig vc = spec.vecchia;
  vc.seed = spec.seed_f;
  ds.exact = ds.grid.n <= vc.n_init;
  if (reuse_plan != nullptr) {
    if (reuse_plan->n != ds.grid.n) throw InputError("reused Vecchia plan has the wrong size");
    ds.f = vecchia_draw(*reuse_plan, vc.seed);
  } else {
    ds.f = vecchia_sample(ds.X_centered, spec.theta, vc);
  }
  ds.y = spec.eta > 0.0 ? add_noise(ds.f, ds.sigma_eps2_true, spec.seed_eps) : ds.f;
  return ds;
}

}  // namespace bnngp
