// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bnngp/bnngp.hpp"
#include "oracles.hpp"

using namespace bnngp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

Outcome check(bool ok, const std::string& detail) { return {ok, detail}; }

// ---------------------------------------------------------------------------

Outcome kernel_anchors() {
  const PreactMoments unit{1.0, 1.0, 0.0, 0.0};
  const PreactMoments one{1.0, 1.0, 1.0, 1.0};
  const PreactMoments neg{1.0, 1.0, -1.0, -1.0};
  const double e0 = std::abs(k_relu(unit) - 1.0 / (2 * oracle::pi));
  const double e1 = std::abs(k_relu(one) - 0.5);
  const double e2 = std::abs(k_relu(neg));
  const double e3 = std::abs(k_sigmoid(unit) - 0.25);
  const double worst = std::max({e0, e1, e2, e3});
  return check(worst <= 1e-12, "max abs deviation " + fmt(worst));
}

Outcome shape_table() {
  const auto grid = rho_grid();
  struct Row {
    KernelShape a, b;
    double tab;
  };
  const std::vector<Row> rows = {
      {{Activation::tanh, 0.0}, {Activation::sigmoid, 0.0}, 0.9999},
      {{Activation::relu, 0.0}, {Activation::leaky_relu, 0.1}, 0.9983},
      {{Activation::relu, 0.0}, {Activation::leaky_relu, 0.3}, 0.9919},
  };
  bool ok = true;
  std::string d;
  for (const auto& r : rows) {
    const double c = shape_correlation(r.a, r.b, grid);
    ok = ok && std::abs(c - r.tab) <= 5e-4;
    d += fmt(c, 5) + " ";
  }
  return check(ok, "correlations " + d);
}

Outcome nugget_table() {
  const std::vector<std::pair<Eigen::Index, double>> rows = {{20, 0.085310}, {80, 0.150799}};
  bool ok = true;
  std::string d;
  for (const auto& [dim, tab] : rows) {
    DesignSpec ds;
    ds.n = 10000;
    ds.dim = dim;
    ds.seed = 1;
    const double s = calibrate_nugget(center(generate_design(ds)), HyperParams::unit(), 0.04);
    ok = ok && std::abs(s / tab - 1.0) <= 0.01;
    d += "I=" + std::to_string(dim) + ": " + fmt(s) + " ";
  }
  return check(ok, "sigma_eps2 " + d);
}

struct Instance {
  Design X;
  Vector y;
  HyperParams theta;
};

Instance make_instance(Eigen::Index n, Eigen::Index dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Instance in{oracle::random_design(n, dim, seed), Vector(n), oracle::random_theta(gen)};
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < n; ++i) in.y[i] = nd(gen);
  return in;
}

Outcome gradient_fd() {
  const PriorConfig p;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto in = make_instance(120, 4, 1000 + seed);
    const auto anchors = select_anchors_first(120, 30);
    const auto g = map_grad(in.y, in.X, in.theta, p, anchors);
    const auto base = in.theta.to_array();
    for (std::size_t j = 0; j < kNumParams; ++j) {
      const double h = 1e-5 * base[j];
      auto hi = base, lo = base;
      hi[j] += h;
      lo[j] -= h;
      const double fd = (map_loss(in.y, in.X, HyperParams::from_array(hi), p, anchors) -
                         map_loss(in.y, in.X, HyperParams::from_array(lo), p, anchors)) /
                        (2 * h);
      worst = std::max(worst, oracle::rel_err(g[j], fd, 1e-2));
    }
  }
  return check(worst <= 1e-4, "max relative error " + fmt(worst));
}

Outcome lowrank_exact() {
  const auto in = make_instance(200, 4, 77);
  const auto f = nystrom_factorize(in.X, in.theta, select_anchors_first(200, 200));
  const Matrix K = oracle::noisy_kernel(in.X, in.theta);
  const Vector dense = Eigen::LLT<Matrix>(K).solve(in.y);
  const double e_solve = (lowrank_solve(f, in.y) - dense).cwiseAbs().maxCoeff();
  const double e_logdet = std::abs(lowrank_logdet(f) - oracle::dense_logdet(K));
  const double e_nll = std::abs(nll(in.y, f) - oracle::dense_nll(in.y, K));
  const Design Xs = oracle::random_design(20, 4, 78);
  const auto preds = Predictor(in.X, in.y, in.theta, f).predict(Xs);
  double e_pred = 0.0;
  for (Eigen::Index j = 0; j < Xs.rows(); ++j) {
    const auto d = oracle::dense_predict(Xs.row(j), in.X, in.y, in.theta);
    e_pred = std::max({e_pred, std::abs(preds[static_cast<std::size_t>(j)].mean - d.mean),
                       std::abs(preds[static_cast<std::size_t>(j)].variance - d.variance)});
  }
  const Matrix K0 = oracle::kernel(in.X, in.X, in.theta);
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  std::string frob;
  for (Eigen::Index r : {10, 25, 50, 100, 200}) {
    const auto fr = nystrom_factorize(in.X, in.theta, select_anchors_first(200, r));
    Matrix approx = fr.dense();
    approx.diagonal().array() -= in.theta.sigma_eps2;
    const double err = (K0 - approx).norm();
    monotone = monotone && err <= prev * (1 + 1e-12);
    prev = err;
    frob += fmt(err, 3) + " ";
  }
  const double worst = std::max({e_solve, e_logdet, e_nll, e_pred});
  return check(worst <= 1e-6 && monotone,
               "dense deviation solve " + fmt(e_solve, 3) + " logdet " + fmt(e_logdet, 3) + " nll " +
                   fmt(e_nll, 3) + " predict " + fmt(e_pred, 3) + ", Frobenius errors " + frob);
}

Outcome vecchia_exact() {
  const Eigen::Index n = 200;
  DesignSpec ds;
  ds.n = n;
  ds.dim = 20;
  ds.seed = 9;
  const Design X = center(generate_design(ds));
  const HyperParams t = HyperParams::unit();
  VecchiaConfig cfg;
  cfg.n_init = 5;
  cfg.n_neighbors = n - 1;
  const auto plan = build_vecchia_plan(X, t, cfg);
  const Matrix K = oracle::kernel(X, X, t);
  const Vector f = vecchia_draw(plan, 10);
  double worst = 0.0;
  for (Eigen::Index i = plan.n_exact; i < n; ++i) {
    const auto& step = plan.steps[static_cast<std::size_t>(i - plan.n_exact)];
    if (static_cast<Eigen::Index>(step.neighbors.size()) != i) return check(false, "conditioning set too small");
    Eigen::LLT<Matrix> llt(K.topLeftCorner(i, i));
    const Vector wts = llt.solve(K.col(i).head(i));
    const double dense_mean = wts.dot(f.head(i));
    const double dense_var = std::max(0.0, K(i, i) - K.col(i).head(i).dot(wts));
    double mean = 0.0;
    for (std::size_t k = 0; k < step.neighbors.size(); ++k) {
      mean += step.weights[static_cast<Eigen::Index>(k)] * f[step.neighbors[k]];
    }
    worst = std::max({worst, std::abs(mean - dense_mean), std::abs(step.cond_var - dense_var)});
  }
  return check(worst <= 1e-8, "max conditional deviation " + fmt(worst));
}

Outcome width_limit() {
  // Same probe geometry and seed as the oracle-check command defaults.
  DesignSpec ds;
  ds.n = 5;
  ds.dim = 3;
  ds.seed = 7;
  const Design X = center(generate_design(ds));
  BnnSpec relu;
  relu.n_samples = 20000;
  relu.seed = 0;
  const auto rows = width_convergence_report(relu, {100, 10000}, X, "probe");
  const double e_small = rows[0].max_abs_error, e_big = rows[1].max_abs_error;

  BnnSpec mix = relu;
  mix.width = 10000;
  mix.components = {BnnComponent{Activation::relu, 0.0, 0.5},
                    BnnComponent{Activation::leaky_relu, 0.2, 0.5}};
  const double e_mix =
      (empirical_kernel(sample_bnn(mix, X)) - analytic_bnn_kernel(mix, X)).cwiseAbs().maxCoeff();
  const bool ok = e_big <= 0.05 && e_big < e_small && e_mix <= 0.05;
  return check(ok, "ReLU error H=1e2 " + fmt(e_small, 4) + ", H=1e4 " + fmt(e_big, 4) +
                       "; ReLU+Leaky(0.2) H=1e4 " + fmt(e_mix, 4));
}

Outcome map_recovery() {
  ScenarioSpec s;
  s.id = "C1";
  s.scale = 0.2;
  s.seed_x = 1;
  const auto grid = s.resolved();
  if (grid.n != 2000 || grid.dim != 20) return check(false, "unexpected grid");
  DesignSpec d;
  d.n = grid.n;
  d.dim = grid.dim;
  d.seed = s.seed_x;
  const Design Xc = center(generate_design(d));
  const auto plan = build_vecchia_plan(Xc, s.theta, s.vecchia);

  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.rank = 200;
  bool ok = true, collapsed = false;
  std::string detail;
  for (int rep = 0; rep < 5; ++rep) {
    ScenarioSpec r = s;
    r.seed_f = 100 + static_cast<std::uint64_t>(rep);
    r.seed_eps = 200 + static_cast<std::uint64_t>(rep);
    const auto ds = make_scenario(r, &plan);
    HyperParams theta0 = HyperParams::unit();
    theta0.sigma_eps2 = calibrate_nugget(ds.X_centered, theta0, 0.04);
    const auto res = fit(ds.y, ds.X_centered, theta0, PriorConfig{}, cfg);
    const double w = res.theta_hat.w, s2 = res.theta_hat.sigma_eps2;
    if (rep == 0) {
      ok = w >= 0.45 && w <= 0.55 && std::abs(s2 / ds.sigma_eps2_true - 1.0) <= 0.25;
    }
    collapsed = collapsed || w < 0.01 || w > 0.99;
    detail += "[w=" + fmt(w, 5) + " s2=" + fmt(s2, 5) + " truth=" + fmt(ds.sigma_eps2_true, 5) + "] ";
  }
  return check(ok && !collapsed, detail);
}

/// Orthogonal equal-norm pairs over 10 radii, then 10 angles at radius 0.5.
Design identifiability_probe() {
  Design X(30, 2);
  Eigen::Index row = 0;
  for (int k = 1; k <= 10; ++k) {
    const double r = 0.1 * k;
    X.row(row++) << r, 0.0;
    X.row(row++) << 0.0, r;
  }
  for (int m = 0; m < 10; ++m) {
    const double phi = oracle::pi * m / 10.0;
    X.row(row++) << 0.5 * std::cos(phi), 0.5 * std::sin(phi);
  }
  return X;
}

Outcome identifiability() {
  const Design X = identifiability_probe();
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> factor(0.5, 1.5);
  double smallest = std::numeric_limits<double>::infinity();
  int pairs = 0;
  while (pairs < 20) {
    const HyperParams a = oracle::random_theta(gen);
    HyperParams b = oracle::random_theta(gen);
    b.sigma_eps2 = a.sigma_eps2;
    const auto va = a.to_array(), vb = b.to_array();
    bool separated = true;
    for (std::size_t j = 1; j < kNumParams; ++j) {
      separated = separated && std::abs(va[j] - vb[j]) >= 0.05 * std::max(va[j], vb[j]);
    }
    if (!separated) continue;
    ++pairs;
    smallest = std::min(smallest, (kernel_matrix(X, a) - kernel_matrix(X, b)).cwiseAbs().maxCoeff());
  }
  // single-coordinate moves of exactly 5%, the hardest separated pairs
  double single = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 2; ++rep) {
    const HyperParams a = oracle::random_theta(gen);
    for (std::size_t j = 1; j < kNumParams; ++j) {
      HyperParams b = a;
      b.at(j) *= 0.95;
      single = std::min(single, (kernel_matrix(X, a) - kernel_matrix(X, b)).cwiseAbs().maxCoeff());
    }
  }
  return check(smallest > 1e-6 && single > 1e-6,
               "min max-abs gap " + fmt(smallest, 4) + " (random pairs), " + fmt(single, 4) +
                   " (single-coordinate 5% moves)");
}

Outcome metric_identities() {
  ScenarioSpec s;
  s.id = "custom";
  s.n = 600;
  s.dim = 5;
  s.vecchia.n_init = 300;
  s.vecchia.n_neighbors = 50;
  const auto ds = make_scenario(s);
  Table t;
  for (Eigen::Index k = 0; k < s.dim; ++k) t.feature_names.push_back("x_" + std::to_string(k + 1));
  t.target_name = "y";
  t.features = ds.X_centered;
  t.target = ds.y.array() * 3.0 + 10.0;
  const auto [train, test] = split(t, SplitSpec{0.1, 4});
  const auto sp = fit_transform(train, test);
  HyperParams theta0 = HyperParams::unit();
  theta0.sigma_eps2 = calibrate_nugget(sp.X_train, theta0, 0.04);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.rank = 100;
  const auto res = fit(sp.y_train, sp.X_train, theta0, PriorConfig{}, cfg);
  const auto f = nystrom_factorize(sp.X_train, res.theta_hat, res.anchors);
  const auto pz = Predictor(sp.X_train, sp.y_train, res.theta_hat, f).predict(sp.X_test);
  const auto po = sp.pre.destandardize(pz);
  const auto mz = compute_metrics(pz, std::vector<double>(sp.y_test.begin(), sp.y_test.end()));
  const auto mo = compute_metrics(po, std::vector<double>(test.target.begin(), test.target.end()),
                                  MetricScale::original);
  bool ok = true;
  double worst = 0.0;
  for (const auto* m : {&mz, &mo}) {
    ok = ok && m->rmse == std::sqrt(m->mse);
    worst = std::max(worst, std::abs(m->mese - (m->mse + m->mean_variance)) / m->mese);
  }
  ok = ok && worst <= 1e-14;
  Preprocessor table5 = Preprocessor::identity(1);
  table5.y_sd = 34.231;
  const double product = table5.nugget_original(4.417e-4);
  ok = ok && std::abs(product / 0.51759 - 1.0) <= 1e-3;
  return check(ok, "MESE identity rel gap " + fmt(worst, 3) + ", RMSE exact, nugget product " +
                       fmt(product, 6));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"kernel anchor values", kernel_anchors},
      {"shape correlation table", shape_table},
      {"nugget calibration table", nugget_table},
      {"gradient vs finite differences", gradient_fd},
      {"low-rank exactness at full rank", lowrank_exact},
      {"Vecchia full conditioning", vecchia_exact},
      {"finite-width Monte-Carlo limit", width_limit},
      {"desk-scale C1 MAP recovery", map_recovery},
      {"identifiability probe", identifiability},
      {"metric identities", metric_identities},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::printf("%s %2zu %-34s %8.2fs  %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
