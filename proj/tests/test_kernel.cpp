#include <gtest/gtest.h>

#include <random>

#include "bnngp/kernel.hpp"
#include "oracles.hpp"

using namespace bnngp;

namespace {

PreactMoments unit_moments(double rho) { return PreactMoments{1.0, 1.0, rho, rho}; }

std::vector<double> vec(std::initializer_list<double> v) { return v; }

}  // namespace

TEST(PreactMoments, ZeroInputsGiveBiasVarianceAndFullCorrelation) {
  const auto z = vec({0.0, 0.0, 0.0});
  const auto m = preactivation_moments(z, z, 0.7, 2.0);
  EXPECT_DOUBLE_EQ(m.var_z, 0.7);
  EXPECT_DOUBLE_EQ(m.var_zp, 0.7);
  EXPECT_DOUBLE_EQ(m.rho, 1.0);
}

TEST(PreactMoments, OrthogonalEqualNormPairs) {
  const double r = 0.8, a2 = 0.6, u2 = 1.7;
  const auto x = vec({r, 0.0}), xp = vec({0.0, r});
  const auto m = preactivation_moments(x, xp, a2, u2);
  EXPECT_NEAR(m.rho, a2 / (a2 + u2 * r * r), 1e-15);
}

TEST(PreactMoments, HandEvaluatedPair) {
  const auto x = vec({0.5, 0.0}), xp = vec({0.0, 0.5});
  const auto m = preactivation_moments(x, xp, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(m.var_z, 1.25);
  EXPECT_DOUBLE_EQ(m.var_zp, 1.25);
  EXPECT_DOUBLE_EQ(m.cov, 1.0);
  EXPECT_NEAR(m.rho, 0.8, 1e-15);
}

TEST(PreactMoments, Errors) {
  const auto x = vec({1.0, 2.0}), y = vec({1.0});
  EXPECT_THROW(preactivation_moments(x, y, 1.0, 1.0), InputError);
  EXPECT_THROW(preactivation_moments(x, x, 0.0, 1.0), ParameterError);
  EXPECT_THROW(preactivation_moments(x, x, 1.0, -1.0), ParameterError);
}

TEST(PreactMoments, InvariantsOnRandomPairs) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> x(4), xp(4);
    for (auto& v : x) v = nd(gen);
    for (auto& v : xp) v = nd(gen);
    const auto m = preactivation_moments(x, xp, 0.3, 1.1);
    EXPECT_GE(m.var_z, 0.3);
    EXPECT_GE(m.var_zp, 0.3);
    EXPECT_LE(std::abs(m.cov), std::sqrt(m.var_z * m.var_zp) * (1 + 1e-12));
    EXPECT_LE(std::abs(m.rho), 1.0);
  }
}

TEST(KTanh, ZeroAtZeroCorrelation) { EXPECT_EQ(k_tanh(unit_moments(0.0)), 0.0); }

TEST(KTanh, OddInRho) {
  for (double r : {0.1, 0.45, 0.9, 1.0}) {
    const PreactMoments p{1.3, 0.7, 0.0, r}, q{1.3, 0.7, 0.0, -r};
    EXPECT_DOUBLE_EQ(k_tanh(p), -k_tanh(q));
  }
}

TEST(KTanh, FullCorrelationUnitScale) {
  const double expected = 2.0 / oracle::pi * std::asin((oracle::pi / 2) / (1 + oracle::pi / 2));
  EXPECT_NEAR(k_tanh(unit_moments(1.0)), expected, 1e-15);
  EXPECT_NEAR(k_tanh(unit_moments(1.0)), 0.4184774, 1e-7);
}

TEST(KTanh, NondecreasingInRho) {
  double prev = -1.0;
  for (int i = 0; i <= 2000; ++i) {
    const double rho = -1.0 + i / 1000.0;
    const double v = k_tanh(PreactMoments{2.0, 0.5, 0.0, rho});
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(KSigmoid, QuarterAtZeroCorrelation) { EXPECT_EQ(k_sigmoid(unit_moments(0.0)), 0.25); }

TEST(KSigmoid, FullCorrelationUnitScale) {
  const double expected =
      0.25 + std::asin((oracle::pi / 8) / (1 + oracle::pi / 8)) / (2 * oracle::pi);
  EXPECT_NEAR(k_sigmoid(unit_moments(1.0)), expected, 1e-15);
  EXPECT_NEAR(k_sigmoid(unit_moments(1.0)), 0.2954939, 1e-7);
}

TEST(KSigmoid, OffsetRemovedIsOdd) {
  for (double r : {0.2, 0.6, 0.99}) {
    EXPECT_NEAR(k_sigmoid(unit_moments(r)) - 0.25, -(k_sigmoid(unit_moments(-r)) - 0.25), 1e-16);
  }
}

TEST(KRelu, Anchors) {
  EXPECT_NEAR(k_relu(unit_moments(0.0)), 1.0 / (2 * oracle::pi), 1e-15);
  EXPECT_NEAR(k_relu(unit_moments(1.0)), 0.5, 1e-15);
  EXPECT_NEAR(k_relu(unit_moments(-1.0)), 0.0, 1e-15);
}

TEST(KLeakyRelu, ReductionsAndHandValue) {
  for (double rho : {-0.9, -0.3, 0.0, 0.4, 0.95}) {
    const PreactMoments m{1.4, 0.8, 0.0, rho};
    EXPECT_DOUBLE_EQ(k_leaky_relu(m, 0.0), k_relu(m));
    EXPECT_NEAR(k_leaky_relu(m, 1.0), rho * m.sd_product(), 1e-15);
  }
  EXPECT_NEAR(k_leaky_relu(unit_moments(1.0), 0.5), 0.625, 1e-15);
}

TEST(KMix, CollapsesToTanhAtUnitWeight) {
  HyperParams t = HyperParams::unit();
  t.w = 1.0;
  t.sigma_b2 = 0.4;
  t.sigma_v2 = 1.7;
  const auto x = vec({0.1, -0.3, 0.2}), xp = vec({0.25, 0.05, -0.4});
  const auto m = preactivation_moments(x, xp, t.sigma_a2, t.sigma_u2);
  EXPECT_NEAR(k_mix(x, xp, t), 0.4 + 1.7 * k_tanh(m), 1e-15);
}

TEST(KMix, MatchesIndependentOracleAndIsSymmetric) {
  std::mt19937_64 gen(5);
  const Design X = oracle::random_design(40, 6, 9);
  for (int rep = 0; rep < 5; ++rep) {
    const HyperParams t = oracle::random_theta(gen);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (Eigen::Index j = 0; j < X.rows(); ++j) {
        const double v = k_mix(row_span(X, i), row_span(X, j), t);
        EXPECT_NEAR(v, oracle::kmix(X.row(i), X.row(j), t), 1e-13);
        EXPECT_EQ(v, k_mix(row_span(X, j), row_span(X, i), t));
      }
    }
  }
}

TEST(KernelMatrix, SingleRow) {
  const Design X = oracle::random_design(1, 3, 1);
  const auto t = HyperParams::unit();
  const Matrix K = kernel_matrix(X, t);
  ASSERT_EQ(K.rows(), 1);
  EXPECT_DOUBLE_EQ(K(0, 0), k_mix(row_span(X, 0), row_span(X, 0), t));
}

TEST(KernelMatrix, DuplicatedRowsGiveDuplicatedRowsAndColumns) {
  Design X = oracle::random_design(8, 3, 2);
  X.row(5) = X.row(2);
  const Matrix K = kernel_matrix(X, HyperParams::unit());
  EXPECT_EQ((K.row(5) - K.row(2)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((K.col(5) - K.col(2)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(KernelMatrix, ExactlySymmetricAndPositiveSemidefinite) {
  std::mt19937_64 gen(21);
  for (int rep = 0; rep < 5; ++rep) {
    const Design X = oracle::random_design(50, 5, 100 + rep, -2.0, 2.0);
    const HyperParams t = oracle::random_theta(gen);
    const Matrix K = kernel_matrix(X, t);
    EXPECT_EQ((K - K.transpose()).cwiseAbs().maxCoeff(), 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(K);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * K.diagonal().maxCoeff());
  }
}

TEST(KernelMatrix, CrossKernelAndDiagonalAgree) {
  const Design A = oracle::random_design(7, 4, 3), B = oracle::random_design(5, 4, 4);
  std::mt19937_64 gen(8);
  const HyperParams t = oracle::random_theta(gen);
  const Matrix K = cross_kernel(A, B, t);
  for (Eigen::Index i = 0; i < 7; ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) {
      EXPECT_NEAR(K(i, j), oracle::kmix(A.row(i), B.row(j), t), 1e-13);
    }
  }
  const Vector d = kernel_diagonal(A, t);
  const Matrix KA = kernel_matrix(A, t);
  EXPECT_LE((d - KA.diagonal()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(cross_kernel(A, oracle::random_design(2, 3, 1), t), InputError);
}

TEST(KernelGrad, BiasComponentIsOneAndNoiseFlag) {
  const auto x = vec({0.3, -0.1}), xp = vec({-0.2, 0.4});
  const auto t = HyperParams::unit();
  auto g = kernel_grad(x, xp, t);
  EXPECT_EQ(g[static_cast<std::size_t>(Param::sigma_b2)], 1.0);
  EXPECT_EQ(g[0], 0.0);
  g = kernel_grad(x, x, t, true);
  EXPECT_EQ(g[0], 1.0);
}

TEST(KernelGrad, WeightDerivativeIsComponentDifference) {
  HyperParams t = HyperParams::unit();
  t.sigma_v2 = 1.9;
  const auto x = vec({0.4, 0.0}), xp = vec({0.0, 0.3});
  const auto m = preactivation_moments(x, xp, t.sigma_a2, t.sigma_u2);
  const auto g = kernel_grad(x, xp, t);
  EXPECT_NEAR(g[static_cast<std::size_t>(Param::w)],
              t.sigma_v2 * (k_tanh(m) - k_leaky_relu(m, t.alpha)), 1e-14);
}

TEST(KernelGrad, MatchesCentralFiniteDifferences) {
  std::mt19937_64 gen(31);
  for (int rep = 0; rep < 20; ++rep) {
    const HyperParams t = oracle::random_theta(gen);
    const Design P = oracle::random_design(2, 4, 500 + rep, -1.0, 1.0);
    const auto g = kernel_grad(row_span(P, 0), row_span(P, 1), t);
    const auto base = t.to_array();
    for (std::size_t j = 1; j < kNumParams; ++j) {
      const double h = 1e-6 * base[j];
      auto hi = base, lo = base;
      hi[j] += h;
      lo[j] -= h;
      const double fd = (oracle::kmix(P.row(0), P.row(1), HyperParams::from_array(hi)) -
                         oracle::kmix(P.row(0), P.row(1), HyperParams::from_array(lo))) /
                        (2 * h);
      EXPECT_LE(oracle::rel_err(g[j], fd, 1e-3), 1e-5) << "coordinate " << kParamNames[j];
    }
  }
}

TEST(KernelGrad, FiniteDifferenceModeAgreesWithAnalytic) {
  std::mt19937_64 gen(32);
  const HyperParams t = oracle::random_theta(gen);
  const auto x = vec({0.2, 0.1, -0.3}), xp = vec({-0.1, 0.35, 0.05});
  const auto ga = kernel_grad(x, xp, t, false, GradientMode::analytic);
  const auto gf = kernel_grad(x, xp, t, false, GradientMode::finite_difference);
  for (std::size_t j = 0; j < kNumParams; ++j) EXPECT_LE(oracle::rel_err(ga[j], gf[j], 1e-3), 1e-5);
}

TEST(KernelGrad, AlphaDerivativeVanishesAtUnitWeight) {
  HyperParams t = HyperParams::unit();
  t.w = 1.0;
  const auto g = detail::mix_gradient_from_stats(0.3, 0.5, 0.1, t);
  EXPECT_EQ(g[static_cast<std::size_t>(Param::alpha)], 0.0);
}

TEST(KernelGrad, BoundaryThetaRejected) {
  HyperParams t = HyperParams::unit();
  t.alpha = 0.0;
  const auto x = vec({0.1});
  EXPECT_THROW(kernel_grad(x, x, t), ParameterError);
}

TEST(KernelFuzz, NoNaNAcrossRandomInputs) {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> logscale(-6.0, 6.0), unit(-1.0, 1.0), frac(1e-6, 1 - 1e-6);
  std::size_t bad = 0;
  for (int t = 0; t < 1000000; ++t) {
    HyperParams th;
    th.sigma_a2 = std::pow(10.0, logscale(gen));
    th.sigma_u2 = std::pow(10.0, logscale(gen));
    th.sigma_b2 = std::pow(10.0, logscale(gen));
    th.sigma_v2 = std::pow(10.0, logscale(gen));
    th.alpha = frac(gen);
    th.w = frac(gen);
    const double scale = std::pow(10.0, logscale(gen));
    double x[3], xp[3];
    for (int k = 0; k < 3; ++k) x[k] = scale * unit(gen);
    // a third of the pairs are (nearly) parallel, where rounding pushes |rho| past 1
    const int mode = t % 3;
    for (int k = 0; k < 3; ++k) {
      xp[k] = mode == 0 ? x[k] : (mode == 1 ? -x[k] * (1 + 1e-15) : scale * unit(gen));
    }
    const double v = k_mix(x, xp, th);
    const auto g = detail::mix_gradient_from_stats(dot(x, x), dot(xp, xp), dot(x, xp), th);
    bool ok = std::isfinite(v);
    for (double gi : g) ok = ok && !std::isnan(gi);
    bad += ok ? 0 : 1;
  }
  EXPECT_EQ(bad, 0u);
}

TEST(ShapeCorrelation, SelfCorrelationIsOne) {
  const auto grid = rho_grid();
  for (auto a : {Activation::tanh, Activation::sigmoid, Activation::relu}) {
    EXPECT_NEAR(shape_correlation({a, 0.0}, {a, 0.0}, grid), 1.0, 1e-14);
  }
}

TEST(ShapeCorrelation, ReportedShapeTable) {
  const auto grid = rho_grid();
  EXPECT_NEAR(shape_correlation({Activation::tanh, 0}, {Activation::sigmoid, 0}, grid), 0.9999, 5e-4);
  EXPECT_NEAR(shape_correlation({Activation::relu, 0}, {Activation::leaky_relu, 0.1}, grid), 0.9983,
              5e-4);
  EXPECT_NEAR(shape_correlation({Activation::relu, 0}, {Activation::leaky_relu, 0.3}, grid), 0.9919,
              5e-4);
}

TEST(ShapeCorrelation, GridRefinementIsStable) {
  const auto g1 = rho_grid(401), g2 = rho_grid(801);
  const std::vector<std::pair<KernelShape, KernelShape>> pairs = {
      {{Activation::tanh, 0}, {Activation::sigmoid, 0}},
      {{Activation::relu, 0}, {Activation::leaky_relu, 0.1}},
      {{Activation::relu, 0}, {Activation::leaky_relu, 0.3}}};
  for (const auto& [a, b] : pairs) {
    EXPECT_LT(std::abs(shape_correlation(a, b, g1) - shape_correlation(a, b, g2)), 1e-4);
  }
}

TEST(ShapeCorrelation, Errors) {
  EXPECT_THROW(shape_correlation({}, {}, rho_grid(50)), InputError);
  EXPECT_THROW(shape_correlation({}, {}, rho_grid(200, 1.0)), InputError);
  const std::vector<double> flat(150, 0.3);
  EXPECT_THROW(shape_correlation({}, {Activation::tanh, 0}, flat), NumericError);
}
