#pragma once

// Nystrom low-rank representation of the noisy covariance
//
//   K_hat = sigma_eps2 I + C W^{-1} C^T,   C = K[:, S],  W = K[S, S] (+ jitter)
//
// with anchor selection, O(n r^2) solves and log-determinants.

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "bnngp/core.hpp"
#include "bnngp/kernel.hpp"

namespace bnngp {

enum class AnchorStrategy { first, kmeanspp };

inline const char* to_string(AnchorStrategy s) {
  return s == AnchorStrategy::first ? "first" : "kmeanspp";
}

struct AnchorSet {
  std::vector<Eigen::Index> indices;
  AnchorStrategy strategy = AnchorStrategy::first;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(indices.size()); }
};

inline void check_rank(Eigen::Index n, Eigen::Index r) {
  if (r < 1 || r > n) {
    throw InputError("anchor count r=" + std::to_string(r) + " must satisfy 1 <= r <= n=" +
                     std::to_string(n));
  }
}

inline AnchorSet select_anchors_first(Eigen::Index n, Eigen::Index r) {
  check_rank(n, r);
  AnchorSet a;
  a.indices.resize(static_cast<std::size_t>(r));
  std::iota(a.indices.begin(), a.indices.end(), Eigen::Index{0});
  return a;
}

/// k-means++ seeding over the rows of X, returning row indices in selection
/// order. When every unselected row coincides with a selected one, the next
/// index is drawn uniformly from the unselected rows.
inline AnchorSet select_anchors_kmeanspp(const Design& X, Eigen::Index r, std::uint64_t seed) {
  const Eigen::Index n = X.rows();
  check_rank(n, r);
  Rng rng(seed);
  AnchorSet a;
  a.strategy = AnchorStrategy::kmeanspp;
  a.seed = seed;
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());

  auto take = [&](Eigen::Index idx) {
    a.indices.push_back(idx);
    taken[static_cast<std::size_t>(idx)] = 1;
    d2[static_cast<std::size_t>(idx)] = 0.0;
    const auto c = row_span(X, idx);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], squared_distance(row_span(X, i), c));
    }
  };

  take(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
  while (a.size() < r) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!taken[static_cast<std::size_t>(i)]) total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        const double di = d2[static_cast<std::size_t>(i)];
        if (di <= 0.0) continue;
        acc += di;
        pick = i;
        if (acc > target) break;
      }
    } else {
      const std::size_t remaining = static_cast<std::size_t>(n - a.size());
      std::size_t k = rng.index(remaining);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        if (k == 0) {
          pick = i;
          break;
        }
        --k;
      }
    }
    take(pick);
  }
  return a;
}

inline AnchorSet select_anchors(const Design& X, Eigen::Index r, AnchorStrategy strategy,
                                std::uint64_t seed) {
  if (strategy == AnchorStrategy::first) return select_anchors_first(X.rows(), r);
  return select_anchors_kmeanspp(X, r, seed);
}

inline Design gather_rows(const Design& X, const std::vector<Eigen::Index>& idx) {
  Design out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
  return out;
}

// ---------------------------------------------------------------------------

enum class NystromMode {
  /// sigma_eps2 I + C W^{-1} C^T (invertible for every r).
  low_rank_plus_noise,
  /// Nystrom applied to K + sigma_eps2 I itself; rank r, handled through its
  /// pseudo-inverse and pseudo-determinant. Kept for comparison.
  literal,
};

struct NystromOptions {
  NystromMode mode = NystromMode::low_rank_plus_noise;
  double jitter_start = 1e-10;  // relative to mean(diag W)
  double jitter_max = 1e-4;
};

/// Factorization of the Nystrom covariance. Immutable once built.
///
/// The Woodbury core M = sigma_eps2 W + C^T C is held in whitened form:
/// with W = L L^T and B = C L^{-T}, M = L (sigma_eps2 I + B^T B) L^T, and only
/// the Cholesky factor of the well-conditioned middle matrix is stored.
struct NystromFactor {
  AnchorSet anchors;
  Matrix C;                  // n x r noiseless cross-covariance K[:, S]
  Matrix W;                  // r x r anchor block K[S, S] plus jitter
  Eigen::LLT<Matrix> chol_W;
  Matrix B;                  // C L^{-T}
  Eigen::LLT<Matrix> chol_core;  // sigma_eps2 I + B^T B  (literal mode: B^T B)
  double sigma_eps2 = 0.0;
  double jitter_used = 0.0;
  NystromMode mode = NystromMode::low_rank_plus_noise;

  Eigen::Index n() const { return C.rows(); }
  Eigen::Index rank() const { return C.cols(); }

  double logdet_W() const { return logdet_from_llt(chol_W); }
  /// log det(sigma_eps2 W + C^T C).
  double logdet_M() const { return logdet_W() + logdet_from_llt(chol_core); }

  /// Dense n x n matrix represented by the factor (tests and diagnostics only).
  Matrix dense() const {
    Matrix K = B * B.transpose();
    if (mode == NystromMode::low_rank_plus_noise) K.diagonal().array() += sigma_eps2;
    return K;
  }
};

/// Builds the factor from the noiseless kernel on X at the given anchors.
inline NystromFactor nystrom_factorize(const Design& X, const HyperParams& theta,
                                       const AnchorSet& anchors, const NystromOptions& opt = {}) {
  theta.validate();
  const Eigen::Index n = X.rows();
  check_rank(n, anchors.size());
  for (auto idx : anchors.indices) {
    if (idx < 0 || idx >= n) throw InputError("anchor index out of range");
  }
  NystromFactor f;
  f.anchors = anchors;
  f.sigma_eps2 = theta.sigma_eps2;
  f.mode = opt.mode;

  const Design XS = gather_rows(X, anchors.indices);
  f.C = cross_kernel(X, XS, theta);
  f.W = kernel_matrix(XS, theta);
  if (opt.mode == NystromMode::literal) {
    // K_tilde[:, S] and K_tilde[S, S] carry the noise on the anchor entries.
    for (Eigen::Index k = 0; k < anchors.size(); ++k) {
      f.C(anchors.indices[static_cast<std::size_t>(k)], k) += theta.sigma_eps2;
    }
    f.W.diagonal().array() += theta.sigma_eps2;
  }
  auto jc = jittered_cholesky(f.W, opt.jitter_start, opt.jitter_max, "Nystrom anchor block W");
  f.jitter_used = jc.jitter;
  f.W.diagonal().array() += jc.jitter;
  f.chol_W = std::move(jc.llt);

  // B^T = L^{-1} C^T
  f.B = f.chol_W.matrixL().solve(f.C.transpose()).transpose();
  Matrix core = f.B.transpose() * f.B;
  if (opt.mode == NystromMode::low_rank_plus_noise) core.diagonal().array() += theta.sigma_eps2;
  f.chol_core.compute(core);
  if (f.chol_core.info() != Eigen::Success) {
    throw NumericError("Nystrom: Woodbury core is not positive definite");
  }
  return f;
}

/// K_hat^{-1} b. For the literal mode this is the pseudo-inverse product.
inline Matrix lowrank_solve(const NystromFactor& f, const Matrix& b) {
  if (b.rows() != f.n()) throw InputError("lowrank_solve: length mismatch");
  if (f.mode == NystromMode::literal) {
    // (B B^T)^+ = B (B^T B)^{-2} B^T for full-column-rank B.
    return f.B * f.chol_core.solve(f.chol_core.solve(f.B.transpose() * b));
  }
  // sigma^{-2} [b - B (sigma^2 I + B^T B)^{-1} B^T b]
  return (b - f.B * f.chol_core.solve(f.B.transpose() * b)) / f.sigma_eps2;
}

inline Vector lowrank_solve(const NystromFactor& f, const Vector& b) {
  return lowrank_solve(f, Matrix(b)).col(0);
}

/// log det K_hat = (n - r) log sigma_eps2 + log det M - log det W.
/// For the literal mode, the log pseudo-determinant of the rank-r matrix.
inline double lowrank_logdet(const NystromFactor& f) {
  if (f.mode == NystromMode::literal) return logdet_from_llt(f.chol_core);
  return static_cast<double>(f.n() - f.rank()) * std::log(f.sigma_eps2) + f.logdet_M() -
         f.logdet_W();
}

}  // namespace bnngp
