#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bnngp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Designs are stored one observation per row, contiguous.
using Design = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Errors. Each category maps onto one CLI exit code.

enum class ErrorKind { config, input, parameter, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

  /// Machine-parsable prefix used by the CLI.
  const char* tag() const noexcept {
    switch (kind_) {
      case ErrorKind::config: return "E_CONFIG";
      case ErrorKind::input: return "E_INPUT";
      case ErrorKind::parameter: return "E_PARAM";
      case ErrorKind::data: return "E_DATA";
      case ErrorKind::numeric: return "E_NUMERIC";
    }
    return "E_UNKNOWN";
  }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::config:
      case ErrorKind::parameter: return 2;
      case ErrorKind::input:
      case ErrorKind::data: return 3;
      case ErrorKind::numeric: return 4;
    }
    return 1;
  }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct InputError : Error {
  explicit InputError(const std::string& w) : Error(ErrorKind::input, w) {}
};
struct ParameterError : Error {
  explicit ParameterError(const std::string& w) : Error(ErrorKind::parameter, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::numeric, w) {}
};

// ---------------------------------------------------------------------------
// Hyperparameters of the mixed kernel plus the observation noise.

/// Coordinate order used by every gradient and transform in the library.
enum class Param : std::size_t { sigma_eps2 = 0, sigma_a2, sigma_u2, sigma_b2, sigma_v2, alpha, w };
inline constexpr std::size_t kNumParams = 7;
inline constexpr std::array<const char*, kNumParams> kParamNames = {
    "sigma_eps2", "sigma_a2", "sigma_u2", "sigma_b2", "sigma_v2", "alpha", "w"};

using ParamVector = std::array<double, kNumParams>;

struct HyperParams {
  double sigma_eps2 = 0.1;
  double sigma_a2 = 1.0;
  double sigma_u2 = 1.0;
  double sigma_b2 = 1.0;
  double sigma_v2 = 1.0;
  double alpha = 0.5;
  double w = 0.5;

  /// All kernel variances 1, alpha = w = 0.5.
  static HyperParams unit(double sigma_eps2 = 0.1) {
    HyperParams t;
    t.sigma_eps2 = sigma_eps2;
    return t;
  }

  ParamVector to_array() const {
    return {sigma_eps2, sigma_a2, sigma_u2, sigma_b2, sigma_v2, alpha, w};
  }

  static HyperParams from_array(const ParamVector& v) {
    return HyperParams{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
  }

  double& operator[](Param p) { return ref(*this, static_cast<std::size_t>(p)); }
  double operator[](Param p) const {
    return to_array()[static_cast<std::size_t>(p)];
  }
  double& at(std::size_t i) { return ref(*this, i); }

  bool interior() const noexcept {
    return sigma_eps2 > 0 && sigma_a2 > 0 && sigma_u2 > 0 && sigma_b2 > 0 && sigma_v2 > 0 &&
           alpha > 0 && alpha < 1 && w > 0 && w < 1 && std::isfinite(sigma_eps2) &&
           std::isfinite(sigma_a2) && std::isfinite(sigma_u2) && std::isfinite(sigma_b2) &&
           std::isfinite(sigma_v2);
  }

  /// Throws ParameterError unless every field is strictly inside its domain.
  void validate() const {
    if (!interior()) throw ParameterError("hyperparameters outside the interior: " + describe());
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    const auto v = to_array();
    for (std::size_t i = 0; i < kNumParams; ++i) {
      os << (i ? ", " : "") << kParamNames[i] << "=" << v[i];
    }
    return os.str();
  }

  bool operator==(const HyperParams&) const = default;

 private:
  static double& ref(HyperParams& t, std::size_t i) {
    switch (i) {
      case 0: return t.sigma_eps2;
      case 1: return t.sigma_a2;
      case 2: return t.sigma_u2;
      case 3: return t.sigma_b2;
      case 4: return t.sigma_v2;
      case 5: return t.alpha;
      case 6: return t.w;
    }
    throw std::out_of_range("hyperparameter index");
  }
};

// ---------------------------------------------------------------------------
// Random numbers. The standard distributions are implementation-defined, so
// uniform and Gaussian variates are derived directly from the 64-bit engine to
// keep seeded output identical across standard libraries.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n) {
    auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  /// Standard normal via the Box-Muller transform (one cached spare).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives an independent stream seed from a base seed and a stream label.
inline std::uint64_t substream_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Small numeric helpers.

/// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double clamp_unit(double v) { return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v); }

inline std::span<const double> row_span(const Design& X, Eigen::Index i) {
  return {X.row(i).data(), static_cast<std::size_t>(X.cols())};
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

/// Cholesky with an escalating diagonal jitter. The bare matrix is accepted
/// when every squared pivot is at least `start_rel * mean(diag)`; otherwise the
/// ladder starts at that jitter and multiplies it by 10 per failure until it
/// exceeds `max_rel * mean(diag)`. `start_rel == 0` accepts any successful
/// bare factorization.
struct JitteredCholesky {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

inline JitteredCholesky jittered_cholesky(const Matrix& A, double start_rel, double max_rel,
                                          const std::string& what) {
  const auto n = A.rows();
  const double mean_diag = n > 0 ? A.diagonal().mean() : 0.0;
  const double scale = mean_diag > 0 ? mean_diag : 1.0;
  std::vector<double> ladder;
  if (start_rel > 0.0) {
    JitteredCholesky bare{Eigen::LLT<Matrix>(A), 0.0};
    ladder.push_back(0.0);
    if (bare.llt.info() == Eigen::Success &&
        bare.llt.matrixLLT().diagonal().array().square().minCoeff() >= start_rel * scale) {
      return bare;
    }
  }
  double rel = start_rel;
  for (;;) {
    const double jitter = rel * scale;
    Matrix Aj = A;
    Aj.diagonal().array() += jitter;
    JitteredCholesky out{Eigen::LLT<Matrix>(Aj), jitter};
    ladder.push_back(jitter);
    if (out.llt.info() == Eigen::Success && out.llt.matrixLLT().diagonal().minCoeff() > 0) {
      return out;
    }
    rel = rel == 0.0 ? 1e-10 : rel * 10.0;
    if (rel > max_rel * (1.0 + 1e-12)) break;
  }
  std::ostringstream os;
  os << what << ": Cholesky failed for every jitter in the ladder {";
  for (std::size_t i = 0; i < ladder.size(); ++i) os << (i ? ", " : "") << ladder[i];
  os << "}";
  throw NumericError(os.str());
}

inline double logdet_from_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace bnngp
