#pragma once

// CSV ingestion, seeded train/test splits and the train-only preprocessing
// pipeline (min-max features, centering, target standardization).

#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bnngp/core.hpp"
#include "bnngp/predict.hpp"

namespace bnngp {

struct Table {
  std::vector<std::string> feature_names;
  std::string target_name;
  Design features;
  Vector target;

  Eigen::Index rows() const { return features.rows(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_cell(std::string_view cell, std::size_t row, const std::string& column) {
  auto where = [&] { return "row " + std::to_string(row) + ", column '" + column + "'"; };
  if (cell.empty()) throw DataError("empty cell at " + where());
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw DataError("non-numeric cell '" + std::string(cell) + "' at " + where());
  }
  return v;
}

}  // namespace detail

/// Parses CSV text with a header row. `drop` lists columns that are neither
/// features nor the target. Rows are numbered from 1 after the header.
inline Table parse_csv(std::istream& in, const std::string& target,
                       const std::vector<std::string>& drop = {}) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) {
    throw DataError("empty file or missing header row");
  }
  const auto header_views = detail::split_fields(line);
  std::vector<std::string> header(header_views.begin(), header_views.end());
  std::ptrdiff_t target_col = -1;
  std::vector<std::size_t> feature_cols;
  Table t;
  t.target_name = target;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].empty()) throw DataError("empty column name in header at position " + std::to_string(c + 1));
    if (header[c] == target) {
      target_col = static_cast<std::ptrdiff_t>(c);
    } else if (std::find(drop.begin(), drop.end(), header[c]) == drop.end()) {
      feature_cols.push_back(c);
      t.feature_names.push_back(header[c]);
    }
  }
  if (target_col < 0) throw DataError("target column '" + target + "' not found in header");
  if (feature_cols.empty()) throw DataError("no feature columns");

  std::vector<double> feats;
  std::vector<double> ys;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_fields(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    }
    for (auto c : feature_cols) feats.push_back(detail::parse_cell(cells[c], row, header[c]));
    ys.push_back(detail::parse_cell(cells[static_cast<std::size_t>(target_col)], row,
                                    header[static_cast<std::size_t>(target_col)]));
  }
  if (row == 0) throw DataError("no data rows");
  const auto n = static_cast<Eigen::Index>(row);
  const auto d = static_cast<Eigen::Index>(feature_cols.size());
  t.features = Eigen::Map<const Design>(feats.data(), n, d);
  t.target = Eigen::Map<const Vector>(ys.data(), n);
  return t;
}

inline Table load_csv(const std::string& path, const std::string& target,
                      const std::vector<std::string>& drop = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file '" + path + "'");
  try {
    return parse_csv(in, target, drop);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline Table take_rows(const Table& t, const std::vector<Eigen::Index>& idx) {
  Table out;
  out.feature_names = t.feature_names;
  out.target_name = t.target_name;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), t.features.cols());
  out.target.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) = t.features.row(idx[k]);
    out.target[static_cast<Eigen::Index>(k)] = t.target[idx[k]];
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SplitSpec {
  double test_fraction = 0.10;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
};

/// Seeded Fisher-Yates shuffle, then the first round(n * fraction) shuffled
/// indices form the test set. Both parts are returned in ascending order.
inline SplitIndices split_indices(Eigen::Index n, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  if (n < 2) throw DataError("need at least 2 rows to split");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(spec.seed);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
  auto n_test = static_cast<Eigen::Index>(std::llround(spec.test_fraction * static_cast<double>(n)));
  n_test = std::clamp<Eigen::Index>(n_test, 1, n - 1);
  SplitIndices s;
  s.test.assign(perm.begin(), perm.begin() + n_test);
  s.train.assign(perm.begin() + n_test, perm.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

inline std::pair<Table, Table> split(const Table& t, const SplitSpec& spec) {
  const auto s = split_indices(t.rows(), spec);
  return {take_rows(t, s.train), take_rows(t, s.test)};
}

/// Subsample without replacement, returned in ascending order.
inline Table subsample(const Table& t, Eigen::Index n, std::uint64_t seed) {
  if (n >= t.rows()) return t;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(t.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(seed);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
  perm.resize(static_cast<std::size_t>(n));
  std::sort(perm.begin(), perm.end());
  return take_rows(t, perm);
}

// ---------------------------------------------------------------------------

/// Train-fitted preprocessing. Features: (x - min) / (max - min) - 0.5, with
/// constant columns mapped to 0. Target: (y - mean) / sd, sd with n - 1.
struct Preprocessor {
  std::vector<std::string> feature_names;
  std::string target_name;
  Vector minima;
  Vector maxima;
  double y_mean = 0.0;
  double y_sd = 1.0;
  bool scale_features = true;
  bool standardize_target = true;

  static Preprocessor identity(Eigen::Index dim) {
    Preprocessor p;
    p.minima = Vector::Zero(dim);
    p.maxima = Vector::Ones(dim);
    p.scale_features = false;
    p.standardize_target = false;
    return p;
  }

  static Preprocessor fit(const Table& train, bool scale_features = true,
                          bool standardize_target = true) {
    if (train.rows() < 2) throw DataError("training split needs at least 2 rows");
    Preprocessor p;
    p.feature_names = train.feature_names;
    p.target_name = train.target_name;
    p.scale_features = scale_features;
    p.standardize_target = standardize_target;
    p.minima = train.features.colwise().minCoeff().transpose();
    p.maxima = train.features.colwise().maxCoeff().transpose();
    if (standardize_target) {
      const auto n = static_cast<double>(train.rows());
      p.y_mean = train.target.mean();
      p.y_sd = std::sqrt((train.target.array() - p.y_mean).square().sum() / (n - 1.0));
      if (!(p.y_sd > 0.0)) throw DataError("training target has zero standard deviation");
    }
    return p;
  }

  Design transform_features(const Design& X) const {
    if (X.cols() != minima.size()) throw InputError("feature count does not match preprocessor");
    if (!scale_features) return X;
    Design out(X.rows(), X.cols());
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
      const double range = maxima[k] - minima[k];
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        out(i, k) = range > 0.0 ? (X(i, k) - minima[k]) / range - 0.5 : 0.0;
      }
    }
    return out;
  }

  Vector standardize(const Vector& y) const { return (y.array() - y_mean) / y_sd; }
  Vector destandardize(const Vector& z) const { return z.array() * y_sd + y_mean; }

  PredictiveMoments destandardize(const PredictiveMoments& m) const {
    return {m.mean * y_sd + y_mean, m.variance * y_sd * y_sd};
  }

  std::vector<PredictiveMoments> destandardize(std::span<const PredictiveMoments> preds) const {
    std::vector<PredictiveMoments> out;
    out.reserve(preds.size());
    for (const auto& p : preds) out.push_back(destandardize(p));
    return out;
  }

  /// Noise variance on the original target scale.
  double nugget_original(double sigma_eps2_z) const { return sigma_eps2_z * y_sd * y_sd; }
};

inline void to_json(nlohmann::json& j, const Preprocessor& p) {
  j = nlohmann::json{{"feature_names", p.feature_names},
                     {"target_name", p.target_name},
                     {"minima", std::vector<double>(p.minima.begin(), p.minima.end())},
                     {"maxima", std::vector<double>(p.maxima.begin(), p.maxima.end())},
                     {"y_mean", p.y_mean},
                     {"y_sd", p.y_sd},
                     {"scale_features", p.scale_features},
                     {"standardize_target", p.standardize_target}};
}

inline void from_json(const nlohmann::json& j, Preprocessor& p) {
  j.at("feature_names").get_to(p.feature_names);
  j.at("target_name").get_to(p.target_name);
  const auto mins = j.at("minima").get<std::vector<double>>();
  const auto maxs = j.at("maxima").get<std::vector<double>>();
  p.minima = Eigen::Map<const Vector>(mins.data(), static_cast<Eigen::Index>(mins.size()));
  p.maxima = Eigen::Map<const Vector>(maxs.data(), static_cast<Eigen::Index>(maxs.size()));
  j.at("y_mean").get_to(p.y_mean);
  j.at("y_sd").get_to(p.y_sd);
  j.at("scale_features").get_to(p.scale_features);
  j.at("standardize_target").get_to(p.standardize_target);
}

struct ProcessedSplits {
  Design X_train;
  Vector y_train;
  Design X_test;
  Vector y_test;
  Preprocessor pre;
};

/// Fits the preprocessor on `train` only and applies it to both splits.
/// Test features are not clipped.
inline ProcessedSplits fit_transform(const Table& train, const Table& test,
                                     bool scale_features = true, bool standardize_target = true) {
  if (train.features.cols() != test.features.cols()) {
    throw DataError("train and test feature counts differ");
  }
  ProcessedSplits s;
  s.pre = Preprocessor::fit(train, scale_features, standardize_target);
  s.X_train = s.pre.transform_features(train.features);
  s.X_test = s.pre.transform_features(test.features);
  s.y_train = s.pre.standardize(train.target);
  s.y_test = s.pre.standardize(test.target);
  return s;
}

}  // namespace bnngp
