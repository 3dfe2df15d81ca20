#pragma once

// Flat key=value configuration files, CSV emission and small file helpers
// shared by the command-line tool.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bnngp/core.hpp"
#include "bnngp/datasets.hpp"
#include "bnngp/predict.hpp"
#include "bnngp/simulate.hpp"

namespace bnngp {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericError("cannot format value");
  return std::string(buf, ptr);
}

/// `key = value` lines with `#` comments. Every key read through a getter is
/// recorded together with its effective value; keys in the file that nobody
/// reads are rejected by reject_unknown().
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>") {
    KeyValueConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto body = detail::trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key(detail::trim(body.substr(0, eq)));
      const std::string value(detail::trim(body.substr(eq + 1)));
      if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
      if (cfg.values_.count(key) != 0) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      }
      cfg.values_[key] = value;
      cfg.file_order_.push_back(key);
    }
    cfg.source_ = source;
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  /// Command-line overrides replace file values.
  void set(const std::string& key, const std::string& value) {
    if (values_.count(key) == 0) file_order_.push_back(key);
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const auto it = values_.find(key);
    return record(key, it == values_.end() ? fallback : it->second);
  }

  double get_double(const std::string& key, double fallback) {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      record(key, format_double(fallback));
      return fallback;
    }
    const double v = parse_number<double>(key, it->second);
    record(key, it->second);
    return v;
  }

  long long get_int(const std::string& key, long long fallback) {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      record(key, std::to_string(fallback));
      return fallback;
    }
    const auto v = parse_number<long long>(key, it->second);
    record(key, it->second);
    return v;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      record(key, std::to_string(fallback));
      return fallback;
    }
    const auto v = parse_number<std::uint64_t>(key, it->second);
    record(key, it->second);
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      record(key, fallback ? "true" : "false");
      return fallback;
    }
    const auto& s = it->second;
    bool v;
    if (s == "true" || s == "1" || s == "yes") {
      v = true;
    } else if (s == "false" || s == "0" || s == "no") {
      v = false;
    } else {
      throw ConfigError("key '" + key + "': expected a boolean, got '" + s + "'");
    }
    record(key, s);
    return v;
  }

  std::vector<std::string> get_list(const std::string& key, const std::string& fallback) {
    const std::string raw = get_string(key, fallback);
    std::vector<std::string> out;
    if (detail::trim(raw).empty()) return out;
    for (auto piece : detail::split_fields(raw)) {
      if (piece.empty()) throw ConfigError("key '" + key + "': empty list element");
      out.emplace_back(piece);
    }
    return out;
  }

  std::vector<double> get_double_list(const std::string& key, const std::string& fallback) {
    std::vector<double> out;
    for (const auto& s : get_list(key, fallback)) out.push_back(parse_number<double>(key, s));
    return out;
  }

  std::vector<long long> get_int_list(const std::string& key, const std::string& fallback) {
    std::vector<long long> out;
    for (const auto& s : get_list(key, fallback)) out.push_back(parse_number<long long>(key, s));
    return out;
  }

  void reject_unknown() const {
    for (const auto& key : file_order_) {
      if (resolved_.count(key) == 0) {
        throw ConfigError("unknown config key '" + key + "' in " + source_);
      }
    }
  }

  /// Effective configuration in the order keys were requested.
  std::string resolved_text() const {
    std::ostringstream os;
    for (const auto& key : request_order_) os << key << " = " << resolved_.at(key) << '\n';
    return os.str();
  }

  nlohmann::ordered_json resolved_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& key : request_order_) j[key] = resolved_.at(key);
    return j;
  }

 private:
  template <typename T>
  static T parse_number(const std::string& key, const std::string& s) {
    std::string_view v = s;
    if (!v.empty() && v.front() == '+') v.remove_prefix(1);
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError("key '" + key + "': cannot parse '" + s + "' as a number");
    }
    return out;
  }

  const std::string& record(const std::string& key, const std::string& value) {
    if (resolved_.count(key) == 0) request_order_.push_back(key);
    resolved_[key] = value;
    return resolved_[key];
  }

  std::map<std::string, std::string> values_;
  std::vector<std::string> file_order_;
  std::map<std::string, std::string> resolved_;
  std::vector<std::string> request_order_;
  std::string source_ = "<config>";
};

// ---------------------------------------------------------------------------

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write output file '" + path.string() + "'");
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
}

template <typename Json>
void write_json(const std::filesystem::path& path, const Json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

/// x_1..x_I, f, y with the centered design.
inline void write_scenario_csv(std::ostream& out, const ScenarioDataset& ds) {
  const Eigen::Index dim = ds.X_centered.cols();
  for (Eigen::Index k = 0; k < dim; ++k) out << "x_" << (k + 1) << ',';
  out << "f,y\n";
  for (Eigen::Index i = 0; i < ds.X_centered.rows(); ++i) {
    for (Eigen::Index k = 0; k < dim; ++k) out << format_double(ds.X_centered(i, k)) << ',';
    out << format_double(ds.f[i]) << ',' << format_double(ds.y[i]) << '\n';
  }
}

inline nlohmann::ordered_json scenario_provenance(const ScenarioDataset& ds) {
  const auto& s = ds.spec;
  nlohmann::ordered_json j;
  j["scenario"] = ds.grid.id;
  j["design"] = to_string(ds.grid.design);
  j["dim"] = ds.grid.dim;
  j["n"] = ds.grid.n;
  j["scale"] = s.scale;
  j["eta"] = s.eta;
  j["sigma_eps2_true"] = ds.sigma_eps2_true;
  j["mean_marginal_variance"] = ds.mean_marginal_variance;
  nlohmann::ordered_json theta;
  const auto arr = ds.theta_true.to_array();
  for (std::size_t q = 0; q < kNumParams; ++q) theta[kParamNames[q]] = arr[q];
  j["theta_true"] = theta;
  j["seeds"] = {{"x", s.seed_x}, {"f", s.seed_f}, {"eps", s.seed_eps}};
  j["vecchia"] = {{"n_init", s.vecchia.n_init}, {"n_neighbors", s.vecchia.n_neighbors},
                  {"exact", ds.exact}};
  j["columns"] = "x_1..x_I (centered), f (latent), y (observed)";
  return j;
}

/// mu, var, y columns; extra columns are optional.
inline void write_predictions_csv(std::ostream& out, std::span<const PredictiveMoments> z,
                                  std::span<const double> y_z,
                                  std::span<const PredictiveMoments> orig = {},
                                  std::span<const double> y_orig = {}) {
  const bool with_orig = !orig.empty();
  out << "mu,var,y";
  if (with_orig) out << ",mu_original,var_original,y_original";
  out << '\n';
  for (std::size_t i = 0; i < z.size(); ++i) {
    out << format_double(z[i].mean) << ',' << format_double(z[i].variance) << ','
        << format_double(y_z[i]);
    if (with_orig) {
      out << ',' << format_double(orig[i].mean) << ',' << format_double(orig[i].variance) << ','
          << format_double(y_orig[i]);
    }
    out << '\n';
  }
}

struct PredictionFile {
  std::vector<PredictiveMoments> moments;
  std::vector<double> y;
};

inline PredictionFile read_predictions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty predictions file");
  const auto header = detail::split_fields(line);
  auto column = [&](std::string_view name) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw DataError(path + ": missing column '" + std::string(name) + "'");
  };
  const auto c_mu = column("mu"), c_var = column("var"), c_y = column("y");
  PredictionFile pf;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_fields(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ": row " + std::to_string(row) + " has the wrong number of cells");
    }
    const double mu = detail::parse_cell(cells[c_mu], row, "mu");
    const double var = detail::parse_cell(cells[c_var], row, "var");
    if (var < 0.0) throw DataError(path + ": negative variance at row " + std::to_string(row));
    pf.moments.push_back({mu, var});
    pf.y.push_back(detail::parse_cell(cells[c_y], row, "y"));
  }
  return pf;
}

inline nlohmann::ordered_json metrics_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["scale"] = to_string(m.scale);
  j["n_test"] = m.n_test;
  j["mae"] = m.mae;
  j["mse"] = m.mse;
  j["rmse"] = m.rmse;
  j["mese"] = m.mese;
  j["sdese"] = m.sdese;
  j["mean_variance"] = m.mean_variance;
  return j;
}

}  // namespace bnngp
