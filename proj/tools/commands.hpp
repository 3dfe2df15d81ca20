#pragma once

// Subcommands of the bnngp tool. run_cli() is the whole program; main() only
// forwards to it so the tests can drive it in-process.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bnngp/bnngp.hpp"

namespace bnngp::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Invocation {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline KeyValueConfig load_config(const Invocation& inv) {
  KeyValueConfig cfg = inv.config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(inv.config_path);
  if (inv.seed) cfg.set("seed", std::to_string(*inv.seed));
  return cfg;
}

// ---------------------------------------------------------------------------
// Config readers.

inline HyperParams read_kernel_params(KeyValueConfig& cfg, const HyperParams& base) {
  HyperParams t = base;
  t.sigma_a2 = cfg.get_double("sigma_a2", base.sigma_a2);
  t.sigma_u2 = cfg.get_double("sigma_u2", base.sigma_u2);
  t.sigma_b2 = cfg.get_double("sigma_b2", base.sigma_b2);
  t.sigma_v2 = cfg.get_double("sigma_v2", base.sigma_v2);
  t.alpha = cfg.get_double("alpha", base.alpha);
  t.w = cfg.get_double("w", base.w);
  return t;
}

inline PriorConfig read_priors(KeyValueConfig& cfg) {
  PriorConfig p;
  for (std::size_t q = 0; q < 5; ++q) {
    const std::string name = kParamNames[q];
    p.inv_gamma[q].shape = cfg.get_double("prior_" + name + "_shape", p.inv_gamma[q].shape);
    p.inv_gamma[q].scale = cfg.get_double("prior_" + name + "_scale", p.inv_gamma[q].scale);
  }
  p.alpha.a = cfg.get_double("prior_alpha_a", p.alpha.a);
  p.alpha.b = cfg.get_double("prior_alpha_b", p.alpha.b);
  p.w.a = cfg.get_double("prior_w_a", p.w.a);
  p.w.b = cfg.get_double("prior_w_b", p.w.b);
  p.validate();
  return p;
}

inline AnchorStrategy parse_anchors(const std::string& s) {
  if (s == "first") return AnchorStrategy::first;
  if (s == "kmeanspp" || s == "kmeans++") return AnchorStrategy::kmeanspp;
  throw ConfigError("anchors must be 'first' or 'kmeanspp', got '" + s + "'");
}

inline TrainConfig read_train(KeyValueConfig& cfg, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = static_cast<int>(cfg.get_int("epochs", t.epochs));
  t.learning_rate = cfg.get_double("learning_rate", t.learning_rate);
  t.nugget_learning_rate = cfg.get_double("nugget_learning_rate", t.nugget_learning_rate);
  t.rank = cfg.get_int("rank", t.rank);
  t.anchors = parse_anchors(cfg.get_string("anchors", "first"));
  t.anchor_seed = cfg.get_u64("anchor_seed", seed);
  const auto grad = cfg.get_string("gradient", "analytic");
  if (grad == "analytic") {
    t.gradient = GradientMode::analytic;
  } else if (grad == "finite_difference") {
    t.gradient = GradientMode::finite_difference;
  } else {
    throw ConfigError("gradient must be 'analytic' or 'finite_difference'");
  }
  const auto mode = cfg.get_string("nystrom_mode", "low_rank_plus_noise");
  if (mode == "low_rank_plus_noise") {
    t.nystrom.mode = NystromMode::low_rank_plus_noise;
  } else if (mode == "literal") {
    t.nystrom.mode = NystromMode::literal;
  } else {
    throw ConfigError("nystrom_mode must be 'low_rank_plus_noise' or 'literal'");
  }
  t.nystrom.jitter_start = cfg.get_double("jitter_start", t.nystrom.jitter_start);
  t.nystrom.jitter_max = cfg.get_double("jitter_max", t.nystrom.jitter_max);
  t.adam.beta1 = cfg.get_double("adam_beta1", t.adam.beta1);
  t.adam.beta2 = cfg.get_double("adam_beta2", t.adam.beta2);
  t.adam.epsilon = cfg.get_double("adam_epsilon", t.adam.epsilon);
  t.validate();
  return t;
}

struct PreparedData {
  ProcessedSplits splits;
  std::string input;
  std::uint64_t split_seed = 0;
  std::uint64_t subsample_seed = 0;
  Eigen::Index n_raw = 0;
};

inline PreparedData read_and_prepare(KeyValueConfig& cfg, std::uint64_t seed) {
  PreparedData d;
  d.input = cfg.get_string("input", "");
  const auto target = cfg.get_string("target", "y");
  const auto drop = cfg.get_list("drop", "");
  const auto sub_n = cfg.get_int("subsample", 0);
  d.subsample_seed = cfg.get_u64("subsample_seed", seed);
  SplitSpec split_spec;
  split_spec.test_fraction = cfg.get_double("test_fraction", split_spec.test_fraction);
  d.split_seed = split_spec.seed = cfg.get_u64("split_seed", seed);
  const bool scale_features = cfg.get_bool("scale_features", true);
  const bool standardize_target = cfg.get_bool("standardize_target", true);
  cfg.reject_unknown();
  if (d.input.empty()) throw ConfigError("missing required key 'input'");
  if (sub_n < 0) throw ConfigError("subsample must be nonnegative");
  if (!(split_spec.test_fraction > 0.0 && split_spec.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }

  Table raw = load_csv(d.input, target, drop);
  d.n_raw = raw.rows();
  if (sub_n > 0) raw = subsample(raw, sub_n, d.subsample_seed);
  const auto [train, test] = split(raw, split_spec);
  d.splits = fit_transform(train, test, scale_features, standardize_target);
  return d;
}

struct ThetaInit {
  HyperParams theta;
  double init_eta = 0.04;
  bool nugget_from_eta = true;
};

/// sigma_eps2 defaults to init_eta times the mean marginal variance on the
/// training inputs.
inline ThetaInit read_theta0(KeyValueConfig& cfg) {
  ThetaInit ti;
  ti.theta = read_kernel_params(cfg, HyperParams::unit());
  ti.init_eta = cfg.get_double("init_eta", ti.init_eta);
  ti.nugget_from_eta = !cfg.has("sigma_eps2");
  if (!ti.nugget_from_eta) ti.theta.sigma_eps2 = cfg.get_double("sigma_eps2", 0.1);
  return ti;
}

inline void resolve_nugget(ThetaInit& ti, const Design& X) {
  if (!ti.nugget_from_eta) return;
  if (!(ti.init_eta > 0.0)) throw ConfigError("init_eta must be positive");
  ti.theta.sigma_eps2 = calibrate_nugget(X, ti.theta, ti.init_eta);
}

inline ojson theta_json(const HyperParams& t) {
  // Reporting order: sigma_b2, sigma_v2, sigma_u2, sigma_a2, alpha, w, sigma_eps2.
  ojson j;
  j["sigma_b2"] = t.sigma_b2;
  j["sigma_v2"] = t.sigma_v2;
  j["sigma_u2"] = t.sigma_u2;
  j["sigma_a2"] = t.sigma_a2;
  j["alpha"] = t.alpha;
  j["w"] = t.w;
  j["sigma_eps2"] = t.sigma_eps2;
  return j;
}

inline ojson manifest_header(const std::string& command, const KeyValueConfig& cfg) {
  ojson m;
  m["schema_version"] = kSchemaVersion;
  m["tool"] = "bnngp";
  m["tool_version"] = kToolVersion;
  m["command"] = command;
  m["config"] = cfg.resolved_json();
  return m;
}

// ---------------------------------------------------------------------------
// Fit + predict, shared by `fit` and `rank-sweep`.

struct FitOutcome {
  FitResult fit;
  NystromFactor factor;
  std::vector<PredictiveMoments> pred_z;
  std::vector<PredictiveMoments> pred_orig;
  Vector y_test_orig;
  MetricsReport metrics_z;
  MetricsReport metrics_orig;
  double train_time = 0.0;
  double predict_time = 0.0;
};

inline FitOutcome fit_and_predict(const ProcessedSplits& s, const HyperParams& theta0,
                                  const PriorConfig& priors, const TrainConfig& train) {
  FitOutcome o;
  Stopwatch sw;
  o.fit = fit(s.y_train, s.X_train, theta0, priors, train);
  o.factor = nystrom_factorize(s.X_train, o.fit.theta_hat, o.fit.anchors, train.nystrom);
  o.train_time = sw.lap();
  o.pred_z = Predictor(s.X_train, s.y_train, o.fit.theta_hat, o.factor).predict(s.X_test);
  o.predict_time = sw.lap();
  o.pred_orig = s.pre.destandardize(o.pred_z);
  o.y_test_orig = s.pre.destandardize(s.y_test);
  o.metrics_z = compute_metrics(o.pred_z, {s.y_test.data(), static_cast<std::size_t>(s.y_test.size())},
                                MetricScale::standardized);
  o.metrics_orig = compute_metrics(
      o.pred_orig, {o.y_test_orig.data(), static_cast<std::size_t>(o.y_test_orig.size())},
      MetricScale::original);
  return o;
}

// ---------------------------------------------------------------------------

inline int cmd_simulate(const Invocation& inv, ojson& manifest) {
  KeyValueConfig cfg = load_config(inv);
  ScenarioSpec spec;
  const auto seed = cfg.get_u64("seed", 1);
  spec.id = cfg.get_string("scenario", "C1");
  spec.scale = cfg.get_double("scale", 1.0);
  if (spec.id == "custom") {
    const auto design = cfg.get_string("design", "uniform");
    if (design == "uniform") {
      spec.design = DesignKind::uniform;
    } else if (design == "stratified") {
      spec.design = DesignKind::stratified;
    } else {
      throw ConfigError("design must be 'uniform' or 'stratified'");
    }
    spec.dim = cfg.get_int("dim", spec.dim);
    spec.n = cfg.get_int("n", spec.n);
    if (spec.dim < 1 || spec.n < 1) throw ConfigError("dim and n must be >= 1");
  }
  spec.theta = read_kernel_params(cfg, HyperParams::unit());
  spec.eta = cfg.get_double("eta", spec.eta);
  spec.seed_x = cfg.get_u64("seed_x", seed);
  spec.seed_f = cfg.get_u64("seed_f", seed + 1);
  spec.seed_eps = cfg.get_u64("seed_eps", seed + 2);
  spec.vecchia.n_init = cfg.get_int("n_init", spec.vecchia.n_init);
  spec.vecchia.n_neighbors = cfg.get_int("n_neighbors", spec.vecchia.n_neighbors);
  const auto stem = cfg.get_string("output", "scenario");
  cfg.reject_unknown();
  if (spec.eta < 0.0) throw ConfigError("eta must be nonnegative");
  spec.theta.sigma_eps2 = 1.0;  // placeholder; replaced by calibration
  spec.theta.validate();

  manifest = manifest_header("simulate", cfg);
  Stopwatch sw;
  const ScenarioDataset ds = make_scenario(spec);
  const double t_sim = sw.lap();

  const fs::path out(inv.out);
  const fs::path csv = out / (stem + ".csv");
  const fs::path sidecar = out / (stem + ".json");
  {
    auto os = open_output(csv);
    write_scenario_csv(os, ds);
  }
  write_json(sidecar, scenario_provenance(ds));
  manifest["dataset"] = scenario_provenance(ds);
  manifest["artifacts"] = {{"data", csv.string()}, {"provenance", sidecar.string()}};
  manifest["wall_time"] = {{"simulate", t_sim}, {"write", sw.lap()}};
  std::cout << "simulated " << ds.grid.id << ": n=" << ds.grid.n << " I=" << ds.grid.dim
            << " sigma_eps2=" << format_double(ds.sigma_eps2_true) << " -> " << csv.string() << '\n';
  return 0;
}

inline int cmd_fit(const Invocation& inv, ojson& manifest) {
  KeyValueConfig cfg = load_config(inv);
  const auto seed = cfg.get_u64("seed", 0);
  ThetaInit ti = read_theta0(cfg);
  const PriorConfig priors = read_priors(cfg);
  const TrainConfig train = read_train(cfg, seed);
  Stopwatch sw;
  const PreparedData data = read_and_prepare(cfg, seed);  // rejects unknown keys
  const double t_load = sw.lap();
  const auto& s = data.splits;
  resolve_nugget(ti, s.X_train);

  manifest = manifest_header("fit", cfg);
  manifest["seeds"] = {{"seed", seed},
                       {"split", data.split_seed},
                       {"subsample", data.subsample_seed},
                       {"anchors", train.anchor_seed}};
  manifest["data"] = {{"input", data.input},
                      {"n_rows", data.n_raw},
                      {"n_train", s.X_train.rows()},
                      {"n_test", s.X_test.rows()},
                      {"dim", s.X_train.cols()}};
  manifest["theta_init"] = theta_json(ti.theta);

  const FitOutcome o = fit_and_predict(s, ti.theta, priors, train);

  const fs::path out(inv.out);
  const fs::path p_pred = out / "predictions.csv", p_pre = out / "preprocessor.json",
                 p_loss = out / "loss.csv", p_cfg = out / "config.resolved.txt",
                 p_manifest = out / "manifest.json";
  {
    auto os = open_output(p_pred);
    write_predictions_csv(os, o.pred_z, {s.y_test.data(), static_cast<std::size_t>(s.y_test.size())},
                          o.pred_orig,
                          {o.y_test_orig.data(), static_cast<std::size_t>(o.y_test_orig.size())});
  }
  {
    nlohmann::json pj = s.pre;
    write_json(p_pre, pj);
  }
  {
    auto os = open_output(p_loss);
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < o.fit.loss_trajectory.size(); ++e) {
      os << e << ',' << format_double(o.fit.loss_trajectory[e]) << '\n';
    }
  }
  write_text(p_cfg, cfg.resolved_text());

  manifest["theta_hat"] = theta_json(o.fit.theta_hat);
  manifest["sigma_eps2_original_scale"] = s.pre.nugget_original(o.fit.theta_hat.sigma_eps2);
  manifest["anchors"] = {{"strategy", to_string(o.fit.anchors.strategy)},
                         {"rank", o.fit.anchors.size()},
                         {"jitter", o.factor.jitter_used}};
  manifest["loss"] = {{"initial", o.fit.loss_trajectory.empty() ? nullptr : ojson(o.fit.loss_trajectory.front())},
                      {"final", o.fit.loss_trajectory.empty() ? nullptr : ojson(o.fit.loss_trajectory.back())},
                      {"epochs", train.epochs}};
  manifest["metrics"] = {{"standardized", metrics_json(o.metrics_z)},
                         {"original", metrics_json(o.metrics_orig)}};
  manifest["artifacts"] = {{"predictions", p_pred.string()},
                           {"preprocessor", p_pre.string()},
                           {"loss", p_loss.string()},
                           {"config", p_cfg.string()},
                           {"manifest", p_manifest.string()}};
  manifest["wall_time"] = {{"load", t_load}, {"train", o.train_time}, {"predict", o.predict_time}};
  std::cout << "fit: w=" << format_double(o.fit.theta_hat.w)
            << " sigma_eps2=" << format_double(o.fit.theta_hat.sigma_eps2)
            << " RMSE(original)=" << format_double(o.metrics_orig.rmse) << '\n';
  return 0;
}

inline int cmd_eval(const Invocation& inv, ojson& manifest) {
  KeyValueConfig cfg = load_config(inv);
  const auto pred_path = cfg.get_string("predictions", "");
  const auto pre_path = cfg.get_string("preprocessor", "");
  const auto stem = cfg.get_string("output", "metrics");
  cfg.reject_unknown();
  if (pred_path.empty()) throw ConfigError("missing required key 'predictions'");

  manifest = manifest_header("eval", cfg);
  const PredictionFile pf = read_predictions_csv(pred_path);
  const MetricsReport mz = compute_metrics(pf.moments, pf.y, MetricScale::standardized);
  Preprocessor pre = Preprocessor::identity(0);
  if (!pre_path.empty()) {
    try {
      read_json(pre_path).get_to(pre);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed preprocessor '" + pre_path + "': " + e.what());
    }
  }
  const auto orig = pre.destandardize(pf.moments);
  std::vector<double> y_orig(pf.y.size());
  for (std::size_t i = 0; i < pf.y.size(); ++i) y_orig[i] = pf.y[i] * pre.y_sd + pre.y_mean;
  const MetricsReport mo = compute_metrics(orig, y_orig, MetricScale::original);

  ojson metrics = {{"standardized", metrics_json(mz)}, {"original", metrics_json(mo)}};
  const fs::path p = fs::path(inv.out) / (stem + ".json");
  write_json(p, metrics);
  manifest["inputs"] = {{"predictions", pred_path},
                        {"preprocessor", pre_path.empty() ? ojson(nullptr) : ojson(pre_path)}};
  manifest["metrics"] = metrics;
  manifest["artifacts"] = {{"metrics", p.string()}};
  std::cout << "eval: n=" << mz.n_test << " MESE=" << format_double(mz.mese)
            << " RMSE=" << format_double(mz.rmse) << '\n';
  return 0;
}

inline int cmd_kernel_probe(const Invocation& inv, ojson& manifest) {
  KeyValueConfig cfg = load_config(inv);
  const auto points = cfg.get_int("grid_points", 401);
  const auto edge = cfg.get_double("grid_edge", 0.999);
  const auto stem = cfg.get_string("output", "kernel_probe");
  cfg.reject_unknown();
  if (points < 2) throw ConfigError("grid_points must be >= 2");
  if (!(edge > 0.0 && edge <= 1.0)) throw ConfigError("grid_edge must lie in (0, 1]");

  manifest = manifest_header("kernel-probe", cfg);
  const auto grid = rho_grid(static_cast<std::size_t>(points), edge);
  const auto fine = rho_grid(static_cast<std::size_t>(2 * points - 1), edge);
  struct Pair {
    const char* name;
    KernelShape a, b;
  };
  const std::vector<Pair> pairs = {
      {"tanh_x_sigmoid", {Activation::tanh, 0.0}, {Activation::sigmoid, 0.0}},
      {"relu_x_leaky0.1", {Activation::relu, 0.0}, {Activation::leaky_relu, 0.1}},
      {"relu_x_leaky0.3", {Activation::relu, 0.0}, {Activation::leaky_relu, 0.3}},
  };
  const fs::path p = fs::path(inv.out) / (stem + ".csv");
  auto os = open_output(p);
  os << "pair,correlation,self_a,self_b,correlation_doubled_grid,grid_points\n";
  ojson rows = ojson::array();
  for (const auto& pr : pairs) {
    const double c = shape_correlation(pr.a, pr.b, grid);
    const double sa = shape_correlation(pr.a, pr.a, grid);
    const double sb = shape_correlation(pr.b, pr.b, grid);
    const double cf = shape_correlation(pr.a, pr.b, fine);
    os << pr.name << ',' << format_double(c) << ',' << format_double(sa) << ','
       << format_double(sb) << ',' << format_double(cf) << ',' << points << '\n';
    rows.push_back({{"pair", pr.name}, {"correlation", c}, {"correlation_doubled_grid", cf}});
    std::cout << pr.name << ": " << format_double(c) << '\n';
  }
  manifest["rows"] = rows;
  manifest["artifacts"] = {{"table", p.string()}};
  return 0;
}

inline std::vector<BnnComponent> parse_blocks(const std::vector<std::string>& items) {
  // name[@alpha]:weight, e.g. relu:1 or tanh:0.5,leaky_relu@0.2:0.5
  std::vector<BnnComponent> out;
  for (const auto& item : items) {
    const auto colon = item.rfind(':');
    std::string head = colon == std::string::npos ? item : item.substr(0, colon);
    BnnComponent c;
    c.weight = 1.0;
    if (colon != std::string::npos) {
      try {
        std::size_t used = 0;
        c.weight = std::stod(item.substr(colon + 1), &used);
        if (used != item.size() - colon - 1) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError("bad block weight in '" + item + "'");
      }
    }
    if (const auto at = head.find('@'); at != std::string::npos) {
      try {
        c.alpha = std::stod(head.substr(at + 1));
      } catch (const std::exception&) {
        throw ConfigError("bad LeakyReLU slope in '" + item + "'");
      }
      head.resize(at);
    }
    if (head == "tanh") {
      c.activation = Activation::tanh;
    } else if (head == "sigmoid") {
      c.activation = Activation::sigmoid;
    } else if (head == "relu") {
      c.activation = Activation::relu;
    } else if (head == "leaky_relu") {
      c.activation = Activation::leaky_relu;
    } else {
      throw ConfigError("unknown activation '" + head + "'");
    }
    out.push_back(c);
  }
  return out;
}

inline int cmd_oracle_check(const Invocation& inv, ojson& manifest) {
  KeyValueConfig cfg = load_config(inv);
  BnnSpec spec;
  spec.seed = cfg.get_u64("seed", 0);
  spec.theta = read_kernel_params(cfg, HyperParams::unit());
  spec.n_samples = cfg.get_int("n_samples", 20000);
  spec.components = parse_blocks(cfg.get_list("blocks", "relu:1"));
  const auto widths = cfg.get_int_list("widths", "100,10000");
  const auto n_probe = cfg.get_int("probe_points", 5);
  const auto probe_dim = cfg.get_int("probe_dim", 3);
  const auto probe_seed = cfg.get_u64("probe_seed", 7);
  const auto stem = cfg.get_string("output", "oracle");
  cfg.reject_unknown();
  if (widths.empty()) throw ConfigError("widths must list at least one width");
  if (n_probe < 1 || probe_dim < 1) throw ConfigError("probe_points and probe_dim must be >= 1");
  spec.validate();

  manifest = manifest_header("oracle-check", cfg);
  DesignSpec ds;
  ds.n = n_probe;
  ds.dim = probe_dim;
  ds.seed = probe_seed;
  const Design X = center(generate_design(ds));
  const std::string probe_id = "uniform-I" + std::to_string(probe_dim) + "-n" +
                               std::to_string(n_probe) + "-seed" + std::to_string(probe_seed);
  std::vector<Eigen::Index> ws(widths.begin(), widths.end());
  Stopwatch sw;
  const auto rows = width_convergence_report(spec, ws, X, probe_id);
  const double t = sw.lap();

  const fs::path p = fs::path(inv.out) / (stem + ".csv");
  auto os = open_output(p);
  os << "H,n_samples,probe_set_id,max_abs_error\n";
  ojson jr = ojson::array();
  for (const auto& r : rows) {
    os << r.width << ',' << r.n_samples << ',' << r.probe_set_id << ','
       << format_double(r.max_abs_error) << '\n';
    jr.push_back({{"H", r.width}, {"max_abs_error", r.max_abs_error}});
    std::cout << "H=" << r.width << " max_abs_error=" << format_double(r.max_abs_error) << '\n';
  }
  manifest["rows"] = jr;
  manifest["artifacts"] = {{"table", p.string()}};
  manifest["wall_time"] = {{"sample", t}};
  return 0;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline int cmd_rank_sweep(const Invocation& inv, ojson& manifest) {
  KeyValueConfig cfg = load_config(inv);
  const auto seed = cfg.get_u64("seed", 0);
  const auto ranks = cfg.get_int_list("ranks", "50,100,200");
  const auto repeats = cfg.get_int("repeats", 3);
  const auto budgets = cfg.get_double_list("budgets", "");
  ThetaInit ti = read_theta0(cfg);
  const PriorConfig priors = read_priors(cfg);
  TrainConfig train = read_train(cfg, seed);
  const PreparedData data = read_and_prepare(cfg, seed);
  if (ranks.empty()) throw ConfigError("ranks must list at least one rank");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  const auto& s = data.splits;
  resolve_nugget(ti, s.X_train);

  manifest = manifest_header("rank-sweep", cfg);
  std::vector<SweepRow> rows;
  const fs::path p = fs::path(inv.out) / "rank_sweep.csv";
  auto os = open_output(p);
  os << "r,total_time,train_time,predict_time,w,sigma_eps2,mae,rmse,mese,sdese\n";
  for (auto r : ranks) {
    if (r < 1 || r > s.X_train.rows()) {
      throw ConfigError("rank " + std::to_string(r) + " outside [1, n_train]");
    }
    train.rank = r;
    std::vector<double> tt, tp, tot;
    std::optional<FitOutcome> o;
    for (long long k = 0; k < repeats; ++k) {
      o = fit_and_predict(s, ti.theta, priors, train);
      tt.push_back(o->train_time);
      tp.push_back(o->predict_time);
      tot.push_back(o->train_time + o->predict_time);
    }
    const auto& m = o->metrics_orig;
    SweepRow row{r, median(tot), m.mae, m.rmse, m.mese};
    rows.push_back(row);
    os << r << ',' << format_double(row.total_time) << ',' << format_double(median(tt)) << ','
       << format_double(median(tp)) << ',' << format_double(o->fit.theta_hat.w) << ','
       << format_double(o->fit.theta_hat.sigma_eps2) << ',' << format_double(m.mae) << ','
       << format_double(m.rmse) << ',' << format_double(m.mese) << ',' << format_double(m.sdese)
       << '\n';
    std::cout << "r=" << r << " time=" << format_double(row.total_time)
              << " RMSE=" << format_double(m.rmse) << '\n';
  }
  os.close();

  const fs::path pb = fs::path(inv.out) / "rank_budget.csv";
  auto ob = open_output(pb);
  ob << "T,r_max,total_time,mae,rmse,r_best,rmse_best\n";
  auto opt = [](const std::optional<SweepRow>& r, auto field) {
    return r ? format_double(static_cast<double>(field(*r))) : std::string("NA");
  };
  for (double T : budgets) {
    const auto c = choose_rank(rows, T);
    ob << format_double(T) << ',' << opt(c.r_max, [](const SweepRow& x) { return x.rank; }) << ','
       << opt(c.r_max, [](const SweepRow& x) { return x.total_time; }) << ','
       << opt(c.r_max, [](const SweepRow& x) { return x.mae; }) << ','
       << opt(c.r_max, [](const SweepRow& x) { return x.rmse; }) << ','
       << opt(c.r_best, [](const SweepRow& x) { return x.rank; }) << ','
       << opt(c.r_best, [](const SweepRow& x) { return x.rmse; }) << '\n';
  }
  manifest["data"] = {{"input", data.input}, {"n_train", s.X_train.rows()}, {"n_test", s.X_test.rows()}};
  manifest["artifacts"] = {{"sweep", p.string()}, {"budget", pb.string()}};
  return 0;
}

// ---------------------------------------------------------------------------

inline void apply_thread_cap() {
#ifdef _OPENMP
  if (const char* env = std::getenv("BNNGP_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) {
      throw ConfigError(std::string("BNNGP_THREADS must be a positive integer, got '") + env + "'");
    }
    omp_set_num_threads(static_cast<int>(n));
  }
#endif
}

inline void report_error(const char* tag, const std::string& msg) {
  std::string one_line = msg;
  std::replace(one_line.begin(), one_line.end(), '\n', ' ');
  std::cerr << "error[" << tag << "]: " << one_line << std::endl;
}

/// Writes manifest.json for commands that got far enough to build one,
/// including controlled failures.
inline void flush_manifest(const Invocation& inv, ojson& manifest, const char* status,
                           const char* tag = nullptr, const std::string& msg = {}) {
  if (manifest.is_null()) {
    if (tag == nullptr) return;
    manifest = {{"schema_version", kSchemaVersion}, {"tool", "bnngp"},
                {"tool_version", kToolVersion}, {"command", inv.command}};
  }
  manifest["status"] = status;
  if (tag != nullptr) manifest["error"] = {{"code", tag}, {"message", msg}};
  try {
    write_json(fs::path(inv.out) / "manifest.json", manifest);
  } catch (const std::exception&) {
    // output directory unusable; the error line on stderr still stands
  }
}

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Gaussian-process regression with BNN-induced mixed kernels"};
  app.require_subcommand(1);
  Invocation inv;
  const std::vector<std::string> names = {"simulate",     "fit",          "eval",
                                          "kernel-probe", "oracle-check", "rank-sweep"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", inv.config_path, "key = value config file");
    sub->add_option("--seed", inv.seed, "base seed override");
    sub->add_option("--out", inv.out, "output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_error("E_CONFIG", e.what());
    return 2;
  }
  inv.command = app.get_subcommands().front()->get_name();

  ojson manifest;
  try {
    apply_thread_cap();
    int rc = 0;
    if (inv.command == "simulate") rc = cmd_simulate(inv, manifest);
    else if (inv.command == "fit") rc = cmd_fit(inv, manifest);
    else if (inv.command == "eval") rc = cmd_eval(inv, manifest);
    else if (inv.command == "kernel-probe") rc = cmd_kernel_probe(inv, manifest);
    else if (inv.command == "oracle-check") rc = cmd_oracle_check(inv, manifest);
    else rc = cmd_rank_sweep(inv, manifest);
    flush_manifest(inv, manifest, "ok");
    return rc;
  } catch (const Error& e) {
    report_error(e.tag(), e.what());
    flush_manifest(inv, manifest, "error", e.tag(), e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    report_error("E_INPUT", e.what());
    flush_manifest(inv, manifest, "error", "E_INPUT", e.what());
    return 3;
  } catch (const std::exception& e) {
    report_error("E_INTERNAL", e.what());
    flush_manifest(inv, manifest, "error", "E_INTERNAL", e.what());
    return 1;
  }
}

}  // namespace bnngp::cli
