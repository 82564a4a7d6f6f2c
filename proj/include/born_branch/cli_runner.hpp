// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "born_branch/analytics.hpp"
#include "born_branch/diffusion.hpp"
#include "born_branch/error.hpp"
#include "born_branch/exact_tree.hpp"
#include "born_branch/model_core.hpp"
#include "born_branch/parallel.hpp"
#include "born_branch/walk_mc.hpp"
#include "json.hpp"

namespace born {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Schema

enum class FieldKind { Number, OptNumber, Integer, Bool, String, NumberList, PairList, Object, OptObject };

struct Field;
using Schema = std::vector<Field>;

struct Field {
  std::string key;
  FieldKind kind;
  json def;                  // null with `required` means the key must be present
  bool required = false;
  const Schema* sub = nullptr;
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& path, const std::string& what) {
  fail(ErrorKind::ConfigError, "key '" + path + "': " + what);
}

inline json normalize(const json& in, const Schema& schema, const std::string& prefix);

inline json check_field(const json& v, const Field& f, const std::string& path) {
  switch (f.kind) {
    case FieldKind::Number:
      if (!v.is_number()) config_error(path, "expected a number");
      return v;
    case FieldKind::OptNumber:
      if (!v.is_null() && !v.is_number()) config_error(path, "expected a number or null");
      return v;
    case FieldKind::Integer:
      if (!v.is_number_integer()) config_error(path, "expected an integer");
      return v;
    case FieldKind::Bool:
      if (!v.is_boolean()) config_error(path, "expected true or false");
      return v;
    case FieldKind::String:
      if (!v.is_string()) config_error(path, "expected a string");
      return v;
    case FieldKind::NumberList:
      if (!v.is_array()) config_error(path, "expected a list of numbers");
      for (const auto& x : v)
        if (!x.is_number()) config_error(path, "expected a list of numbers");
      return v;
    case FieldKind::PairList:
      if (!v.is_array()) config_error(path, "expected a list of index pairs");
      for (const auto& x : v)
        if (!x.is_array() || x.size() != 2 || !x[0].is_number_unsigned() || !x[1].is_number_unsigned())
          config_error(path, "expected a list of index pairs");
      return v;
    case FieldKind::Object:
      if (!v.is_object()) config_error(path, "expected an object");
      return normalize(v, *f.sub, path + ".");
    case FieldKind::OptObject:
      if (v.is_null()) return v;
      if (!v.is_object()) config_error(path, "expected an object or null");
      return normalize(v, *f.sub, path + ".");
  }
  return v;
}

/// Validated copy with defaults filled in schema order; unknown keys are errors.
inline json normalize(const json& in, const Schema& schema, const std::string& prefix) {
  if (!in.is_object()) config_error(prefix.empty() ? "<root>" : prefix.substr(0, prefix.size() - 1), "expected an object");
  for (const auto& [k, v] : in.items()) {
    bool known = false;
    for (const auto& f : schema) known = known || f.key == k;
    if (!known) config_error(prefix + k, "unknown key");
  }
  json out = json::object();
  for (const auto& f : schema) {
    const std::string path = prefix + f.key;
    if (in.contains(f.key)) {
      out[f.key] = check_field(in.at(f.key), f, path);
    } else if (f.required) {
      config_error(path, "missing required key");
    } else if ((f.kind == FieldKind::Object) && f.def.is_null()) {
      out[f.key] = normalize(json::object(), *f.sub, path + ".");
    } else {
      out[f.key] = f.def;
    }
  }
  return out;
}

}  // namespace detail

namespace schema {

inline const Schema kTree = {
    {"deltas", FieldKind::NumberList, nullptr, true},
    {"alpha", FieldKind::OptNumber, nullptr},
    {"epsilon", FieldKind::Number, 1e-6},
    {"t_max", FieldKind::Integer, 1000},
    {"phi_grid", FieldKind::NumberList, json::array({1, 2, 4, 8, 16})},
    {"pairs", FieldKind::PairList, json::array({json::array({2, 0})})},
    {"window", FieldKind::NumberList, json::array()},
    {"oracle", FieldKind::Bool, false},
    {"oracle_t", FieldKind::Integer, 12},
    {"oracle_random_specs", FieldKind::Integer, 0},
    {"memory_budget_mb", FieldKind::Integer, 3072},
};

inline const Schema kLcg = {
    {"p", FieldKind::Integer, 2305843009213693951ULL},
    {"a", FieldKind::Integer, 6364136223846793005ULL},
    {"c0", FieldKind::Integer, 1},
    {"epsilon", FieldKind::Number, 1e-6},
    {"alpha", FieldKind::OptNumber, nullptr},
    {"t", FieldKind::Integer, 20},
    {"phi0", FieldKind::Number, 1.0},
    {"mode", FieldKind::String, "sampled"},
    {"n_paths", FieldKind::Integer, 100000},
    {"n_transitions", FieldKind::Integer, 1000000},
    {"depth", FieldKind::Integer, 1000000},
    {"walk_n_paths", FieldKind::Integer, 200000},
    {"walk_t", FieldKind::Integer, 200},
    {"walk_epsilon", FieldKind::Number, 1e-3},
    {"walk_starts", FieldKind::NumberList, json::array({0.0, 1.0, 2.0, 3.0})},
};

inline const Schema kWalk = {
    {"shock", FieldKind::String, "gaussian"},
    {"deltas", FieldKind::NumberList, json::array()},
    {"alpha", FieldKind::OptNumber, nullptr},
    {"mu", FieldKind::OptNumber, nullptr},
    {"sigma", FieldKind::OptNumber, nullptr},
    {"epsilon", FieldKind::Number, 1e-8},
    {"noise_sd", FieldKind::Number, 0.0},
    {"t", FieldKind::Integer, 100},
    {"n_paths", FieldKind::Integer, 100000},
    {"starts", FieldKind::NumberList, json::array({1.0, 0.0})},
    {"compare_fixed", FieldKind::Bool, false},
    {"rare_event_guard", FieldKind::Bool, true},
};

inline const Schema kDiffusionMc = {
    {"d_grid", FieldKind::NumberList, json::array({2, 3, 5})},
    {"tau_grid", FieldKind::NumberList, json::array({5, 10, 20})},
    {"n_paths", FieldKind::Integer, 100000},
    {"dt", FieldKind::OptNumber, nullptr},
};

inline const Schema kDiffusionConditioned = {
    {"d", FieldKind::Number, 3.0},
    {"tau", FieldKind::Number, 10.0},
    {"n_paths", FieldKind::Integer, 2000000},
    {"dt", FieldKind::OptNumber, nullptr},
};

inline const Schema kDiffusionMean = {
    {"betas", FieldKind::NumberList, json::array({1.25, 2.0})},
    {"d", FieldKind::Number, 1.0},
    {"tau", FieldKind::Number, 50.0},
    {"n_particles", FieldKind::Integer, 20000},
    {"method", FieldKind::String, "fleming_viot"},
    {"dt", FieldKind::OptNumber, nullptr},
};

inline const Schema kDiffusion = {
    {"mu", FieldKind::Number, 1.0},
    {"sigma", FieldKind::Number, 1.0},
    {"log_epsilon", FieldKind::Number, -18.4},
    {"x_a", FieldKind::Number, 2.0},
    {"x_b", FieldKind::Number, 0.0},
    {"tau_grid", FieldKind::NumberList, json::array({10, 20, 50, 100, 200, 500, 1000, 2000})},
    {"ratio_tau", FieldKind::Number, 500.0},
    {"exponent_starts", FieldKind::NumberList, json::array({0.0, 1.0, 2.0, 3.0})},
    {"exponent_tau", FieldKind::Number, 1000.0},
    {"mc", FieldKind::OptObject, nullptr, false, &kDiffusionMc},
    {"conditioned", FieldKind::OptObject, nullptr, false, &kDiffusionConditioned},
    {"conditional_mean", FieldKind::OptObject, nullptr, false, &kDiffusionMean},
};

inline const Schema kEndogenous = {
    {"tilde_mu", FieldKind::Number, 1.0},
    {"sigma", FieldKind::Number, 1.0},
    {"varepsilon", FieldKind::Number, 0.2},
    {"n_particles", FieldKind::Integer, 100000},
    {"tau", FieldKind::Number, 100.0},
    {"dt", FieldKind::Number, 0.01},
    {"phi0", FieldKind::Number, 1.0},
    {"burn_in_fraction", FieldKind::Number, 0.2},
    {"record_every", FieldKind::Integer, 10},
    {"scale_factor", FieldKind::OptNumber, nullptr},
};

inline const Schema kMeasure = {
    {"deltas", FieldKind::NumberList, json::array({0.2, 0.3, 0.5})},
    {"sigma", FieldKind::Number, 0.1},
    {"epsilon", FieldKind::Number, 1e-8},
    {"tau", FieldKind::Number, 200.0},
    {"n_paths", FieldKind::Integer, 1000000},
    {"stationary_rate", FieldKind::OptNumber, nullptr},
    {"dt", FieldKind::OptNumber, nullptr},
    {"n_boot", FieldKind::Integer, 200},
    {"median_taus", FieldKind::NumberList, json::array()},
    {"median_arm", FieldKind::Integer, 0},
};

inline const Schema kDemoIntro = {
    {"n", FieldKind::Integer, 1000},
    {"p", FieldKind::Number, 0.2},
    {"lo", FieldKind::Integer, 100},
    {"hi", FieldKind::Integer, 300},
};

inline const Schema kOutput = {
    {"dir", FieldKind::String, "out"},
    {"plot", FieldKind::Bool, false},
};

inline const Schema* parameters_for(const std::string& experiment) {
  static const std::map<std::string, const Schema*> table = {
      {"tree", &kTree},         {"lcg", &kLcg},         {"walk", &kWalk},
      {"diffusion", &kDiffusion}, {"endogenous", &kEndogenous}, {"measure", &kMeasure},
      {"demo_intro", &kDemoIntro},
  };
  const auto it = table.find(experiment);
  return it == table.end() ? nullptr : it->second;
}

}  // namespace schema

struct CheckRule {
  std::string name;
  std::string estimate;
  std::optional<double> min;
  std::optional<double> max;
  std::optional<bool> equals;
  bool report = false;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 1;
  std::optional<unsigned> workers;
  json parameters;        // normalized, defaults filled
  std::vector<CheckRule> checks;
  std::string out_dir = "out";
  bool plot = false;
};

inline CheckRule parse_check(const json& j, std::size_t i) {
  const std::string path = "checks[" + std::to_string(i) + "]";
  if (!j.is_object()) detail::config_error(path, "expected an object");
  static const std::vector<std::string> keys = {"name", "estimate", "min", "max", "equals", "report"};
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) detail::config_error(path + "." + k, "unknown key");
  CheckRule r;
  if (!j.contains("name") || !j["name"].is_string()) detail::config_error(path + ".name", "expected a string");
  if (!j.contains("estimate") || !j["estimate"].is_string())
    detail::config_error(path + ".estimate", "expected a string");
  r.name = j["name"];
  r.estimate = j["estimate"];
  if (j.contains("min")) {
    if (!j["min"].is_number()) detail::config_error(path + ".min", "expected a number");
    r.min = j["min"].get<double>();
  }
  if (j.contains("max")) {
    if (!j["max"].is_number()) detail::config_error(path + ".max", "expected a number");
    r.max = j["max"].get<double>();
  }
  if (j.contains("equals")) {
    if (!j["equals"].is_boolean()) detail::config_error(path + ".equals", "expected true or false");
    r.equals = j["equals"].get<bool>();
  }
  if (j.contains("report")) {
    if (!j["report"].is_boolean()) detail::config_error(path + ".report", "expected true or false");
    r.report = j["report"].get<bool>();
  }
  return r;
}

inline json check_to_json(const CheckRule& r) {
  json j = json::object();
  j["name"] = r.name;
  j["estimate"] = r.estimate;
  if (r.min) j["min"] = *r.min;
  if (r.max) j["max"] = *r.max;
  if (r.equals) j["equals"] = *r.equals;
  if (r.report) j["report"] = true;
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) detail::config_error("<root>", "expected an object");
  static const std::vector<std::string> keys = {"experiment", "seed", "workers", "parameters", "checks", "output"};
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) detail::config_error(k, "unknown key");
  ExperimentConfig c;
  if (!j.contains("experiment") || !j["experiment"].is_string())
    detail::config_error("experiment", "expected one of tree, lcg, walk, diffusion, endogenous, measure, demo_intro");
  c.experiment = j["experiment"];
  const Schema* s = schema::parameters_for(c.experiment);
  if (!s) detail::config_error("experiment", "unknown experiment '" + c.experiment + "'");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) detail::config_error("seed", "expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("workers") && !j["workers"].is_null()) {
    if (!j["workers"].is_number_unsigned() || j["workers"].get<std::uint64_t>() == 0)
      detail::config_error("workers", "expected a positive integer");
    c.workers = j["workers"].get<unsigned>();
  }
  c.parameters = detail::normalize(j.contains("parameters") ? j["parameters"] : json::object(), *s, "parameters.");
  if (j.contains("checks")) {
    if (!j["checks"].is_array()) detail::config_error("checks", "expected a list");
    for (std::size_t i = 0; i < j["checks"].size(); ++i) c.checks.push_back(parse_check(j["checks"][i], i));
  }
  const json out = detail::normalize(j.contains("output") ? j["output"] : json::object(), schema::kOutput, "output.");
  c.out_dir = out["dir"];
  c.plot = out["plot"];
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json j = json::object();
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  j["workers"] = c.workers ? json(*c.workers) : json(nullptr);
  j["parameters"] = c.parameters;
  j["checks"] = json::array();
  for (const auto& r : c.checks) j["checks"].push_back(check_to_json(r));
  j["output"] = {{"dir", c.out_dir}, {"plot", c.plot}};
  return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ConfigError, "config is not valid JSON: " + std::string(e.what()));
  }
  return config_from_json(j);
}

/// git blob id: SHA-1 of "blob <len>\0" followed by the content.
inline std::string git_blob_sha1(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    fail(ErrorKind::ConfigError, "SHA-1 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

/// Hash over everything that determines the numbers: experiment, seed, parameters, checks.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j.erase("workers");
  j.erase("output");
  return git_blob_sha1(j.dump());
}

// ---------------------------------------------------------------------------
// Results

struct Series {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::string plot_x, plot_y;  // columns drawn by --plot
};

struct RunOutput {
  json estimates = json::object();
  json targets = json::object();
  Series series;
};

inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(17) << x;
  return s.str();
}

inline std::string fmt(const mpz_class& x) { return x.get_str(); }
inline std::string fmt(std::uint64_t x) { return std::to_string(x); }
inline std::string fmt(std::int64_t x) { return std::to_string(x); }

/// Non-finite values become null so results.json stays valid JSON.
inline json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

namespace detail {

inline std::vector<double> numbers(const json& j) { return j.get<std::vector<double>>(); }

inline RunOutput run_tree(const json& p, unsigned workers) {
  RunOutput out;
  const BranchingSpec spec(numbers(p["deltas"]));
  const auto unit = alpha_for_unit_beta(spec);
  const double alpha = p["alpha"].is_null() ? unit.alpha : p["alpha"].get<double>();
  const auto sched = make_exogenous(p["epsilon"].get<double>(), alpha);
  const std::int64_t t_max = p["t_max"];
  const auto grid = numbers(p["phi_grid"]);
  require(!grid.empty(), ErrorKind::ConfigError, "key 'parameters.phi_grid': must not be empty");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& pr : p["pairs"]) {
    pairs.emplace_back(pr[0].get<std::size_t>(), pr[1].get<std::size_t>());
    if (pairs.back().first >= grid.size() || pairs.back().second >= grid.size())
      fail(ErrorKind::ConfigError, "key 'parameters.pairs': index outside phi_grid");
  }
  DpOptions opt;
  opt.memory_budget_bytes = static_cast<std::size_t>(p["memory_budget_mb"].get<std::int64_t>()) << 20;
  const auto series = count_survivors_dp(spec, sched, t_max, grid, workers, opt);
  const auto rows = born_ratio_scan(series, grid, pairs);

  out.estimates["alpha"] = alpha;
  out.estimates["alpha_unit_beta"] = unit.alpha;
  out.estimates["feasible"] = unit.feasible;
  out.estimates["infeasible_alpha_above_max_delta"] = unit.alpha >= spec.max_delta();
  if (!spec.degenerate()) {
    const auto bp = basic_params(spec, alpha);
    out.estimates["mu"] = bp.mu;
    out.estimates["sigma"] = bp.sigma;
    out.targets["beta"] = bp.beta;
  }
  out.estimates["beta_hat"] = num(rows.back().beta_hat);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string key = "ratio_" + std::to_string(pairs[i].first) + "_" + std::to_string(pairs[i].second);
    out.estimates[key] = num(rows.back().ratios[i]);
    out.targets[key] = grid[pairs[i].first] / grid[pairs[i].second];
  }
  std::optional<std::int64_t> extinct;
  for (const auto& r : series) {
    bool all_zero = true;
    for (const auto& c : r.counts) all_zero = all_zero && c == 0;
    if (all_zero) {
      extinct = r.t;
      break;
    }
  }
  out.estimates["extinction_t"] = extinct ? json(*extinct) : json(nullptr);
  out.estimates["extinct"] = extinct.has_value();
  for (std::size_t i = 0; i < grid.size(); ++i)
    out.estimates["log10_N_phi" + std::to_string(i)] = num(log10_mpz(series.back().counts[i]));

  const auto window = numbers(p["window"]);
  if (window.size() == 2) {
    double bmin = INFINITY, bmax = -INFINITY, rmin = INFINITY, rmax = -INFINITY;
    for (const auto& r : rows) {
      if (r.t < window[0] || r.t > window[1]) continue;
      bmin = std::min(bmin, r.beta_hat);
      bmax = std::max(bmax, r.beta_hat);
      if (!r.ratios.empty()) {
        rmin = std::min(rmin, r.ratios[0]);
        rmax = std::max(rmax, r.ratios[0]);
      }
    }
    out.estimates["beta_hat_window_min"] = num(bmin);
    out.estimates["beta_hat_window_max"] = num(bmax);
    out.estimates["ratio_window_min"] = num(rmin);
    out.estimates["ratio_window_max"] = num(rmax);
  } else if (!window.empty()) {
    fail(ErrorKind::ConfigError, "key 'parameters.window': expected [t_from, t_to]");
  }

  if (p["oracle"].get<bool>()) {
    const std::int64_t t_or = std::min<std::int64_t>(t_max, p["oracle_t"].get<std::int64_t>());
    bool equal = true;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto brute = enumerate_brute(spec, sched, t_or, grid[i]);
      for (std::int64_t t = 0; t <= t_or; ++t)
        equal = equal && series[static_cast<std::size_t>(t)].counts[i] ==
                             mpz_class(static_cast<unsigned long>(brute.per_depth[static_cast<std::size_t>(t)]));
    }
    const std::int64_t n_random = p["oracle_random_specs"];
    std::uint64_t mismatches = 0;
    for (std::int64_t s = 0; s < n_random; ++s) {
      auto rng = rng_stream(0x7265ULL, static_cast<std::uint64_t>(s));
      const std::size_t K = 2 + rng.below(3);
      std::vector<double> w(K);
      for (auto& x : w) x = 0.05 + rng.uniform();
      const auto rs = BranchingSpec::normalized(w);
      const auto rsched = make_exogenous(std::exp(-3.0 * rng.uniform()), 0.2 + 0.6 * rng.uniform());
      const std::int64_t t_hi = 12;
      const auto dp = count_survivors_dp_single(rs, rsched, t_hi, 1.0);
      const auto brute = enumerate_brute(rs, rsched, t_hi, 1.0);
      for (std::int64_t t = 0; t <= t_hi; ++t)
        mismatches += dp[static_cast<std::size_t>(t)] !=
                      mpz_class(static_cast<unsigned long>(brute.per_depth[static_cast<std::size_t>(t)]));
    }
    out.estimates["dp_equals_bruteforce"] = equal && mismatches == 0;
    out.estimates["oracle_t"] = t_or;
    out.estimates["oracle_random_specs"] = n_random;
  }

  auto& s = out.series;
  s.columns = {"t", "log10_total_paths"};
  for (std::size_t i = 0; i < grid.size(); ++i) s.columns.push_back("N_phi" + std::to_string(i));
  for (const auto& [a, b] : pairs) s.columns.push_back("ratio_" + std::to_string(a) + "_" + std::to_string(b));
  s.columns.push_back("beta_hat");
  for (std::size_t t = 0; t < series.size(); ++t) {
    std::vector<std::string> row{fmt(series[t].t), fmt(series[t].log10_total_paths)};
    for (const auto& c : series[t].counts) row.push_back(fmt(c));
    for (double r : rows[t].ratios) row.push_back(fmt(r));
    row.push_back(fmt(rows[t].beta_hat));
    s.rows.push_back(std::move(row));
  }
  s.plot_x = "t";
  s.plot_y = pairs.empty() ? "beta_hat" : s.columns[2 + grid.size()];
  return out;
}

inline RunOutput run_lcg(const json& p, std::uint64_t seed, unsigned workers) {
  RunOutput out;
  const auto spec = make_lcg_spec(p["p"].get<std::uint64_t>(), p["a"].get<std::uint64_t>(), p["c0"].get<std::uint64_t>());
  const double alpha = p["alpha"].is_null() ? std::exp(-11.0 / 12.0) : p["alpha"].get<double>();
  const auto sched = make_exogenous(p["epsilon"].get<double>(), alpha);

  const auto deltas = lcg_sample_deltas(spec, p["n_transitions"].get<std::uint64_t>(), p["depth"].get<std::int64_t>(),
                                        derive_seed(seed, 1));
  std::vector<double> logs;
  logs.reserve(deltas.size());
  for (double d : deltas) logs.push_back(d > 0.0 ? std::log(d) : -INFINITY);
  const double ks = ks_distance_unsorted(deltas, [](double x) { return std::clamp(x, 0.0, 1.0); });
  const double m = -mean(logs), v = variance(logs);
  out.estimates["ks_uniform"] = ks;
  out.estimates["ks_critical_99"] = kolmogorov_quantile(0.99) / std::sqrt(static_cast<double>(deltas.size()));
  out.estimates["mean_neg_log_delta"] = m;
  out.estimates["var_log_delta"] = v;
  out.estimates["multiplier_below_modulus"] = spec.a < spec.p;
  out.targets["mean_neg_log_delta"] = 1.0;
  out.targets["var_log_delta"] = 1.0 / 12.0;
  const double mu = std::log(alpha) + m;
  const double sigma = std::sqrt(v);
  out.estimates["beta_from_moments"] = mu / v;
  out.targets["beta"] = 1.0;

  const auto mode = p["mode"].get<std::string>();
  if (mode != "exact" && mode != "sampled") fail(ErrorKind::ConfigError, "key 'parameters.mode': expected exact or sampled");
  const auto tree = lcg_tree(spec, sched, p["t"].get<std::int64_t>(), p["phi0"].get<double>(),
                             mode == "exact" ? LcgMode::Exact : LcgMode::Sampled, p["n_paths"].get<std::uint64_t>(),
                             derive_seed(seed, 2), workers);
  out.estimates["tree_p_hat"] = tree.p_hat;
  out.estimates["tree_se"] = tree.se;
  out.estimates["tree_survivors"] = tree.n_survivors;

  auto wp = make_walk_params(mu, sigma, LogUniformShock{});
  const auto starts = numbers(p["walk_starts"]);
  EstimateOptions eo;
  eo.workers = workers;
  const auto fit = fit_walk_beta(wp, starts, make_exogenous(p["walk_epsilon"].get<double>(), 0.5),
                                 p["walk_t"].get<std::int64_t>(), p["walk_n_paths"].get<std::uint64_t>(),
                                 derive_seed(seed, 3), eo);
  out.estimates["walk_beta_hat"] = fit.fit.slope;
  out.estimates["walk_beta_se"] = fit.fit.stderr_slope;
  out.estimates["walk_mu"] = mu;
  out.estimates["walk_sigma"] = sigma;

  auto& s = out.series;
  s.columns = {"x0", "p_hat", "se", "log_p_hat"};
  for (std::size_t i = 0; i < fit.xs.size(); ++i)
    s.rows.push_back({fmt(fit.xs[i]), fmt(fit.estimates[i].p_hat), fmt(fit.estimates[i].se), fmt(fit.log_p[i])});
  s.plot_x = "x0";
  s.plot_y = "log_p_hat";
  return out;
}

inline WalkParams walk_params_from_json(const json& p) {
  const auto shock = p["shock"].get<std::string>();
  if (shock == "finite") {
    const BranchingSpec spec(numbers(p["deltas"]));
    const double alpha = p["alpha"].is_null() ? alpha_for_unit_beta(spec).alpha : p["alpha"].get<double>();
    return walk_params_from_spec(spec, alpha);
  }
  if (p["mu"].is_null()) fail(ErrorKind::ConfigError, "key 'parameters.mu': required for shock '" + shock + "'");
  if (p["sigma"].is_null()) fail(ErrorKind::ConfigError, "key 'parameters.sigma': required for shock '" + shock + "'");
  if (shock == "gaussian") return make_walk_params(p["mu"], p["sigma"], GaussianShock{});
  if (shock == "log_uniform") return make_walk_params(p["mu"], p["sigma"], LogUniformShock{});
  fail(ErrorKind::ConfigError, "key 'parameters.shock': expected finite, gaussian or log_uniform");
}

inline RunOutput run_walk(const json& p, std::uint64_t seed, unsigned workers) {
  RunOutput out;
  const auto wp = walk_params_from_json(p);
  const double eps = p["epsilon"], noise = p["noise_sd"];
  const ThresholdSchedule barrier =
      noise > 0.0 ? ThresholdSchedule(make_random_barrier(eps, noise)) : ThresholdSchedule(make_exogenous(eps, 0.5));
  const std::int64_t t = p["t"];
  const std::uint64_t n = p["n_paths"];
  const auto starts = numbers(p["starts"]);
  if (starts.size() < 2) fail(ErrorKind::ConfigError, "key 'parameters.starts': need at least two start points");
  EstimateOptions eo;
  eo.workers = workers;
  eo.rare_event_guard = p["rare_event_guard"];
  out.estimates["mu"] = wp.mu;
  out.estimates["sigma"] = wp.sigma;
  out.targets["beta"] = wp.beta();

  std::vector<SurvivalEstimate> est;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    est.push_back(estimate_survival(wp, starts[i], barrier, t, n, seed, eo));
    out.estimates["p_" + std::to_string(i)] = est.back().p_hat;
    out.estimates["se_" + std::to_string(i)] = est.back().se;
  }
  const auto ratio = survival_ratio(wp, starts[0], starts[1], barrier, t, n, seed, eo);
  out.estimates["ratio"] = ratio.ratio;
  out.estimates["ratio_se"] = ratio.se;
  out.targets["ratio"] = ratio.theory;
  out.estimates["ratio_z_theory"] = ratio.se > 0 ? std::abs(ratio.ratio - ratio.theory) / ratio.se : INFINITY;
  bool all_positive = true;
  for (const auto& e : est) all_positive = all_positive && e.n_survivors > 0;
  if (all_positive) {
    std::vector<double> lp;
    for (const auto& e : est) lp.push_back(std::log(e.p_hat));
    const auto fit = fit_power_law(starts, lp);
    out.estimates["beta_hat"] = fit.slope;
    out.estimates["beta_hat_se"] = fit.stderr_slope;
  }
  if (p["compare_fixed"].get<bool>() && noise > 0.0) {
    const auto fixed = survival_ratio(wp, starts[0], starts[1], make_exogenous(eps, 0.5), t, n,
                                      derive_seed(seed, 77), eo);
    out.estimates["fixed_ratio"] = fixed.ratio;
    out.estimates["fixed_ratio_se"] = fixed.se;
    out.estimates["random_vs_fixed_z"] = std::abs(ratio.ratio - fixed.ratio) / std::hypot(ratio.se, fixed.se);
  }

  auto& s = out.series;
  s.columns = {"t", "epsilon", "x0", "p_hat", "se", "theory_ratio"};
  for (std::size_t i = 0; i < starts.size(); ++i)
    s.rows.push_back({fmt(t), fmt(eps), fmt(starts[i]), fmt(est[i].p_hat), fmt(est[i].se),
                      fmt(std::exp(wp.beta() * (starts[i] - starts[1])))});
  s.plot_x = "x0";
  s.plot_y = "p_hat";
  return out;
}

inline RunOutput run_diffusion(const json& p, std::uint64_t seed, unsigned workers) {
  RunOutput out;
  const double mu = p["mu"], sigma = p["sigma"], log_eps = p["log_epsilon"];
  const double eps = std::exp(log_eps);
  const auto params = DiffusionParams::from_drift(mu, sigma);
  const double x_a = p["x_a"], x_b = p["x_b"];
  const auto grid = numbers(p["tau_grid"]);
  const auto rows = theorem3_ratio_check(params, x_a, x_b, eps, grid);
  const double target = std::exp(params.beta() * (x_a - x_b));
  const double ratio_tau = p["ratio_tau"];
  const auto at = theorem3_ratio_check(params, x_a, x_b, eps, std::vector<double>{ratio_tau});
  out.estimates["ratio_at_tau"] = at[0].ratio;
  out.estimates["ratio_rel_error"] = at[0].ratio / target - 1.0;
  out.targets["ratio"] = target;
  const auto starts = numbers(p["exponent_starts"]);
  const auto fit = closed_form_exponent(params, starts, eps, p["exponent_tau"].get<double>());
  out.estimates["exponent"] = fit.slope;
  out.estimates["exponent_rel_error"] = fit.slope / params.beta() - 1.0;
  out.targets["exponent"] = params.beta();

  if (!p["mc"].is_null()) {
    const auto& m = p["mc"];
    const double dt = m["dt"].is_null() ? default_dt(mu, sigma) : m["dt"].get<double>();
    double z_max = 0.0;
    std::uint64_t cell = 0;
    for (double d : numbers(m["d_grid"])) {
      for (double tau : numbers(m["tau_grid"])) {
        const auto r = run_diffusion_paths(mu, sigma, d, tau, dt, m["n_paths"].get<std::uint64_t>(),
                                           derive_seed(seed, 100 + cell++), workers);
        const double q = survival_closed_form(mu, sigma, d, tau);
        const double se = std::sqrt(q * (1 - q) / static_cast<double>(r.estimate.n_paths));
        z_max = std::max(z_max, std::abs(r.estimate.p_hat - q) / se);
      }
    }
    out.estimates["mc_z_max"] = z_max;
  }
  if (!p["conditioned"].is_null()) {
    const auto& c = p["conditioned"];
    const double dt = c["dt"].is_null() ? 0.0 : c["dt"].get<double>();
    const auto cs = conditioned_sample(params, log_eps + c["d"].get<double>(), eps, c["tau"].get<double>(),
                                       c["n_paths"].get<std::uint64_t>(), derive_seed(seed, 200), dt, workers);
    out.estimates["conditioned_survivors"] = cs.sample.size();
    out.estimates["conditioned_mean"] = cs.mean;
    out.estimates["fitted_rate"] = cs.fitted_rate;
    out.estimates["ks_best_fit"] = cs.ks_best_fit;
    out.estimates["ks_best_fit_shifted"] = cs.ks_best_fit_shifted;
    out.estimates["ks_rate_mu"] = cs.ks_rate_mu;
    out.estimates["ks_rate_2mu"] = cs.ks_rate_2mu;
    out.estimates["ks_gamma2"] = cs.ks_gamma2;
    out.estimates["memoryless_pass"] = cs.memoryless_pass;
    out.targets["rate_mu"] = cs.rate_mu;
    out.targets["rate_2mu"] = cs.rate_2mu;
  }
  if (!p["conditional_mean"].is_null()) {
    const auto& c = p["conditional_mean"];
    const auto method = c["method"].get<std::string>();
    if (method != "paths" && method != "fleming_viot")
      fail(ErrorKind::ConfigError, "key 'parameters.conditional_mean.method': expected paths or fleming_viot");
    std::uint64_t i = 0;
    for (double beta : numbers(c["betas"])) {
      const auto cp = DiffusionParams::from_drift(beta * sigma * sigma, sigma);
      const double dt = c["dt"].is_null() ? 0.0 : c["dt"].get<double>();
      const auto r = conditional_mean_ratio(
          cp, log_eps + c["d"].get<double>(), eps, c["tau"].get<double>(), c["n_particles"].get<std::uint64_t>(),
          derive_seed(seed, 300 + i), method == "paths" ? ConditionalMeanMethod::Paths : ConditionalMeanMethod::FlemingViot,
          dt, workers);
      const std::string key = "conditional_mean_" + std::to_string(i++);
      out.estimates[key] = r.estimate;
      out.estimates[key + "_se"] = r.se;
      out.estimates[key + "_rel_error"] = r.estimate / r.target - 1.0;
      out.targets[key] = r.target;
    }
  }

  auto& s = out.series;
  s.columns = {"tau", "ratio", "target"};
  for (const auto& r : rows) s.rows.push_back({fmt(r.tau), fmt(r.ratio), fmt(r.target)});
  s.plot_x = "tau";
  s.plot_y = "ratio";
  return out;
}

inline RunOutput run_endogenous(const json& p, std::uint64_t seed, unsigned workers) {
  RunOutput out;
  PopulationOptions opt;
  opt.burn_in_fraction = p["burn_in_fraction"];
  opt.record_every = static_cast<std::size_t>(std::max<std::int64_t>(1, p["record_every"].get<std::int64_t>()));
  opt.workers = workers;
  const double mu = p["tilde_mu"], sigma = p["sigma"], ve = p["varepsilon"];
  const std::size_t n = p["n_particles"];
  const double tau = p["tau"], dt = p["dt"], phi0 = p["phi0"];
  const auto pop = endogenous_population(mu, sigma, ve, n, tau, dt, phi0, seed, opt);
  out.estimates["slope"] = pop.fit.slope;
  out.estimates["slope_se"] = pop.fit.stderr_slope;
  out.estimates["intercept"] = pop.fit.intercept;
  out.estimates["resample_count"] = pop.resample_count;
  out.estimates["slope_error"] = pop.fit.slope - pop.theory_log_alpha;
  out.targets["log_alpha"] = pop.theory_log_alpha;
  out.targets["log_c0"] = pop.theory_log_c0;
  out.targets["beta"] = endogenous_beta(ve);
  if (!p["scale_factor"].is_null()) {
    const double f = p["scale_factor"];
    const auto scaled = endogenous_population(mu, sigma, ve, n, tau, dt, phi0 * f, seed, opt);
    double shift = 0.0;
    for (std::size_t i = 0; i < pop.trajectory.size(); ++i)
      shift = std::max(shift, std::abs(scaled.trajectory[i].log_xi - pop.trajectory[i].log_xi - std::log(f)));
    out.estimates["scaled_slope"] = scaled.fit.slope;
    out.estimates["scale_slope_change"] = std::abs(scaled.fit.slope - pop.fit.slope);
    out.estimates["scale_shift_max_error"] = shift;
    out.estimates["scale_survivor_ids_equal"] = scaled.survivor_ids == pop.survivor_ids;
  }
  auto& s = out.series;
  s.columns = {"tau", "log_xi", "n_survivors", "mean_Z"};
  for (const auto& r : pop.trajectory) s.rows.push_back({fmt(r.tau), fmt(r.log_xi), fmt(r.n_survivors), fmt(r.mean_z)});
  s.plot_x = "tau";
  s.plot_y = "log_xi";
  return out;
}

inline RunOutput run_measure(const json& p, std::uint64_t seed, unsigned workers) {
  RunOutput out;
  MeasurementOptions opt;
  opt.stationary_rate = p["stationary_rate"].is_null() ? 0.0 : p["stationary_rate"].get<double>();
  opt.dt = p["dt"].is_null() ? 0.0 : p["dt"].get<double>();
  opt.n_boot = p["n_boot"];
  opt.workers = workers;
  const auto deltas = numbers(p["deltas"]);
  const double sigma = p["sigma"], eps = p["epsilon"];
  const std::uint64_t n = p["n_paths"];
  const auto setup = make_measurement_setup(deltas, sigma, eps, p["tau"].get<double>());
  const auto res = measurement_pipeline(setup, n, seed, opt);
  out.estimates["n_survivors"] = res.n_survivors;
  out.estimates["stationary_rate"] = res.stationary_rate;
  out.estimates["dt"] = res.dt;
  double z_max = 0.0;
  for (std::size_t k = 0; k < res.arms.size(); ++k) {
    const auto& a = res.arms[k];
    const std::string i = std::to_string(k);
    out.estimates["freq_" + i] = a.frequency;
    out.estimates["freq_se_" + i] = a.frequency_se;
    const double z = a.frequency_se > 0 ? std::abs(a.frequency - a.delta) / a.frequency_se : 0.0;
    out.estimates["freq_z_" + i] = z;
    z_max = std::max(z_max, z);
    out.targets["freq_" + i] = a.delta;
    out.estimates["bayes_" + i] = a.bayes_weight;
    out.estimates["median_x0_" + i] = a.median_x0;
    out.estimates["median_ci_lo_" + i] = a.median_ci.lo;
    out.estimates["median_ci_hi_" + i] = a.median_ci.hi;
    out.estimates["median_exact_" + i] = a.median_exact;
    out.estimates["median_error_" + i] = a.median_x0 - a.target;
    out.targets["median_x0_" + i] = a.target;
  }
  out.estimates["freq_z_max"] = z_max;

  const auto taus = numbers(p["median_taus"]);
  const std::size_t arm = p["median_arm"];
  if (arm >= deltas.size()) fail(ErrorKind::ConfigError, "key 'parameters.median_arm': outside deltas");
  if (taus.size() >= 2) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < taus.size(); ++i) {
      const auto r = taus[i] == setup.tau ? res
                                         : measurement_pipeline(make_measurement_setup(deltas, sigma, eps, taus[i]), n,
                                                                derive_seed(seed, 500 + i), opt);
      xs.push_back(std::log(taus[i] * deltas[arm]));
      ys.push_back(r.arms[arm].median_x0);
      out.estimates["median_tau_" + std::to_string(i)] = r.arms[arm].median_x0;
    }
    const auto fit = fit_power_law(xs, ys);
    out.estimates["median_slope"] = fit.slope;
    out.estimates["median_slope_se"] = fit.stderr_slope;
    out.targets["median_slope"] = 1.0;
  }

  auto& s = out.series;
  s.columns = {"k",         "delta",          "n_assigned", "n_survivors", "frequency", "frequency_se",
               "bayes_weight", "median_x0", "median_lo",  "median_hi",   "median_target"};
  for (std::size_t k = 0; k < res.arms.size(); ++k) {
    const auto& a = res.arms[k];
    s.rows.push_back({fmt(static_cast<std::uint64_t>(k + 1)), fmt(a.delta), fmt(a.n_assigned), fmt(a.n_survivors),
                      fmt(a.frequency), fmt(a.frequency_se), fmt(a.bayes_weight), fmt(a.median_x0),
                      fmt(a.median_ci.lo), fmt(a.median_ci.hi), fmt(a.target)});
  }
  s.plot_x = "delta";
  s.plot_y = "frequency";
  return out;
}

inline RunOutput run_demo_intro(const json& p) {
  RunOutput out;
  const std::int64_t n = p["n"], lo = p["lo"], hi = p["hi"];
  const double prob = p["p"];
  const auto lp = binomial_interval_logprob(n, prob, lo, hi);
  const auto frac = binomial_count_fraction(static_cast<unsigned long>(n), static_cast<unsigned long>(lo),
                                            static_cast<unsigned long>(hi));
  out.estimates["outside_prob"] = std::exp(lp.log_outside);
  out.estimates["log_outside_prob"] = lp.log_outside;
  out.estimates["log_inside_prob"] = lp.log_inside;
  out.estimates["count_fraction_log10"] = frac.log10_value;
  out.estimates["count_fraction_below_1e-37"] = fraction_less_than_pow10(frac, -37);
  out.targets["outside_prob"] = 2.2e-14;
  out.targets["count_fraction_log10"] = -37.0;
  auto& s = out.series;
  s.columns = {"k", "log10_pmf", "log10_count_fraction"};
  const double log_p = std::log(prob), log_q = std::log1p(-prob);
  for (std::int64_t k = 0; k <= n; ++k) {
    const double lpmf = log_binomial_pmf(n, k, log_p, log_q) / std::log(10.0);
    const double lc = binomial_count_fraction(static_cast<unsigned long>(n), static_cast<unsigned long>(k),
                                              static_cast<unsigned long>(k))
                          .log10_value;
    s.rows.push_back({fmt(k), fmt(lpmf), fmt(lc)});
  }
  s.plot_x = "k";
  s.plot_y = "log10_pmf";
  return out;
}

}  // namespace detail

inline RunOutput run_experiment(const ExperimentConfig& c, unsigned workers) {
  const json& p = c.parameters;
  if (c.experiment == "tree") return detail::run_tree(p, workers);
  if (c.experiment == "lcg") return detail::run_lcg(p, c.seed, workers);
  if (c.experiment == "walk") return detail::run_walk(p, c.seed, workers);
  if (c.experiment == "diffusion") return detail::run_diffusion(p, c.seed, workers);
  if (c.experiment == "endogenous") return detail::run_endogenous(p, c.seed, workers);
  if (c.experiment == "measure") return detail::run_measure(p, c.seed, workers);
  if (c.experiment == "demo_intro") return detail::run_demo_intro(p);
  fail(ErrorKind::ConfigError, "key 'experiment': unknown experiment '" + c.experiment + "'");
}

/// pass | fail | report for one rule; a missing estimate is an error naming the key.
inline std::string evaluate_check(const CheckRule& r, const json& estimates) {
  if (!estimates.contains(r.estimate))
    fail(ErrorKind::ConfigError, "key 'checks': estimate '" + r.estimate + "' is not produced by this experiment");
  if (r.report) return "report";
  const json& v = estimates[r.estimate];
  if (r.equals) return v.is_boolean() && v.get<bool>() == *r.equals ? "pass" : "fail";
  if (!v.is_number()) return "fail";
  const double x = v.get<double>();
  if (r.min && !(x >= *r.min)) return "fail";
  if (r.max && !(x <= *r.max)) return "fail";
  return "pass";
}

inline void write_csv(const std::filesystem::path& path, const Series& s) {
  std::ofstream f(path);
  for (std::size_t i = 0; i < s.columns.size(); ++i) f << (i ? "," : "") << s.columns[i];
  f << '\n';
  for (const auto& row : s.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
    f << '\n';
  }
}

/// Single unstyled polyline of column y against column x; non-finite points are skipped.
inline void write_svg(const std::filesystem::path& path, const Series& s, const std::string& title) {
  const auto col = [&](const std::string& name) {
    const auto it = std::find(s.columns.begin(), s.columns.end(), name);
    return static_cast<std::size_t>(it - s.columns.begin());
  };
  const std::size_t ix = col(s.plot_x), iy = col(s.plot_y);
  std::vector<std::pair<double, double>> pts;
  if (ix < s.columns.size() && iy < s.columns.size()) {
    for (const auto& row : s.rows) {
      const double x = std::strtod(row[ix].c_str(), nullptr), y = std::strtod(row[iy].c_str(), nullptr);
      if (std::isfinite(x) && std::isfinite(y)) pts.emplace_back(x, y);
    }
  }
  const double W = 640, H = 400, M = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (auto [x, y] : pts) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  std::ofstream f(path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  f << "<text x=\"" << M << "\" y=\"20\">" << title << ": " << s.plot_y << " vs " << s.plot_x << "</text>\n";
  f << "<rect x=\"" << M << "\" y=\"" << M << "\" width=\"" << W - 2 * M << "\" height=\"" << H - 2 * M
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  f << "<polyline fill=\"none\" stroke=\"black\" points=\"";
  for (auto [x, y] : pts)
    f << M + (x - x0) / (x1 - x0) * (W - 2 * M) << ',' << H - M - (y - y0) / (y1 - y0) * (H - 2 * M) << ' ';
  f << "\"/>\n";
  f << "<text x=\"" << M << "\" y=\"" << H - 10 << "\">" << s.plot_x << " [" << fmt(x0) << ", " << fmt(x1) << "]; "
    << s.plot_y << " [" << fmt(y0) << ", " << fmt(y1) << "]</text>\n";
  f << "</svg>\n";
}

struct RunStatus {
  int exit_code = 0;
  json results;
};

/// Runs one experiment and writes results.json, series.csv and optionally plot.svg.
inline RunStatus run(const ExperimentConfig& c, unsigned workers) {
  const auto start = std::chrono::steady_clock::now();
  RunOutput out = run_experiment(c, workers);
  json checks = json::object();
  bool failed = false;
  for (const auto& r : c.checks) {
    const std::string v = evaluate_check(r, out.estimates);
    failed = failed || v == "fail";
    checks[r.name] = v;
  }
  const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json res = json::object();
  res["experiment"] = c.experiment;
  res["config_hash"] = config_hash(c);
  res["seed"] = c.seed;
  res["estimates"] = out.estimates;
  res["targets"] = out.targets;
  res["checks"] = checks;
  res["runtime_seconds"] = runtime;
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  res["timestamp"] = stamp;

  std::filesystem::create_directories(c.out_dir);
  std::ofstream(std::filesystem::path(c.out_dir) / "results.json") << res.dump(2) << '\n';
  if (!out.series.columns.empty()) write_csv(std::filesystem::path(c.out_dir) / "series.csv", out.series);
  if (c.plot) write_svg(std::filesystem::path(c.out_dir) / "plot.svg", out.series, c.experiment);
  return {failed ? 2 : 0, std::move(res)};
}

}  // namespace born
