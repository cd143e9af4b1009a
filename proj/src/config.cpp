#include "semiprice/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "semiprice/policies.hpp"

namespace semiprice::config {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

void check_keys(const json& obj, const std::string& where,
                const std::set<std::string>& required,
                const std::set<std::string>& optional) {
  if (!obj.is_object()) fail(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    if (!required.count(item.key()) && !optional.count(item.key()))
      fail("unknown key \"" + item.key() + "\" in " + where);
  }
  for (const std::string& k : required)
    if (!obj.contains(k))
      fail("missing required key \"" + k + "\" in " + where);
}

double as_double(const json& obj, const std::string& where,
                 const std::string& key) {
  const json& v = obj.at(key);
  if (!v.is_number()) fail("key \"" + key + "\" in " + where + " must be a number");
  return v.get<double>();
}

long as_long(const json& obj, const std::string& where,
             const std::string& key) {
  const json& v = obj.at(key);
  if (!v.is_number_integer())
    fail("key \"" + key + "\" in " + where + " must be an integer");
  return v.get<long>();
}

std::uint64_t as_u64(const json& obj, const std::string& where,
                     const std::string& key) {
  const json& v = obj.at(key);
  if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)))
    fail("key \"" + key + "\" in " + where + " must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::string as_string(const json& obj, const std::string& where,
                      const std::string& key) {
  const json& v = obj.at(key);
  if (!v.is_string()) fail("key \"" + key + "\" in " + where + " must be a string");
  return v.get<std::string>();
}

double opt_double(const json& obj, const std::string& where,
                  const std::string& key, double def) {
  return obj.contains(key) ? as_double(obj, where, key) : def;
}

long opt_long(const json& obj, const std::string& where, const std::string& key,
              long def) {
  return obj.contains(key) ? as_long(obj, where, key) : def;
}

std::string opt_string(const json& obj, const std::string& where,
                       const std::string& key, const std::string& def) {
  return obj.contains(key) ? as_string(obj, where, key) : def;
}

env::NoiseModel build_noise(const json& spec, json& resolved) {
  const std::string where = "env.noise";
  if (!spec.is_object() || !spec.contains("family"))
    fail("missing required key \"family\" in " + where);
  const std::string family = as_string(spec, where, "family");
  if (family == "trunc_poly") {
    check_keys(spec, where, {"family"}, {"m"});
    const long m = opt_long(spec, where, "m", 2);
    if (m < 2 || m % 2 != 0)
      fail("env.noise.m must be an even integer >= 2");
    resolved = {{"family", "trunc_poly"}, {"m", m}};
    return env::NoiseModel::trunc_poly(static_cast<int>(m));
  }
  if (family == "uniform") {
    check_keys(spec, where, {"family"}, {});
    resolved = {{"family", "uniform"}};
    return env::NoiseModel::uniform();
  }
  fail("env.noise.family must be \"trunc_poly\" or \"uniform\"");
}

env::CovariateProcess build_covariates(const json& spec, int noise_m,
                                       json& resolved) {
  const std::string where = "env.covariates";
  if (!spec.is_object() || !spec.contains("kind"))
    fail("missing required key \"kind\" in " + where);
  const std::string kind = as_string(spec, where, "kind");
  const bool var = kind == "var_mixing";
  if (kind != "iid_independent" && kind != "iid_dependent" && !var)
    fail("env.covariates.kind must be one of iid_independent, iid_dependent, "
         "var_mixing");
  std::set<std::string> optional = {"dim", "smoothness"};
  if (var) optional.insert("burn_in");
  check_keys(spec, where, {"kind"}, optional);

  const long dim = opt_long(spec, where, "dim", 3);
  if (dim < 1) fail("env.covariates.dim must be >= 1");
  const long smooth = opt_long(spec, where, "smoothness", noise_m);
  if (smooth < 0) fail("env.covariates.smoothness must be >= 0");

  resolved = {{"kind", kind}, {"dim", dim}, {"smoothness", smooth}};
  if (kind == "iid_independent")
    return env::CovariateProcess::iid_independent(static_cast<int>(smooth),
                                                  static_cast<int>(dim));
  if (kind == "iid_dependent")
    return env::CovariateProcess::iid_dependent(static_cast<int>(smooth),
                                                static_cast<int>(dim));
  const long burn = opt_long(spec, where, "burn_in", 500);
  if (burn < 0) fail("env.covariates.burn_in must be >= 0");
  resolved["burn_in"] = burn;
  return env::CovariateProcess::var_mixing(static_cast<int>(smooth),
                                           static_cast<int>(dim),
                                           static_cast<int>(burn));
}

Eigen::VectorXd build_theta0(const json& envspec, int dim, json& resolved) {
  if (!envspec.contains("theta0")) {
    const Eigen::VectorXd t = env::default_theta0(dim);
    json beta = json::array();
    for (int i = 0; i < dim; ++i) beta.push_back(t(i));
    resolved = {{"beta", beta}, {"alpha", t(dim)}};
    return t;
  }
  const json& spec = envspec.at("theta0");
  check_keys(spec, "env.theta0", {"beta", "alpha"}, {});
  const json& beta = spec.at("beta");
  if (!beta.is_array() || static_cast<int>(beta.size()) != dim)
    fail("env.theta0.beta must be an array of exactly dim numbers");
  Eigen::VectorXd t(dim + 1);
  for (int i = 0; i < dim; ++i) {
    if (!beta.at(i).is_number())
      fail("env.theta0.beta entries must be numbers");
    t(i) = beta.at(i).get<double>();
  }
  t(dim) = as_double(spec, "env.theta0", "alpha");
  json rbeta = json::array();
  for (int i = 0; i < dim; ++i) rbeta.push_back(t(i));
  resolved = {{"beta", rbeta}, {"alpha", t(dim)}};
  return t;
}

struct PolicyBuild {
  json resolved;
  harness::PolicyFactory factory;
};

double semi_param_benchmark(int m) {
  return (2.0 * m + 1.0) / (4.0 * m - 1.0);
}

PolicyBuild build_policy(const json& spec, std::size_t index, double price_cap,
                         int dim, long horizon, const env::MarketEnv& environment) {
  std::ostringstream wh;
  wh << "policies[" << index << "]";
  const std::string where = wh.str();
  if (!spec.is_object() || !spec.contains("kind"))
    fail("missing required key \"kind\" in " + where);
  const std::string kind = as_string(spec, where, "kind");
  const std::string label = opt_string(spec, where, "label", kind);
  if (label.empty()) fail(where + ".label must be nonempty");
  if (label.find(',') != std::string::npos ||
      label.find('\n') != std::string::npos)
    fail(where + ".label must not contain commas or newlines");

  PolicyBuild out;
  out.factory.label = label;
  json& r = out.resolved;
  r = {{"kind", kind}, {"label", label}};

  auto finish_loglog = [&](double def) {
    const double c = opt_double(spec, where, "loglog_correction", def);
    if (!(c >= 0.0)) fail(where + ".loglog_correction must be >= 0");
    r["loglog_correction"] = c;
    out.factory.loglog_correction = c;
  };

  if (kind == "semi_param" || kind == "semi_param_supersmooth") {
    const bool super = kind == "semi_param_supersmooth";
    std::set<std::string> optional = {"label", "l0", "loglog_correction",
                                      "invert_lo", "invert_hi"};
    if (super) {
      optional.insert({"c_kappa", "alpha", "d_phi"});
    } else {
      optional.insert({"m", "bandwidth_const"});
    }
    check_keys(spec, where, {"kind"}, optional);

    policies::SemiParamConfig cfg;
    cfg.price_cap = price_cap;
    cfg.dim = dim;
    cfg.super_smooth = super;
    cfg.l0 = opt_long(spec, where, "l0", 200);
    if (cfg.l0 < 2) fail(where + ".l0 must be >= 2");
    cfg.invert_lo = opt_double(spec, where, "invert_lo", -1.0);
    cfg.invert_hi = opt_double(spec, where, "invert_hi", 1.0);
    if (!(cfg.invert_lo < cfg.invert_hi))
      fail(where + ": invert_lo must be below invert_hi");
    r["l0"] = cfg.l0;
    r["invert_lo"] = cfg.invert_lo;
    r["invert_hi"] = cfg.invert_hi;
    if (super) {
      cfg.c_kappa = opt_double(spec, where, "c_kappa", 1.0);
      cfg.alpha = opt_double(spec, where, "alpha", 1.0);
      cfg.d_phi = opt_double(spec, where, "d_phi", 1.0);
      if (!(cfg.c_kappa > 0.0 && cfg.alpha > 0.0 && cfg.d_phi > 0.0))
        fail(where + ": c_kappa, alpha, d_phi must be > 0");
      r["c_kappa"] = cfg.c_kappa;
      r["alpha"] = cfg.alpha;
      r["d_phi"] = cfg.d_phi;
      out.factory.benchmark_slope = 0.5;
    } else {
      const long m = opt_long(spec, where, "m", 2);
      if (m < 2 || m % 2 != 0)
        fail(where + ".m must be an even integer >= 2");
      cfg.order = static_cast<int>(m);
      cfg.bandwidth_const = opt_double(spec, where, "bandwidth_const", 3.0);
      if (!(cfg.bandwidth_const > 0.0))
        fail(where + ".bandwidth_const must be > 0");
      r["m"] = m;
      r["bandwidth_const"] = cfg.bandwidth_const;
      out.factory.benchmark_slope = semi_param_benchmark(cfg.order);
    }
    finish_loglog(2.0);
    out.factory.make = [cfg](RngStream s) {
      return std::make_unique<policies::SemiParamPolicy>(cfg, std::move(s));
    };
    return out;
  }

  if (kind == "lipschitz") {
    check_keys(spec, where, {"kind"},
               {"label", "l0", "bandwidth_const", "grid_points",
                "loglog_correction"});
    policies::LipschitzConfig cfg;
    cfg.price_cap = price_cap;
    cfg.dim = dim;
    cfg.l0 = opt_long(spec, where, "l0", 200);
    if (cfg.l0 < 2) fail(where + ".l0 must be >= 2");
    cfg.bandwidth_const = opt_double(spec, where, "bandwidth_const", 3.0);
    if (!(cfg.bandwidth_const > 0.0))
      fail(where + ".bandwidth_const must be > 0");
    const long g = opt_long(spec, where, "grid_points", 1024);
    if (g < 2) fail(where + ".grid_points must be >= 2");
    cfg.grid_points = static_cast<int>(g);
    r["l0"] = cfg.l0;
    r["bandwidth_const"] = cfg.bandwidth_const;
    r["grid_points"] = g;
    out.factory.benchmark_slope = 0.75;
    finish_loglog(1.0);
    out.factory.make = [cfg](RngStream s) {
      return std::make_unique<policies::LipschitzPolicy>(cfg, std::move(s));
    };
    return out;
  }

  if (kind == "adaptive") {
    check_keys(spec, where, {"kind"},
               {"label", "l0", "bandwidth_const", "m_candidates",
                "cv_bandwidths", "invert_lo", "invert_hi", "grid_points",
                "loglog_correction"});
    policies::AdaptiveConfig cfg;
    cfg.price_cap = price_cap;
    cfg.dim = dim;
    cfg.l0 = opt_long(spec, where, "l0", 200);
    if (cfg.l0 < 2) fail(where + ".l0 must be >= 2");
    cfg.bandwidth_const = opt_double(spec, where, "bandwidth_const", 3.0);
    if (!(cfg.bandwidth_const > 0.0))
      fail(where + ".bandwidth_const must be > 0");
    cfg.invert_lo = opt_double(spec, where, "invert_lo", -1.0);
    cfg.invert_hi = opt_double(spec, where, "invert_hi", 1.0);
    if (!(cfg.invert_lo < cfg.invert_hi))
      fail(where + ": invert_lo must be below invert_hi");
    const long g = opt_long(spec, where, "grid_points", 1024);
    if (g < 2) fail(where + ".grid_points must be >= 2");
    cfg.grid_points = static_cast<int>(g);
    if (spec.contains("m_candidates")) {
      const json& mc = spec.at("m_candidates");
      if (!mc.is_array() || mc.empty())
        fail(where + ".m_candidates must be a nonempty array");
      cfg.m_candidates.clear();
      for (const json& v : mc) {
        if (!v.is_number_integer())
          fail(where + ".m_candidates entries must be integers");
        const long m = v.get<long>();
        if (m != 0 && (m < 2 || m % 2 != 0))
          fail(where + ".m_candidates entries must be 0 or even integers >= 2");
        cfg.m_candidates.push_back(static_cast<int>(m));
      }
    }
    if (spec.contains("cv_bandwidths")) {
      const json& bw = spec.at("cv_bandwidths");
      if (!bw.is_array() || bw.size() < 3)
        fail(where + ".cv_bandwidths must be an array of at least 3 values");
      cfg.bandwidth_grid.clear();
      for (const json& v : bw) {
        if (!v.is_number() || !(v.get<double>() > 0.0))
          fail(where + ".cv_bandwidths entries must be positive numbers");
        cfg.bandwidth_grid.push_back(v.get<double>());
      }
    } else {
      cfg.bandwidth_grid = policies::default_cv_bandwidths();
    }
    r["l0"] = cfg.l0;
    r["bandwidth_const"] = cfg.bandwidth_const;
    r["m_candidates"] = cfg.m_candidates;
    r["cv_bandwidths"] = cfg.bandwidth_grid;
    r["invert_lo"] = cfg.invert_lo;
    r["invert_hi"] = cfg.invert_hi;
    r["grid_points"] = g;
    finish_loglog(2.0);
    out.factory.make = [cfg](RngStream s) {
      return std::make_unique<policies::AdaptivePolicy>(cfg, std::move(s));
    };
    return out;
  }

  if (kind == "rmlp2") {
    check_keys(spec, where, {"kind"},
               {"label", "l0", "sigma", "loglog_correction"});
    policies::Rmlp2Config cfg;
    cfg.price_cap = price_cap;
    cfg.dim = dim;
    cfg.l0 = opt_long(spec, where, "l0", 200);
    if (cfg.l0 < 2) fail(where + ".l0 must be >= 2");
    cfg.sigma = opt_double(spec, where, "sigma", 0.25);
    if (!(cfg.sigma > 0.0)) fail(where + ".sigma must be > 0");
    r["l0"] = cfg.l0;
    r["sigma"] = cfg.sigma;
    finish_loglog(2.0);
    out.factory.make = [cfg](RngStream s) {
      return std::make_unique<policies::Rmlp2Policy>(cfg, std::move(s));
    };
    return out;
  }

  if (kind == "kl_bandit") {
    check_keys(spec, where, {"kind"}, {"label", "loglog_correction"});
    policies::KlBanditConfig cfg;
    cfg.price_cap = price_cap;
    cfg.horizon_hint = horizon;
    policies::KlBanditPolicy::arm_count(cfg.horizon_hint);  // validate now
    finish_loglog(2.0);
    out.factory.make = [cfg](RngStream) {
      return std::make_unique<policies::KlBanditPolicy>(cfg);
    };
    return out;
  }

  if (kind == "oracle") {
    check_keys(spec, where, {"kind"}, {"label", "loglog_correction"});
    finish_loglog(2.0);
    out.factory.make = [environment](RngStream) {
      return std::make_unique<policies::OraclePolicy>(environment);
    };
    return out;
  }

  fail("unknown policy kind \"" + kind + "\" in " + where);
}

const std::vector<long> kDefaultCheckpoints = {1500, 2000, 3100,
                                               4000, 5000, 6300};

}  // namespace

ResolvedRun resolve_run_config(const json& doc, const Overrides& ov) {
  if (!doc.is_object()) fail("run configuration must be a JSON object");
  check_keys(doc, "configuration", {"env", "horizon", "policies"},
             {"checkpoints", "replications", "seed", "trace"});

  long horizon = as_long(doc, "configuration", "horizon");
  if (ov.horizon) horizon = *ov.horizon;
  if (horizon < 1) fail("horizon must be >= 1");

  long reps = opt_long(doc, "configuration", "replications", 10);
  if (ov.replications) reps = *ov.replications;
  if (reps < 1) fail("replications must be >= 1");

  std::uint64_t seed = doc.contains("seed")
                           ? as_u64(doc, "configuration", "seed")
                           : std::uint64_t{1};
  if (ov.seed) seed = *ov.seed;

  const std::string trace =
      opt_string(doc, "configuration", "trace", "checkpoints");
  if (trace != "checkpoints" && trace != "full")
    fail("trace must be \"checkpoints\" or \"full\"");

  std::vector<long> checkpoints;
  if (doc.contains("checkpoints")) {
    const json& cs = doc.at("checkpoints");
    if (!cs.is_array() || cs.empty())
      fail("checkpoints must be a nonempty array of integers");
    long prev = 0;
    for (const json& v : cs) {
      if (!v.is_number_integer())
        fail("checkpoints entries must be integers");
      const long c = v.get<long>();
      if (c <= prev) fail("checkpoints must be strictly increasing");
      if (c < 1 || c > horizon)
        fail("checkpoints must lie in [1, horizon]");
      checkpoints.push_back(c);
      prev = c;
    }
  } else {
    for (long c : kDefaultCheckpoints)
      if (c <= horizon) checkpoints.push_back(c);
    if (checkpoints.empty()) checkpoints.push_back(horizon);
  }

  // Environment.
  if (!doc.at("env").is_object()) fail("env must be a JSON object");
  const json& envspec = doc.at("env");
  check_keys(envspec, "env", {"noise", "covariates", "price_cap"}, {"theta0"});
  const double price_cap = as_double(envspec, "env", "price_cap");
  if (!(price_cap > 0.0)) fail("env.price_cap must be > 0");

  json noise_r, cov_r, theta_r;
  env::NoiseModel noise = build_noise(envspec.at("noise"), noise_r);
  const int noise_m =
      noise.family() == env::NoiseFamily::TruncPoly ? noise.order() : 2;
  env::CovariateProcess covariates =
      build_covariates(envspec.at("covariates"), noise_m, cov_r);
  const int dim = covariates.dim();
  Eigen::VectorXd theta0;
  try {
    theta0 = build_theta0(envspec, dim, theta_r);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    fail(std::string("env.theta0: ") + e.what());
  }

  std::optional<env::MarketEnv> built;
  try {
    built.emplace(theta0, std::move(noise), std::move(covariates), price_cap);
  } catch (const std::exception& e) {
    fail(std::string("env: ") + e.what());
  }
  ResolvedRun run{json(), std::move(*built), {}, {}, trace == "full"};

  // Policies.
  const json& pspec = doc.at("policies");
  if (!pspec.is_array() || pspec.empty())
    fail("policies must be a nonempty array");
  std::vector<PolicyBuild> builds;
  std::set<std::string> labels;
  for (std::size_t i = 0; i < pspec.size(); ++i) {
    PolicyBuild b;
    try {
      b = build_policy(pspec.at(i), i, price_cap, dim, horizon,
                       run.environment);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "policies[" << i << "]: " << e.what();
      fail(os.str());
    }
    if (!labels.insert(b.factory.label).second)
      fail("duplicate policy label \"" + b.factory.label +
           "\"; give the entries distinct labels");
    builds.push_back(std::move(b));
  }

  if (!ov.policies.empty()) {
    for (const std::string& want : ov.policies) {
      if (!labels.count(want)) {
        std::string known;
        for (const PolicyBuild& b : builds) {
          if (!known.empty()) known += ", ";
          known += b.factory.label;
        }
        fail("--policies selects unknown label \"" + want + "\" (have: " +
             known + ")");
      }
    }
    std::vector<PolicyBuild> kept;
    for (PolicyBuild& b : builds) {
      if (std::find(ov.policies.begin(), ov.policies.end(),
                    b.factory.label) != ov.policies.end())
        kept.push_back(std::move(b));
    }
    builds = std::move(kept);
  }

  json rpolicies = json::array();
  for (PolicyBuild& b : builds) {
    rpolicies.push_back(std::move(b.resolved));
    run.policies.push_back(std::move(b.factory));
  }

  run.settings.T = horizon;
  run.settings.checkpoints = checkpoints;
  run.settings.R = static_cast<int>(reps);
  run.settings.base_seed = seed;
  run.settings.workers = 0;

  run.resolved = json{{"horizon", horizon},
                      {"checkpoints", checkpoints},
                      {"replications", reps},
                      {"seed", seed},
                      {"trace", trace},
                      {"env",
                       {{"price_cap", price_cap},
                        {"noise", noise_r},
                        {"covariates", cov_r},
                        {"theta0", theta_r}}},
                      {"policies", rpolicies}};
  return run;
}

ResolvedRun load_run_config(const std::string& path, const Overrides& ov) {
  std::ifstream f(path);
  if (!f) fail("cannot open configuration file " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    fail("configuration parse error in " + path + ": " + e.what());
  }
  return resolve_run_config(doc, ov);
}

json summary_to_json(const std::vector<harness::PolicyRun>& runs,
                     const std::vector<long>& checkpoints) {
  auto number_or_null = [](double v) {
    return std::isfinite(v) ? json(v) : json(nullptr);
  };
  json out;
  out["checkpoints"] = checkpoints;
  json policies = json::array();
  std::vector<const harness::PolicyRun*> sorted;
  for (const harness::PolicyRun& r : runs) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const harness::PolicyRun* a,
                      const harness::PolicyRun* b) { return a->label < b->label; });
  for (const harness::PolicyRun* run : sorted) {
    json p;
    p["label"] = run->label;
    p["benchmark_slope"] = run->benchmark_slope > 0.0
                               ? json(run->benchmark_slope)
                               : json(nullptr);
    p["loglog_correction"] = run->loglog_correction;
    p["slope"] = number_or_null(run->slope);
    json points = json::array();
    for (const harness::CheckpointStat& s : run->stats) {
      points.push_back({{"T", s.T},
                        {"mean", s.mean},
                        {"stderr", s.stderr_mean},
                        {"reg_tilde", number_or_null(s.reg_tilde)}});
    }
    p["points"] = std::move(points);
    policies.push_back(std::move(p));
  }
  out["policies"] = std::move(policies);
  return out;
}

}  // namespace semiprice::config
