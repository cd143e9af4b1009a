#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "semiprice/env.hpp"
#include "semiprice/estimation.hpp"
#include "semiprice/harness.hpp"
#include "semiprice/kernels.hpp"
#include "semiprice/policies.hpp"
#include "semiprice/rng.hpp"

using namespace semiprice;
namespace fs = std::filesystem;

namespace {

const std::vector<long> kCheckpoints = {1500, 2000, 3100, 4000, 5000, 6300};

env::MarketEnv make_env(int noise_m, const std::string& covariates) {
  env::NoiseModel noise = env::NoiseModel::trunc_poly(noise_m);
  env::CovariateProcess cov =
      covariates == "iid_dependent"
          ? env::CovariateProcess::iid_dependent(noise_m, 3)
      : covariates == "var_mixing"
          ? env::CovariateProcess::var_mixing(noise_m, 3, 500)
          : env::CovariateProcess::iid_independent(noise_m, 3);
  return env::MarketEnv(env::default_theta0(3), std::move(noise),
                        std::move(cov), 6.0);
}

harness::ReplicationSettings settings_for(long T, int R,
                                          const std::vector<long>& cps) {
  harness::ReplicationSettings s;
  s.T = T;
  s.checkpoints = cps;
  s.R = R;
  s.base_seed = 1;
  s.workers = 0;
  return s;
}

double run_slope(const env::MarketEnv& environment,
                 const harness::PolicyFactory& factory) {
  const harness::PolicyRun run =
      harness::replicate(environment, factory, settings_for(6300, 10,
                                                            kCheckpoints));
  return run.slope;
}

harness::PolicyFactory semi_param_factory(int m) {
  harness::PolicyFactory f;
  f.label = "semi_param_m" + std::to_string(m);
  f.benchmark_slope = (2.0 * m + 1.0) / (4.0 * m - 1.0);
  f.loglog_correction = 2.0;
  policies::SemiParamConfig cfg;
  cfg.order = m;
  f.make = [cfg](RngStream s) {
    return std::make_unique<policies::SemiParamPolicy>(cfg, std::move(s));
  };
  return f;
}

//! Uniform-price exploration sample of size n from the environment.
estimation::ExplorationBatch sample_batch(const env::MarketEnv& environment,
                                          long n, std::uint64_t seed) {
  RngStream cov_stream = make_stream(seed, "covariates");
  RngStream noise_stream = make_stream(seed, "noise");
  RngStream price_stream = make_stream(seed, "policy");
  env::CovariateSampler sampler(environment.covariates(), cov_stream);
  estimation::ExplorationBatch batch;
  batch.reserve(static_cast<int>(n), static_cast<int>(environment.theta0().size()));
  const double cap = environment.price_cap();
  for (long t = 0; t < n; ++t) {
    const Eigen::VectorXd xt = env::augment(sampler.next());
    const double p = price_stream.uniform(0.0, cap);
    batch.append(xt, p, environment.step(xt, p, noise_stream).y);
  }
  return batch;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool report(int criterion, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", criterion, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  return pass;
}

// --- criteria -------------------------------------------------------------

bool criterion_slopes() {
  bool ok = true;
  std::ostringstream d;
  for (int m : {2, 4, 6}) {
    const double bound = (2.0 * m + 1.0) / (4.0 * m - 1.0) + 0.15;
    const double slope = run_slope(make_env(m, "iid_independent"),
                                   semi_param_factory(m));
    ok = ok && slope <= bound;
    d << "slope(m=" << m << ")=" << std::fixed << slope << "<=" << bound
      << "  ";
  }
  return report(1, ok, d.str());
}

bool criterion_dependent_covariates() {
  bool ok = true;
  std::ostringstream d;
  for (const char* kind : {"iid_dependent", "var_mixing"}) {
    const double bound = 5.0 / 7.0 + 0.20;
    const double slope = run_slope(make_env(2, kind), semi_param_factory(2));
    ok = ok && slope <= bound;
    d << "slope(" << kind << ")=" << std::fixed << slope << "<=" << bound
      << "  ";
  }
  return report(2, ok, d.str());
}

bool criterion_lipschitz() {
  env::MarketEnv environment(env::default_theta0(3), env::NoiseModel::uniform(),
                             env::CovariateProcess::iid_independent(2, 3), 6.0);
  harness::PolicyFactory f;
  f.label = "lipschitz";
  f.benchmark_slope = 0.75;
  f.loglog_correction = 1.0;  // single log T correction
  f.make = [](RngStream s) {
    return std::make_unique<policies::LipschitzPolicy>(
        policies::LipschitzConfig{}, std::move(s));
  };
  const double slope = run_slope(environment, f);
  std::ostringstream d;
  d << "slope=" << std::fixed << slope << "<=0.9";
  return report(3, slope <= 0.9, d.str());
}

bool criterion_parametric_rate() {
  const env::MarketEnv environment = make_env(2, "iid_independent");
  const Eigen::VectorXd theta0 = environment.theta0();
  std::vector<double> err_small, err_large;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const estimation::ExplorationBatch big =
        sample_batch(environment, 16000, seed);
    estimation::ExplorationBatch small;
    small.reserve(1000, static_cast<int>(theta0.size()));
    for (long i = 0; i < 1000; ++i)
      small.append(big.features().row(i).transpose(), big.prices()(i),
                   static_cast<int>(big.outcomes()(i)));
    err_small.push_back(
        (estimation::fit_theta_ls(small, 6.0).theta_hat - theta0).norm());
    err_large.push_back(
        (estimation::fit_theta_ls(big, 6.0).theta_hat - theta0).norm());
  }
  const double ratio = median(err_large) / median(err_small);
  std::ostringstream d;
  d << "median error ratio n=16000/n=1000 = " << std::fixed << ratio
    << " in [0.18, 0.45]";
  return report(4, ratio >= 0.18 && ratio <= 0.45, d.str());
}

bool criterion_kernel_moments() {
  bool ok = true;
  double worst = 0.0;
  for (int m : {2, 4, 6}) {
    const std::vector<double> mom =
        kernels::check_moments(kernels::KernelSpec::order_m(m), m - 1);
    for (int j = 0; j < m; ++j) {
      const double err = std::abs(mom[static_cast<std::size_t>(j)] -
                                  (j == 0 ? 1.0 : 0.0));
      worst = std::max(worst, err);
      ok = ok && err <= 1e-8;
    }
  }
  const std::vector<double> ft =
      kernels::check_moments(kernels::KernelSpec::flat_top(1.0), 0);
  const double ft_err = std::abs(ft[0] - 1.0);
  ok = ok && ft_err <= 1e-4;
  std::ostringstream d;
  d << std::scientific << "worst order-m moment error " << worst
    << " <= 1e-8, flat-top mass error " << ft_err << " <= 1e-4";
  return report(5, ok, d.str());
}

bool criterion_link_recovery() {
  const env::MarketEnv environment = make_env(2, "iid_independent");
  const Eigen::VectorXd theta0 = environment.theta0();
  const int dim = static_cast<int>(theta0.size()) - 1;
  // central 80% of the feasible valuation-mean range
  const double spread = theta0.head(dim).cwiseAbs().sum();
  const double center = theta0(dim);
  const double u_lo = center - 0.8 * spread;
  const double u_hi = center + 0.8 * spread;
  const long n = 20000;
  const double b = 3.0 * std::pow(static_cast<double>(n), -0.2);
  int passes = 0;
  double worst_sup = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const estimation::ExplorationBatch batch =
        sample_batch(environment, n, seed);
    const estimation::LinkEstimate link(
        batch, estimation::fit_theta_ls(batch, 6.0),
        kernels::KernelSpec::order_m(2), b, 6.0, estimation::LinkOptions{});
    double sup = 0.0;
    for (int i = 0; i <= 40; ++i) {
      const double u = u_lo + (u_hi - u_lo) * i / 40.0;
      const double g_hat = link.price_for_value(u).price;
      const double g_true = environment.noise().pricing_value(u);
      sup = std::max(sup, std::abs(g_hat - g_true));
    }
    worst_sup = std::max(worst_sup, sup);
    if (sup <= 0.1) ++passes;
  }
  std::ostringstream d;
  d << "sup|g_hat-g|<=0.1 on central 80% for " << passes
    << "/10 seeds (need >=8), worst sup " << std::fixed << worst_sup;
  return report(6, passes >= 8, d.str());
}

bool criterion_virtual_value_identity() {
  bool ok = true;
  double worst = 0.0;
  std::vector<env::NoiseModel> models;
  models.push_back(env::NoiseModel::trunc_poly(2));
  models.push_back(env::NoiseModel::trunc_poly(4));
  models.push_back(env::NoiseModel::trunc_poly(6));
  models.push_back(env::NoiseModel::uniform());
  for (const env::NoiseModel& noise : models) {
    const double hw = noise.half_width();
    const double u_min = -0.8 * hw;
    const double phi_min = noise.virtual_value(-hw * 0.999);
    const double u_max = std::min(6.0, -phi_min * 0.98);
    for (int i = 0; i < 100; ++i) {
      const double u = u_min + (u_max - u_min) * i / 99.0;
      const double g = noise.pricing_value(u);
      const double err = std::abs(noise.virtual_value(g - u) + u);
      worst = std::max(worst, err);
      ok = ok && err <= 1e-6;
    }
  }
  std::ostringstream d;
  d << std::scientific << "max |phi(g(u)-u)+u| = " << worst
    << " <= 1e-6 over 4 noise models x 100 u";
  return report(7, ok, d.str());
}

bool criterion_baseline_dominance() {
  const env::MarketEnv environment = make_env(2, "iid_independent");
  const harness::ReplicationSettings settings =
      settings_for(12000, 10, {12000});

  harness::PolicyFactory adaptive;
  adaptive.label = "adaptive";
  adaptive.make = [](RngStream s) {
    return std::make_unique<policies::AdaptivePolicy>(
        policies::AdaptiveConfig{}, std::move(s));
  };
  harness::PolicyFactory rmlp2;
  rmlp2.label = "rmlp2";
  rmlp2.make = [](RngStream s) {
    policies::Rmlp2Config cfg;
    cfg.sigma = 0.25;
    return std::make_unique<policies::Rmlp2Policy>(cfg, std::move(s));
  };
  harness::PolicyFactory bandit;
  bandit.label = "kl_bandit";
  bandit.make = [](RngStream) {
    policies::KlBanditConfig cfg;
    cfg.horizon_hint = 12000;
    return std::make_unique<policies::KlBanditPolicy>(cfg);
  };

  const harness::PolicyRun run_a =
      harness::replicate(environment, adaptive, settings);
  const harness::PolicyRun run_r =
      harness::replicate(environment, rmlp2, settings);
  const harness::PolicyRun run_b =
      harness::replicate(environment, bandit, settings);
  int wins = 0;
  for (int i = 0; i < 10; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const double a = run_a.traces[iu].steps.back().exp_regret_cum;
    const double r = run_r.traces[iu].steps.back().exp_regret_cum;
    const double b = run_b.traces[iu].steps.back().exp_regret_cum;
    if (a < r && a < b) ++wins;
  }
  std::ostringstream d;
  d << "adaptive below rmlp2(sigma=0.25) and kl_bandit in " << wins
    << "/10 paired seeds at T=12000 (need >=8)";
  return report(8, wins >= 8, d.str());
}

bool criterion_micro_oracles() {
  bool ok = true;
  std::ostringstream d;
  const kernels::KernelSpec k2 = kernels::KernelSpec::order_m(2);

  // intercept-only batch: residuals equal the stored prices
  const auto batch_from = [](const std::vector<double>& w,
                             const std::vector<double>& y) {
    const long n = static_cast<long>(w.size());
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 1);
    Eigen::VectorXd p(n), yy(n);
    for (long i = 0; i < n; ++i) {
      p(i) = w[static_cast<std::size_t>(i)];
      yy(i) = y[static_cast<std::size_t>(i)];
    }
    return estimation::ExplorationBatch(x, p, yy);
  };
  const Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);

  {
    // three-point fixture: survival regression at u = 0.25, bandwidth 1
    const std::vector<double> w = {-0.5, 0.0, 0.5}, y = {1.0, 1.0, 0.0};
    const double u = 0.25, b = 1.0;
    double hs = 0.0, fsum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double kv = k2.value((w[i] - u) / b);
      hs += kv * y[i];
      fsum += kv;
    }
    const double brute = (fsum - hs) / fsum;
    const double lib = estimation::nw_regress(batch_from(w, y), theta, k2, b,
                                              u, estimation::NwOptions{});
    const double err = std::abs(lib - brute);
    ok = ok && err <= 1e-12;
    d << std::scientific << "nw_regress err " << err << "  ";
  }
  {
    // two-point fixture: derivative at u = 0 by the quotient rule
    const std::vector<double> w = {-0.25, 0.25}, y = {1.0, 0.0};
    const double u = 0.0, b = 1.0;
    double hs = 0.0, fsum = 0.0, h1 = 0.0, f1 = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double s = (w[i] - u) / b;
      const double kv = k2.value(s);
      const double kd = k2.deriv(s) * (-1.0 / b);
      hs += kv * y[i];
      fsum += kv;
      h1 += kd * y[i];
      f1 += kd;
    }
    const double brute = -(h1 * fsum - hs * f1) / (fsum * fsum);
    const double lib = estimation::nw_derivative(batch_from(w, y), theta, k2,
                                                 b, u, estimation::NwOptions{});
    const double err = std::abs(lib - brute);
    ok = ok && err <= 1e-12;
    d << "nw_derivative err " << err << "  ";
  }
  {
    // cross-validation argmin against exhaustive enumeration
    const int n = 24;
    std::vector<double> x(n), y(n);
    RngStream rng(77001ull);
    for (int i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(i)] = rng.uniform(0.0, 3.0);
      y[static_cast<std::size_t>(i)] =
          rng.uniform() < 0.25 + 0.2 * x[static_cast<std::size_t>(i)] ? 1.0
                                                                      : 0.0;
    }
    const std::vector<int> ms = {0, 2};
    const std::vector<double> hs = {0.6, 1.2, 2.4};
    const estimation::CvSelection sel = estimation::cross_validate_m(x, y, ms,
                                                                     hs);
    int best_m = 0;
    double best_h = 0.0, best_loss = 0.0;
    bool have = false, table_ok = true;
    for (int m : ms) {
      const kernels::KernelSpec km =
          kernels::KernelSpec::order_m(m == 0 ? 2 : m);
      for (double h : hs) {
        double loss = 0.0;
        bool valid = true;
        for (int i = 0; i < n && valid; ++i) {
          double num = 0.0, den = 0.0;
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double kv = km.value((x[static_cast<std::size_t>(j)] -
                                        x[static_cast<std::size_t>(i)]) /
                                       h);
            num += kv * y[static_cast<std::size_t>(j)];
            den += kv;
          }
          // same validity rule as the library: normalized density estimate
          if (den / ((n - 1.0) * h) <= 1e-8) {
            valid = false;
            break;
          }
          const double e = y[static_cast<std::size_t>(i)] - num / den;
          loss += e * e;
        }
        loss /= n;
        for (const estimation::CvEntry& cell : sel.table)
          if (cell.m == m && cell.h == h) {
            table_ok = table_ok && cell.valid == valid &&
                       (!valid || std::abs(cell.loss - loss) <= 1e-12);
          }
        if (valid && (!have || loss < best_loss)) {
          have = true;
          best_loss = loss;
          best_m = m;
          best_h = h;
        }
      }
    }
    const bool argmin_ok =
        have && sel.m_hat == best_m && sel.h_hat == best_h;
    ok = ok && argmin_ok && table_ok;
    d << std::defaultfloat << "cv argmin (m=" << sel.m_hat << ",h=" << sel.h_hat
      << ") "
      << (argmin_ok && table_ok ? "matches" : "DIFFERS FROM")
      << " exhaustive table";
  }
  return report(9, ok, d.str());
}

bool criterion_determinism() {
  const char* cli = std::getenv("SEMIPRICE_CLI");
  if (!cli)
    return report(10, false, "SEMIPRICE_CLI not set; cannot spawn binary");
  const fs::path dir = fs::temp_directory_path() / "semiprice_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const nlohmann::json cfg = {
      {"env",
       {{"price_cap", 6.0},
        {"noise", {{"family", "trunc_poly"}, {"m", 2}}},
        {"covariates", {{"kind", "iid_independent"}, {"dim", 3}}}}},
      {"horizon", 600},
      {"checkpoints", {300, 600}},
      {"replications", 2},
      {"seed", 7},
      {"trace", "full"},
      {"policies", {{{"kind", "semi_param"}}, {{"kind", "rmlp2"}}}}};
  const fs::path cfg_path = dir / "run.json";
  {
    std::ofstream f(cfg_path);
    f << cfg.dump(2);
  }

  const auto run_once = [&](const std::string& name, int threads) -> bool {
    std::ostringstream cmd;
    cmd << "SEMIPRICE_THREADS=" << threads << " '" << cli
        << "' simulate --config '" << cfg_path.string() << "' --out '"
        << (dir / name).string() << "' > /dev/null 2>&1";
    const int status = std::system(cmd.str().c_str());
    return WIFEXITED(status) && WEXITSTATUS(status) == 0;
  };
  const auto slurp = [](const fs::path& p) -> std::string {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
  };

  bool ok = run_once("a", 1) && run_once("b", 1) && run_once("c", 2);
  std::string mismatch;
  for (const char* f :
       {"trace.csv", "summary.csv", "summary.json", "resolved_config.json"}) {
    const std::string a = slurp(dir / "a" / f);
    if (a.empty() || a != slurp(dir / "b" / f) || a != slurp(dir / "c" / f)) {
      ok = false;
      mismatch += std::string(f) + " ";
    }
  }
  return report(10, ok,
                ok ? "repeat runs and worker counts 1 vs 2 byte-identical"
                   : "differs or failed: " + mismatch);
}

}  // namespace

int main() {
  int failed = 0;
  failed += !criterion_slopes();
  failed += !criterion_dependent_covariates();
  failed += !criterion_lipschitz();
  failed += !criterion_parametric_rate();
  failed += !criterion_kernel_moments();
  failed += !criterion_link_recovery();
  failed += !criterion_virtual_value_identity();
  failed += !criterion_baseline_dominance();
  failed += !criterion_micro_oracles();
  failed += !criterion_determinism();
  std::printf("acceptance: %d/10 criteria passed\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}
