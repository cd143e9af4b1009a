#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

#include "semiprice/env.hpp"
#include "semiprice/estimation.hpp"
#include "semiprice/policies.hpp"
#include "semiprice/rng.hpp"
#include "semiprice/rootfind.hpp"

using namespace semiprice;
using policies::AdaptiveConfig;
using policies::AdaptivePolicy;
using policies::EpisodeSchedule;
using policies::KlBanditConfig;
using policies::KlBanditPolicy;
using policies::LipschitzConfig;
using policies::LipschitzPolicy;
using policies::OraclePolicy;
using policies::PriceDecision;
using policies::Provenance;
using policies::Rmlp2Config;
using policies::Rmlp2Policy;
using policies::ScheduleMode;
using policies::SemiParamConfig;
using policies::SemiParamPolicy;

namespace {

long finite_smooth_a(long lk, int d, int m) {
  const double e = (2.0 * m + 1.0) / (4.0 * m - 1.0);
  const long a =
      static_cast<long>(std::ceil(std::pow(static_cast<double>(lk) * d, e)));
  return std::min(a, lk);
}

env::MarketEnv tp2_env() {
  return env::MarketEnv(env::default_theta0(3), env::NoiseModel::trunc_poly(2),
                        env::CovariateProcess::iid_independent(2, 3), 6.0);
}

// Drives a policy against an environment for T steps, collecting decisions.
std::vector<PriceDecision> drive(policies::PricingPolicy& policy,
                                 const env::MarketEnv& environment, long T,
                                 std::uint64_t seed) {
  RngStream cov_stream = make_stream(seed, "covariates");
  RngStream noise_stream = make_stream(seed, "noise");
  env::CovariateSampler sampler(environment.covariates(), cov_stream);
  std::vector<PriceDecision> out;
  out.reserve(static_cast<std::size_t>(T));
  for (long t = 0; t < T; ++t) {
    const Eigen::VectorXd xt = env::augment(sampler.next());
    const PriceDecision d = policy.next_price(xt);
    out.push_back(d);
    policy.observe(environment.step(xt, d.price, noise_stream).y);
  }
  return out;
}

}  // namespace

TEST_CASE("episode schedules reproduce the reference exploration lengths") {
  EpisodeSchedule s;  // FiniteSmooth, l0 = 200, d = 3, m = 2
  CHECK(s.episode_length(1) == 200);
  CHECK(s.episode_length(2) == 400);
  CHECK(s.episode_length(5) == 3200);
  CHECK(s.exploration_length(1) == 97);
  CHECK(s.exploration_length(2) == 159);

  EpisodeSchedule lip = s;
  lip.mode = ScheduleMode::Lipschitz;
  CHECK(lip.exploration_length(1) == 122);

  EpisodeSchedule super = s;
  super.mode = ScheduleMode::SuperSmooth;
  CHECK(super.exploration_length(1) == 25);  // ceil(sqrt(600))

  for (int m : {4, 6}) {
    EpisodeSchedule hs = s;
    hs.m = m;
    for (int k = 1; k <= 6; ++k)
      CHECK(hs.exploration_length(k) == finite_smooth_a(hs.episode_length(k), 3, m));
  }
}

TEST_CASE("exploration lengths are capped by the episode length") {
  EpisodeSchedule s;
  s.l0 = 20;
  s.mode = ScheduleMode::Lipschitz;
  // (20 * 3)^{3/4} = 21.6 exceeds the 20-step episode, so the cap binds.
  CHECK(s.exploration_length(1) == 20);
}

TEST_CASE("exploration growth approaches the schedule exponent") {
  EpisodeSchedule s;
  const double ratio = std::pow(2.0, 5.0 / 7.0);
  for (int k = 1; k < 6; ++k) {
    const double got = static_cast<double>(s.exploration_length(k + 1)) /
                       static_cast<double>(s.exploration_length(k));
    CHECK(got == doctest::Approx(ratio).epsilon(0.02));
  }
}

TEST_CASE("episodic policies account for every phase exactly") {
  const env::MarketEnv environment = tp2_env();
  SemiParamPolicy policy({}, make_stream(11, "policy"));
  CHECK(policy.name() == "semi_param");
  const long T = 1400;  // episodes 1..3 exactly
  const std::vector<PriceDecision> ds = drive(policy, environment, T, 11);
  long explore[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  for (const PriceDecision& d : ds) {
    REQUIRE(d.episode >= 1);
    REQUIRE(d.episode <= 3);
    CHECK(d.price >= 0.0);
    CHECK(d.price <= 6.0);
    ++total[d.episode];
    if (d.provenance == Provenance::Exploration) ++explore[d.episode];
  }
  for (int k = 1; k <= 3; ++k) {
    const long lk = 200l << (k - 1);
    CHECK(total[k] == lk);
    CHECK(explore[k] == finite_smooth_a(lk, 3, 2));
  }
  // Phase indices restart at zero in every episode.
  CHECK(ds.front().phase_index == 0);
  CHECK(ds[200].phase_index == 0);
  CHECK(ds[200].episode == 2);
}

TEST_CASE("identical seeds and inputs give identical decision streams") {
  const env::MarketEnv environment = tp2_env();
  SemiParamPolicy a({}, make_stream(21, "policy"));
  SemiParamPolicy b({}, make_stream(21, "policy"));
  const std::vector<PriceDecision> da = drive(a, environment, 700, 21);
  const std::vector<PriceDecision> db = drive(b, environment, 700, 21);
  REQUIRE(da.size() == db.size());
  for (std::size_t i = 0; i < da.size(); ++i) {
    CHECK(da[i].price == db[i].price);
    CHECK(da[i].provenance == db[i].provenance);
  }
}

TEST_CASE("exploitation prices are a fixed map within an episode") {
  const env::MarketEnv environment = tp2_env();
  SemiParamPolicy policy({}, make_stream(31, "policy"));
  // Complete episode 1 exploration plus a few exploitation steps.
  RngStream cov_stream = make_stream(31, "covariates");
  RngStream noise_stream = make_stream(31, "noise");
  env::CovariateSampler sampler(environment.covariates(), cov_stream);
  const Eigen::VectorXd probe =
      env::augment(Eigen::Vector3d(0.25, -0.1, 0.33));
  double first_price = -1.0;
  for (long t = 0; t < 180; ++t) {
    const bool probe_step = t == 120 || t == 160;  // inside exploitation
    const Eigen::VectorXd xt =
        probe_step ? probe : env::augment(sampler.next());
    const PriceDecision d = policy.next_price(xt);
    if (probe_step) {
      if (first_price < 0.0)
        first_price = d.price;
      else
        CHECK(d.price == first_price);  // same estimate, same answer
    }
    policy.observe(environment.step(xt, d.price, noise_stream).y);
  }
  CHECK(first_price >= 0.0);
}

TEST_CASE("unsellable exploration degrades to flagged fallback pricing") {
  SemiParamPolicy policy({}, make_stream(41, "policy"));
  const Eigen::VectorXd xt = env::augment(Eigen::Vector3d(0.1, 0.2, 0.3));
  long fallbacks = 0;
  for (long t = 0; t < 200; ++t) {
    const PriceDecision d = policy.next_price(xt);
    if (t >= 97) {
      // All-sale outcomes leave the estimated CDF flat at zero, so the
      // virtual-value map never becomes invertible.
      CHECK(d.provenance == Provenance::Fallback);
      ++fallbacks;
    } else {
      CHECK(d.provenance == Provenance::Exploration);
    }
    CHECK(d.price >= 0.0);
    CHECK(d.price <= 6.0);
    policy.observe(1);
  }
  CHECK(policy.fallback_count() == fallbacks);
}

TEST_CASE("grid-argmax policy posts the cap when no sale is ever refused") {
  LipschitzConfig cfg;
  LipschitzPolicy policy(cfg, make_stream(51, "policy"));
  CHECK(policy.name() == "lipschitz");
  const Eigen::VectorXd xt = env::augment(Eigen::Vector3d(0.0, 0.0, 0.0));
  PriceDecision last;
  for (long t = 0; t < 123; ++t) {
    last = policy.next_price(xt);
    if (t < 122) CHECK(last.provenance == Provenance::Exploration);
    policy.observe(1);
  }
  // Estimated demand is one everywhere, so revenue is increasing in price.
  CHECK(last.provenance == Provenance::Exploitation);
  CHECK(last.price == 6.0);
}

TEST_CASE("grid-argmax policy approximates the uniform-noise optimum") {
  env::MarketEnv uniform_env(env::default_theta0(3), env::NoiseModel::uniform(),
                             env::CovariateProcess::iid_independent(2, 3), 6.0);
  LipschitzConfig cfg;
  cfg.l0 = 2000;
  LipschitzPolicy policy(cfg, make_stream(61, "policy"));
  RngStream cov_stream = make_stream(61, "covariates");
  RngStream noise_stream = make_stream(61, "noise");
  env::CovariateSampler sampler(uniform_env.covariates(), cov_stream);
  // Exploration of episode 1 is 683 steps; run past it, then probe a feature
  // vector whose true expected valuation is 1 (optimal price 0.75).
  for (long t = 0; t < 700; ++t) {
    const Eigen::VectorXd xt = env::augment(sampler.next());
    const PriceDecision d = policy.next_price(xt);
    policy.observe(uniform_env.step(xt, d.price, noise_stream).y);
  }
  const double c = 2.0 / (3.0 * std::sqrt(2.0 / 3.0));
  const Eigen::VectorXd probe = env::augment(Eigen::Vector3d(-c, -c, -c));
  CHECK(uniform_env.value_mean(probe) == doctest::Approx(1.0).epsilon(1e-12));
  const PriceDecision d = policy.next_price(probe);
  CHECK(d.provenance == Provenance::Exploitation);
  CHECK(d.price == doctest::Approx(0.75).epsilon(0.2));
}

TEST_CASE("adaptive policy starts on the order-2 schedule") {
  AdaptivePolicy policy({}, make_stream(71, "policy"));
  CHECK(policy.name() == "adaptive");
  const env::MarketEnv environment = tp2_env();
  const std::vector<PriceDecision> ds = drive(policy, environment, 200, 71);
  long explored = 0;
  for (const PriceDecision& d : ds)
    if (d.provenance == Provenance::Exploration) ++explored;
  CHECK(explored == 97);
  const std::vector<int> orders = policy.order_history();
  REQUIRE(orders.size() == 1);
  CHECK(orders[0] == 2);
}

TEST_CASE("a singleton candidate set reduces to the fixed-order policy") {
  const env::MarketEnv environment = tp2_env();
  AdaptiveConfig acfg;
  acfg.m_candidates = {2};
  AdaptivePolicy adaptive(acfg, make_stream(81, "policy"));
  SemiParamPolicy fixed({}, make_stream(81, "policy"));
  const long T = 1400;
  RngStream cov_a = make_stream(81, "covariates"), cov_b = cov_a;
  RngStream noise_a = make_stream(81, "noise"), noise_b = noise_a;
  env::CovariateSampler sa(environment.covariates(), cov_a);
  env::CovariateSampler sb(environment.covariates(), cov_b);
  for (long t = 0; t < T; ++t) {
    const Eigen::VectorXd xa = env::augment(sa.next());
    const Eigen::VectorXd xb = env::augment(sb.next());
    const PriceDecision da = adaptive.next_price(xa);
    const PriceDecision db = fixed.next_price(xb);
    CHECK(da.price == db.price);
    CHECK(da.provenance == db.provenance);
    CHECK(da.episode == db.episode);
    adaptive.observe(environment.step(xa, da.price, noise_a).y);
    fixed.observe(environment.step(xb, db.price, noise_b).y);
  }
  // Orders were re-selected at each boundary but never left {2}.
  for (int m : adaptive.order_history()) CHECK(m == 2);
}

TEST_CASE("cross validation keeps smooth data off the grid-argmax branch") {
  // Residual samples from a very smooth noise law: the order-0 row should
  // lose in at least 8 of 10 replicates.
  const env::NoiseModel noise = env::NoiseModel::trunc_poly(6);
  int smooth_selected = 0;
  for (int seed = 1; seed <= 10; ++seed) {
    RngStream rng = make_stream(static_cast<std::uint64_t>(seed), "cv6");
    const int n = 2000;
    std::vector<double> w(n), y(n);
    for (int i = 0; i < n; ++i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      // Exploration residual w = p - u with p uniform on [0, B] and the
      // expected valuation u of the reference coefficients near 3.
      const double u = 3.0 + rng.uniform(-1.5, 1.5);
      const double p = rng.uniform(0.0, 6.0);
      w[ii] = p - u;
      const double z = noise.sample(rng);
      y[ii] = z >= w[ii] ? 1.0 : 0.0;
    }
    const estimation::CvSelection sel = estimation::cross_validate_m(
        w, y, {0, 2, 4, 6}, policies::default_cv_bandwidths());
    if (sel.m_hat >= 2) ++smooth_selected;
  }
  CHECK(smooth_selected >= 8);
}

TEST_CASE("parametric baseline shares the order-2 schedule") {
  Rmlp2Policy policy({}, make_stream(91, "policy"));
  CHECK(policy.name() == "rmlp2");
  const env::MarketEnv environment = tp2_env();
  const std::vector<PriceDecision> ds = drive(policy, environment, 600, 91);
  long explore[3] = {0, 0, 0};
  for (const PriceDecision& d : ds)
    if (d.provenance == Provenance::Exploration) ++explore[d.episode];
  CHECK(explore[1] == 97);
  CHECK(explore[2] == 159);
}

TEST_CASE("gaussian virtual value matches its closed forms") {
  // phi_1(0) = -(1/2)/phi(0) = -sqrt(pi/2).
  CHECK(policies::gaussian_virtual_value(0.0, 1.0) ==
        doctest::Approx(-std::sqrt(M_PI / 2.0)).epsilon(1e-12));
  // Scale equivariance phi_sigma(t) = sigma phi_1(t/sigma).
  CHECK(policies::gaussian_virtual_value(0.1, 0.25) ==
        doctest::Approx(0.25 * policies::gaussian_virtual_value(0.4, 1.0))
            .epsilon(1e-12));
  // Strictly increasing across [-4 sigma, 4 sigma] at the baseline scale.
  const double sigma = 0.25;
  double prev = policies::gaussian_virtual_value(-4.0 * sigma, sigma);
  for (int i = 1; i <= 100; ++i) {
    const double t = -4.0 * sigma + 8.0 * sigma * i / 100.0;
    const double v = policies::gaussian_virtual_value(t, sigma);
    CHECK(v > prev);
    prev = v;
    CHECK(policies::gaussian_virtual_value_slope(t, sigma) > 0.0);
  }
  // Slope agrees with central differences.
  for (double t : {-0.6, -0.2, 0.0, 0.3, 0.9}) {
    const double step = 1e-6;
    const double fd = (policies::gaussian_virtual_value(t + step, sigma) -
                       policies::gaussian_virtual_value(t - step, sigma)) /
                      (2.0 * step);
    CHECK(policies::gaussian_virtual_value_slope(t, sigma) ==
          doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("a matched noise scale prices closer to the oracle") {
  // Compares the gaussian exploitation map at the true noise scale against a
  // badly misspecified one, holding the linear part at its true value.  Any
  // on-policy comparison at a desk-scale horizon is decided by the shared
  // least-squares wobble instead of the map, so this isolates the map: the
  // matched scale loses at most ~0.01 expected revenue per step anywhere in
  // the covariate range, while sigma = 1 underprices by several tenths for
  // most intercepts and forfeits ~0.2 per step on average.
  const env::MarketEnv environment = tp2_env();
  const double matched = std::sqrt(environment.noise().variance());
  const Eigen::VectorXd th = environment.theta0();
  const auto map_price = [](double u, double sigma) {
    const auto f = [&](double t) {
      return std::optional<double>(policies::gaussian_virtual_value(t, sigma));
    };
    const auto df = [&](double t) {
      return std::optional<double>(
          policies::gaussian_virtual_value_slope(t, sigma));
    };
    const rootfind::RootResult r =
        rootfind::solve_monotone(f, df, -u, -4.0 * sigma, 4.0 * sigma, {});
    REQUIRE(r.ok);
    return u + r.x;
  };
  double matched_total = 0.0;
  double mis_total = 0.0;
  for (double u = 1.4; u < 4.7; u += 0.4) {
    // Covariate with all coordinates equal, placed so the valuation mean is u.
    Eigen::VectorXd xt(th.size());
    xt.setConstant((u - th(th.size() - 1)) / th.head(th.size() - 1).sum());
    xt(th.size() - 1) = 1.0;
    const double best =
        environment.expected_revenue(xt, environment.oracle_price(xt));
    const double loss_matched =
        best - environment.expected_revenue(xt, map_price(u, matched));
    const double loss_mis =
        best - environment.expected_revenue(xt, map_price(u, 1.0));
    CHECK(loss_matched >= -1e-12);
    CHECK(loss_matched < 0.02);
    if (u >= 3.0) CHECK(5.0 * loss_matched < loss_mis);
    matched_total += loss_matched;
    mis_total += loss_mis;
  }
  CHECK(mis_total > 1.0);
  CHECK(matched_total < 0.1 * mis_total);
}

TEST_CASE("bandit arm counts follow the quarter-power discretization") {
  CHECK(KlBanditPolicy::arm_count(12000) == 6);
  for (long T : {2000l, 6300l, 12000l, 50000l}) {
    const int expected = static_cast<int>(std::ceil(
        std::pow(static_cast<double>(T) / std::log(static_cast<double>(T)),
                 0.25)));
    CHECK(KlBanditPolicy::arm_count(T) == expected);
  }
}

TEST_CASE("bandit initialization sweeps the arms in index order") {
  KlBanditConfig cfg;
  cfg.horizon_hint = 12000;
  KlBanditPolicy policy(cfg);
  CHECK(policy.name() == "kl_bandit");
  const Eigen::VectorXd xt = env::augment(Eigen::Vector3d(0, 0, 0));
  const int k = KlBanditPolicy::arm_count(12000);
  for (int j = 0; j < k; ++j) {
    const PriceDecision d = policy.next_price(xt);
    CHECK(d.provenance == Provenance::Exploration);
    CHECK(d.price == doctest::Approx((j + 1) * 6.0 / k).epsilon(1e-14));
    policy.observe(0);
  }
  const PriceDecision after = policy.next_price(xt);
  CHECK(after.provenance == Provenance::Exploitation);
}

TEST_CASE("bandit play concentrates on the best arm") {
  // Deterministic buyer with valuation 3: revenue is p for p <= 3, else 0.
  KlBanditConfig cfg;
  cfg.horizon_hint = 50000;
  KlBanditPolicy policy(cfg);
  const Eigen::VectorXd xt = env::augment(Eigen::Vector3d(0, 0, 0));
  const int k = KlBanditPolicy::arm_count(50000);
  double best_price = 0.0;
  for (int j = 1; j <= k; ++j) {
    const double p = j * 6.0 / k;
    if (p <= 3.0) best_price = p;
  }
  long best_plays = 0;
  for (long t = 0; t < 50000; ++t) {
    const PriceDecision d = policy.next_price(xt);
    if (d.price == best_price) ++best_plays;
    policy.observe(d.price <= 3.0 ? 1 : 0);
  }
  CHECK(static_cast<double>(best_plays) / 50000.0 >= 0.8);
}

TEST_CASE("oracle policy posts the ground-truth price") {
  env::MarketEnv uniform_env(env::default_theta0(3), env::NoiseModel::uniform(),
                             env::CovariateProcess::iid_independent(2, 3), 6.0);
  OraclePolicy policy(uniform_env);
  CHECK(policy.name() == "oracle");
  RngStream cov_stream = make_stream(101, "covariates");
  env::CovariateSampler sampler(uniform_env.covariates(), cov_stream);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd xt = env::augment(sampler.next());
    const PriceDecision d = policy.next_price(xt);
    CHECK(d.price == uniform_env.oracle_price(xt));
    // Uniform noise keeps the optimum affine in the expected valuation.
    const double u = uniform_env.value_mean(xt);
    if (u > 0.5 && u < 1.5)
      CHECK(d.price == doctest::Approx(u / 2.0 + 0.25).epsilon(1e-9));
    policy.observe(0);
  }
  CHECK(policy.order_history().empty());
}
