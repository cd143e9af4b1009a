#pragma once

#include <Eigen/Core>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semiprice/env.hpp"
#include "semiprice/estimation.hpp"
#include "semiprice/kernels.hpp"
#include "semiprice/rng.hpp"

namespace semiprice::policies {

enum class Provenance { Exploration, Exploitation, Fallback };

struct PriceDecision {
  double price = 0.0;
  Provenance provenance = Provenance::Exploration;
  int episode = 1;
  long phase_index = 0;  // 0-based position within the episode
};

//! Online pricing policy: one next_price per step, answered by one observe.
//! Instances are single-threaded and stateful; concurrent simulations use
//! independent instances.
class PricingPolicy {
 public:
  virtual ~PricingPolicy() = default;
  virtual PriceDecision next_price(const Eigen::VectorXd& xt) = 0;
  virtual void observe(int y) = 0;
  virtual std::string_view name() const = 0;
  virtual long fallback_count() const { return 0; }
  //! Per-episode smoothness orders, for policies that select them online.
  virtual std::vector<int> order_history() const { return {}; }
};

enum class ScheduleMode { FiniteSmooth, SuperSmooth, Lipschitz };

//! Doubling episode schedule with mode-specific exploration lengths:
//!   FiniteSmooth  a_k = ceil((l_k d)^{(2m+1)/(4m-1)})
//!   SuperSmooth   a_k = ceil(sqrt(l_k d))
//!   Lipschitz     a_k = ceil((l_k d)^{3/4})
//! all capped at l_k = 2^{k-1} l_0.
struct EpisodeSchedule {
  long l0 = 200;
  int dim = 3;
  ScheduleMode mode = ScheduleMode::FiniteSmooth;
  int m = 2;

  long episode_length(int k) const;
  long exploration_length(int k) const;
};

//! Shared episodic state machine: uniform exploration, a fit at the
//! exploration/exploitation boundary, then model-driven prices.  Estimation
//! failures degrade to fallback pricing clip(x' theta, 0, B) for the rest of
//! the episode; runs never abort.
class EpisodicPolicy : public PricingPolicy {
 public:
  PriceDecision next_price(const Eigen::VectorXd& xt) final;
  void observe(int y) final;
  long fallback_count() const final { return fallback_count_; }

 protected:
  EpisodicPolicy(double price_cap, long l0, int dim, RngStream price_stream);

  virtual long exploration_length(int k) const = 0;
  virtual void episode_starting(int k);
  //! Fit episode estimates from batch(); exceptions mean degraded pricing.
  virtual void fit_estimates() = 0;
  //! Price for one exploitation step; second element flags a fallback.
  virtual std::pair<double, bool> exploitation_price(
      const Eigen::VectorXd& xt) = 0;

  const estimation::ExplorationBatch& batch() const { return batch_; }
  double price_cap() const { return price_cap_; }
  int dim() const { return dim_; }
  long l0() const { return l0_; }
  //! Latest successful least-squares estimate; zero before the first fit,
  //! matching the conventional initialization.
  const Eigen::VectorXd& theta() const { return theta_; }
  void set_theta(Eigen::VectorXd t) { theta_ = std::move(t); }
  bool fit_succeeded() const { return fit_ok_; }
  double clip_price(double p) const;

 private:
  double price_cap_;
  long l0_;
  int dim_;
  RngStream stream_;
  estimation::ExplorationBatch batch_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd pending_x_;
  double pending_p_ = 0.0;
  int k_ = 1;
  long pos_ = 0;
  long lk_ = 0, ak_ = 0;
  bool episode_open_ = false;
  bool fit_ok_ = false;
  long fallback_count_ = 0;
};

struct SemiParamConfig {
  double price_cap = 6.0;
  long l0 = 200;
  int dim = 3;
  int order = 2;  // kernel and schedule order m (even, >= 2)
  bool super_smooth = false;
  double alpha = 1.0, d_phi = 1.0, c_kappa = 1.0;  // SuperSmooth inputs
  double bandwidth_const = 3.0;
  double invert_lo = -1.0, invert_hi = 1.0;
};

//! Explore-then-commit pricing with the semi-parametric link: least squares
//! for theta, kernel estimates of the noise CDF and its derivative, and
//! exploitation prices from the inverted virtual-value map.
class SemiParamPolicy : public EpisodicPolicy {
 public:
  SemiParamPolicy(SemiParamConfig cfg, RngStream price_stream);
  std::string_view name() const override { return name_; }

 protected:
  long exploration_length(int k) const override;
  void episode_starting(int k) override;
  void fit_estimates() override;
  std::pair<double, bool> exploitation_price(const Eigen::VectorXd& xt) override;

 private:
  SemiParamConfig cfg_;
  std::string name_;
  kernels::KernelSpec kernel_;
  EpisodeSchedule schedule_;
  std::optional<estimation::LinkEstimate> link_;
};

struct LipschitzConfig {
  double price_cap = 6.0;
  long l0 = 200;
  int dim = 3;
  double bandwidth_const = 3.0;
  int grid_points = 1024;
};

//! CDF-only variant for merely Lipschitz noise: exploitation maximizes
//! p (1 - F(p - u)) over a price grid with one golden-section refinement.
class LipschitzPolicy : public EpisodicPolicy {
 public:
  LipschitzPolicy(LipschitzConfig cfg, RngStream price_stream);
  std::string_view name() const override { return "lipschitz"; }

 protected:
  long exploration_length(int k) const override;
  void episode_starting(int k) override;
  void fit_estimates() override;
  std::pair<double, bool> exploitation_price(const Eigen::VectorXd& xt) override;

 private:
  LipschitzConfig cfg_;
  EpisodeSchedule schedule_;
  std::optional<estimation::LinkEstimate> link_;
};

struct AdaptiveConfig {
  double price_cap = 6.0;
  long l0 = 200;
  int dim = 3;
  double bandwidth_const = 3.0;
  std::vector<int> m_candidates{0, 2, 4, 6};
  std::vector<double> bandwidth_grid;  // empty: log-spaced default
  double invert_lo = -1.0, invert_hi = 1.0;
  int grid_points = 1024;  // order-0 branch
};

//! Smoothness-adaptive variant: episode 1 runs at order 2; before each later
//! episode, leave-one-out cross-validation on the previous exploration data
//! re-selects the order, switching between the semi-parametric and the
//! grid-argmax branch.  A failed selection retains the previous order.
class AdaptivePolicy : public EpisodicPolicy {
 public:
  AdaptivePolicy(AdaptiveConfig cfg, RngStream price_stream);
  std::string_view name() const override { return "adaptive"; }
  std::vector<int> order_history() const override { return order_history_; }

 protected:
  long exploration_length(int k) const override;
  void episode_starting(int k) override;
  void fit_estimates() override;
  std::pair<double, bool> exploitation_price(const Eigen::VectorXd& xt) override;

 private:
  const kernels::KernelSpec& kernel_for(int m);

  AdaptiveConfig cfg_;
  int m_hat_ = 2;
  std::map<int, kernels::KernelSpec> kernel_cache_;
  std::vector<int> order_history_;
  std::vector<double> cv_x_, cv_y_;  // previous exploration residuals
  std::optional<estimation::LinkEstimate> link_;
};

struct Rmlp2Config {
  double price_cap = 6.0;
  long l0 = 200;
  int dim = 3;
  double sigma = 0.25;  // assumed Gaussian noise scale
};

//! Parametric-link baseline: the order-2 episode schedule and least-squares
//! theta, but prices from the Gaussian virtual-value map at an assumed scale
//! (possibly misspecified).
class Rmlp2Policy : public EpisodicPolicy {
 public:
  Rmlp2Policy(Rmlp2Config cfg, RngStream price_stream);
  std::string_view name() const override { return "rmlp2"; }

 protected:
  long exploration_length(int k) const override;
  void fit_estimates() override;
  std::pair<double, bool> exploitation_price(const Eigen::VectorXd& xt) override;

 private:
  Rmlp2Config cfg_;
  EpisodeSchedule schedule_;
};

//! Gaussian virtual-value map phi_sigma(t) = t - sigma M(t/sigma) with the
//! Mills ratio M(z) = (1 - Phi(z))/phi(z), and its derivative 2 - z M(z).
double gaussian_virtual_value(double t, double sigma);
double gaussian_virtual_value_slope(double t, double sigma);

struct KlBanditConfig {
  double price_cap = 6.0;
  long horizon_hint = 6300;  // sets the arm count; the policy is not anytime
};

//! Context-free UCB1 over a uniform price grid of ceil((T/log T)^{1/4}) arms,
//! with rewards p y / B.  The first K rounds play each arm once in order.
class KlBanditPolicy : public PricingPolicy {
 public:
  explicit KlBanditPolicy(KlBanditConfig cfg);
  static int arm_count(long horizon_hint);

  PriceDecision next_price(const Eigen::VectorXd& xt) override;
  void observe(int y) override;
  std::string_view name() const override { return "kl_bandit"; }

 private:
  KlBanditConfig cfg_;
  std::vector<double> arm_price_;
  std::vector<long> pulls_;
  std::vector<double> reward_sum_;
  long t_ = 0;
  int current_arm_ = 0;
};

//! Posts the ground-truth optimal price; test and benchmark reference.
class OraclePolicy : public PricingPolicy {
 public:
  explicit OraclePolicy(env::MarketEnv environment);

  PriceDecision next_price(const Eigen::VectorXd& xt) override;
  void observe(int y) override;
  std::string_view name() const override { return "oracle"; }

 private:
  env::MarketEnv env_;
  long t_ = 0;
};

//! Default cross-validation bandwidth grid: 5 log-spaced points on [0.8, 3],
//! bracketing the bandwidths the episode fits actually deploy.
std::vector<double> default_cv_bandwidths();

}  // namespace semiprice::policies
