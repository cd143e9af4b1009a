#pragma once

#include <Eigen/Core>

#include <vector>

#include "semiprice/polynomial.hpp"
#include "semiprice/rng.hpp"

namespace semiprice::env {

enum class NoiseFamily { TruncPoly, Uniform };

//! Market-noise law on [-1/2, 1/2] with exact polynomial density, CDF, and
//! density derivative.  The truncated-polynomial family has density
//! proportional to (1/4 - z^2)^{m/2}; the coefficients are built by exact
//! rational arithmetic (normalization, antidifferentiation, differentiation)
//! so that downstream regret accounting never pays quadrature error.
class NoiseModel {
 public:
  static NoiseModel trunc_poly(int order);
  static NoiseModel uniform();

  NoiseFamily family() const { return family_; }
  //! Smoothness order m; 0 for the uniform family.
  int order() const { return order_; }
  double half_width() const { return 0.5; }

  double density(double z) const;
  double cdf(double z) const;
  double density_deriv(double z) const;
  double variance() const { return variance_; }

  //! u - (1-F(u))/f(u).  Strictly increasing on the support for both
  //! families; returns u at and above the upper edge (the limit), -infinity
  //! at and below the lower edge.
  double virtual_value(double u) const;
  //! d/du of virtual_value: 2 + (1-F)f'/f^2.
  double virtual_value_slope(double u) const;
  //! Optimal price offset map: u + x where virtual_value(x) = -u, solved by
  //! bisection on the support.  Defined for u > -half_width().
  double pricing_value(double u) const;

  //! Rejection sampling with a uniform proposal; the envelope is the density
  //! maximum, attained at 0.
  double sample(RngStream& rng) const;

  const poly::RationalPoly& density_rational() const { return f_rat_; }
  const poly::RationalPoly& cdf_rational() const { return cdf_rat_; }
  const poly::RationalPoly& density_deriv_rational() const { return df_rat_; }
  const poly::DoublePoly& density_poly() const { return f_; }
  const poly::DoublePoly& cdf_poly() const { return cdf_; }
  const poly::DoublePoly& density_deriv_poly() const { return df_; }

 private:
  NoiseModel(NoiseFamily family, int order, poly::RationalPoly f_rat);

  NoiseFamily family_;
  int order_;
  poly::RationalPoly f_rat_, cdf_rat_, df_rat_;
  poly::DoublePoly f_, cdf_, df_;
  double variance_ = 0.0;
  double density_max_ = 0.0;
};

enum class CovariateKind { IIDIndependent, IIDDependent, VARMixing };

//! Covariate-generating process.  All three regimes share the polynomial
//! ellipsoid law (1 - x' Sigma^{-1} x)^{s+1}; the independent regime is its
//! product-form analogue per coordinate, and the mixing regime feeds ellipsoid
//! innovations through a VAR(2) recursion.
class CovariateProcess {
 public:
  static CovariateProcess iid_independent(int smoothness, int dim);
  static CovariateProcess iid_dependent(int smoothness, int dim);
  static CovariateProcess var_mixing(int smoothness, int dim, int burn_in = 500);

  CovariateKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int smoothness() const { return smoothness_; }
  int burn_in() const { return burn_in_; }

  //! Sigma with entries 0.2^{|i-j|} (dependent and mixing regimes).
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  const Eigen::MatrixXd& sigma_inverse() const { return sigma_inv_; }
  //! VAR lag matrices: A_{ij} = 0.4^{|i-j|+1}, B_{ij} = 0.1^{|i-j|+1}.
  const Eigen::MatrixXd& lag1() const { return lag1_; }
  const Eigen::MatrixXd& lag2() const { return lag2_; }
  //! Covariance of one ellipsoid draw: Sigma / (dim + 2*smoothness + 4).
  Eigen::MatrixXd innovation_cov() const;

 private:
  CovariateProcess() = default;

  CovariateKind kind_ = CovariateKind::IIDIndependent;
  int dim_ = 0;
  int smoothness_ = 2;
  int burn_in_ = 0;
  Eigen::MatrixXd sigma_, sigma_inv_, lag1_, lag2_;
};

//! Stateful draw-by-draw sampler; for VARMixing the burn-in runs at
//! construction so the first emitted vector is already near-stationary.
class CovariateSampler {
 public:
  CovariateSampler(const CovariateProcess& proc, RngStream stream);
  Eigen::VectorXd next();

 private:
  Eigen::VectorXd draw_independent();
  Eigen::VectorXd draw_ellipsoid();

  const CovariateProcess& proc_;
  RngStream stream_;
  Eigen::VectorXd prev1_, prev2_;  // VAR history
};

//! n draws as rows; convenience wrapper over CovariateSampler.
Eigen::MatrixXd sample_covariates(const CovariateProcess& proc, int n,
                                  RngStream stream);

struct MarketOutcome {
  int y = 0;
  double realized_revenue = 0.0;
  double v = 0.0;  // latent valuation; diagnostics only, hidden from policies
};

//! Ground-truth market: theta0, noise law, covariate process, price cap.
//! Immutable after construction; safe to share across worker threads as long
//! as each owns its random streams.
class MarketEnv {
 public:
  MarketEnv(Eigen::VectorXd theta0, NoiseModel noise,
            CovariateProcess covariates, double price_cap);

  int dim() const { return covariates_.dim(); }
  double price_cap() const { return price_cap_; }
  const Eigen::VectorXd& theta0() const { return theta0_; }
  const NoiseModel& noise() const { return noise_; }
  const CovariateProcess& covariates() const { return covariates_; }

  double value_mean(const Eigen::VectorXd& xt) const;
  //! True for the compact-support covariate regimes, where every valuation
  //! must land in (0, price_cap) and step() enforces it.  The VAR regime is
  //! unclipped by design, so there the harness only records violations.
  bool bounded_value_support() const;

  MarketOutcome step(const Eigen::VectorXd& xt, double price,
                     RngStream& noise_stream) const;
  double expected_revenue(const Eigen::VectorXd& xt, double price) const;
  double oracle_price(const Eigen::VectorXd& xt) const;
  //! argmax over p in [0, price_cap] of p * (1 - F(p - u)): 4096-point grid
  //! argmax polished by Newton on the first-order condition.
  double oracle_price_for_value(double u) const;

 private:
  Eigen::VectorXd theta0_;
  NoiseModel noise_;
  CovariateProcess covariates_;
  double price_cap_;
};

//! x -> (x', 1)'.
Eigen::VectorXd augment(const Eigen::VectorXd& x);

//! Reference coefficients: beta = sqrt(2/3) per coordinate, intercept 3.
Eigen::VectorXd default_theta0(int dim);

}  // namespace semiprice::env
