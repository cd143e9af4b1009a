#pragma once

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <vector>

#include "semiprice/kernels.hpp"
#include "semiprice/rootfind.hpp"

namespace semiprice::estimation {

//! Rows collected during one exploration phase: augmented features (trailing
//! 1), uniformly drawn prices, and binary sale outcomes.
class ExplorationBatch {
 public:
  ExplorationBatch() = default;
  ExplorationBatch(Eigen::MatrixXd x, Eigen::VectorXd p, Eigen::VectorXd y);

  void reserve(int n, int dim);
  void append(const Eigen::VectorXd& xt, double price, int y);
  void clear();

  int n() const { return n_; }
  int dim() const { return dim_; }  // d + 1
  //! n x (d+1), one augmented feature row per observation.
  const Eigen::MatrixXd& features() const;
  Eigen::Map<const Eigen::VectorXd> prices() const;
  Eigen::Map<const Eigen::VectorXd> outcomes() const;

 private:
  std::vector<double> xdata_;  // row-major, n_ rows of dim_ entries
  std::vector<double> p_, y_;
  int n_ = 0, dim_ = 0;
  mutable Eigen::MatrixXd cache_;
  mutable bool cache_fresh_ = false;
};

struct ThetaEstimate {
  Eigen::VectorXd theta_hat;
  double gram_condition = 0.0;
  int n_used = 0;
};

struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

//! Least squares of the scaled responses B*y on the augmented features.
//! A ridge jitter 1e-10 I is added once if the Gram matrix is singular to
//! working precision.
ThetaEstimate fit_theta_ls(const ExplorationBatch& batch, double price_cap);

struct NwOptions {
  double eps_f = 1e-8;  // denominator floor for f
  double eps_d = 1e-6;  // derivative floor gating the virtual-value map
};

//! Residual sample w_t = p_t - x_t' theta co-sorted with outcomes, enabling
//! window-limited kernel sums for compactly supported kernels.
class ResidualSample {
 public:
  ResidualSample(const ExplorationBatch& batch, const Eigen::VectorXd& theta);
  ResidualSample(std::vector<double> w, std::vector<double> y);

  int n() const { return static_cast<int>(w_.size()); }
  const std::vector<double>& w() const { return w_; }
  const std::vector<double>& y() const { return y_; }

  //! Kernel-weighted averages at u with bandwidth b:
  //!   h  = (1/nb)   sum K((w_t-u)/b) y_t     f  = same with y_t == 1
  //!   h1 = (-1/nb^2) sum K'((w_t-u)/b) y_t   f1 = same with y_t == 1
  //! h1 and f1 are the exact u-derivatives of h and f.
  struct Sums {
    double h = 0.0, f = 0.0, h1 = 0.0, f1 = 0.0;
  };
  Sums kernel_sums(const kernels::KernelSpec& kernel, double b, double u) const;

 private:
  std::vector<double> w_, y_;  // sorted by w
};

//! Nadaraya-Watson estimate of the noise CDF at u: 1 - h/max(f, eps_f),
//! clipped to [0, 1].
double nw_regress(const ExplorationBatch& batch, const Eigen::VectorXd& theta,
                  const kernels::KernelSpec& kernel, double b, double u,
                  const NwOptions& opt = {});

//! Derivative of the same estimator by the quotient rule:
//! -(h1 f - h f1) / max(f^2, eps_f^2).
double nw_derivative(const ExplorationBatch& batch,
                     const Eigen::VectorXd& theta,
                     const kernels::KernelSpec& kernel, double b, double u,
                     const NwOptions& opt = {});

struct LinkOptions {
  double x_lo = -1.0, x_hi = 1.0;  // inversion search interval
  NwOptions nw;
  double fd_step = 1e-4;  // second-derivative finite difference
  rootfind::NewtonOptions newton;
};

//! The fitted pricing bundle for one episode: theta, kernel, bandwidth, the
//! cached residual sample, and evaluators for the estimated CDF, its
//! derivative, the virtual-value map, and the price map.  Immutable; shared
//! read-only during exploitation.
class LinkEstimate {
 public:
  LinkEstimate(const ExplorationBatch& batch, ThetaEstimate theta,
               kernels::KernelSpec kernel, double bandwidth, double price_cap,
               LinkOptions opt = {});

  const ThetaEstimate& theta() const { return theta_; }
  double bandwidth() const { return bandwidth_; }
  const kernels::KernelSpec& kernel() const { return kernel_; }

  double cdf(double u) const;        // clipped to [0, 1]
  double cdf_deriv(double u) const;  // quotient rule, floored denominator

  //! u - (1 - F(u))/F'(u); nullopt where |F'| is below the derivative floor.
  std::optional<double> virtual_value(double u) const;

  struct Inversion {
    double x = 0.0;
    bool ok = false;
  };
  //! Solve virtual_value(x) = target over the configured interval.
  Inversion invert_virtual_value(double target) const;

  struct PriceResult {
    double price = 0.0;
    bool fallback = false;
  };
  //! clip(u + x, 0, B) with x from inversion at -u; on inversion failure the
  //! price falls back to clip(u, 0, B) and is flagged.
  PriceResult price_for_value(double u) const;

 private:
  ThetaEstimate theta_;
  kernels::KernelSpec kernel_;
  double bandwidth_;
  double price_cap_;
  LinkOptions opt_;
  ResidualSample sample_;
};

struct CvEntry {
  int m = 0;
  double h = 0.0;
  double loss = 0.0;
  bool valid = false;
};

struct CvSelection {
  int m_hat = 0;
  double h_hat = 0.0;
  std::vector<CvEntry> table;
};

struct SelectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

//! Leave-one-out bandwidth-and-order selection for the regression of y on x.
//! Order 0 entries smooth with the order-2 kernel but signal the
//! grid-argmax policy branch downstream.  A pair is invalid as soon as one
//! left-out point has an empty smoothing neighborhood; if every pair is
//! invalid a SelectionError is thrown.  Ties break toward smaller m, then
//! smaller h.
CvSelection cross_validate_m(const std::vector<double>& x,
                             const std::vector<double>& y,
                             const std::vector<int>& m_candidates,
                             const std::vector<double>& bandwidths,
                             double eps_f = 1e-8);

}  // namespace semiprice::estimation
