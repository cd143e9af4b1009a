#include "semiprice/estimation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace semiprice::estimation {

ExplorationBatch::ExplorationBatch(Eigen::MatrixXd x, Eigen::VectorXd p,
                                   Eigen::VectorXd y) {
  if (x.rows() != p.size() || x.rows() != y.size())
    throw std::invalid_argument("batch row counts disagree");
  n_ = static_cast<int>(x.rows());
  dim_ = static_cast<int>(x.cols());
  xdata_.resize(static_cast<std::size_t>(n_) * dim_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < dim_; ++j)
      xdata_[static_cast<std::size_t>(i) * dim_ + j] = x(i, j);
  p_.assign(p.data(), p.data() + p.size());
  y_.assign(y.data(), y.data() + y.size());
}

void ExplorationBatch::reserve(int n, int dim) {
  dim_ = dim;
  xdata_.reserve(static_cast<std::size_t>(n) * dim);
  p_.reserve(n);
  y_.reserve(n);
}

void ExplorationBatch::append(const Eigen::VectorXd& xt, double price, int y) {
  if (dim_ == 0) dim_ = static_cast<int>(xt.size());
  if (xt.size() != dim_)
    throw std::invalid_argument("feature row has wrong dimension");
  xdata_.insert(xdata_.end(), xt.data(), xt.data() + xt.size());
  p_.push_back(price);
  y_.push_back(static_cast<double>(y));
  ++n_;
  cache_fresh_ = false;
}

void ExplorationBatch::clear() {
  xdata_.clear();
  p_.clear();
  y_.clear();
  n_ = 0;
  cache_fresh_ = false;
}

const Eigen::MatrixXd& ExplorationBatch::features() const {
  if (!cache_fresh_) {
    cache_ = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                            Eigen::Dynamic, Eigen::RowMajor>>(
        xdata_.data(), n_, dim_);
    cache_fresh_ = true;
  }
  return cache_;
}

Eigen::Map<const Eigen::VectorXd> ExplorationBatch::prices() const {
  return {p_.data(), static_cast<Eigen::Index>(p_.size())};
}

Eigen::Map<const Eigen::VectorXd> ExplorationBatch::outcomes() const {
  return {y_.data(), static_cast<Eigen::Index>(y_.size())};
}

ThetaEstimate fit_theta_ls(const ExplorationBatch& batch, double price_cap) {
  const int n = batch.n();
  const int d = batch.dim();
  if (n < d + 1) {
    std::ostringstream os;
    os << "least squares needs at least " << d + 1 << " rows, got " << n;
    throw InsufficientData(os.str());
  }
  const Eigen::MatrixXd& x = batch.features();
  Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::VectorXd rhs = x.transpose() * (price_cap * batch.outcomes());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  double lo = es.eigenvalues().minCoeff();
  double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0 || lo <= hi * 1e-14) {
    gram += 1e-10 * Eigen::MatrixXd::Identity(d, d);
    es.compute(gram);
    lo = es.eigenvalues().minCoeff();
    hi = es.eigenvalues().maxCoeff();
  }

  ThetaEstimate out;
  out.theta_hat = gram.ldlt().solve(rhs);
  out.gram_condition =
      lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  out.n_used = n;
  return out;
}

ResidualSample::ResidualSample(const ExplorationBatch& batch,
                               const Eigen::VectorXd& theta) {
  if (theta.size() != batch.dim())
    throw std::invalid_argument("theta dimension does not match batch");
  const Eigen::VectorXd w = batch.prices() - batch.features() * theta;
  std::vector<double> wv(w.data(), w.data() + w.size());
  std::vector<double> yv(batch.outcomes().data(),
                         batch.outcomes().data() + batch.n());
  *this = ResidualSample(std::move(wv), std::move(yv));
}

ResidualSample::ResidualSample(std::vector<double> w, std::vector<double> y) {
  if (w.size() != y.size())
    throw std::invalid_argument("residuals and outcomes disagree in length");
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&w](std::size_t a, std::size_t b) { return w[a] < w[b]; });
  w_.resize(w.size());
  y_.resize(y.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    w_[i] = w[idx[i]];
    y_[i] = y[idx[i]];
  }
}

ResidualSample::Sums ResidualSample::kernel_sums(
    const kernels::KernelSpec& kernel, double b, double u) const {
  if (!(b > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
  const double r = kernel.support_radius() * b;
  const auto lo = std::lower_bound(w_.begin(), w_.end(), u - r);
  const auto hi = std::upper_bound(lo, w_.end(), u + r);
  double kv_y = 0.0, kv = 0.0, kd_y = 0.0, kd = 0.0;
  for (auto it = lo; it != hi; ++it) {
    const double s = (*it - u) / b;
    const double v = kernel.value(s);
    const double d = kernel.deriv(s);
    const double y = y_[static_cast<std::size_t>(it - w_.begin())];
    kv += v;
    kv_y += v * y;
    kd += d;
    kd_y += d * y;
  }
  const double n = static_cast<double>(w_.size());
  Sums s;
  s.h = kv_y / (n * b);
  s.f = kv / (n * b);
  s.h1 = -kd_y / (n * b * b);
  s.f1 = -kd / (n * b * b);
  return s;
}

namespace {

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

double cdf_from_sums(const ResidualSample::Sums& s, double eps_f) {
  return clip01(1.0 - s.h / std::max(s.f, eps_f));
}

double cdf_deriv_from_sums(const ResidualSample::Sums& s, double eps_f) {
  return -(s.h1 * s.f - s.h * s.f1) / std::max(s.f * s.f, eps_f * eps_f);
}

}  // namespace

double nw_regress(const ExplorationBatch& batch, const Eigen::VectorXd& theta,
                  const kernels::KernelSpec& kernel, double b, double u,
                  const NwOptions& opt) {
  ResidualSample sample(batch, theta);
  return cdf_from_sums(sample.kernel_sums(kernel, b, u), opt.eps_f);
}

double nw_derivative(const ExplorationBatch& batch,
                     const Eigen::VectorXd& theta,
                     const kernels::KernelSpec& kernel, double b, double u,
                     const NwOptions& opt) {
  ResidualSample sample(batch, theta);
  return cdf_deriv_from_sums(sample.kernel_sums(kernel, b, u), opt.eps_f);
}

LinkEstimate::LinkEstimate(const ExplorationBatch& batch, ThetaEstimate theta,
                           kernels::KernelSpec kernel, double bandwidth,
                           double price_cap, LinkOptions opt)
    : theta_(std::move(theta)),
      kernel_(std::move(kernel)),
      bandwidth_(bandwidth),
      price_cap_(price_cap),
      opt_(opt),
      sample_(batch, theta_.theta_hat) {
  if (!(bandwidth_ > 0.0))
    throw std::invalid_argument("bandwidth must be > 0");
  if (!(opt_.x_lo < opt_.x_hi))
    throw std::invalid_argument("inversion interval is empty");
}

double LinkEstimate::cdf(double u) const {
  return cdf_from_sums(sample_.kernel_sums(kernel_, bandwidth_, u),
                       opt_.nw.eps_f);
}

double LinkEstimate::cdf_deriv(double u) const {
  return cdf_deriv_from_sums(sample_.kernel_sums(kernel_, bandwidth_, u),
                             opt_.nw.eps_f);
}

std::optional<double> LinkEstimate::virtual_value(double u) const {
  const auto s = sample_.kernel_sums(kernel_, bandwidth_, u);
  const double d = cdf_deriv_from_sums(s, opt_.nw.eps_f);
  if (std::abs(d) < opt_.nw.eps_d) return std::nullopt;
  return u - (1.0 - cdf_from_sums(s, opt_.nw.eps_f)) / d;
}

LinkEstimate::Inversion LinkEstimate::invert_virtual_value(
    double target) const {
  auto phi = [this](double x) { return virtual_value(x); };
  auto dphi = [this](double x) -> std::optional<double> {
    const double d1 = cdf_deriv(x);
    if (std::abs(d1) < opt_.nw.eps_d) return std::nullopt;
    const double h = opt_.fd_step;
    const double d2 = (cdf_deriv(x + h) - cdf_deriv(x - h)) / (2.0 * h);
    return 2.0 + (1.0 - cdf(x)) * d2 / (d1 * d1);
  };
  const rootfind::RootResult r =
      rootfind::solve_monotone(phi, dphi, target, opt_.x_lo, opt_.x_hi,
                               opt_.newton);
  return {r.x, r.ok};
}

LinkEstimate::PriceResult LinkEstimate::price_for_value(double u) const {
  auto clip = [this](double p) {
    return std::min(price_cap_, std::max(0.0, p));
  };
  const Inversion inv = invert_virtual_value(-u);
  if (!inv.ok) return {clip(u), true};
  return {clip(u + inv.x), false};
}

CvSelection cross_validate_m(const std::vector<double>& x,
                             const std::vector<double>& y,
                             const std::vector<int>& m_candidates,
                             const std::vector<double>& bandwidths,
                             double eps_f) {
  if (x.size() != y.size())
    throw std::invalid_argument("cross validation inputs disagree in length");
  if (x.size() < 20)
    throw std::invalid_argument("cross validation needs at least 20 points");
  if (m_candidates.empty() || bandwidths.empty())
    throw std::invalid_argument("cross validation grids must be nonempty");
  for (int m : m_candidates)
    if (m != 0 && (m < 2 || m % 2 != 0))
      throw std::invalid_argument("orders must be 0 or even integers >= 2");
  for (double h : bandwidths)
    if (!(h > 0.0)) throw std::invalid_argument("bandwidths must be > 0");

  std::vector<int> ms = m_candidates;
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
  std::vector<double> hs = bandwidths;
  std::sort(hs.begin(), hs.end());
  hs.erase(std::unique(hs.begin(), hs.end()), hs.end());

  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }

  std::map<int, kernels::KernelSpec> cache;
  auto kernel_of = [&cache](int m) -> const kernels::KernelSpec& {
    const int eff = std::max(m, 2);
    auto it = cache.find(eff);
    if (it == cache.end())
      it = cache.emplace(eff, kernels::KernelSpec::order_m(eff)).first;
    return it->second;
  };

  CvSelection sel;
  bool have = false;
  double best_loss = 0.0;
  for (int m : ms) {
    const kernels::KernelSpec& k = kernel_of(m);
    const double r = k.support_radius();
    for (double h : hs) {
      CvEntry e;
      e.m = m;
      e.h = h;
      e.valid = true;
      double loss = 0.0;
      const double norm = 1.0 / (static_cast<double>(n - 1) * h);
      for (std::size_t i = 0; i < n && e.valid; ++i) {
        const auto lo = std::lower_bound(xs.begin(), xs.end(), xs[i] - r * h);
        const auto hi = std::upper_bound(lo, xs.end(), xs[i] + r * h);
        double num = 0.0, den = 0.0;
        for (auto it = lo; it != hi; ++it) {
          const std::size_t j = static_cast<std::size_t>(it - xs.begin());
          if (j == i) continue;
          const double kv = k.value((xs[j] - xs[i]) / h);
          den += kv;
          num += kv * ys[j];
        }
        if (den * norm <= eps_f) {
          e.valid = false;
          break;
        }
        const double resid = ys[i] - num / den;
        loss += resid * resid;
      }
      if (e.valid) {
        e.loss = loss / static_cast<double>(n);
        if (!have || e.loss < best_loss) {
          have = true;
          best_loss = e.loss;
          sel.m_hat = m;
          sel.h_hat = h;
        }
      }
      sel.table.push_back(e);
    }
  }
  if (!have)
    throw SelectionError(
        "every order/bandwidth pair produced an empty smoothing neighborhood");
  return sel;
}

}  // namespace semiprice::estimation
