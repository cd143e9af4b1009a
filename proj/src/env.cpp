#include "semiprice/env.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "semiprice/rootfind.hpp"

namespace semiprice::env {

namespace {

double ipow(double x, int n) {
  double out = 1.0;
  for (int i = 0; i < n; ++i) out *= x;
  return out;
}

}  // namespace

NoiseModel::NoiseModel(NoiseFamily family, int order, poly::RationalPoly f_raw)
    : family_(family), order_(order) {
  using poly::Rational;
  const Rational half(1, 2);
  const Rational z = poly::integrate(f_raw, -half, half);
  f_rat_.resize(f_raw.size());
  for (std::size_t i = 0; i < f_raw.size(); ++i) f_rat_[i] = f_raw[i] / z;

  cdf_rat_ = poly::antiderivative(f_rat_);
  cdf_rat_[0] = -poly::eval(cdf_rat_, -half);
  df_rat_ = poly::derivative(f_rat_);

  f_ = poly::to_double(f_rat_);
  cdf_ = poly::to_double(cdf_rat_);
  df_ = poly::to_double(df_rat_);

  poly::RationalPoly x2{Rational(0), Rational(0), Rational(1)};
  const Rational var = poly::integrate(poly::multiply(x2, f_rat_), -half, half);
  variance_ = static_cast<double>(var.numerator()) /
              static_cast<double>(var.denominator());
  density_max_ = poly::eval(f_, 0.0);  // symmetric unimodal: maximum at 0
}

NoiseModel NoiseModel::trunc_poly(int order) {
  if (order < 2 || order % 2 != 0)
    throw std::invalid_argument("noise order must be an even integer >= 2");
  using poly::Rational;
  poly::RationalPoly base{Rational(1, 4), Rational(0), Rational(-1)};
  return NoiseModel(NoiseFamily::TruncPoly, order,
                    poly::power(base, static_cast<unsigned>(order / 2)));
}

NoiseModel NoiseModel::uniform() {
  return NoiseModel(NoiseFamily::Uniform, 0, {poly::Rational(1)});
}

double NoiseModel::density(double z) const {
  if (std::abs(z) > half_width()) return 0.0;
  return poly::eval(f_, z);
}

double NoiseModel::cdf(double z) const {
  if (z <= -half_width()) return 0.0;
  if (z >= half_width()) return 1.0;
  return poly::eval(cdf_, z);
}

double NoiseModel::density_deriv(double z) const {
  if (std::abs(z) > half_width()) return 0.0;
  return poly::eval(df_, z);
}

double NoiseModel::virtual_value(double u) const {
  const double d = half_width();
  if (u >= d) return u;  // (1-F)/f -> 0 at the upper edge
  if (u <= -d) return -std::numeric_limits<double>::infinity();
  return u - (1.0 - poly::eval(cdf_, u)) / poly::eval(f_, u);
}

double NoiseModel::virtual_value_slope(double u) const {
  const double f = poly::eval(f_, u);
  const double tail = 1.0 - poly::eval(cdf_, u);
  return 2.0 + tail * poly::eval(df_, u) / (f * f);
}

double NoiseModel::pricing_value(double u) const {
  const double d = half_width();
  if (!(u > -d))
    throw std::invalid_argument("pricing value undefined at or below -1/2");
  const double x = rootfind::bisect_increasing(
      [this](double t) { return virtual_value(t); }, -u, -d, d);
  return u + x;
}

double NoiseModel::sample(RngStream& rng) const {
  const double d = half_width();
  for (;;) {
    const double z = rng.uniform(-d, d);
    const double a = rng.uniform();
    if (a * density_max_ <= poly::eval(f_, z)) return z;
  }
}

CovariateProcess CovariateProcess::iid_independent(int smoothness, int dim) {
  if (dim < 1) throw std::invalid_argument("covariate dimension must be >= 1");
  if (smoothness < 0) throw std::invalid_argument("smoothness must be >= 0");
  CovariateProcess p;
  p.kind_ = CovariateKind::IIDIndependent;
  p.dim_ = dim;
  p.smoothness_ = smoothness;
  return p;
}

namespace {

Eigen::MatrixXd geometric_matrix(int dim, double base, int shift) {
  Eigen::MatrixXd m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = std::pow(base, std::abs(i - j) + shift);
  return m;
}

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("covariate scale matrix is not positive definite");
  return llt.solve(Eigen::MatrixXd::Identity(sigma.rows(), sigma.cols()));
}

}  // namespace

CovariateProcess CovariateProcess::iid_dependent(int smoothness, int dim) {
  CovariateProcess p = iid_independent(smoothness, dim);
  p.kind_ = CovariateKind::IIDDependent;
  p.sigma_ = geometric_matrix(dim, 0.2, 0);
  p.sigma_inv_ = checked_inverse(p.sigma_);
  return p;
}

CovariateProcess CovariateProcess::var_mixing(int smoothness, int dim,
                                              int burn_in) {
  if (burn_in < 0) throw std::invalid_argument("burn_in must be >= 0");
  CovariateProcess p = iid_dependent(smoothness, dim);
  p.kind_ = CovariateKind::VARMixing;
  p.burn_in_ = burn_in;
  p.lag1_ = geometric_matrix(dim, 0.4, 1);
  p.lag2_ = geometric_matrix(dim, 0.1, 1);
  return p;
}

Eigen::MatrixXd CovariateProcess::innovation_cov() const {
  return sigma_ / static_cast<double>(dim_ + 2 * smoothness_ + 4);
}

CovariateSampler::CovariateSampler(const CovariateProcess& proc,
                                   RngStream stream)
    : proc_(proc), stream_(std::move(stream)) {
  if (proc_.kind() == CovariateKind::VARMixing) {
    prev1_ = Eigen::VectorXd::Zero(proc_.dim());
    prev2_ = Eigen::VectorXd::Zero(proc_.dim());
    for (int i = 0; i < proc_.burn_in(); ++i) next();
  }
}

Eigen::VectorXd CovariateSampler::draw_independent() {
  const int d = proc_.dim();
  const int e = proc_.smoothness() + 1;
  const double cap = 2.0 / 3.0;
  const double s = std::sqrt(cap);
  const double fmax = ipow(cap, e);
  Eigen::VectorXd x(d);
  for (int i = 0; i < d; ++i) {
    for (;;) {
      const double c = stream_.uniform(-s, s);
      const double a = stream_.uniform();
      if (a * fmax <= ipow(cap - c * c, e)) {
        x(i) = c;
        break;
      }
    }
  }
  return x;
}

Eigen::VectorXd CovariateSampler::draw_ellipsoid() {
  const int d = proc_.dim();
  const int e = proc_.smoothness() + 1;
  Eigen::VectorXd x(d);
  for (;;) {
    // Bounding box of the ellipsoid: the diagonal of Sigma is 1.
    for (int i = 0; i < d; ++i) x(i) = stream_.uniform(-1.0, 1.0);
    const double a = stream_.uniform();
    const double q = x.dot(proc_.sigma_inverse() * x);
    if (q <= 1.0 && a <= ipow(1.0 - q, e)) return x;
  }
}

Eigen::VectorXd CovariateSampler::next() {
  switch (proc_.kind()) {
    case CovariateKind::IIDIndependent:
      return draw_independent();
    case CovariateKind::IIDDependent:
      return draw_ellipsoid();
    case CovariateKind::VARMixing: {
      Eigen::VectorXd x =
          proc_.lag1() * prev1_ + proc_.lag2() * prev2_ + draw_ellipsoid();
      prev2_ = prev1_;
      prev1_ = x;
      return x;
    }
  }
  throw std::logic_error("unreachable covariate kind");
}

Eigen::MatrixXd sample_covariates(const CovariateProcess& proc, int n,
                                  RngStream stream) {
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");
  CovariateSampler sampler(proc, std::move(stream));
  Eigen::MatrixXd out(n, proc.dim());
  for (int i = 0; i < n; ++i) out.row(i) = sampler.next().transpose();
  return out;
}

MarketEnv::MarketEnv(Eigen::VectorXd theta0, NoiseModel noise,
                     CovariateProcess covariates, double price_cap)
    : theta0_(std::move(theta0)),
      noise_(std::move(noise)),
      covariates_(std::move(covariates)),
      price_cap_(price_cap) {
  if (price_cap_ <= 0.0) throw std::invalid_argument("price cap must be > 0");
  if (theta0_.size() != covariates_.dim() + 1)
    throw std::invalid_argument(
        "theta0 must have length dim + 1 (coefficients then intercept)");
}

double MarketEnv::value_mean(const Eigen::VectorXd& xt) const {
  return theta0_.dot(xt);
}

bool MarketEnv::bounded_value_support() const {
  return covariates_.kind() != CovariateKind::VARMixing;
}

MarketOutcome MarketEnv::step(const Eigen::VectorXd& xt, double price,
                              RngStream& noise_stream) const {
  if (!std::isfinite(price)) throw std::invalid_argument("price must be finite");
  const double v = value_mean(xt) + noise_.sample(noise_stream);
  if (bounded_value_support() && (v <= 0.0 || v >= price_cap_)) {
    std::ostringstream os;
    os << "valuation " << v << " escaped (0, " << price_cap_ << ")";
    throw std::logic_error(os.str());
  }
  MarketOutcome out;
  out.v = v;
  out.y = v >= price ? 1 : 0;
  out.realized_revenue = out.y ? price : 0.0;
  return out;
}

double MarketEnv::expected_revenue(const Eigen::VectorXd& xt,
                                   double price) const {
  return price * (1.0 - noise_.cdf(price - value_mean(xt)));
}

double MarketEnv::oracle_price_for_value(double u) const {
  constexpr int kGrid = 4096;
  const double step = price_cap_ / (kGrid - 1);
  auto revenue = [&](double p) { return p * (1.0 - noise_.cdf(p - u)); };

  int best = 0;
  double best_rev = 0.0;
  for (int i = 0; i < kGrid; ++i) {
    const double r = revenue(i * step);
    if (r > best_rev) {
      best_rev = r;
      best = i;
    }
  }
  if (best_rev <= 0.0) return 0.0;  // demand vanishes everywhere
  if (best == 0 || best == kGrid - 1) {
    std::ostringstream os;
    os << "revenue maximizer not bracketed on the price grid (u=" << u
       << ", best index " << best << ")";
    throw std::runtime_error(os.str());
  }

  // Safeguarded Newton on the stationarity condition
  // psi(p) = (1 - F(p-u)) - p f(p-u), decreasing through the maximizer.
  auto psi = [&](double p) {
    const double w = p - u;
    return (1.0 - noise_.cdf(w)) - p * noise_.density(w);
  };
  double a = (best - 1) * step, b = (best + 1) * step;
  if (!(psi(a) >= 0.0 && psi(b) <= 0.0)) return best * step;
  double p = best * step;
  for (int it = 0; it < 60 && b - a > 1e-13; ++it) {
    const double w = p - u;
    const double r = psi(p);
    if (r > 0.0)
      a = p;
    else
      b = p;
    const double slope =
        -2.0 * noise_.density(w) - p * noise_.density_deriv(w);
    double next = (std::abs(slope) > 1e-300) ? p - r / slope : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (std::abs(r) <= 1e-13) break;
    p = next;
  }
  return p;
}

double MarketEnv::oracle_price(const Eigen::VectorXd& xt) const {
  return oracle_price_for_value(value_mean(xt));
}

Eigen::VectorXd augment(const Eigen::VectorXd& x) {
  Eigen::VectorXd xt(x.size() + 1);
  xt.head(x.size()) = x;
  xt(x.size()) = 1.0;
  return xt;
}

Eigen::VectorXd default_theta0(int dim) {
  Eigen::VectorXd t(dim + 1);
  t.head(dim).setConstant(std::sqrt(2.0 / 3.0));
  t(dim) = 3.0;
  return t;
}

}  // namespace semiprice::env
