#include "semiprice/kernels.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace semiprice::kernels {

namespace {

using poly::Rational;

//! Even moments of the triweight envelope: integral of u^{2c} (1-u^2)^3
//! over [-1, 1], in exact rationals.
Rational envelope_moment(int c) {
  auto term = [](long long den) { return Rational(2, den); };
  return term(2 * c + 1) - Rational(6, 2 * c + 3) + Rational(6, 2 * c + 5) -
         term(2 * c + 7);
}

//! Solve the h x h rational system A q = e0 by Gaussian elimination.
std::vector<Rational> solve_rational(std::vector<std::vector<Rational>> a,
                                     std::vector<Rational> rhs) {
  const std::size_t h = rhs.size();
  for (std::size_t col = 0; col < h; ++col) {
    std::size_t piv = col;
    while (piv < h && a[piv][col] == Rational(0)) ++piv;
    if (piv == h)
      throw std::logic_error("kernel moment system is singular");
    std::swap(a[piv], a[col]);
    std::swap(rhs[piv], rhs[col]);
    for (std::size_t r = 0; r < h; ++r) {
      if (r == col) continue;
      const Rational f = a[r][col] / a[col][col];
      if (f == Rational(0)) continue;
      for (std::size_t c = col; c < h; ++c) a[r][c] -= f * a[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  std::vector<Rational> q(h);
  for (std::size_t i = 0; i < h; ++i) q[i] = rhs[i] / a[i][i];
  return q;
}

}  // namespace

KernelSpec KernelSpec::order_m(int m) {
  if (m < 2 || m % 2 != 0)
    throw std::invalid_argument("kernel order must be an even integer >= 2");
  const std::size_t h = static_cast<std::size_t>(m / 2);

  std::vector<std::vector<Rational>> a(h, std::vector<Rational>(h));
  std::vector<Rational> rhs(h, Rational(0));
  rhs[0] = Rational(1);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t i = 0; i < h; ++i)
      a[r][i] = envelope_moment(static_cast<int>(r + i));
  const std::vector<Rational> q = solve_rational(std::move(a), std::move(rhs));

  // q(u) has even powers only; expand q(u) (1-u^2)^3.
  poly::RationalPoly qpoly(2 * h - 1, Rational(0));
  for (std::size_t i = 0; i < h; ++i) qpoly[2 * i] = q[i];
  poly::RationalPoly envelope{Rational(1), Rational(0), Rational(-3),
                              Rational(0), Rational(3),  Rational(0),
                              Rational(-1)};
  const poly::RationalPoly k = poly::multiply(qpoly, envelope);

  KernelSpec spec;
  spec.kind_ = KernelKind::OrderM;
  spec.order_ = m;
  spec.radius_ = 1.0;
  spec.coeff_ = poly::to_double(k);
  spec.dcoeff_ = poly::derivative(spec.coeff_);

  const std::vector<double> mom = check_moments(spec, m - 1);
  for (int j = 0; j < m; ++j) {
    const double target = j == 0 ? 1.0 : 0.0;
    if (std::abs(mom[static_cast<std::size_t>(j)] - target) > 1e-8) {
      std::ostringstream os;
      os << "order-" << m << " kernel failed moment check at j=" << j;
      throw std::logic_error(os.str());
    }
  }
  return spec;
}

KernelSpec KernelSpec::flat_top(double c) {
  if (!(c > 0.0))
    throw std::invalid_argument("flat-top width parameter must be > 0");
  KernelSpec spec;
  spec.kind_ = KernelKind::FlatTop;
  spec.c_ = c;
  // Tail is O(1/(pi c x^2)); truncate where the bound drops to 1e-12.
  spec.radius_ = std::sqrt(2.0 / (M_PI * c * 1e-12));
  return spec;
}

double KernelSpec::value(double u) const {
  if (kind_ == KernelKind::OrderM) {
    if (std::abs(u) > 1.0) return 0.0;
    return poly::eval(coeff_, u);
  }
  if (std::abs(u) > radius_) return 0.0;
  const double z = c_ * u;
  if (std::abs(z) <= 1e-3) {
    const double c2 = c_ * c_;
    const double u2 = u * u;
    return (c2 * (1.5 + u2 * c2 * (-0.625 + u2 * c2 * (0.0875 - u2 * c2 * (17.0 / 2688.0))))) /
           (M_PI * c_);
  }
  return (std::cos(z) - std::cos(2.0 * z)) / (M_PI * c_ * u * u);
}

double KernelSpec::deriv(double u) const {
  if (kind_ == KernelKind::OrderM) {
    if (std::abs(u) > 1.0) return 0.0;
    return poly::eval(dcoeff_, u);
  }
  if (std::abs(u) > radius_) return 0.0;
  const double z = c_ * u;
  if (std::abs(z) <= 1e-3) {
    const double c2 = c_ * c_;
    const double u2 = u * u;
    const double c4 = c2 * c2;
    return (u * c4 * (-1.25 + u2 * c2 * (0.35 - u2 * c2 * (17.0 / 448.0)))) /
           (M_PI * c_);
  }
  const double n = std::cos(z) - std::cos(2.0 * z);
  const double dn = -c_ * std::sin(z) + 2.0 * c_ * std::sin(2.0 * z);
  return (dn * u - 2.0 * n) / (M_PI * c_ * u * u * u);
}

std::vector<double> quadrature_moments(const std::function<double(double)>& f,
                                       double lo, double hi, int upto,
                                       int panels) {
  if (upto < 0) throw std::invalid_argument("moment order must be >= 0");
  if (panels < 2 || panels % 2 != 0)
    throw std::invalid_argument("panel count must be a positive even integer");
  const double h = (hi - lo) / panels;
  std::vector<double> acc(static_cast<std::size_t>(upto) + 1, 0.0);
  for (int i = 0; i <= panels; ++i) {
    const double x = lo + i * h;
    double w = (i == 0 || i == panels) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    w *= h / 3.0;
    const double fx = f(x);
    double xp = 1.0;
    for (int j = 0; j <= upto; ++j) {
      acc[static_cast<std::size_t>(j)] += w * xp * fx;
      xp *= x;
    }
  }
  return acc;
}

std::vector<double> check_moments(const KernelSpec& spec, int upto,
                                  int panels) {
  const double r = spec.kind() == KernelKind::OrderM
                       ? 1.0
                       : 200.0 / spec.flat_top_width();
  return quadrature_moments([&spec](double u) { return spec.value(u); }, -r, r,
                            upto, panels);
}

}  // namespace semiprice::kernels
