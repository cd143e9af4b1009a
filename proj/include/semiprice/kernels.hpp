#pragma once

#include <functional>
#include <vector>

#include "semiprice/polynomial.hpp"

namespace semiprice::kernels {

enum class KernelKind { OrderM, FlatTop };

//! Smoothing kernel: either an order-m polynomial kernel over the triweight
//! base (1-u^2)^3 on [-1, 1], or the infinite-order flat-top kernel obtained
//! by Fourier inversion of a trapezoidal transform (flat on [-c, c], linear
//! taper to zero at 2c).  Immutable; evaluation is pure.
class KernelSpec {
 public:
  //! K(u) = q(u) (1-u^2)^3 1{|u|<=1} with the even polynomial q of degree
  //! m-2 solving the moment system (unit mass, vanishing moments 1..m-1).
  //! The system is solved in exact rational arithmetic.
  static KernelSpec order_m(int m);
  //! Closed form K(x) = (cos(cx) - cos(2cx)) / (pi c x^2), with a series
  //! branch near zero and truncation where the envelope 2/(pi c x^2) falls
  //! below 1e-12.
  static KernelSpec flat_top(double c);

  KernelKind kind() const { return kind_; }
  int order() const { return order_; }
  double flat_top_width() const { return c_; }
  //! Radius beyond which value() is identically zero.
  double support_radius() const { return radius_; }

  double value(double u) const;
  double deriv(double u) const;

  //! Full coefficient vector of K (OrderM only).
  const poly::DoublePoly& coefficients() const { return coeff_; }

 private:
  KernelSpec() = default;

  KernelKind kind_ = KernelKind::OrderM;
  int order_ = 2;
  double c_ = 1.0;
  double radius_ = 1.0;
  poly::DoublePoly coeff_, dcoeff_;
};

//! Simpson-rule moments 0..upto of an arbitrary integrand over [lo, hi].
std::vector<double> quadrature_moments(const std::function<double(double)>& f,
                                       double lo, double hi, int upto,
                                       int panels = 10000);

//! Moments 0..upto of a kernel: OrderM over its support, FlatTop over the
//! conventional check radius 200/c.
std::vector<double> check_moments(const KernelSpec& spec, int upto,
                                  int panels = 10000);

}  // namespace semiprice::kernels
