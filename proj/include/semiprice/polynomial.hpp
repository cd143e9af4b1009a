#pragma once

#include <boost/rational.hpp>

#include <cstddef>
#include <vector>

namespace semiprice::poly {

//! Polynomials are coefficient vectors in ascending degree order.
//! The rational instantiation is used to build closed-form densities exactly;
//! doubles everywhere at evaluation time.

using Rational = boost::rational<long long>;
using RationalPoly = std::vector<Rational>;
using DoublePoly = std::vector<double>;

template <class T>
std::vector<T> multiply(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.empty() || b.empty()) return {};
  std::vector<T> out(a.size() + b.size() - 1, T(0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

template <class T>
std::vector<T> power(std::vector<T> base, unsigned n) {
  std::vector<T> out{T(1)};
  while (n) {
    if (n & 1u) out = multiply(out, base);
    base = multiply(base, base);
    n >>= 1u;
  }
  return out;
}

template <class T>
std::vector<T> derivative(const std::vector<T>& p) {
  if (p.size() <= 1) return {T(0)};
  std::vector<T> out(p.size() - 1);
  for (std::size_t k = 1; k < p.size(); ++k) out[k - 1] = p[k] * T(static_cast<int>(k));
  return out;
}

//! Antiderivative with zero constant term.
template <class T>
std::vector<T> antiderivative(const std::vector<T>& p) {
  std::vector<T> out(p.size() + 1, T(0));
  for (std::size_t k = 0; k < p.size(); ++k)
    out[k + 1] = p[k] / T(static_cast<int>(k + 1));
  return out;
}

template <class T>
T eval(const std::vector<T>& p, T x) {
  T acc(0);
  for (std::size_t i = p.size(); i-- > 0;) acc = acc * x + p[i];
  return acc;
}

inline double eval(const DoublePoly& p, double x) {
  double acc = 0.0;
  for (std::size_t i = p.size(); i-- > 0;) acc = acc * x + p[i];
  return acc;
}

inline Rational integrate(const RationalPoly& p, Rational a, Rational b) {
  RationalPoly pa = antiderivative(p);
  return eval(pa, b) - eval(pa, a);
}

inline DoublePoly to_double(const RationalPoly& p) {
  DoublePoly out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    out[i] = static_cast<double>(p[i].numerator()) /
             static_cast<double>(p[i].denominator());
  return out;
}

}  // namespace semiprice::poly
