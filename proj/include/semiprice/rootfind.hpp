#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

namespace semiprice::rootfind {

struct NewtonOptions {
  double tol = 1e-8;        // success: |f(x) - target| below this
  int max_iters = 50;
  int grid_points = 512;    // fallback scan resolution
  double accept_tol = 0.1;  // fallback result rejected beyond this residual
  int bisect_iters = 200;
};

struct RootResult {
  double x = 0.0;
  bool ok = false;  // residual within accept_tol (tol when Newton converges)
};

//! Solves f(x) = target for an increasing f on [lo, hi].  Newton runs in the
//! logistic reparametrization x(y) = lo + (hi-lo)/(1+e^{-y}) starting at y=0,
//! which keeps iterates inside the interval without projection.  If Newton
//! stalls (iteration cap, undefined point, vanishing slope) the interval is
//! scanned on a uniform grid and the best bracketing cell is bisected.
//! Callbacks return nullopt where the function is undefined.
inline RootResult solve_monotone(
    const std::function<std::optional<double>(double)>& f,
    const std::function<std::optional<double>(double)>& df, double target,
    double lo, double hi, const NewtonOptions& opt = {}) {
  const double span = hi - lo;
  double y = 0.0;
  for (int it = 0; it < opt.max_iters; ++it) {
    const double s = 1.0 / (1.0 + std::exp(-y));
    const double x = lo + span * s;
    const auto fv = f(x);
    if (!fv) break;
    const double r = *fv - target;
    if (std::abs(r) <= opt.tol) return {x, true};
    const auto dv = df(x);
    if (!dv) break;
    const double slope = *dv * span * s * (1.0 - s);  // chain rule through x(y)
    if (!std::isfinite(slope) || std::abs(slope) < 1e-300) break;
    y -= r / slope;
    if (!std::isfinite(y)) break;
    y = std::clamp(y, -40.0, 40.0);
  }

  // Grid fallback: best point overall plus a sign-change bracket if one exists.
  double best_x = lo, best_abs = std::numeric_limits<double>::infinity();
  bool have_prev = false;
  double prev_x = 0.0, prev_r = 0.0;
  double br_lo = 0.0, br_hi = 0.0;
  bool have_bracket = false;
  const int n = opt.grid_points;
  for (int i = 0; i < n; ++i) {
    const double x = lo + span * static_cast<double>(i) / (n - 1);
    const auto fv = f(x);
    if (!fv) {
      have_prev = false;
      continue;
    }
    const double r = *fv - target;
    if (std::abs(r) < best_abs) {
      best_abs = std::abs(r);
      best_x = x;
    }
    if (have_prev && !have_bracket && prev_r <= 0.0 && r >= 0.0) {
      br_lo = prev_x;
      br_hi = x;
      have_bracket = true;
    }
    have_prev = true;
    prev_x = x;
    prev_r = r;
  }
  if (have_bracket) {
    double a = br_lo, b = br_hi;
    for (int it = 0; it < opt.bisect_iters && b - a > 1e-15; ++it) {
      const double mid = 0.5 * (a + b);
      const auto fv = f(mid);
      if (!fv) break;
      const double r = *fv - target;
      if (std::abs(r) < best_abs) {
        best_abs = std::abs(r);
        best_x = mid;
      }
      if (std::abs(r) <= opt.tol) break;
      (r < 0.0 ? a : b) = mid;
    }
  }
  return {best_x, best_abs <= opt.accept_tol};
}

//! Bisection for exact strictly-increasing functions; no failure modes beyond
//! a bad initial bracket, which the caller guarantees.
inline double bisect_increasing(const std::function<double(double)>& f,
                                double target, double lo, double hi,
                                int iters = 200) {
  double a = lo, b = hi;
  for (int it = 0; it < iters && b - a > 0.0; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;  // interval at double resolution
    (f(mid) < target ? a : b) = mid;
  }
  return 0.5 * (a + b);
}

}  // namespace semiprice::rootfind
