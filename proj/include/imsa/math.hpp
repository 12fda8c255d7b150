#pragma once

#include <cmath>
#include <stdexcept>

namespace imsa {

// e^x * E1(x) for x > 0, with E1 the exponential integral.  The direct
// product overflows for large x, so switch to the continued fraction
// E1(x) = e^-x / (x+1 - 1/(x+3 - 4/(x+5 - ...))) evaluated with modified
// Lentz iteration.
inline double expx_e1(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("expx_e1: x must be positive");
  if (x <= 600.0) return std::exp(x) * (-std::expint(-x));
  double b = x + 1.0;
  double c = 1e308;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 100; ++i) {
    const double a = -static_cast<double>(i) * static_cast<double>(i);
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double delta = c * d;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return h;
}

// Solve f(x) = target on [lo, hi] for nondecreasing f by bisection.
template <class F>
double bisect_increasing(F&& f, double lo, double hi, double target, int iters = 200) {
  if (!(lo < hi)) throw std::invalid_argument("bisect_increasing: empty bracket");
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace imsa
