#pragma once

#include <cmath>

// Ring-radius law r(i) = a^(i+b) + c solved directly in the growth factor a:
// smoothness at the fovea edge gives a^(i_f+b) = 1/ln a, continuity gives
// c = i_f - 1/ln a, and the outer radius leaves
//   (a^(i_max - i_f) - 1) / ln a = r_max - i_f.
namespace oracle {

struct RingLaw {
  double a, b, c;
  double radius(int i) const { return std::pow(a, i + b) + c; }
};

inline RingLaw solve_ring_law(int i_fovea, int i_max, double r_max) {
  const int n = i_max - i_fovea;
  auto f = [&](long double a) { return (std::pow(a, n) - 1.0L) / std::log(a) - (r_max - i_fovea); };
  long double lo = 1.0L + 1e-9L, hi = 2.0L;
  for (int i = 0; i < 300; ++i) {
    const long double mid = 0.5L * (lo + hi);
    (f(mid) < 0 ? lo : hi) = mid;
  }
  const double a = static_cast<double>(0.5L * (lo + hi));
  const double inv_ln = 1.0 / std::log(a);
  const double b = std::log(inv_ln) / std::log(a) - i_fovea;
  return {a, b, i_fovea - inv_ln};
}

}  // namespace oracle
