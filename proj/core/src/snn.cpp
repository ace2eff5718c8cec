#include "bvs/snn.hpp"

#include <algorithm>
#include <cmath>

namespace bvs::snn {

double qcfs(double x, double lambda, int time_steps) {
  if (!(lambda > 0.0) || time_steps < 1) throw ConfigError("qcfs requires lambda > 0 and T >= 1");
  const double t = time_steps;
  return lambda * std::clamp(std::floor(x * t / lambda + 0.5) / t, 0.0, 1.0);
}

double atan_surrogate(double u) { return std::atan(kPi * u) / kPi + 0.5; }

double atan_surrogate_grad(double u) {
  const double a = kPi * u;
  return 1.0 / (1.0 + a * a);
}

}  // namespace bvs::snn
