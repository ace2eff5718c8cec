#pragma once

#include <cmath>
#include <vector>

// Reference ideal-searcher arithmetic in extended precision without any
// stabilization tricks (valid for the small exponents used in tests).
namespace oracle {

inline std::vector<long double> posterior_product(std::vector<long double> prior,
                                                  const std::vector<std::vector<double>>& signals,
                                                  const std::vector<std::vector<double>>& dprime) {
  for (std::size_t f = 0; f < signals.size(); ++f)
    for (std::size_t i = 0; i < prior.size(); ++i)
      prior[i] *= std::exp(static_cast<long double>(signals[f][i]) * dprime[f][i] * dprime[f][i]);
  long double z = 0;
  for (auto p : prior) z += p;
  for (auto& p : prior) p /= z;
  return prior;
}

// argmax_L sum_i P_i d'(i,L)^2 with the first maximum winning.
inline int best_fixation(const std::vector<double>& p, const std::vector<std::vector<double>>& dsq_by_loc) {
  int best = 0;
  long double best_v = -1;
  for (std::size_t l = 0; l < dsq_by_loc.size(); ++l) {
    long double v = 0;
    for (std::size_t i = 0; i < p.size(); ++i) v += static_cast<long double>(p[i]) * dsq_by_loc[l][i];
    if (v > best_v) {
      best_v = v;
      best = static_cast<int>(l);
    }
  }
  return best;
}

}  // namespace oracle
