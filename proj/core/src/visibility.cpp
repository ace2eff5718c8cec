#include "bvs/visibility.hpp"

#include <gsl/gsl_cdf.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <set>

namespace bvs {
namespace {

double effective_eccentricity(const VisibilityParams& p, Vec2 loc) {
  return std::sqrt(loc.x * loc.x + p.p5 * loc.y * loc.y);
}

// tanh(kT/2)/k, i.e. (1 - e^{-kT}) / (k (1 + e^{-kT})), stable as kT -> 0.
double integration_factor(double k, double duration) {
  if (k * duration < 1e-8) return 0.5 * duration;
  return std::tanh(0.5 * k * duration) / k;
}

struct GslMinimizerDeleter {
  void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};
struct GslVectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

struct SimplexResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
};

// Nelder-Mead (GSL nmsimplex2) on an unconstrained objective.
SimplexResult minimize_simplex(const std::function<double(std::span<const double>)>& f,
                               std::vector<double> start, double step, int max_iterations,
                               double size_tol) {
  const std::size_t n = start.size();
  struct Ctx {
    const std::function<double(std::span<const double>)>* f;
    std::size_t n;
  } ctx{&f, n};

  gsl_multimin_function fn;
  fn.n = n;
  fn.params = &ctx;
  fn.f = [](const gsl_vector* v, void* params) -> double {
    auto* c = static_cast<Ctx*>(params);
    std::vector<double> x(c->n);
    for (std::size_t i = 0; i < c->n; ++i) x[i] = gsl_vector_get(v, i);
    const double val = (*c->f)(x);
    return std::isfinite(val) ? val : GSL_POSINF;
  };

  std::unique_ptr<gsl_vector, GslVectorDeleter> x0(gsl_vector_alloc(n));
  std::unique_ptr<gsl_vector, GslVectorDeleter> steps(gsl_vector_alloc(n));
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(x0.get(), i, start[i]);
    gsl_vector_set(steps.get(), i, step);
  }
  std::unique_ptr<gsl_multimin_fminimizer, GslMinimizerDeleter> m(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n));
  gsl_multimin_fminimizer_set(m.get(), &fn, x0.get(), steps.get());

  for (int iter = 0; iter < max_iterations; ++iter) {
    if (gsl_multimin_fminimizer_iterate(m.get()) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(m.get()), size_tol) == GSL_SUCCESS) {
      break;
    }
  }
  SimplexResult r;
  r.value = gsl_multimin_fminimizer_minimum(m.get());
  r.x.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.x[i] = gsl_vector_get(m->x, i);
  return r;
}

// Simplex restarted from its own optimum until the value stops improving.
SimplexResult minimize_with_restarts(const std::function<double(std::span<const double>)>& f,
                                     std::vector<double> start, double step, int max_iterations) {
  SimplexResult best = minimize_simplex(f, std::move(start), step, max_iterations, 1e-12);
  for (int restart = 0; restart < 4 && std::isfinite(best.value); ++restart) {
    SimplexResult again = minimize_simplex(f, best.x, 0.1 * step, max_iterations, 1e-13);
    const bool improved = again.value < best.value - 1e-15 * (1.0 + std::abs(best.value));
    if (again.value <= best.value) best = std::move(again);
    if (!improved) break;
  }
  return best;
}

class GslErrorsOff {
 public:
  GslErrorsOff() : previous_(gsl_set_error_handler_off()) {}
  ~GslErrorsOff() { gsl_set_error_handler(previous_); }
  GslErrorsOff(const GslErrorsOff&) = delete;
  GslErrorsOff& operator=(const GslErrorsOff&) = delete;

 private:
  gsl_error_handler_t* previous_;
};

}  // namespace

void VisibilityParams::validate() const {
  for (double p : as_array()) {
    if (!(p > 0.0) || !std::isfinite(p)) throw ConfigError("visibility parameters must be positive");
  }
}

double visibility_gain(const VisibilityParams& p, Vec2 loc) {
  return p.p1 * std::exp(-p.p2 * effective_eccentricity(p, loc));
}

double visibility_leak(const VisibilityParams& p, Vec2 loc) {
  return p.p3 * std::exp(-p.p4 * effective_eccentricity(p, loc));
}

double dprime(const VisibilityParams& params, Vec2 loc_deg, double duration_ms) {
  if (!(duration_ms > 0.0)) throw ConfigError("duration must be positive");
  const double a = visibility_gain(params, loc_deg);
  const double k = visibility_leak(params, loc_deg);
  return a * std::sqrt(integration_factor(k, duration_ms));
}

VisibilityParams reference_visibility() {
  VisibilityParams p;
  p.p3 = 0.01;
  p.p4 = 0.8;
  p.p5 = 3.0;
  const double t = kReferenceDurationMs;
  p.p1 = 3.0 / std::sqrt(integration_factor(p.p3, t));
  const double ecc = 6.0;
  const double k6 = p.p3 * std::exp(-p.p4 * ecc);
  const double a6 = 1.0 / std::sqrt(integration_factor(k6, t));
  p.p2 = -std::log(a6 / p.p1) / ecc;
  return p;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal quantile requires p in (0,1)");
  return gsl_cdf_ugaussian_Pinv(p);
}

DprimeEstimate dprime_from_rates(double hit, double cr, int n_per_interval) {
  DprimeEstimate out;
  if (n_per_interval > 0) {
    const double lo = 1.0 / (2.0 * n_per_interval);
    const double hi = 1.0 - lo;
    const double h = std::clamp(hit, lo, hi);
    const double c = std::clamp(cr, lo, hi);
    out.clamped = h != hit || c != cr;
    hit = h;
    cr = c;
  }
  out.dprime = (normal_quantile(hit) - normal_quantile(1.0 - cr)) / std::sqrt(2.0);
  return out;
}

double dprime_from_rates(double hit, double cr) { return dprime_from_rates(hit, cr, 0).dprime; }

TwoIfcRecord simulate_2ifc_dprime(double dprime_value, int n_trials, Rng& rng, double bias) {
  if (n_trials <= 0) throw ConfigError("n_trials must be positive");
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution first(0.5);
  int n1 = 0, n2 = 0, hits = 0, crs = 0;
  for (int t = 0; t < n_trials; ++t) {
    const bool target_first = first(rng);
    const double x1 = noise(rng) + (target_first ? dprime_value : 0.0);
    const double x2 = noise(rng) + (target_first ? 0.0 : dprime_value);
    const bool chose_first = x1 - x2 > bias;
    if (target_first) {
      ++n1;
      hits += chose_first;
    } else {
      ++n2;
      crs += !chose_first;
    }
  }
  TwoIfcRecord r;
  r.n = n_trials;
  r.hit = n1 > 0 ? static_cast<double>(hits) / n1 : 0.5;
  r.cr = n2 > 0 ? static_cast<double>(crs) / n2 : 0.5;
  return r;
}

TwoIfcRecord simulate_2ifc(const VisibilityParams& params, Vec2 loc_deg, double duration_ms,
                           int n_trials, std::uint64_t seed, double bias) {
  Rng rng = make_rng(seed, 0);
  TwoIfcRecord r = simulate_2ifc_dprime(dprime(params, loc_deg, duration_ms), n_trials, rng, bias);
  r.loc_deg = loc_deg;
  r.duration_ms = duration_ms;
  return r;
}

double visibility_loss(const VisibilityParams& params, std::span<const TwoIfcRecord> records) {
  double sum = 0.0;
  for (const auto& r : records) {
    const double e = dprime(params, r.loc_deg, r.duration_ms) - r.dprime().dprime;
    sum += e * e;
  }
  return sum / static_cast<double>(records.size());
}

VisibilityFit fit_visibility(std::span<const TwoIfcRecord> records,
                             const VisibilityFitOptions& options) {
  if (records.size() < 10) throw ConfigError("fit_visibility needs at least 10 records");
  std::set<long> eccentricities;
  for (const auto& r : records) eccentricities.insert(std::lround(1e3 * r.loc_deg.norm()));
  if (eccentricities.size() < 3) {
    throw ConfigError("fit_visibility needs records at >= 3 eccentricities");
  }
  if (options.starts < 1) throw ConfigError("fit_visibility needs at least one start");

  // Observed d' once, outside the objective.
  std::vector<TwoIfcRecord> recs(records.begin(), records.end());
  std::vector<double> observed;
  for (const auto& r : recs) observed.push_back(r.dprime().dprime);

  auto objective = [&](std::span<const double> logp) {
    VisibilityParams p;
    p.p1 = std::exp(logp[0]);
    p.p2 = std::exp(logp[1]);
    p.p3 = std::exp(logp[2]);
    p.p4 = std::exp(logp[3]);
    p.p5 = std::exp(logp[4]);
    double sum = 0.0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const double e = dprime(p, recs[i].loc_deg, recs[i].duration_ms) - observed[i];
      sum += e * e;
    }
    return sum / static_cast<double>(recs.size());
  };

  GslErrorsOff quiet;
  VisibilityFit fit;
  fit.loss = std::numeric_limits<double>::infinity();
  for (int s = 0; s < options.starts; ++s) {
    Rng rng = make_rng(options.seed, static_cast<std::uint64_t>(s));
    std::vector<double> start(5);
    for (int i = 0; i < 5; ++i) {
      std::uniform_real_distribution<double> u(std::log(options.lower[i]), std::log(options.upper[i]));
      start[i] = u(rng);
    }
    ++fit.starts_tried;
    const SimplexResult r = minimize_with_restarts(objective, start, 0.5, options.max_iterations);
    if (!std::isfinite(r.value)) {
      ++fit.starts_discarded;
      continue;
    }
    fit.start_losses.push_back(r.value);
    if (r.value < fit.loss) {
      fit.loss = r.value;
      std::array<double, 5> p{};
      for (int i = 0; i < 5; ++i) p[i] = std::exp(r.x[i]);
      fit.params = VisibilityParams::from_array(p);
    }
  }
  if (!std::isfinite(fit.loss)) throw Error("fit_visibility: every start diverged");
  return fit;
}

double WeibullFit::probability(double x) const {
  const double v = inverted ? x_max - x : x;
  const double core = v <= 0.0 ? 0.0 : 1.0 - std::exp(-std::pow(v / alpha, beta));
  return guess_rate + (1.0 - guess_rate - lapse_rate) * core;
}

std::optional<double> WeibullFit::threshold(double p) const {
  const double span = 1.0 - guess_rate - lapse_rate;
  const double q = (p - guess_rate) / span;
  if (!(q > 0.0 && q < 1.0) || !(beta > 0.0)) return std::nullopt;
  const double v = alpha * std::pow(-std::log1p(-q), 1.0 / beta);
  return inverted ? x_max - v : v;
}

WeibullFit fit_weibull(std::span<const double> levels, std::span<const int> correct,
                       std::span<const int> total, bool inverted, std::optional<double> x_max) {
  if (levels.size() < 3) throw ConfigError("fit_weibull needs at least 3 stimulus levels");
  if (correct.size() != levels.size() || total.size() != levels.size()) {
    throw ConfigError("fit_weibull: mismatched input lengths");
  }
  WeibullFit fit;
  fit.inverted = inverted;
  fit.x_max = x_max.value_or(*std::max_element(levels.begin(), levels.end()));

  std::vector<double> xs;
  long all_correct = 0, all_total = 0;
  bool any_above_chance = false;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (total[i] <= 0 || correct[i] < 0 || correct[i] > total[i]) {
      throw ConfigError("fit_weibull: invalid counts");
    }
    xs.push_back(inverted ? fit.x_max - levels[i] : levels[i]);
    all_correct += correct[i];
    all_total += total[i];
    // One binomial SE above chance counts as signal.
    const double p = static_cast<double>(correct[i]) / total[i];
    const double se = std::sqrt(0.25 / total[i]);
    any_above_chance = any_above_chance || p > fit.guess_rate + se;
  }
  fit.unidentifiable = !any_above_chance;
  fit.boundary = all_correct == all_total;

  auto unpack = [&](std::span<const double> t, WeibullFit& w) {
    w.alpha = std::exp(t[0]);
    w.beta = std::exp(t[1]);
    w.lapse_rate = kMaxLapse / (1.0 + std::exp(-t[2]));
  };
  auto nll = [&](std::span<const double> t) {
    WeibullFit w = fit;
    unpack(t, w);
    double ll = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double core = xs[i] <= 0.0 ? 0.0 : -std::expm1(-std::pow(xs[i] / w.alpha, w.beta));
      double p = w.guess_rate + (1.0 - w.guess_rate - w.lapse_rate) * core;
      p = std::clamp(p, 1e-12, 1.0 - 1e-12);
      ll += correct[i] * std::log(p) + (total[i] - correct[i]) * std::log1p(-p);
    }
    return -ll;
  };

  std::vector<double> positive;
  for (double x : xs) if (x > 0.0) positive.push_back(x);
  if (positive.empty()) positive.push_back(1.0);
  std::sort(positive.begin(), positive.end());

  GslErrorsOff quiet;
  SimplexResult best;
  for (double a0 : {positive.front(), positive[positive.size() / 2], positive.back()}) {
    for (double b0 : {1.0, 2.5, 5.0}) {
      for (double l0 : {-3.0, 0.0}) {
        SimplexResult r = minimize_with_restarts(nll, {std::log(a0), std::log(b0), l0}, 0.5, 3000);
        if (r.value < best.value) best = std::move(r);
      }
    }
  }
  if (!std::isfinite(best.value)) throw Error("fit_weibull: likelihood is not finite");
  unpack(best.x, fit);
  fit.log_likelihood = -best.value;
  return fit;
}

void to_json(nlohmann::json& j, const VisibilityParams& p) {
  j = {{"p1", p.p1}, {"p2", p.p2}, {"p3", p.p3}, {"p4", p.p4}, {"p5", p.p5}};
}

void from_json(const nlohmann::json& j, VisibilityParams& p) {
  p.p1 = j.at("p1").get<double>();
  p.p2 = j.at("p2").get<double>();
  p.p3 = j.at("p3").get<double>();
  p.p4 = j.at("p4").get<double>();
  p.p5 = j.at("p5").get<double>();
}

void to_json(nlohmann::json& j, const TwoIfcRecord& r) {
  j = {{"loc_deg", {r.loc_deg.x, r.loc_deg.y}},
       {"duration_ms", r.duration_ms},
       {"hit", r.hit},
       {"cr", r.cr},
       {"n", r.n}};
}

void from_json(const nlohmann::json& j, TwoIfcRecord& r) {
  const auto& loc = j.at("loc_deg");
  r.loc_deg = {loc.at(0).get<double>(), loc.at(1).get<double>()};
  r.duration_ms = j.at("duration_ms").get<double>();
  r.hit = j.at("hit").get<double>();
  r.cr = j.at("cr").get<double>();
  r.n = j.at("n").get<int>();
}

void to_json(nlohmann::json& j, const WeibullFit& w) {
  j = {{"alpha", w.alpha},         {"beta", w.beta},
       {"guess_rate", w.guess_rate}, {"lapse_rate", w.lapse_rate},
       {"inverted", w.inverted},   {"x_max", w.x_max},
       {"log_likelihood", w.log_likelihood},
       {"unidentifiable", w.unidentifiable},
       {"boundary", w.boundary}};
}

}  // namespace bvs
