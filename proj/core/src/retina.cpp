#include "bvs/retina.hpp"

#include <algorithm>

namespace bvs {
namespace {

// Point at arc length s (clockwise from the top-left corner) on the
// perimeter of the axis-aligned square of half-extent h around (cx, cy).
// Rows grow downward, so "clockwise" walks right along the top edge first.
Vec2 perimeter_point(double cx, double cy, double h, double s) {
  if (h <= 0.0) return {cx, cy};
  const double side = 2.0 * h;
  const int edge = std::min(3, static_cast<int>(s / side));
  const double t = s - edge * side;
  switch (edge) {
    case 0: return {cx - h + t, cy - h};
    case 1: return {cx + h, cy - h + t};
    case 2: return {cx + h - t, cy + h};
    default: return {cx - h, cy + h - t};
  }
}

double read_or_fill(const Image& img, int col, int row, double fill) {
  return img.contains(col, row) ? img.at(col, row) : fill;
}

double sample(const Image& img, Vec2 p, Interpolation mode, double fill) {
  if (mode == Interpolation::Nearest) {
    return read_or_fill(img, static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)),
                        fill);
  }
  const double x0 = std::floor(p.x);
  const double y0 = std::floor(p.y);
  const double fx = p.x - x0;
  const double fy = p.y - y0;
  const int c0 = static_cast<int>(x0);
  const int r0 = static_cast<int>(y0);
  const double v00 = read_or_fill(img, c0, r0, fill);
  const double v10 = fx == 0.0 ? 0.0 : read_or_fill(img, c0 + 1, r0, fill);
  const double v01 = fy == 0.0 ? 0.0 : read_or_fill(img, c0, r0 + 1, fill);
  const double v11 = fx == 0.0 || fy == 0.0 ? 0.0 : read_or_fill(img, c0 + 1, r0 + 1, fill);
  return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
}

}  // namespace

void FcgConfig::validate() const {
  if (i_fovea < 1 || i_max <= i_fovea) throw ConfigError("FCG requires 1 <= i_fovea < i_max");
  if (!(r_max > 0.0)) throw ConfigError("FCG r_max must be positive");
}

std::array<double, 3> FcgSolution::residuals() const {
  const double f = config.i_fovea;
  const double m = config.i_max;
  const double at_fovea = std::pow(a, f + b);
  return {at_fovea + c - f, at_fovea * std::log(a) - 1.0, std::pow(a, m + b) + c - config.r_max};
}

FcgSolution solve_fcg(const FcgConfig& config) {
  config.validate();
  const double n = config.i_max - config.i_fovea;
  const double target = config.r_max - config.i_fovea;
  // g is increasing in x with g(0+) = n - target.
  auto g = [&](double x) { return std::expm1(n * x) / x - target; };
  if (!(target > n)) {
    throw ConfigError("FCG has no solution: r_max must exceed i_max");
  }

  double lo = 1e-12;
  double hi = 1e-3;
  while (g(hi) <= 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 50.0) throw ConfigError("FCG: failed to bracket the growth rate");
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) > 0.0 ? hi : lo) = mid;
  }
  const double x = 0.5 * (lo + hi);

  FcgSolution sol;
  sol.config = config;
  sol.a = std::exp(x);
  sol.b = -std::log(x) / x - config.i_fovea;
  sol.c = config.i_fovea - 1.0 / x;
  sol.ring_radii.resize(static_cast<std::size_t>(config.i_max));
  for (int i = 1; i <= config.i_max; ++i) {
    sol.ring_radii[static_cast<std::size_t>(i - 1)] =
        i <= config.i_fovea ? static_cast<double>(i)
                            : config.i_fovea + std::expm1((i - config.i_fovea) * x) / x;
  }
  return sol;
}

std::array<int, 2> ring_output_pixel(int i_max, int ring, int k) {
  const double center = i_max - 0.5;
  const Vec2 p = perimeter_point(center, center, ring - 0.5, static_cast<double>(k));
  return {static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))};
}

Image retinal_sample(const Image& source, Vec2 fixation_px, const FcgSolution& solution,
                     Interpolation interpolation, double fill) {
  const FcgConfig& cfg = solution.config;
  const int side = cfg.output_side();
  Image out(side, side, fill);

  const int ax = static_cast<int>(std::lround(fixation_px.x));
  const int ay = static_cast<int>(std::lround(fixation_px.y));

  // Fovea: integer-offset copy.
  const int f0 = cfg.i_max - cfg.i_fovea;
  for (int row = f0; row < f0 + 2 * cfg.i_fovea; ++row) {
    for (int col = f0; col < f0 + 2 * cfg.i_fovea; ++col) {
      out.at(col, row) = read_or_fill(source, ax - cfg.i_max + col, ay - cfg.i_max + row, fill);
    }
  }

  const double cx = ax - 0.5;
  const double cy = ay - 0.5;
  for (int ring = cfg.i_fovea + 1; ring <= cfg.i_max; ++ring) {
    const int n = ring_sample_count(ring);
    const double h = solution.radius(ring) - 0.5;
    const double spacing = 8.0 * h / n;
    for (int k = 0; k < n; ++k) {
      const Vec2 p = perimeter_point(cx, cy, h, k * spacing);
      const auto [col, row] = ring_output_pixel(cfg.i_max, ring, k);
      out.at(col, row) = sample(source, p, interpolation, fill);
    }
  }
  return out;
}

RetinalImage retinal_transform(const SearchImage& image, Vec2 fixation_deg,
                               const FcgSolution& solution, Interpolation interpolation) {
  RetinalImage r;
  r.pixels = retinal_sample(image.pixels, image.frame.to_pixel(fixation_deg), solution,
                            interpolation, solution.config.fill_value);
  r.fixation_deg = fixation_deg;
  r.source_seed = image.seed;
  return r;
}

Image foveated_render(const RetinalImage& retinal, const ImageFrame& frame,
                      const FcgSolution& solution) {
  const FcgConfig& cfg = solution.config;
  Image out(frame.size_px, frame.size_px, cfg.fill_value);
  const Vec2 fix = frame.to_pixel(retinal.fixation_deg);
  const double cx = std::lround(fix.x) - 0.5;
  const double cy = std::lround(fix.y) - 0.5;
  const double outer = solution.radius(cfg.i_max);

  for (int row = 0; row < frame.size_px; ++row) {
    for (int col = 0; col < frame.size_px; ++col) {
      const double dx = col - cx;
      const double dy = row - cy;
      const double m = std::max(std::abs(dx), std::abs(dy));
      if (m + 0.5 > outer + 0.5) continue;
      // Ring whose sampling square (half-extent r(i) - 0.5) is closest.
      const auto it = std::lower_bound(solution.ring_radii.begin(), solution.ring_radii.end(),
                                       m + 0.5);
      int ring = static_cast<int>(it - solution.ring_radii.begin()) + 1;
      if (ring > 1 && (it == solution.ring_radii.end() ||
                       std::abs(solution.radius(ring - 1) - 0.5 - m) <
                           std::abs(*it - 0.5 - m))) {
        --ring;
      }
      ring = std::clamp(ring, 1, cfg.i_max);
      // Arc-length fraction of (dx, dy) on its own square, clockwise from
      // the top-left corner.
      double s = 0.0;
      if (m > 0.0) {
        if (dy <= -m + 1e-12 && dx < m) s = dx + m;
        else if (dx >= m - 1e-12 && dy < m) s = 2 * m + (dy + m);
        else if (dy >= m - 1e-12 && dx > -m) s = 4 * m + (m - dx);
        else s = 6 * m + (m - dy);
      }
      const int n = ring_sample_count(ring);
      const double frac = m > 0.0 ? s / (8.0 * m) : 0.0;
      const int k = static_cast<int>(std::lround(frac * n)) % n;
      const auto [oc, orow] = ring_output_pixel(cfg.i_max, ring, k);
      out.at(col, row) = retinal.pixels.at(oc, orow);
    }
  }
  return out;
}

}  // namespace bvs
