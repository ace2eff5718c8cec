#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bvs/image.hpp"
#include "bvs/stimulus.hpp"

namespace bvs {

/// Modified foveal Cartesian geometry: a 2*i_fovea square fovea copied at
/// native resolution, surrounded by square rings whose half-width grows as
/// a^(i+b) + c so that ring i_max reaches r_max.
struct FcgConfig {
  int i_fovea = 8;
  int i_max = 112;
  double r_max = 651.0;
  double fill_value = 0.5;

  int output_side() const { return 2 * i_max; }
  void validate() const;
};

enum class Interpolation { Bilinear, Nearest };

struct FcgSolution {
  FcgConfig config;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  /// ring_radii[i-1] = r(i) for i = 1..i_max.
  std::vector<double> ring_radii;

  double radius(int ring) const { return ring_radii.at(static_cast<std::size_t>(ring - 1)); }
  /// Residuals of (intersection, slope match, outer radius) evaluated with
  /// the direct power form.
  std::array<double, 3> residuals() const;
};

/// Reduces the three constraints to one equation in x = ln a,
/// expm1((i_max - i_fovea) x) / x = r_max - i_fovea, and bisects it.
/// Throws ConfigError when no root exists (r_max <= i_max).
FcgSolution solve_fcg(const FcgConfig& config);

/// Number of samples on ring i (also the pixel count of output ring i).
constexpr int ring_sample_count(int ring) { return 8 * ring - 4; }
constexpr long total_ring_samples(int i_max) {
  long n = 0;
  for (int i = 1; i <= i_max; ++i) n += ring_sample_count(i);
  return n;
}

/// Output pixel (col,row) holding sample k of ring i. Sample 0 is the
/// ring's top-left corner; k increases clockwise.
std::array<int, 2> ring_output_pixel(int i_max, int ring, int k);

struct RetinalImage {
  Image pixels;
  Vec2 fixation_deg;
  std::uint64_t source_seed = 0;
};

/// Core resampler on raw pixels. `fixation_px` is rounded to the nearest
/// pixel; the fovea block is a direct copy and out-of-range reads return
/// `fill`.
Image retinal_sample(const Image& source, Vec2 fixation_px, const FcgSolution& solution,
                     Interpolation interpolation, double fill);

RetinalImage retinal_transform(const SearchImage& image, Vec2 fixation_deg,
                               const FcgSolution& solution,
                               Interpolation interpolation = Interpolation::Bilinear);

/// Projects a retinal image back onto the source grid (nearest ring sample
/// per pixel) to show what the retina keeps. Pixels beyond the outermost
/// ring get the fill value.
Image foveated_render(const RetinalImage& retinal, const ImageFrame& frame,
                      const FcgSolution& solution);

}  // namespace bvs
