#pragma once

#include <cstdint>
#include <optional>

#include "bvs/common.hpp"
#include "bvs/image.hpp"

namespace bvs {

/// Physical display and viewing distance. Houses the degree <-> pixel
/// conversion used everywhere else.
struct ScreenGeometry {
  int width_px = 1920;
  int height_px = 1080;
  double width_cm = 54.3744;
  double height_cm = 30.2616;
  double viewing_distance_cm = 70.0;
  /// Visual angle of the search field the linear px/deg scale is fitted to.
  double field_deg = 15.0;

  void validate() const;
  /// Whole pixels subtended by `field_deg` (centered on the line of sight).
  int field_px() const;
  /// Linear scale: field_px() / field_deg (651 / 15 = 43.4 for the defaults).
  double pixels_per_degree() const;
};

Vec2 degrees_to_pixels(Vec2 v_deg, const ScreenGeometry& geom);
Vec2 pixels_to_degrees(Vec2 v_px, const ScreenGeometry& geom);

/// Maps image-centered degrees (x right, y up) to continuous pixel
/// coordinates (col right, row down) of a square image of side `size_px`.
struct ImageFrame {
  int size_px = 651;
  double pixels_per_degree = 43.4;

  double center_px() const { return 0.5 * (size_px - 1); }
  double radius_px() const { return 0.5 * size_px; }
  double radius_deg() const { return radius_px() / pixels_per_degree; }
  Vec2 to_pixel(Vec2 deg) const;
  Vec2 to_degrees(Vec2 px) const;
  /// True when pixel (col,row) lies inside the circular noise disk.
  bool in_disk(int col, int row) const;
};

struct NoiseSpec {
  int diameter_px = 651;
  double rms_contrast = 0.2;
  double mean_luminance = 0.5;
  std::uint64_t seed = 0;
  /// Synthesis canvas side; rounded up to a power of two >= diameter_px.
  int canvas_px = 1024;

  void validate() const;
};

struct GaborSpec {
  int diameter_px = 12;
  double spatial_freq_cpd = 6.0;
  /// Counterclockwise from vertical; the carrier varies along this axis.
  double orientation_deg = 45.0;
  double contrast = 0.15;
  double phase_rad = 0.0;

  void validate() const;
  double radius_px() const { return 0.5 * diameter_px; }
};

struct SearchImage {
  Image pixels;
  ImageFrame frame;
  double mean_luminance = 0.5;
  std::uint64_t seed = 0;
  std::optional<Vec2> target_location_deg;
  double target_contrast = 0.0;
  /// Pixels clamped to [0,1] during synthesis and embedding.
  std::size_t clamped_pixels = 0;
  /// Set when clamping touched more than 1% of the disk.
  bool clamp_warning = false;
};

/// 1/f-amplitude, random-phase noise disk normalized to exact mean luminance
/// and RMS contrast over the disk interior (before clamping).
SearchImage generate_noise(const NoiseSpec& spec, double pixels_per_degree = 43.4);

/// Raised-cosine windowed Gabor on a (diameter+1)^2 grid centered on the
/// middle pixel; the window reaches zero at radius diameter/2.
Image render_gabor(const GaborSpec& spec, double pixels_per_degree = 43.4);

/// Adds mean_luminance * patch at the pixel nearest `location_deg`, then
/// clamps to [0,1]. Throws ConfigError if the patch is not fully inside the
/// disk. The stored target location is the pixel-snapped position.
SearchImage embed_target(SearchImage noise, const Image& patch, Vec2 location_deg,
                         double contrast);

/// Largest target eccentricity (deg) that keeps a patch of `patch_radius_px`
/// inside the disk.
double max_target_eccentricity_deg(const ImageFrame& frame, double patch_radius_px);

/// Uniform draw over the disk of admissible target locations.
Vec2 sample_target_location(Rng& rng, const ImageFrame& frame, double patch_radius_px);

struct StimulusSpec {
  NoiseSpec noise;
  GaborSpec gabor;
  ScreenGeometry geometry;
};

/// Noise + embedded target. When `location_deg` is empty the location is
/// drawn uniformly from a stream derived from the noise seed.
SearchImage make_search_image(const StimulusSpec& spec, std::optional<Vec2> location_deg);

}  // namespace bvs
