#include "bvs/stimulus.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <complex>
#include <memory>
#include <mutex>
#include <numeric>

namespace bvs {
namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

// Real-valued field on an n x n canvas whose amplitude spectrum is 1/f
// (f in cycles per canvas) with independent uniform phases; DC is zero.
std::vector<double> pink_noise_canvas(int n, Rng& rng) {
  const int half = n / 2 + 1;
  auto spectrum = fftw_buffer<fftw_complex>(static_cast<std::size_t>(n) * half);
  auto field = fftw_buffer<double>(static_cast<std::size_t>(n) * n);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

  auto bin = [&](int ky, int kx) -> fftw_complex& { return spectrum[ky * half + kx]; };
  for (int ky = 0; ky < n; ++ky) {
    const int fy = ky <= n / 2 ? ky : ky - n;
    for (int kx = 0; kx < half; ++kx) {
      const double f = std::hypot(static_cast<double>(kx), static_cast<double>(fy));
      const double amp = f > 0.0 ? 1.0 / f : 0.0;
      const double ph = phase(rng);
      bin(ky, kx)[0] = amp * std::cos(ph);
      bin(ky, kx)[1] = amp * std::sin(ph);
    }
  }
  // Columns kx = 0 and kx = n/2 are their own mirror: enforce conjugate
  // symmetry there so the inverse transform is exactly real.
  for (int kx : {0, n / 2}) {
    for (int ky = n / 2 + 1; ky < n; ++ky) {
      bin(ky, kx)[0] = bin(n - ky, kx)[0];
      bin(ky, kx)[1] = -bin(n - ky, kx)[1];
    }
    for (int ky : {0, n / 2}) {
      const double mag = std::hypot(bin(ky, kx)[0], bin(ky, kx)[1]);
      bin(ky, kx)[0] = bin(ky, kx)[0] >= 0.0 ? mag : -mag;
      bin(ky, kx)[1] = 0.0;
    }
  }

  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_c2r_2d(n, n, spectrum.get(), field.get(), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return {field.get(), field.get() + static_cast<std::size_t>(n) * n};
}

}  // namespace

void ScreenGeometry::validate() const {
  if (width_px <= 0 || height_px <= 0 || !(width_cm > 0) || !(height_cm > 0) ||
      !(viewing_distance_cm > 0) || !(field_deg > 0) || field_deg >= 180.0) {
    throw ConfigError("screen geometry must be positive");
  }
  const double ppd = pixels_per_degree();
  if (!std::isfinite(ppd) || ppd <= 0.0) throw ConfigError("degenerate screen geometry");
}

int ScreenGeometry::field_px() const {
  const double cm_per_px = width_cm / width_px;
  const double half_angle = 0.5 * field_deg * kPi / 180.0;
  return static_cast<int>(std::lround(2.0 * viewing_distance_cm * std::tan(half_angle) / cm_per_px));
}

double ScreenGeometry::pixels_per_degree() const { return field_px() / field_deg; }

Vec2 degrees_to_pixels(Vec2 v_deg, const ScreenGeometry& geom) {
  return geom.pixels_per_degree() * v_deg;
}

Vec2 pixels_to_degrees(Vec2 v_px, const ScreenGeometry& geom) {
  return (1.0 / geom.pixels_per_degree()) * v_px;
}

Vec2 ImageFrame::to_pixel(Vec2 deg) const {
  return {center_px() + deg.x * pixels_per_degree, center_px() - deg.y * pixels_per_degree};
}

Vec2 ImageFrame::to_degrees(Vec2 px) const {
  return {(px.x - center_px()) / pixels_per_degree, (center_px() - px.y) / pixels_per_degree};
}

bool ImageFrame::in_disk(int col, int row) const {
  const double dx = col - center_px();
  const double dy = row - center_px();
  return dx * dx + dy * dy <= radius_px() * radius_px();
}

void NoiseSpec::validate() const {
  if (diameter_px <= 0) throw ConfigError("noise diameter must be positive");
  if (!(rms_contrast >= 0.0 && rms_contrast <= 0.5)) {
    throw ConfigError("rms_contrast must lie in [0, 0.5]");
  }
  if (!(mean_luminance > 0.0 && mean_luminance <= 1.0)) {
    throw ConfigError("mean_luminance must lie in (0, 1]");
  }
}

void GaborSpec::validate() const {
  if (diameter_px <= 0) throw ConfigError("gabor diameter must be positive");
  if (!(contrast >= 0.0 && contrast < 1.0)) throw ConfigError("gabor contrast must lie in [0, 1)");
  if (!(spatial_freq_cpd > 0.0)) throw ConfigError("gabor frequency must be positive");
}

SearchImage generate_noise(const NoiseSpec& spec, double pixels_per_degree) {
  spec.validate();
  const int n = static_cast<int>(
      std::bit_ceil(static_cast<unsigned>(std::max(spec.canvas_px, spec.diameter_px))));
  const int d = spec.diameter_px;

  SearchImage out;
  out.frame = ImageFrame{d, pixels_per_degree};
  out.mean_luminance = spec.mean_luminance;
  out.seed = spec.seed;
  out.pixels = Image(d, d, spec.mean_luminance);
  if (spec.rms_contrast == 0.0) return out;

  Rng rng = make_rng(spec.seed, 0);
  const std::vector<double> canvas = pink_noise_canvas(n, rng);
  const int offset = (n - d) / 2;

  double sum = 0.0;
  std::size_t count = 0;
  for (int row = 0; row < d; ++row) {
    for (int col = 0; col < d; ++col) {
      if (!out.frame.in_disk(col, row)) continue;
      sum += canvas[static_cast<std::size_t>(row + offset) * n + (col + offset)];
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (int row = 0; row < d; ++row) {
    for (int col = 0; col < d; ++col) {
      if (!out.frame.in_disk(col, row)) continue;
      const double v = canvas[static_cast<std::size_t>(row + offset) * n + (col + offset)] - mean;
      ss += v * v;
    }
  }
  const double sd = std::sqrt(ss / static_cast<double>(count));

  const double lum = spec.mean_luminance;
  std::size_t clamped = 0;
  for (int row = 0; row < d; ++row) {
    for (int col = 0; col < d; ++col) {
      if (!out.frame.in_disk(col, row)) continue;
      const double z =
          (canvas[static_cast<std::size_t>(row + offset) * n + (col + offset)] - mean) / sd;
      const double v = lum * (1.0 + spec.rms_contrast * z);
      const double c = std::clamp(v, 0.0, 1.0);
      clamped += c != v;
      out.pixels.at(col, row) = c;
    }
  }
  out.clamped_pixels = clamped;
  out.clamp_warning = static_cast<double>(clamped) > 0.01 * static_cast<double>(count);
  return out;
}

Image render_gabor(const GaborSpec& spec, double pixels_per_degree) {
  spec.validate();
  const double radius = spec.radius_px();
  const int half = static_cast<int>(std::ceil(radius));
  const int side = 2 * half + 1;
  const double theta = spec.orientation_deg * kPi / 180.0;
  const Vec2 axis{-std::sin(theta), std::cos(theta)};
  const double cycles_per_px = spec.spatial_freq_cpd / pixels_per_degree;

  Image patch(side, side, 0.0);
  for (int row = 0; row < side; ++row) {
    for (int col = 0; col < side; ++col) {
      const double dx = col - half;
      const double dy = half - row;
      const double r = std::hypot(dx, dy);
      if (r >= radius) continue;
      const double window = 0.5 * (1.0 + std::cos(kPi * r / radius));
      const double u = dx * axis.x + dy * axis.y;
      patch.at(col, row) =
          spec.contrast * std::cos(2.0 * kPi * cycles_per_px * u + spec.phase_rad) * window;
    }
  }
  return patch;
}

double max_target_eccentricity_deg(const ImageFrame& frame, double patch_radius_px) {
  return (frame.radius_px() - patch_radius_px - 0.5) / frame.pixels_per_degree;
}

SearchImage embed_target(SearchImage noise, const Image& patch, Vec2 location_deg,
                         double contrast) {
  if (patch.width() != patch.height() || patch.width() % 2 == 0) {
    throw ConfigError("target patch must be square with odd side");
  }
  const int half = patch.width() / 2;
  const Vec2 px = noise.frame.to_pixel(location_deg);
  const int cx = static_cast<int>(std::lround(px.x));
  const int cy = static_cast<int>(std::lround(px.y));
  const double ecc_px = std::hypot(cx - noise.frame.center_px(), cy - noise.frame.center_px());
  if (!(ecc_px + half <= noise.frame.radius_px())) {
    throw ConfigError("target location outside the noise disk");
  }

  const double lum = noise.mean_luminance;
  for (int row = 0; row < patch.height(); ++row) {
    for (int col = 0; col < patch.width(); ++col) {
      const double g = patch.at(col, row);
      if (g == 0.0) continue;
      double& p = noise.pixels.at(cx - half + col, cy - half + row);
      const double v = p + lum * g;
      p = std::clamp(v, 0.0, 1.0);
      noise.clamped_pixels += p != v;
    }
  }
  noise.target_location_deg = noise.frame.to_degrees({static_cast<double>(cx), static_cast<double>(cy)});
  noise.target_contrast = contrast;
  return noise;
}

Vec2 sample_target_location(Rng& rng, const ImageFrame& frame, double patch_radius_px) {
  const double rmax = max_target_eccentricity_deg(frame, patch_radius_px);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r = rmax * std::sqrt(unit(rng));
  const double a = 2.0 * kPi * unit(rng);
  return {r * std::cos(a), r * std::sin(a)};
}

SearchImage make_search_image(const StimulusSpec& spec, std::optional<Vec2> location_deg) {
  spec.geometry.validate();
  const double ppd = spec.geometry.pixels_per_degree();
  SearchImage noise = generate_noise(spec.noise, ppd);
  const Image patch = render_gabor(spec.gabor, ppd);
  if (!location_deg) {
    Rng rng = make_rng(spec.noise.seed, 1);
    location_deg = sample_target_location(rng, noise.frame, patch.width() / 2);
  }
  return embed_target(std::move(noise), patch, *location_deg, spec.gabor.contrast);
}

}  // namespace bvs
