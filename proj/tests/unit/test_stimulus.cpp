#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "bvs/stimulus.hpp"
#include "oracles/gabor.hpp"
#include "oracles/spectrum.hpp"

using namespace bvs;

namespace {

struct DiskStats {
  double mean = 0.0;
  double sd = 0.0;
};

DiskStats disk_stats(const SearchImage& img) {
  double s = 0.0, ss = 0.0;
  long n = 0;
  for (int r = 0; r < img.pixels.height(); ++r)
    for (int c = 0; c < img.pixels.width(); ++c)
      if (img.frame.in_disk(c, r)) {
        s += img.pixels.at(c, r);
        ss += img.pixels.at(c, r) * img.pixels.at(c, r);
        ++n;
      }
  const double mean = s / n;
  return {mean, std::sqrt(ss / n - mean * mean)};
}

}  // namespace

TEST(Geometry, FieldOf15DegreesIs651Pixels) {
  const ScreenGeometry g;
  EXPECT_EQ(g.field_px(), 651);
  const Vec2 p = degrees_to_pixels({15, 0}, g);
  EXPECT_NEAR(p.x, 651.0, 1e-9);
  EXPECT_EQ(p.y, 0.0);
}

TEST(Geometry, OriginMapsToOrigin) {
  const Vec2 p = degrees_to_pixels({0, 0}, ScreenGeometry{});
  EXPECT_EQ(p.x, 0.0);
  EXPECT_EQ(p.y, 0.0);
}

TEST(Geometry, OneDegreeIsFieldPixelsOverFieldDegrees) {
  const double expected = 651.0 / 15.0;
  const Vec2 p = degrees_to_pixels({1, 1}, ScreenGeometry{});
  EXPECT_NEAR(p.x, expected, 1e-12);
  EXPECT_NEAR(p.y, expected, 1e-12);
  EXPECT_NEAR(expected, 43.4, 1e-12);
}

TEST(Geometry, InverseIsIdentity) {
  const ScreenGeometry g;
  for (Vec2 v : {Vec2{3.3, -1.2}, Vec2{-7.5, 7.5}, Vec2{0.01, 0}}) {
    const Vec2 back = pixels_to_degrees(degrees_to_pixels(v, g), g);
    EXPECT_NEAR(back.x, v.x, 1e-12);
    EXPECT_NEAR(back.y, v.y, 1e-12);
  }
}

TEST(Geometry, RejectsNonPositiveFields) {
  ScreenGeometry g;
  g.viewing_distance_cm = 0;
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Noise, ContrastIsExactOverDisk) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    NoiseSpec spec;
    spec.seed = seed;
    const SearchImage img = generate_noise(spec);
    const DiskStats st = disk_stats(img);
    if (img.clamped_pixels == 0) {
      EXPECT_NEAR(st.mean, 0.5, 1e-9);
      EXPECT_NEAR(st.sd / st.mean, 0.2, 1e-9);
    } else {
      EXPECT_NEAR(st.sd / st.mean, 0.2, 0.002);
    }
  }
}

TEST(Noise, ZeroContrastIsUniform) {
  NoiseSpec spec;
  spec.rms_contrast = 0.0;
  spec.seed = 9;
  const SearchImage img = generate_noise(spec);
  for (double v : img.pixels.pixels()) ASSERT_EQ(v, 0.5);
}

TEST(Noise, ExteriorEqualsMeanLuminance) {
  NoiseSpec spec;
  spec.seed = 11;
  spec.mean_luminance = 0.4;
  const SearchImage img = generate_noise(spec);
  const double c = 0.5 * (img.pixels.width() - 1);
  for (int r = 0; r < img.pixels.height(); ++r)
    for (int col = 0; col < img.pixels.width(); ++col)
      if (std::hypot(col - c, r - c) > 325.5) {
        ASSERT_EQ(img.pixels.at(col, r), 0.4);
      }
}

TEST(Noise, Deterministic) {
  NoiseSpec spec;
  spec.seed = 42;
  EXPECT_EQ(generate_noise(spec).pixels, generate_noise(spec).pixels);
  NoiseSpec other = spec;
  other.seed = 43;
  EXPECT_NE(generate_noise(spec).pixels, generate_noise(other).pixels);
}

TEST(Noise, PixelsInUnitRange) {
  NoiseSpec spec;
  spec.seed = 5;
  spec.rms_contrast = 0.5;
  const SearchImage img = generate_noise(spec);
  for (double v : img.pixels.pixels()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_EQ(img.clamp_warning, img.clamped_pixels > 0.01 * 0.25 * kPi * 651 * 651);
}

TEST(Noise, SpectrumFallsAsOneOverF) {
  std::vector<double> avg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    NoiseSpec spec;
    spec.seed = seed;
    const auto a = oracle::radial_amplitude(generate_noise(spec).pixels, 448);
    if (avg.empty()) avg.assign(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) avg[i] += a[i];
  }
  EXPECT_NEAR(oracle::loglog_slope(avg, 2, 150), -1.0, 0.1);
  // Monotone decrease of the ensemble-averaged amplitude across octaves.
  double prev = 1e300;
  for (std::size_t f = 2; f <= 128; f *= 2) {
    double band = 0;
    for (std::size_t k = f; k < 2 * f; ++k) band += avg[k];
    band /= static_cast<double>(f);
    EXPECT_LT(band, prev) << "octave starting at " << f;
    prev = band;
  }
}

TEST(Gabor, ZeroContrastIsZero) {
  GaborSpec g;
  g.contrast = 0.0;
  const Image p = render_gabor(g);
  for (double v : p.pixels()) EXPECT_EQ(v, 0.0);
}

TEST(Gabor, CenterValueIsContrastTimesCosPhase) {
  GaborSpec g;
  g.contrast = 0.15;
  g.phase_rad = 0.7;
  const Image p = render_gabor(g);
  EXPECT_NEAR(p.at(p.width() / 2, p.height() / 2), 0.15 * std::cos(0.7), 1e-15);
}

TEST(Gabor, MatchesPixelwiseEvaluation) {
  for (double phase : {0.0, 1.1}) {
    GaborSpec g;
    g.contrast = 0.15;
    g.phase_rad = phase;
    const Image p = render_gabor(g);
    const auto ref = oracle::gabor_pixels(0.15, 6.0, 43.4, 45.0, phase, 6.0);
    const int half = p.width() / 2;
    ASSERT_EQ(ref.size(), p.size());
    double mean_abs = 0.0, ref_mean_abs = 0.0;
    for (const auto& v : ref) {
      const double got = p.at(half + v.dx, half - v.dy);
      EXPECT_NEAR(got, v.value, 1e-14);
      mean_abs += std::abs(got);
      ref_mean_abs += std::abs(v.value);
    }
    EXPECT_NEAR(mean_abs / p.size(), ref_mean_abs / ref.size(), 1e-15);
  }
}

TEST(Gabor, NearlyZeroMean) {
  GaborSpec g;
  g.contrast = 0.15;
  const Image p = render_gabor(g);
  double s = 0.0, peak = 0.0;
  for (double v : p.pixels()) {
    s += v;
    peak = std::max(peak, std::abs(v));
  }
  EXPECT_LT(std::abs(s / p.size()), 0.1 * peak);
}

TEST(Embed, ZeroContrastLeavesNoiseUnchanged) {
  NoiseSpec spec;
  spec.seed = 3;
  const SearchImage noise = generate_noise(spec);
  GaborSpec g;
  g.contrast = 0.15;
  Image patch = render_gabor(g);
  for (auto& v : patch.pixels()) v = 0.0;
  const SearchImage out = embed_target(noise, patch, {1.0, -2.0}, 0.0);
  EXPECT_EQ(out.pixels, noise.pixels);
}

TEST(Embed, CenterShiftIsMeanLuminanceTimesPatchCenter) {
  NoiseSpec spec;
  spec.seed = 7;
  const SearchImage noise = generate_noise(spec);
  GaborSpec g;
  g.contrast = 0.15;
  const Image patch = render_gabor(g);
  const SearchImage out = embed_target(noise, patch, {0.0, 0.0}, 0.15);
  const int c = 325;
  const double expect = noise.pixels.at(c, c) + 0.5 * 0.15;
  if (expect <= 1.0) {
    EXPECT_NEAR(out.pixels.at(c, c), expect, 1e-15);
  }
}

TEST(Embed, SubtractingPatchRecoversNoise) {
  NoiseSpec spec;
  spec.seed = 8;
  const SearchImage noise = generate_noise(spec);
  GaborSpec g;
  g.contrast = 0.15;
  const Image patch = render_gabor(g);
  const Vec2 loc{2.0, 1.0};
  const SearchImage out = embed_target(noise, patch, loc, 0.15);
  const Vec2 px = out.frame.to_pixel(*out.target_location_deg);
  const int cx = static_cast<int>(std::lround(px.x)), cy = static_cast<int>(std::lround(px.y));
  const int half = patch.width() / 2;
  std::size_t clamped = 0;
  for (int r = 0; r < patch.height(); ++r)
    for (int c = 0; c < patch.width(); ++c) {
      const double raw = noise.pixels.at(cx - half + c, cy - half + r) + 0.5 * patch.at(c, r);
      if (raw < 0.0 || raw > 1.0) {
        ++clamped;
        continue;
      }
      EXPECT_NEAR(out.pixels.at(cx - half + c, cy - half + r) - 0.5 * patch.at(c, r),
                  noise.pixels.at(cx - half + c, cy - half + r), 1e-15);
    }
  EXPECT_LE(clamped, out.clamped_pixels);
}

TEST(Embed, OutsideDiskIsRejected) {
  NoiseSpec spec;
  const SearchImage noise = generate_noise(spec);
  const Image patch = render_gabor(GaborSpec{});
  EXPECT_THROW(embed_target(noise, patch, {7.4, 0.0}, 0.15), ConfigError);
  EXPECT_THROW(embed_target(noise, patch, {6.0, 6.0}, 0.15), ConfigError);
}

TEST(Embed, SampledTargetsStayInsideDisk) {
  const ImageFrame frame;
  Rng rng = make_rng(4);
  const double lim = max_target_eccentricity_deg(frame, 6.0);
  for (int i = 0; i < 10000; ++i) EXPECT_LE(sample_target_location(rng, frame, 6.0).norm(), lim + 1e-12);
}

TEST(SearchImageBuilder, DeterministicWithRandomTarget) {
  StimulusSpec spec;
  spec.noise.seed = 17;
  const SearchImage a = make_search_image(spec, std::nullopt);
  const SearchImage b = make_search_image(spec, std::nullopt);
  EXPECT_EQ(a.pixels, b.pixels);
  ASSERT_TRUE(a.target_location_deg.has_value());
  EXPECT_EQ(*a.target_location_deg, *b.target_location_deg);
  EXPECT_LT(a.target_location_deg->norm(), 7.5);
}
