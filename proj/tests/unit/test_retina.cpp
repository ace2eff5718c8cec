#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "bvs/retina.hpp"
#include "oracles/fcg.hpp"

using namespace bvs;

TEST(FcgSolve, GrowthFactorMatchesDirectBisection) {
  const FcgSolution s = solve_fcg(FcgConfig{});
  const auto ref = oracle::solve_ring_law(8, 112, 651.0);
  EXPECT_GT(s.a, 1.028);
  EXPECT_LT(s.a, 1.031);
  EXPECT_NEAR(s.a, ref.a, 1e-12);
  EXPECT_NEAR(s.b, ref.b, 1e-6);
  EXPECT_NEAR(s.c, ref.c, 1e-9);
  for (int i = 9; i <= 112; ++i) EXPECT_NEAR(s.radius(i), ref.radius(i), 1e-7) << i;
}

TEST(FcgSolve, ResidualsBelowTolerance) {
  const FcgSolution s = solve_fcg(FcgConfig{});
  for (double r : s.residuals()) EXPECT_LE(std::abs(r), 1e-9);
}

TEST(FcgSolve, FoveaIsLinearAndJunctionIsSmooth) {
  const FcgSolution s = solve_fcg(FcgConfig{});
  for (int i = 1; i <= 8; ++i) EXPECT_DOUBLE_EQ(s.radius(i), i);
  EXPECT_NEAR(s.radius(112), 651.0, 1e-9);
  const double step = s.radius(9) - s.radius(8);
  EXPECT_GT(step, 1.0);
  EXPECT_LT(step, 1.1);
  for (int i = 2; i <= 112; ++i) EXPECT_GT(s.radius(i), s.radius(i - 1));
}

TEST(FcgSolve, UnsolvableConfigurationIsRejected) {
  FcgConfig c;
  c.r_max = 100.0;  // not reachable with growth >= 1 per ring
  EXPECT_THROW(solve_fcg(c), ConfigError);
}

TEST(Rings, PixelCountIdentity) {
  EXPECT_EQ(total_ring_samples(112), 224L * 224L);
  for (int n : {1, 5, 17, 64}) EXPECT_EQ(total_ring_samples(n), 4L * n * n);
}

TEST(Rings, OutputPixelsTileTheSquareExactly) {
  for (int i_max : {10, 112}) {
    std::set<std::pair<int, int>> seen;
    for (int ring = 1; ring <= i_max; ++ring)
      for (int k = 0; k < ring_sample_count(ring); ++k) {
        const auto [c, r] = ring_output_pixel(i_max, ring, k);
        ASSERT_GE(c, 0);
        ASSERT_LT(c, 2 * i_max);
        ASSERT_GE(r, 0);
        ASSERT_LT(r, 2 * i_max);
        // Pixel lies on the square ring of Chebyshev radius `ring`.
        const double m = std::max(std::abs(c - (i_max - 0.5)), std::abs(r - (i_max - 0.5)));
        ASSERT_DOUBLE_EQ(m, ring - 0.5);
        seen.insert({c, r});
      }
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(4 * i_max * i_max));
  }
}

namespace {

Image ramp_image(int side) {
  Image img(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) img.at(c, r) = std::sin(0.013 * c * c + 0.07 * r) * 0.4 + 0.5;
  return img;
}

}  // namespace

TEST(Transform, FoveaBlockIsExactCopy) {
  const FcgSolution s = solve_fcg(FcgConfig{});
  const Image src = ramp_image(651);
  for (Vec2 fix : {Vec2{325, 325}, Vec2{100, 500}, Vec2{321.4, 300.6}}) {
    const Image out = retinal_sample(src, fix, s, Interpolation::Bilinear, 0.5);
    const int ax = static_cast<int>(std::lround(fix.x)), ay = static_cast<int>(std::lround(fix.y));
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c) ASSERT_EQ(out.at(104 + c, 104 + r), src.at(ax - 8 + c, ay - 8 + r));
  }
}

TEST(Transform, TargetAtFixationIsInFoveaAtNativeResolution) {
  const FcgSolution s = solve_fcg(FcgConfig{});
  StimulusSpec spec;
  spec.noise.seed = 12;
  spec.gabor.contrast = 0.3;
  const SearchImage img = make_search_image(spec, Vec2{2.0, -3.0});
  const RetinalImage ret = retinal_transform(img, *img.target_location_deg, s);
  const Vec2 px = img.frame.to_pixel(*img.target_location_deg);
  const int ax = static_cast<int>(std::lround(px.x)), ay = static_cast<int>(std::lround(px.y));
  // Target center sits at output (112, 112); its 13x13 patch lies within
  // the central 16x16 block except for the outermost row/column, which is
  // zero-weighted by the window anyway.
  for (int dr = -6; dr <= 6; ++dr)
    for (int dc = -6; dc <= 6; ++dc) {
      const int oc = 112 + dc, orow = 112 + dr;
      if (oc < 104 || oc >= 120 || orow < 104 || orow >= 120) continue;
      ASSERT_EQ(ret.pixels.at(oc, orow), img.pixels.at(ax + dc, ay + dr));
    }
}

TEST(Transform, ConstantImageStaysConstant) {
  const FcgSolution s = solve_fcg(FcgConfig{});
  const Image src(651, 651, 0.37);
  for (auto interp : {Interpolation::Bilinear, Interpolation::Nearest}) {
    const Image out = retinal_sample(src, {325, 325}, s, interp, 0.37);
    for (double v : out.pixels()) ASSERT_NEAR(v, 0.37, 1e-15);
  }
}

TEST(Transform, IntegerTranslationEquivariance) {
  const FcgSolution s = solve_fcg(FcgConfig{});
  const Image src = ramp_image(800);
  Image shifted(800, 800, 0.5);
  const int dx = 17, dy = -9;
  for (int r = 0; r < 800; ++r)
    for (int c = 0; c < 800; ++c)
      if (src.contains(c - dx, r - dy)) shifted.at(c, r) = src.at(c - dx, r - dy);
  // Fixation far from the borders so the sampled footprint of the inner
  // rings stays inside both images.
  const Image a = retinal_sample(src, {400, 400}, s, Interpolation::Bilinear, 0.5);
  const Image b = retinal_sample(shifted, {400.0 + dx, 400.0 + dy}, s, Interpolation::Bilinear, 0.5);
  for (int ring = 1; ring <= 60; ++ring) {
    if (s.radius(ring) + 2 > 370) break;
    for (int k = 0; k < ring_sample_count(ring); ++k) {
      const auto [c, r] = ring_output_pixel(112, ring, k);
      ASSERT_NEAR(a.at(c, r), b.at(c, r), 1e-12) << "ring " << ring;
    }
  }
}

TEST(Transform, OutOfBoundsReadsFill) {
  const FcgSolution s = solve_fcg(FcgConfig{});
  const Image src(651, 651, 0.9);
  const Image out = retinal_sample(src, {0, 0}, s, Interpolation::Nearest, 0.1);
  // Top-left corner of the output samples far outside the image; the
  // outer ring's radius is the full image side, so the opposite corner
  // lands exactly on the last source pixel.
  EXPECT_EQ(out.at(0, 0), 0.1);
  EXPECT_EQ(out.at(223, 223), 0.9);
  const Image shifted = retinal_sample(src, {1, 1}, s, Interpolation::Nearest, 0.1);
  EXPECT_EQ(shifted.at(223, 223), 0.1);
}

TEST(Transform, SamplingRadiusNonDecreasing) {
  const FcgSolution s = solve_fcg(FcgConfig{});
  // A radial-distance image reveals the sampling radius of every ring.
  Image dist(1401, 1401);
  for (int r = 0; r < 1401; ++r)
    for (int c = 0; c < 1401; ++c) dist.at(c, r) = std::max(std::abs(c - 700.0), std::abs(r - 700.0));
  const Image out = retinal_sample(dist, {700, 700}, s, Interpolation::Bilinear, 0.0);
  double prev = 0.0;
  for (int ring = 9; ring <= 112; ++ring) {
    double mx = 0.0;
    for (int k = 0; k < ring_sample_count(ring); ++k) {
      const auto [c, r] = ring_output_pixel(112, ring, k);
      mx = std::max(mx, out.at(c, r));
    }
    EXPECT_GE(mx, prev);
    prev = mx;
  }
}

TEST(Render, CoversFixationNeighbourhoodWithSourcePixels) {
  const FcgSolution s = solve_fcg(FcgConfig{});
  StimulusSpec spec;
  spec.noise.seed = 2;
  const SearchImage img = make_search_image(spec, std::nullopt);
  const RetinalImage ret = retinal_transform(img, {0, 0}, s);
  const Image r = foveated_render(ret, img.frame, s);
  ASSERT_EQ(r.width(), 651);
  for (int dr = -8; dr < 8; ++dr)
    for (int dc = -8; dc < 8; ++dc) EXPECT_EQ(r.at(325 + dc, 325 + dr), img.pixels.at(325 + dc, 325 + dr));
}
