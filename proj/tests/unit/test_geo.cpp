#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cvmcl/geo.hpp"

using namespace cvmcl;
using namespace cvmcl::geo;

namespace {

constexpr double kPi = std::numbers::pi;

double deg(double d) { return d * kPi / 180.0; }

GeoRaster field_raster(std::size_t w, std::size_t h, const GeoTransform& t, auto f) {
  std::vector<double> data(w * h);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const Vec2 p = t.pixel_to_world({static_cast<double>(c), static_cast<double>(r)});
      data[r * w + c] = f(p.x, p.y);
    }
  }
  return {w, h, 1, std::move(data), t};
}

}  // namespace

TEST(WrapAngle, IntoHalfOpenInterval) {
  EXPECT_DOUBLE_EQ(wrap_angle(0.0), 0.0);
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3.0 * kPi), kPi, 1e-12);
  EXPECT_NEAR(wrap_angle(2.0 * kPi + 0.25), 0.25, 1e-12);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = wrap_angle(u(rng));
    EXPECT_GT(a, -kPi);
    EXPECT_LE(a, kPi);
    EXPECT_EQ(wrap_angle(a), a);
  }
}

TEST(Pose2D, NormalizesHeading) {
  const Pose2D p(1.0, 2.0, 3.0 * kPi / 2.0);
  EXPECT_NEAR(p.theta(), -kPi / 2.0, 1e-12);
  EXPECT_EQ(Pose2D(0, 0, -kPi).theta(), kPi);
  EXPECT_DOUBLE_EQ(Pose2D(0, 0, 0).distance_to(Pose2D(3, 4, 1)), 5.0);
}

TEST(GeoTransform, IdentityMapsPointToItself) {
  const Vec2 px = GeoTransform::identity().world_to_pixel({3.0, 4.0});
  EXPECT_DOUBLE_EQ(px.x, 3.0);
  EXPECT_DOUBLE_EQ(px.y, 4.0);
}

TEST(GeoTransform, NorthUpHalfMeterRowFlip) {
  const GeoTransform t = GeoTransform::north_up(0.0, 0.0, 0.5);
  const Vec2 px = t.world_to_pixel({10.0, 10.0});
  EXPECT_DOUBLE_EQ(px.x, 20.0);
  EXPECT_DOUBLE_EQ(px.y, -20.0);
}

TEST(GeoTransform, PaperFootprintPixelSize) {
  // 270 pixels across a 53 m footprint.
  EXPECT_NEAR(53.0 / 270.0, 0.1963, 5e-5);
}

TEST(GeoTransform, SingularRejected) {
  EXPECT_THROW(GeoTransform(1.0, 2.0, 0.0, 2.0, 4.0, 0.0), InvalidArgument);
  EXPECT_THROW(GeoTransform(0.0, 0.0, 1.0, 0.0, 0.0, 1.0), InvalidArgument);
}

TEST(GeoTransform, RoundTripRandom) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::uniform_real_distribution<double> off(-1e3, 1e3);
  int done = 0;
  while (done < 1000) {
    const double a = coef(rng), b = coef(rng), d = coef(rng), e = coef(rng);
    if (std::abs(a * e - b * d) < 0.05) {
      continue;
    }
    const GeoTransform t(a, b, off(rng), d, e, off(rng));
    const Vec2 p{off(rng), off(rng)};
    const Vec2 q = t.pixel_to_world(t.world_to_pixel(p));
    EXPECT_NEAR(q.x, p.x, 1e-9);
    EXPECT_NEAR(q.y, p.y, 1e-9);
    const Vec2 px{off(rng), off(rng)};
    const Vec2 back = t.world_to_pixel(t.pixel_to_world(px));
    EXPECT_NEAR(back.x, px.x, 1e-9);
    EXPECT_NEAR(back.y, px.y, 1e-9);
    ++done;
  }
}

TEST(GeoRaster, RejectsBadPayload) {
  EXPECT_THROW(GeoRaster(2, 2, 1, std::vector<double>(3, 0.0), GeoTransform::identity()), InvalidArgument);
  EXPECT_THROW(GeoRaster(1, 1, 1, {std::nan("")}, GeoTransform::identity()), InvalidArgument);
}

TEST(GeoRaster, BilinearExactAtCentresAndInterpolates) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  const std::size_t w = 7, h = 5, nc = 2;
  std::vector<double> data(w * h * nc);
  for (double& v : data) {
    v = u(rng);
  }
  const GeoRaster r(w, h, nc, data, GeoTransform::identity());
  double out[2];
  for (std::size_t row = 0; row < h; ++row) {
    for (std::size_t col = 0; col < w; ++col) {
      ASSERT_TRUE(r.sample_pixel({static_cast<double>(col), static_cast<double>(row)}, out));
      EXPECT_EQ(out[0], r.at(row, col, 0));
      EXPECT_EQ(out[1], r.at(row, col, 1));
    }
  }
  // Hand-weighted oracle at an interior point.
  const double x = 2.25, y = 1.75;
  ASSERT_TRUE(r.sample_pixel({x, y}, out));
  for (std::size_t ch = 0; ch < nc; ++ch) {
    const double expect = 0.75 * 0.25 * r.at(1, 2, ch) + 0.25 * 0.25 * r.at(1, 3, ch) +
                          0.75 * 0.75 * r.at(2, 2, ch) + 0.25 * 0.75 * r.at(2, 3, ch);
    EXPECT_NEAR(out[ch], expect, 1e-12);
  }
  EXPECT_FALSE(r.sample_pixel({-0.01, 1.0}, out));
  EXPECT_FALSE(r.sample_pixel({1.0, static_cast<double>(h) - 0.99}, out));
}

TEST(CropAtPose, ConstantRasterGivesConstantPatch) {
  const GeoTransform t = GeoTransform::north_up(0.125, 31.875, 0.25);
  const GeoRaster r(128, 128, 3, std::vector<double>(128 * 128 * 3, 2.5), t);
  const CropSpec spec;
  const Patch p = crop_at_pose(r, Pose2D(16.0, 16.0, 0.7), spec);
  EXPECT_EQ(p.data.rows, spec.out_height);
  EXPECT_EQ(p.data.cols, spec.out_width);
  EXPECT_TRUE(p.fully_valid());
  for (double v : p.data.data) {
    EXPECT_DOUBLE_EQ(v, 2.5);
  }
}

TEST(CropAtPose, HalfTurnGivesRotatedPatchOnSymmetricField) {
  // Field periodic along x with period 2*lookahead and even in y about the
  // pose: both patch centres see the same neighbourhood, mirrored.
  const CropSpec spec;
  const double period = 2.0 * spec.lookahead;
  const Vec2 p0{20.0, 20.0};
  const GeoTransform t = GeoTransform::north_up(0.0, 40.0, 0.25);
  const GeoRaster r = field_raster(160, 160, t, [&](double x, double y) {
    return std::cos(2.0 * kPi * (x - p0.x) / period) + 0.3 * std::cos(2.0 * kPi * (x - p0.x) / (0.5 * period)) +
           std::exp(-(y - p0.y) * (y - p0.y) / 4.0);
  });
  const Patch a = crop_at_pose(r, Pose2D(p0.x, p0.y, 0.0), spec);
  const Patch b = crop_at_pose(r, Pose2D(p0.x, p0.y, kPi), spec);
  for (std::size_t row = 0; row < spec.out_height; ++row) {
    for (std::size_t col = 0; col < spec.out_width; ++col) {
      EXPECT_NEAR(a.data.at(row, col, 0), b.data.at(spec.out_height - 1 - row, spec.out_width - 1 - col, 0), 1e-9)
          << row << "," << col;
    }
  }
}

TEST(CropAtPose, BrightPixelLandsAtPatchCentre) {
  const GeoTransform t = GeoTransform::north_up(0.0, 40.0, 0.25);
  std::vector<double> data(160 * 160, 0.0);
  const Pose2D pose(19.3, 21.1, deg(37.0));
  const Vec2 target{pose.x() + 0.5 * std::cos(pose.theta()), pose.y() + 0.5 * std::sin(pose.theta())};
  const Vec2 tp = t.world_to_pixel(target);
  const auto br = static_cast<std::size_t>(std::lround(tp.y));
  const auto bc = static_cast<std::size_t>(std::lround(tp.x));
  data[br * 160 + bc] = 1.0;
  const GeoRaster r(160, 160, 1, data, t);
  const CropSpec spec;
  const Patch p = crop_at_pose(r, pose, spec);

  std::size_t best = 0;
  for (std::size_t i = 1; i < p.data.data.size(); ++i) {
    if (p.data.data[i] > p.data.data[best]) {
      best = i;
    }
  }
  const double row = static_cast<double>(best / spec.out_width);
  const double col = static_cast<double>(best % spec.out_width);
  EXPECT_LE(std::abs(row - 0.5 * static_cast<double>(spec.out_height - 1)), 1.0 + 0.5);
  EXPECT_LE(std::abs(col - 0.5 * static_cast<double>(spec.out_width - 1)), 1.0 + 0.5);

  // Brute force: the sample with the largest tent weight on the bright pixel.
  double best_w = -1.0;
  std::size_t oracle = 0;
  for (std::size_t rr = 0; rr < spec.out_height; ++rr) {
    for (std::size_t cc = 0; cc < spec.out_width; ++cc) {
      const Vec2 s = t.world_to_pixel(crop_sample_point(pose, spec, rr, cc));
      const double wgt = std::max(0.0, 1.0 - std::abs(s.x - static_cast<double>(bc))) *
                         std::max(0.0, 1.0 - std::abs(s.y - static_cast<double>(br)));
      if (wgt > best_w) {
        best_w = wgt;
        oracle = rr * spec.out_width + cc;
      }
    }
  }
  EXPECT_EQ(best, oracle);
}

TEST(CropAtPose, TranslationEquivarianceIsBitExact) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> data(96 * 96 * 2);
  for (double& v : data) {
    v = u(rng);
  }
  const GeoTransform t = GeoTransform::north_up(0.125, 23.875, 0.25);
  const GeoRaster r(96, 96, 2, data, t);
  const CropSpec spec;
  for (int k = 0; k < 20; ++k) {
    // Dyadic offsets keep every coordinate exactly representable.
    const Vec2 shift{std::ldexp(std::round(u(rng) * 4096.0), -6), std::ldexp(std::round(u(rng) * 4096.0), -6)};
    const Pose2D pose(12.0 + std::ldexp(std::round(u(rng) * 64), -4), 12.0 + std::ldexp(std::round(u(rng) * 64), -4),
                      u(rng) * kPi);
    const GeoRaster moved(96, 96, 2, data, t.translated(shift));
    const Patch a = crop_at_pose(r, pose, spec);
    const Patch b = crop_at_pose(moved, Pose2D(pose.x() + shift.x, pose.y() + shift.y, pose.theta()), spec);
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(a.mask, b.mask);
  }
}

TEST(CropAtPose, PartialFootprintIsMaskedAndFullyOutsideThrows) {
  const GeoTransform t = GeoTransform::north_up(0.125, 15.875, 0.25);
  const GeoRaster r(64, 64, 1, std::vector<double>(64 * 64, 1.0), t);
  const CropSpec spec;
  const Patch p = crop_at_pose(r, Pose2D(0.5, 8.0, 0.0), spec);
  EXPECT_FALSE(p.fully_valid());
  for (std::size_t i = 0; i < p.mask.size(); ++i) {
    EXPECT_EQ(p.data.data[i], p.mask[i] ? 1.0 : 0.0);
  }
  try {
    (void)crop_at_pose(r, Pose2D(500.0, 500.0, 0.0), spec);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "footprint out of bounds");
  }
}

TEST(CropSpec, Validation) {
  CropSpec s;
  s.extent_along = 1.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = CropSpec{};
  s.lookahead = 0.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(LabelPair, ThresholdExamples) {
  const double pos = 4.0, ang = deg(30.0), neg = 80.0;
  EXPECT_EQ(label_pair(Pose2D(0, 0, 0), Pose2D(3, 0, deg(20)), pos, ang, neg), PairLabel::Positive);
  EXPECT_EQ(label_pair(Pose2D(0, 0, 0), Pose2D(100, 0, deg(130)), pos, ang, neg), PairLabel::Negative);
  EXPECT_EQ(label_pair(Pose2D(0, 0, 0), Pose2D(10, 0, 0), pos, ang, neg), PairLabel::Excluded);
  EXPECT_EQ(label_pair(Pose2D(0, 0, 0), Pose2D(3, 0, deg(40)), pos, ang, neg), PairLabel::Excluded);
  EXPECT_EQ(label_pair(Pose2D(1, 1, 0.3), Pose2D(1, 1, 0.3), pos, ang, neg), PairLabel::Positive);
}

TEST(LabelPair, AngularWraparound) {
  EXPECT_EQ(label_pair(Pose2D(0, 0, deg(-179)), Pose2D(0, 0, deg(179)), 1.0, deg(5), 10.0), PairLabel::Positive);
  EXPECT_NEAR(std::abs(angle_diff(deg(179), deg(-179))), deg(2), 1e-12);
  EXPECT_EQ(angle_diff(kPi, 0.0), kPi);
  EXPECT_EQ(angle_diff(0.0, kPi), kPi);
}
