#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cvmcl/sim.hpp"

using namespace cvmcl;
using namespace cvmcl::sim;
using geo::Pose2D;
using geo::Vec2;

namespace {

constexpr double kPi = std::numbers::pi;

geo::GeoRaster small_world(std::uint64_t seed = 7) {
  WorldSpec s;
  s.size = 256;
  s.n_bumps = 200;
  s.seed = seed;
  return generate_world(s);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(GenerateWorld, ChannelsAreStandardized) {
  const geo::GeoRaster w = small_world();
  ASSERT_EQ(w.width(), 256u);
  ASSERT_EQ(w.channels(), 3u);
  const std::size_t n = w.width() * w.height();
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double sum = 0, sq = 0;
    for (std::size_t r = 0; r < w.height(); ++r) {
      for (std::size_t c = 0; c < w.width(); ++c) {
        sum += w.at(r, c, ch);
      }
    }
    const double mean = sum / static_cast<double>(n);
    for (std::size_t r = 0; r < w.height(); ++r) {
      for (std::size_t c = 0; c < w.width(); ++c) {
        sq += (w.at(r, c, ch) - mean) * (w.at(r, c, ch) - mean);
      }
    }
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n)), 1.0, 1e-6);
  }
}

TEST(GenerateWorld, NoBumpsGivesZeros) {
  WorldSpec s;
  s.size = 64;
  s.n_bumps = 0;
  const geo::GeoRaster w = generate_world(s);
  for (double v : w.pixels().data) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(GenerateWorld, DeterministicInSeed) {
  EXPECT_EQ(small_world(7).pixels(), small_world(7).pixels());
  EXPECT_NE(small_world(7).pixels(), small_world(8).pixels());
}

TEST(GenerateWorld, BoundsFollowPixelSize) {
  WorldSpec s;
  s.size = 64;
  s.n_bumps = 3;
  const geo::GeoRaster w = generate_world(s);
  const geo::Rect b = w.bounds();
  EXPECT_NEAR(b.xmin, 0.125, 1e-12);
  EXPECT_NEAR(b.xmax, 16.0 - 0.125, 1e-12);
  EXPECT_NEAR(b.ymin, 0.125, 1e-12);
  EXPECT_NEAR(b.ymax, 16.0 - 0.125, 1e-12);
}

TEST(Trajectory, StraightLineWithoutYaw) {
  const geo::GeoRaster w = small_world();
  TrajectorySpec s;
  s.n_steps = 20;
  s.speed_mean = 1.5;
  s.speed_std = 0.0;
  s.yawrate_std = 0.0;
  s.start = Pose2D(10.0, 30.0, 0.0);
  const Trajectory t = generate_trajectory(w, s);
  ASSERT_EQ(t.size(), 20u);
  for (std::size_t k = 0; k < t.size(); ++k) {
    EXPECT_NEAR(t[k].truth.x(), 10.0 + 1.5 * static_cast<double>(k), 1e-12);
    EXPECT_EQ(t[k].truth.y(), 30.0);
    EXPECT_EQ(t[k].truth.theta(), 0.0);
    EXPECT_EQ(t[k].t, static_cast<double>(k));
  }
  EXPECT_NEAR(t.back().truth.distance_to(t.front().truth), 1.5 * 19.0, 1e-12);
}

TEST(Trajectory, ZeroSpeedIsRejected) {
  TrajectorySpec s;
  s.speed_mean = 0.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(Trajectory, ZeroOdometryNoiseCopiesControls) {
  const geo::GeoRaster w = small_world();
  TrajectorySpec s;
  s.odom_v_noise = 0.0;
  s.odom_w_noise = 0.0;
  for (const TrajectoryStep& st : generate_trajectory(w, s)) {
    EXPECT_EQ(st.noisy, st.control);
  }
}

TEST(Trajectory, FollowsUnicycleModel) {
  const geo::GeoRaster w = small_world();
  const Trajectory t = generate_trajectory(w, TrajectorySpec{});
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const Pose2D next = unicycle_step(t[k].truth, t[k].control, 1.0);
    EXPECT_EQ(next, t[k + 1].truth);
  }
  EXPECT_EQ(t, generate_trajectory(w, TrajectorySpec{}));
}

TEST(Trajectory, StaysInsideBoundsForRandomSpecs) {
  const geo::GeoRaster w = small_world();
  const geo::Rect b = w.bounds();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    TrajectorySpec s;
    s.n_steps = 50 + static_cast<std::size_t>(u(rng) * 300);
    s.dt = 0.5 + u(rng);
    s.speed_mean = 0.5 + 2.0 * u(rng);
    s.speed_std = 0.3 * u(rng);
    s.yawrate_std = 0.5 * u(rng);
    s.margin = 4.0 + 8.0 * u(rng);
    s.seed = static_cast<std::uint64_t>(i);
    for (const TrajectoryStep& st : generate_trajectory(w, s)) {
      ASSERT_TRUE(b.contains(st.truth.position())) << "spec " << i;
    }
  }
}

TEST(GroundView, ConstantWorldGivesConstantSamples) {
  const geo::GeoRaster w(64, 64, 3, std::vector<double>(64 * 64 * 3, 0.7), geo::GeoTransform::north_up(0, 16, 0.25));
  GroundViewSpec s;
  s.noise_std = 0.0;
  s.gamma = 1.0;
  s.mix_strength = 0.0;
  const GroundObservation o = render_ground_view(w, Pose2D(8.0, 8.0, 1.0), s);
  EXPECT_EQ(o.data.rows, s.n_rays);
  EXPECT_EQ(o.data.cols, s.n_ranges);
  for (double v : o.data.data) {
    EXPECT_DOUBLE_EQ(v, 0.7);
  }
}

TEST(GroundView, DeterministicAndHeadingSensitive) {
  const geo::GeoRaster w = small_world();
  const GroundViewSpec s;
  const Pose2D p(30.0, 31.0, 0.4);
  const GroundObservation a = render_ground_view(w, p, s);
  EXPECT_EQ(a, render_ground_view(w, p, s));

  // Opposite headings sample disjoint wedges.
  const Pose2D q(30.0, 31.0, 0.4 + kPi);
  double min_gap = 1e9;
  for (std::size_t k = 0; k < s.n_rays; ++k) {
    for (std::size_t j = 0; j < s.n_ranges; ++j) {
      for (std::size_t k2 = 0; k2 < s.n_rays; ++k2) {
        for (std::size_t j2 = 0; j2 < s.n_ranges; ++j2) {
          const Vec2 u = ground_sample_point(p, s, k, j);
          const Vec2 v = ground_sample_point(q, s, k2, j2);
          min_gap = std::min(min_gap, std::hypot(u.x - v.x, u.y - v.y));
        }
      }
    }
  }
  EXPECT_GT(min_gap, 0.0);
  EXPECT_NE(a.data, render_ground_view(w, q, s).data);
}

TEST(GroundView, FullyOutsideThrows) {
  const geo::GeoRaster w = small_world();
  EXPECT_THROW((void)render_ground_view(w, Pose2D(-100.0, -100.0, 0.0), GroundViewSpec{}), Error);
}

TEST(GroundView, CorrelatedWithWorldButNotEqual) {
  const geo::GeoRaster w = small_world();
  GroundViewSpec s;
  s.noise_std = 0.0;
  const Trajectory t = generate_trajectory(w, TrajectorySpec{});
  for (std::size_t ch = 0; ch < w.channels(); ++ch) {
    std::vector<double> ground, world;
    for (const TrajectoryStep& st : t) {
      const GroundObservation o = render_ground_view(w, st.truth, s);
      for (std::size_t k = 0; k < s.n_rays; ++k) {
        for (std::size_t j = 0; j < s.n_ranges; ++j) {
          double px[3];
          if (w.sample_world(ground_sample_point(st.truth, s, k, j), px)) {
            ground.push_back(o.data.at(k, j, ch));
            world.push_back(px[ch]);
          }
        }
      }
    }
    const double rho = pearson(ground, world);
    EXPECT_GT(rho, 0.2) << "channel " << ch;
    EXPECT_LT(rho, 1.0) << "channel " << ch;
  }
}

TEST(ChannelMix, IdentityAtZeroStrength) {
  const std::vector<double> m = channel_mix_matrix(3, 9, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(m[i * 3 + j], i == j ? 1.0 : 0.0);
    }
  }
}

TEST(DeriveControls, StraightLine) {
  std::vector<TimedPose> poses;
  for (int k = 0; k < 5; ++k) {
    poses.push_back({static_cast<double>(k), Pose2D(static_cast<double>(k), 2.0, 0.0)});
  }
  for (const Control& c : derive_controls_from_poses(poses)) {
    EXPECT_DOUBLE_EQ(c.v, 1.0);
    EXPECT_EQ(c.omega, 0.0);
  }
}

TEST(DeriveControls, Stationary) {
  const std::vector<TimedPose> poses{{0.0, Pose2D(1, 1, 1)}, {1.0, Pose2D(1, 1, 1)}, {3.0, Pose2D(1, 1, 1)}};
  const std::vector<Control> c = derive_controls_from_poses(poses);
  ASSERT_EQ(c.size(), 3u);
  for (const Control& u : c) {
    EXPECT_EQ(u.v, 0.0);
    EXPECT_EQ(u.omega, 0.0);
  }
}

TEST(DeriveControls, QuarterCircle) {
  std::vector<TimedPose> poses;
  for (int k = 0; k <= 10; ++k) {
    const double phi = kPi / 2.0 * k / 10.0;
    poses.push_back({static_cast<double>(k), Pose2D(10.0 * std::cos(phi), 10.0 * std::sin(phi), phi + kPi / 2.0)});
  }
  const std::vector<Control> c = derive_controls_from_poses(poses);
  ASSERT_EQ(c.size(), 11u);
  for (const Control& u : c) {
    EXPECT_NEAR(u.omega, kPi / 20.0, 1e-12);
    EXPECT_NEAR(u.v, 2.0 * 10.0 * std::sin(kPi / 40.0), 1e-12);
  }
  EXPECT_EQ(c[10], c[9]);
}

TEST(DeriveControls, RejectsBadInput) {
  const std::vector<TimedPose> one{{0.0, Pose2D()}};
  EXPECT_THROW((void)derive_controls_from_poses(one), InvalidArgument);
  const std::vector<TimedPose> dup{{0.0, Pose2D()}, {0.0, Pose2D(1, 0, 0)}};
  EXPECT_THROW((void)derive_controls_from_poses(dup), InvalidArgument);
}

TEST(DeriveControls, ReintegrationReproducesPositions) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uv(0.2, 2.0), uw(-0.4, 0.4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TimedPose> poses;
    Pose2D p(5.0, -3.0, 0.3 * trial);
    for (int k = 0; k < 50; ++k) {
      poses.push_back({0.5 * k, p});
      p = unicycle_step(p, {uv(rng), uw(rng)}, 0.5);
    }
    const std::vector<Control> c = derive_controls_from_poses(poses);
    Pose2D q = poses.front().pose;
    for (std::size_t k = 0; k + 1 < poses.size(); ++k) {
      q = unicycle_step(q, c[k], 0.5);
      EXPECT_NEAR(q.x(), poses[k + 1].pose.x(), 1e-6);
      EXPECT_NEAR(q.y(), poses[k + 1].pose.y(), 1e-6);
    }
  }
}
