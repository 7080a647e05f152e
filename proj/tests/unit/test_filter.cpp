#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "cvmcl/filter.hpp"

using namespace cvmcl;
using namespace cvmcl::filter;
using geo::Pose2D;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ParticleSet uniform_set(std::vector<Pose2D> poses) {
  ParticleSet s;
  const double w = 1.0 / static_cast<double>(poses.size());
  for (const Pose2D& p : poses) {
    s.particles.push_back({p, w});
  }
  return s;
}

ParticleSet weighted_set(const std::vector<double>& w) {
  ParticleSet s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.particles.push_back({Pose2D(static_cast<double>(i), 0.0, 0.0), w[i]});
  }
  return s;
}

class FixedDistances final : public DistanceProvider {
public:
  explicit FixedDistances(double d) : d_(d) {}
  [[nodiscard]] double distance(const Pose2D&, std::span<const double>) const override { return d_; }

private:
  double d_;
};

geo::GeoRaster flat_raster(std::size_t n) {
  return {n, n, 1, std::vector<double>(n * n, 0.0), geo::GeoTransform::north_up(0.5, static_cast<double>(n) - 0.5, 1.0)};
}

}  // namespace

TEST(FilterConfig, Validation) {
  FilterConfig c;
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = FilterConfig{};
  c.on_road_prob = 1.5;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = FilterConfig{};
  c.n_particles = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(RoadMask, PaintAndContains) {
  const geo::GeoRaster r = flat_raster(20);
  RoadMask m = RoadMask::like(r);
  EXPECT_EQ(m.count(), 0u);
  const std::vector<geo::Vec2> line{{2.5, 10.5}, {17.5, 10.5}};
  m.paint_polyline(line, 1.0);
  EXPECT_TRUE(m.contains({10.0, 10.5}));
  EXPECT_TRUE(m.contains({10.0, 11.4}));
  EXPECT_FALSE(m.contains({10.0, 13.0}));
  EXPECT_FALSE(m.contains({-5.0, 10.5}));
  // Three rows of 16 under the segment plus one round-cap pixel at each end.
  EXPECT_EQ(m.count(), 16u * 3u + 2u);
}

TEST(InitParticles, UniformWithoutMask) {
  const geo::Rect b{10.0, 20.0, 30.0, 25.0};
  const ParticleSet s = init_particles(b, nullptr, 0.8, 5000, 1);
  ASSERT_EQ(s.size(), 5000u);
  double mx = 0.0;
  for (const Particle& p : s.particles) {
    EXPECT_TRUE(b.contains(p.pose.position()));
    EXPECT_EQ(p.weight, 1.0 / 5000.0);
    mx += p.pose.x();
  }
  EXPECT_NEAR(mx / 5000.0, 20.0, 3.0 * 20.0 / std::sqrt(12.0 * 5000.0));
  EXPECT_EQ(s, init_particles(b, nullptr, 0.8, 5000, 1));
}

TEST(InitParticles, SingleCellMask) {
  const geo::GeoRaster r = flat_raster(20);
  RoadMask m = RoadMask::like(r);
  m.set(4, 7, true);
  const ParticleSet s = init_particles(r.bounds(), &m, 1.0, 1000, 2);
  const geo::Vec2 centre = r.transform().pixel_to_world({7.0, 4.0});
  for (const Particle& p : s.particles) {
    EXPECT_TRUE(m.contains(p.pose.position()));
    EXPECT_LE(std::abs(p.pose.x() - centre.x), 0.5);
    EXPECT_LE(std::abs(p.pose.y() - centre.y), 0.5);
  }
}

TEST(InitParticles, MixtureRate) {
  const geo::GeoRaster r = flat_raster(100);
  RoadMask m = RoadMask::like(r);
  for (std::size_t row = 0; row < 100; ++row) {
    for (std::size_t col = 0; col < 50; ++col) {
      m.set(row, col, true);
    }
  }
  const std::size_t n = 100000;
  const ParticleSet s = init_particles(r.bounds(), &m, 0.8, n, 3);
  std::size_t on = 0;
  for (const Particle& p : s.particles) {
    on += m.contains(p.pose.position()) ? 1 : 0;
  }
  const double expect = 0.8 + 0.5 * 0.2;
  const double sigma = std::sqrt(expect * (1.0 - expect) / static_cast<double>(n));
  EXPECT_NEAR(static_cast<double>(on) / static_cast<double>(n), expect, 3.0 * sigma);
}

TEST(InitParticles, EmptyMaskFallsBack) {
  const geo::GeoRaster r = flat_raster(20);
  const RoadMask m = RoadMask::like(r);
  FilterEvents ev;
  const ParticleSet s = init_particles(r.bounds(), &m, 0.8, 100, 4, &ev);
  EXPECT_EQ(ev.mask_fallbacks, 1u);
  EXPECT_EQ(s.size(), 100u);
}

TEST(Predict, NoiselessTranslationAndIdentity) {
  const ParticleSet s = uniform_set({Pose2D(0, 0, 0.0), Pose2D(1, 1, std::numbers::pi / 2), Pose2D(2, 0, -2.0)});
  const MotionNoise none{0.0, 0.0, 0.0};
  const ParticleSet moved = predict(s, {2.0, 0.0}, 0.5, none, 9);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Pose2D& a = s.particles[i].pose;
    const Pose2D& b = moved.particles[i].pose;
    EXPECT_NEAR(b.x(), a.x() + std::cos(a.theta()), 1e-12);
    EXPECT_NEAR(b.y(), a.y() + std::sin(a.theta()), 1e-12);
    EXPECT_EQ(b.theta(), a.theta());
    EXPECT_EQ(moved.particles[i].weight, s.particles[i].weight);
  }
  EXPECT_EQ(moved.step, s.step + 1);
  const ParticleSet still = predict(s, {0.0, 0.0}, 1.0, none, 9);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(still.particles[i], s.particles[i]);
  }
}

TEST(Predict, MeanDisplacementLawOfLargeNumbers) {
  const std::size_t n = 1000000;
  const double theta = 0.3, v = 1.2, dt = 1.0;
  const ParticleSet s = uniform_set(std::vector<Pose2D>(n, Pose2D(0, 0, theta)));
  const MotionNoise noise;
  const ParticleSet moved = predict(s, {v, 0.1}, dt, noise, 10);
  double mx = 0.0, my = 0.0;
  for (const Particle& p : moved.particles) {
    mx += p.pose.x();
    my += p.pose.y();
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  const double sx = std::hypot(v * dt * noise.v_rel * std::cos(theta), noise.xy);
  const double sy = std::hypot(v * dt * noise.v_rel * std::sin(theta), noise.xy);
  EXPECT_NEAR(mx, v * dt * std::cos(theta), 3.0 * sx / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(my, v * dt * std::sin(theta), 3.0 * sy / std::sqrt(static_cast<double>(n)));
}

TEST(Predict, DeterministicPerStream) {
  const ParticleSet s = init_particles({0, 0, 10, 10}, nullptr, 0.0, 50, 5);
  EXPECT_EQ(predict(s, {1.0, 0.2}, 1.0, MotionNoise{}, 3), predict(s, {1.0, 0.2}, 1.0, MotionNoise{}, 3));
  EXPECT_NE(predict(s, {1.0, 0.2}, 1.0, MotionNoise{}, 3), predict(s, {1.0, 0.2}, 1.0, MotionNoise{}, 4));
}

TEST(UpdateWeights, HandEvaluatedExample) {
  const ParticleSet s = weighted_set({1.0 / 3, 1.0 / 3, 1.0 / 3});
  const std::vector<double> d{0.0, 1.0, 2.0};
  const std::vector<double> w = update_weights(s, d, 1.0).weights();
  const double z = 1.0 + std::exp(-1.0) + std::exp(-2.0);
  EXPECT_NEAR(w[0], 1.0 / z, 1e-12);
  EXPECT_NEAR(w[1], std::exp(-1.0) / z, 1e-12);
  EXPECT_NEAR(w[2], std::exp(-2.0) / z, 1e-12);
  EXPECT_NEAR(w[0], 0.6652, 5e-5);
  EXPECT_NEAR(w[1], 0.2447, 5e-5);
  EXPECT_NEAR(w[2], 0.0900, 5e-5);
}

TEST(UpdateWeights, EqualDistancesAndInfinity) {
  const ParticleSet s = weighted_set({0.1, 0.2, 0.7});
  const std::vector<double> eq{4.0, 4.0, 4.0};
  const std::vector<double> w = update_weights(s, eq, 2.0).weights();
  EXPECT_NEAR(w[0], 0.1, 1e-12);
  EXPECT_NEAR(w[2], 0.7, 1e-12);
  const std::vector<double> two{0.0, kInf};
  const std::vector<double> w2 = update_weights(weighted_set({0.5, 0.5}), two, 1.0).weights();
  EXPECT_EQ(w2[0], 1.0);
  EXPECT_EQ(w2[1], 0.0);
  FilterEvents ev;
  const std::vector<double> all_inf{kInf, kInf};
  const std::vector<double> w3 = update_weights(weighted_set({0.9, 0.1}), all_inf, 1.0, &ev).weights();
  EXPECT_EQ(w3[0], 0.5);
  EXPECT_EQ(ev.weight_resets, 1u);
}

TEST(UpdateWeights, ShiftInvarianceAndNormalization) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 5.0), uw(0.01, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> w(20), d(20);
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = uw(rng);
      sum += w[i];
      d[i] = u(rng);
    }
    for (double& x : w) {
      x /= sum;
    }
    const double alpha = 0.2 + u(rng);
    const double c = 10.0 * u(rng);
    std::vector<double> shifted = d;
    for (double& x : shifted) {
      x += c;
    }
    const std::vector<double> a = update_weights(weighted_set(w), d, alpha).weights();
    const std::vector<double> b = update_weights(weighted_set(w), shifted, alpha).weights();
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
      total += a[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(MeasurementUpdate, ProviderInfinityZeroesWeight) {
  const ParticleSet s = uniform_set({Pose2D(0, 0, 0), Pose2D(50, 0, 0)});
  const OnTheFlyProvider provider([](const Pose2D& p) -> std::optional<std::vector<double>> {
    if (p.x() > 10.0) {
      return std::nullopt;
    }
    return std::vector<double>{p.x(), p.y()};
  });
  const std::vector<double> q{1.0, 0.0};
  EXPECT_EQ(provider.distance(Pose2D(50, 0, 0), q), kInf);
  EXPECT_DOUBLE_EQ(provider.distance(Pose2D(4, 4, 0), q), 5.0);
  const std::vector<double> w = measurement_update(s, q, provider, 1.0).weights();
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], 0.0);
}

TEST(IndexProvider, NearestGridEntry) {
  match::PoseGrid g;
  g.bounds = {0.0, 0.0, 4.0, 4.0};
  g.headings = match::PoseGrid::uniform_headings(4);
  const match::EmbeddingIndex idx = match::build_index(match::pose_feature_embedder(1.0), g, 0);
  const IndexProvider provider(idx, g);
  const Pose2D p(2.2, 2.9, 0.1);
  const std::vector<double> q = match::pose_features(Pose2D(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(provider.distance(p, q), idx.distance(*g.nearest(p), q));
  EXPECT_EQ(provider.distance(Pose2D(40, 0, 0), q), kInf);
  match::PoseGrid other = g;
  other.bounds.xmax = 3.0;
  EXPECT_THROW(IndexProvider(idx, other), InvalidArgument);
}

TEST(EffectiveN, Examples) {
  EXPECT_NEAR(effective_n(weighted_set(std::vector<double>(5000, 1.0 / 5000))), 5000.0, 1e-6);
  EXPECT_EQ(effective_n(weighted_set({0.0, 1.0, 0.0})), 1.0);
  EXPECT_NEAR(effective_n(weighted_set({0.5, 0.25, 0.25})), 8.0 / 3.0, 1e-9);
}

TEST(EffectiveN, BoundedOnRandomSimplex) {
  std::mt19937_64 rng(12);
  std::exponential_distribution<double> e(1.0);
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 1 + t % 50;
    std::vector<double> w(n);
    double s = 0.0;
    for (double& x : w) {
      x = e(rng);
      s += x;
    }
    for (double& x : w) {
      x /= s;
    }
    const double ne = effective_n(weighted_set(w));
    EXPECT_GE(ne, 1.0 - 1e-12);
    EXPECT_LE(ne, static_cast<double>(n) + 1e-9);
  }
}

TEST(SystematicResample, OneHotAndUniform) {
  const std::vector<double> hot{0.0, 0.0, 1.0, 0.0};
  for (double u0 : {0.0, 0.1, 0.2499}) {
    for (std::size_t i : systematic_indices(hot, u0)) {
      EXPECT_EQ(i, 2u);
    }
  }
  const std::vector<double> uni(8, 0.125);
  for (double u0 : {0.0, 0.05, 0.1249}) {
    const std::vector<std::size_t> idx = systematic_indices(uni, u0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      EXPECT_EQ(idx[i], i);
    }
  }
}

TEST(SystematicResample, IntegerCopyCounts) {
  std::vector<double> w(10, 0.0);
  w[0] = 0.5;
  w[1] = 0.3;
  w[2] = 0.2;
  for (int k = 0; k < 1000; ++k) {
    const double u0 = 0.1 * k / 1000.0;
    std::vector<std::size_t> counts(10, 0);
    for (std::size_t i : systematic_indices(w, u0)) {
      ++counts[i];
    }
    EXPECT_EQ(counts[0], 5u);
    EXPECT_EQ(counts[1], 3u);
    EXPECT_EQ(counts[2], 2u);
  }
}

TEST(SystematicResample, BracketAndUniformWeights) {
  const ParticleSet s = weighted_set({0.05, 0.33, 0.01, 0.21, 0.4});
  Rng rng = make_rng(13);
  for (int k = 0; k < 1000; ++k) {
    const ParticleSet r = systematic_resample(s, rng);
    std::vector<std::size_t> counts(5, 0);
    for (const Particle& p : r.particles) {
      ++counts[static_cast<std::size_t>(p.pose.x())];
      EXPECT_EQ(p.weight, 0.2);
    }
    for (std::size_t i = 0; i < 5; ++i) {
      const double nw = 5.0 * s.particles[i].weight;
      EXPECT_GE(static_cast<double>(counts[i]), std::floor(nw - 1e-12));
      EXPECT_LE(static_cast<double>(counts[i]), std::ceil(nw + 1e-12));
    }
  }
}

TEST(Estimate, Examples) {
  const Estimate one = estimate(uniform_set({Pose2D(3, 4, 1), Pose2D(3, 4, 1)}));
  EXPECT_DOUBLE_EQ(one.mean.x(), 3.0);
  EXPECT_NEAR(one.mean.theta(), 1.0, 1e-12);
  EXPECT_EQ(one.pos_std, 0.0);
  const Estimate pair = estimate(uniform_set({Pose2D(0, 0, 0), Pose2D(2, 0, 0)}));
  EXPECT_DOUBLE_EQ(pair.mean.x(), 1.0);
  EXPECT_DOUBLE_EQ(pair.pos_std, 1.0);
  const double d170 = 170.0 * std::numbers::pi / 180.0;
  const Estimate wrap = estimate(uniform_set({Pose2D(0, 0, d170), Pose2D(0, 0, -d170)}));
  EXPECT_NEAR(std::abs(wrap.mean.theta()), std::numbers::pi, 1e-9);
}

TEST(CloudError, WeightedDistances) {
  ParticleSet s = weighted_set({0.25, 0.75});
  s.particles[0].pose = Pose2D(3, 4, 0);
  s.particles[1].pose = Pose2D(0, 1, 0);
  const CloudError e = cloud_error(s, Pose2D(0, 0, 0));
  EXPECT_DOUBLE_EQ(e.mean, 0.25 * 5.0 + 0.75 * 1.0);
  EXPECT_NEAR(e.stddev, std::sqrt(0.25 * 3.0 * 3.0 + 0.75 * 1.0), 1e-12);
}

TEST(Step, HighNeffKeepsParticlesAndEqualDistancesArePrediction) {
  FilterConfig cfg;
  cfg.noise = {0.0, 0.0, 0.0};
  const ParticleSet s = init_particles({0, 0, 20, 20}, nullptr, 0.0, 100, 14);
  const FixedDistances provider(2.0);
  const std::vector<double> q{0.0};
  const StepResult r = step(s, {1.0, 0.1}, 1.0, q, provider, cfg);
  const ParticleSet pred = predict(s, {1.0, 0.1}, 1.0, cfg.noise, cfg.seed);
  EXPECT_FALSE(r.report.resampled);
  EXPECT_NEAR(r.report.neff, 100.0, 1e-9);
  ASSERT_EQ(r.set.size(), pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    EXPECT_EQ(r.set.particles[i].pose, pred.particles[i].pose);
    EXPECT_NEAR(r.set.particles[i].weight, 0.01, 1e-15);
  }
  EXPECT_FALSE(r.report.converged);
}

TEST(Correct, LowNeffResamples) {
  FilterConfig cfg;
  ParticleSet s = uniform_set({Pose2D(0, 0, 0), Pose2D(0.1, 0, 0), Pose2D(30, 0, 0), Pose2D(40, 0, 0)});
  const OnTheFlyProvider provider([](const Pose2D& p) { return std::optional<std::vector<double>>(std::vector<double>{p.x()}); });
  const std::vector<double> q{0.0};
  cfg.alpha = 5.0;
  const StepResult r = correct(s, q, provider, cfg);
  EXPECT_TRUE(r.report.resampled);
  EXPECT_LT(r.report.neff, 3.2);
  for (const Particle& p : r.set.particles) {
    EXPECT_LT(p.pose.x(), 1.0);
    EXPECT_EQ(p.weight, 0.25);
  }
  EXPECT_TRUE(r.report.converged);
}

TEST(RunLocalization, OracleConvergesAndIsDeterministic) {
  sim::WorldSpec ws;
  ws.size = 160;
  ws.n_bumps = 50;
  const geo::GeoRaster world = sim::generate_world(ws);
  sim::TrajectorySpec ts;
  ts.n_steps = 30;
  const sim::Trajectory traj = sim::generate_trajectory(world, ts);
  std::vector<std::vector<double>> obs;
  for (const auto& s : traj) {
    obs.push_back(match::pose_features(s.truth, 2.0));
  }
  match::PoseGrid g;
  g.bounds = world.bounds();
  g.headings = match::PoseGrid::uniform_headings(8);
  const match::EmbeddingIndex idx = match::build_index(match::pose_feature_embedder(2.0), g, 0);
  const IndexProvider provider(idx, g);
  FilterConfig cfg;
  cfg.n_particles = 1000;
  cfg.alpha = 20.0 * calibrate_alpha(idx, obs);
  std::vector<ParticleSet> seen_a, seen_b;
  const RunSummary a = run_localization(traj, obs, provider, world.bounds(), nullptr, cfg, 1.0,
                                        [&](const ParticleSet& s, const StepReport&) { seen_a.push_back(s); });
  const RunSummary b = run_localization(traj, obs, provider, world.bounds(), nullptr, cfg, 1.0,
                                        [&](const ParticleSet& s, const StepReport&) { seen_b.push_back(s); });
  EXPECT_EQ(seen_a, seen_b);
  ASSERT_EQ(a.trace.size(), traj.size());
  EXPECT_TRUE(a.convergence_step.has_value());
  EXPECT_TRUE(a.final_converged);
  EXPECT_LT(a.final_error.mean, 2.0);
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    EXPECT_EQ(a.trace[k].truth, traj[k].truth);
    EXPECT_NEAR(a.trace[k].err_m, a.trace[k].mean.distance_to(traj[k].truth), 1e-12);
  }
}

TEST(CalibrateAlpha, InverseMedian) {
  const std::vector<match::IndexEntry> e{{Pose2D(0, 0, 0), {0.0f}}, {Pose2D(1, 0, 0), {2.0f}},
                                         {Pose2D(2, 0, 0), {6.0f}}};
  const match::EmbeddingIndex idx(e, 0);
  const std::vector<std::vector<double>> q{{1.0}};
  // Distances 1, 1, 5: median 1.
  EXPECT_DOUBLE_EQ(calibrate_alpha(idx, q), 1.0);
}
