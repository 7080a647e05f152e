#include "cvmcl/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace cvmcl::sim {

using geo::GeoRaster;
using geo::Pose2D;
using geo::Rect;
using geo::Vec2;

void WorldSpec::validate() const {
  if (size < 64) {
    throw InvalidArgument("WorldSpec: size must be >= 64");
  }
  if (channels < 2) {
    throw InvalidArgument("WorldSpec: channels must be >= 2");
  }
  if (!(bump_sigma_range.first > 0.0) || !(bump_sigma_range.second >= bump_sigma_range.first)) {
    throw InvalidArgument("WorldSpec: bump sigmas must be positive and ordered");
  }
  if (!(pixel_size > 0.0)) {
    throw InvalidArgument("WorldSpec: pixel_size must be positive");
  }
}

GeoRaster generate_world(const WorldSpec& spec) {
  spec.validate();
  const std::size_t n = spec.size;
  const std::size_t nc = spec.channels;
  Tensor3 img(n, n, nc);
  Rng rng = make_rng(spec.seed, 0x776f726c64);  // "world"
  std::uniform_real_distribution<double> pos(0.0, static_cast<double>(n));
  std::uniform_real_distribution<double> sig(spec.bump_sigma_range.first, spec.bump_sigma_range.second);
  std::uniform_real_distribution<double> amp(-1.0, 1.0);

  for (std::size_t ch = 0; ch < nc; ++ch) {
    for (std::size_t b = 0; b < spec.n_bumps; ++b) {
      const double cx = pos(rng);
      const double cy = pos(rng);
      const double s = sig(rng);
      const double a = amp(rng);
      const double inv2s2 = 1.0 / (2.0 * s * s);
      const double reach = 4.0 * s;
      const auto lo = [&](double c) { return static_cast<std::size_t>(std::max(0.0, std::floor(c - reach))); };
      const auto hi = [&](double c) {
        return static_cast<std::size_t>(std::min(static_cast<double>(n - 1), std::ceil(c + reach)));
      };
      for (std::size_t r = lo(cy); r <= hi(cy); ++r) {
        const double dy = static_cast<double>(r) - cy;
        for (std::size_t c = lo(cx); c <= hi(cx); ++c) {
          const double dx = static_cast<double>(c) - cx;
          img.at(r, c, ch) += a * std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
      }
    }
  }

  const double count = static_cast<double>(n * n);
  for (std::size_t ch = 0; ch < nc; ++ch) {
    double mean = 0.0;
    for (std::size_t i = ch; i < img.data.size(); i += nc) {
      mean += img.data[i];
    }
    mean /= count;
    double var = 0.0;
    for (std::size_t i = ch; i < img.data.size(); i += nc) {
      const double d = img.data[i] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / count);
    if (sd == 0.0) {
      continue;
    }
    for (std::size_t i = ch; i < img.data.size(); i += nc) {
      img.data[i] = (img.data[i] - mean) / sd;
    }
  }
  // Rasters are persisted as f32; keep the in-memory world identical.
  for (double& v : img.data) {
    v = static_cast<double>(static_cast<float>(v));
  }

  const double ps = spec.pixel_size;
  const double extent = static_cast<double>(n) * ps;
  return GeoRaster(std::move(img), geo::GeoTransform::north_up(0.5 * ps, extent - 0.5 * ps, ps));
}

Pose2D unicycle_step(const Pose2D& pose, const Control& u, double dt) noexcept {
  return {pose.x() + u.v * std::cos(pose.theta()) * dt, pose.y() + u.v * std::sin(pose.theta()) * dt,
          pose.theta() + u.omega * dt};
}

void TrajectorySpec::validate() const {
  if (!(dt > 0.0)) {
    throw InvalidArgument("TrajectorySpec: dt must be positive");
  }
  if (n_steps < 2) {
    throw InvalidArgument("TrajectorySpec: n_steps must be >= 2");
  }
  if (!(speed_mean > 0.0)) {
    throw InvalidArgument("TrajectorySpec: speed_mean must be positive");
  }
  if (speed_std < 0.0 || yawrate_std < 0.0 || odom_v_noise < 0.0 || odom_w_noise < 0.0 || margin < 0.0) {
    throw InvalidArgument("TrajectorySpec: noise magnitudes and margin must be non-negative");
  }
}

namespace {

// Heading after bouncing off whichever borders of `inner` the look-ahead
// point has crossed while still moving outward.
double reflect_heading(double theta, Vec2 ahead, const Rect& inner) {
  double c = std::cos(theta);
  double s = std::sin(theta);
  bool changed = false;
  if ((ahead.x < inner.xmin && c < 0.0) || (ahead.x > inner.xmax && c > 0.0)) {
    c = -c;
    changed = true;
  }
  if ((ahead.y < inner.ymin && s < 0.0) || (ahead.y > inner.ymax && s > 0.0)) {
    s = -s;
    changed = true;
  }
  return changed ? std::atan2(s, c) : theta;
}

}  // namespace

Trajectory generate_trajectory(const GeoRaster& world, const TrajectorySpec& spec, std::optional<Rect> region) {
  spec.validate();
  const Rect outer = region.value_or(world.bounds());
  const Rect inner{outer.xmin + spec.margin, outer.ymin + spec.margin, outer.xmax - spec.margin,
                   outer.ymax - spec.margin};
  if (inner.empty()) {
    throw InvalidArgument("generate_trajectory: region smaller than twice the margin");
  }

  Rng rng = make_rng(spec.seed, 0x7472616a);  // "traj"
  Pose2D pose;
  if (spec.start) {
    pose = *spec.start;
  } else {
    std::uniform_real_distribution<double> ux(inner.xmin, inner.xmax);
    std::uniform_real_distribution<double> uy(inner.ymin, inner.ymax);
    std::uniform_real_distribution<double> ut(-std::numbers::pi, std::numbers::pi);
    const double x = ux(rng);
    const double y = uy(rng);
    pose = Pose2D(x, y, ut(rng));
  }

  Trajectory out;
  out.reserve(spec.n_steps);
  for (std::size_t k = 0; k < spec.n_steps; ++k) {
    Control u;
    u.v = std::max(0.0, spec.speed_mean + gaussian(rng, spec.speed_std));
    u.omega = gaussian(rng, spec.yawrate_std);

    // Steer so that the heading after this step points back inside whenever
    // two steps ahead along the current heading would cross the margin.
    const Vec2 h = pose.heading();
    const double look = 2.0 * u.v * spec.dt;
    const Vec2 ahead{pose.x() + look * h.x, pose.y() + look * h.y};
    if (!inner.contains(ahead)) {
      const double target = reflect_heading(pose.theta(), ahead, inner);
      u.omega = geo::angle_diff(target, pose.theta()) / spec.dt;
    }

    TrajectoryStep step;
    step.t = static_cast<double>(k) * spec.dt;
    step.truth = pose;
    step.control = u;
    step.noisy.v = u.v * (1.0 + gaussian(rng, spec.odom_v_noise));
    step.noisy.omega = u.omega + gaussian(rng, spec.odom_w_noise);
    out.push_back(step);
    pose = unicycle_step(pose, u, spec.dt);
  }
  return out;
}

void GroundViewSpec::validate() const {
  if (n_rays == 0 || n_ranges == 0) {
    throw InvalidArgument("GroundViewSpec: n_rays and n_ranges must be positive");
  }
  if (!(fov > 0.0 && fov < std::numbers::pi)) {
    throw InvalidArgument("GroundViewSpec: fov must lie in (0, pi)");
  }
  if (!(max_range > 0.0)) {
    throw InvalidArgument("GroundViewSpec: max_range must be positive");
  }
  if (!(gamma > 0.0)) {
    throw InvalidArgument("GroundViewSpec: gamma must be positive");
  }
  if (noise_std < 0.0) {
    throw InvalidArgument("GroundViewSpec: noise_std must be non-negative");
  }
}

std::vector<double> channel_mix_matrix(std::size_t channels, std::uint64_t seed, double strength) {
  std::vector<double> m(channels * channels, 0.0);
  Rng rng = make_rng(seed, 0x6d6978);  // "mix"
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = strength / std::sqrt(static_cast<double>(channels));
  for (std::size_t i = 0; i < channels; ++i) {
    for (std::size_t j = 0; j < channels; ++j) {
      const double r = normal(rng);
      m[i * channels + j] = (i == j ? 1.0 - strength : 0.0) + scale * r;
    }
  }
  return m;
}

Vec2 ground_sample_point(const Pose2D& pose, const GroundViewSpec& spec, std::size_t ray,
                         std::size_t range) noexcept {
  const double bearing =
      spec.n_rays == 1 ? 0.0
                       : -0.5 * spec.fov + spec.fov * static_cast<double>(ray) / static_cast<double>(spec.n_rays - 1);
  const double r = spec.max_range * static_cast<double>(range + 1) / static_cast<double>(spec.n_ranges);
  const double a = pose.theta() + bearing;
  return {pose.x() + r * std::cos(a), pose.y() + r * std::sin(a)};
}

GroundObservation render_ground_view(const GeoRaster& world, const Pose2D& pose, const GroundViewSpec& spec) {
  spec.validate();
  const std::size_t nc = world.channels();
  GroundObservation obs{Tensor3(spec.n_rays, spec.n_ranges, nc), pose};
  const std::vector<double> mix = channel_mix_matrix(nc, spec.channel_mix_seed, spec.mix_strength);

  const std::uint64_t pose_key = mix_seed(mix_seed(std::bit_cast<std::uint64_t>(pose.x()),
                                                   std::bit_cast<std::uint64_t>(pose.y())),
                                          std::bit_cast<std::uint64_t>(pose.theta()));
  Rng noise_rng = make_rng(spec.channel_mix_seed ^ pose_key, 0x6e6f697365);  // "noise"

  std::vector<double> raw(nc);
  std::size_t valid = 0;
  for (std::size_t k = 0; k < spec.n_rays; ++k) {
    for (std::size_t j = 0; j < spec.n_ranges; ++j) {
      std::fill(raw.begin(), raw.end(), 0.0);
      if (world.sample_world(ground_sample_point(pose, spec, k, j), raw.data())) {
        ++valid;
      }
      for (std::size_t i = 0; i < nc; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < nc; ++c) {
          s += mix[i * nc + c] * raw[c];
        }
        const double shaped = std::copysign(std::pow(std::abs(s), spec.gamma), s);
        obs.data.at(k, j, i) = shaped + gaussian(noise_rng, spec.noise_std);
      }
    }
  }
  if (valid == 0) {
    throw Error("ground view footprint out of bounds");
  }
  return obs;
}

std::vector<Control> derive_controls_from_poses(std::span<const TimedPose> poses) {
  if (poses.size() < 2) {
    throw InvalidArgument(">=2 poses required");
  }
  std::vector<Control> out;
  out.reserve(poses.size());
  for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
    const double dt = poses[i + 1].t - poses[i].t;
    if (!(dt > 0.0)) {
      throw InvalidArgument("derive_controls_from_poses: timestamps must be strictly increasing (index " +
                            std::to_string(i + 1) + ")");
    }
    const Pose2D& a = poses[i].pose;
    const Pose2D& b = poses[i + 1].pose;
    out.push_back({a.distance_to(b) / dt, geo::angle_diff(b.theta(), a.theta()) / dt});
  }
  out.push_back(out.back());
  return out;
}

}  // namespace cvmcl::sim
