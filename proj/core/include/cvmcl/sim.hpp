#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cvmcl/common.hpp"
#include "cvmcl/geo.hpp"

namespace cvmcl::sim {

/// Synthetic world: per-channel sum of random Gaussian bumps, standardized.
struct WorldSpec {
  std::size_t size = 512;  // pixels per side
  std::size_t channels = 3;
  std::size_t n_bumps = 1500;
  std::pair<double, double> bump_sigma_range{3.0, 12.0};  // pixels
  double pixel_size = 0.25;                              // m/px
  std::uint64_t seed = 1;

  void validate() const;
};

/// Rasters span [0, size*pixel_size] on both axes, north-up.
geo::GeoRaster generate_world(const WorldSpec& spec);

struct Control {
  double v = 0.0;      // forward speed, m/s
  double omega = 0.0;  // yaw rate, rad/s

  friend bool operator==(const Control&, const Control&) = default;
};

/// One Euler step of the unicycle model: position advances along the
/// current heading, then the heading integrates the yaw rate.
geo::Pose2D unicycle_step(const geo::Pose2D& pose, const Control& u, double dt) noexcept;

struct TrajectorySpec {
  std::size_t n_steps = 60;
  double dt = 1.0;
  double speed_mean = 1.0;
  double speed_std = 0.1;
  double yawrate_std = 0.15;
  double odom_v_noise = 0.01;  // relative std
  double odom_w_noise = 0.01;  // rad/s std
  double margin = 5.0;         // meters kept clear of the region border
  std::optional<geo::Pose2D> start;
  std::uint64_t seed = 2;

  void validate() const;
};

struct TrajectoryStep {
  double t = 0.0;
  geo::Pose2D truth;
  Control control;  // true control applied from this step to the next
  Control noisy;    // odometry reading

  friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

using Trajectory = std::vector<TrajectoryStep>;

/// Integrates random controls inside `region` (defaults to the world bounds).
/// When a step would leave the region shrunk by `margin`, the heading is
/// reflected off that border and the step recomputed.
Trajectory generate_trajectory(const geo::GeoRaster& world, const TrajectorySpec& spec,
                               std::optional<geo::Rect> region = std::nullopt);

struct GroundViewSpec {
  std::size_t n_rays = 16;
  std::size_t n_ranges = 32;
  double fov = 80.0 * std::numbers::pi / 180.0;
  double max_range = 4.4;  // meters
  std::uint64_t channel_mix_seed = 3;
  double mix_strength = 0.5;  // 0 gives the identity mix
  double noise_std = 0.05;
  double gamma = 0.8;

  void validate() const;
};

struct GroundObservation {
  Tensor3 data;           // n_rays x n_ranges x channels
  geo::Pose2D pose_truth;  // evaluation only

  friend bool operator==(const GroundObservation&, const GroundObservation&) = default;
};

/// Row-major channels x channels mixing matrix (1-s)*I + s*R/sqrt(C),
/// R standard normal drawn from `seed`.
std::vector<double> channel_mix_matrix(std::size_t channels, std::uint64_t seed, double strength);

/// World sample positions of the forward wedge: ray k, range j.
geo::Vec2 ground_sample_point(const geo::Pose2D& pose, const GroundViewSpec& spec, std::size_t ray,
                              std::size_t range) noexcept;

/// Samples the forward wedge, mixes channels, applies sign(s)|s|^gamma and
/// adds Gaussian noise seeded from (channel_mix_seed, pose). Samples outside
/// the world are zero before mixing. Throws Error when none lands inside.
GroundObservation render_ground_view(const geo::GeoRaster& world, const geo::Pose2D& pose,
                                     const GroundViewSpec& spec);

struct TimedPose {
  double t = 0.0;
  geo::Pose2D pose;
};

/// Finite-difference controls: v = |dp|/dt, omega = wrap(dtheta)/dt; the last
/// control repeats the penultimate. Throws InvalidArgument on fewer than two
/// poses or non-increasing timestamps.
std::vector<Control> derive_controls_from_poses(std::span<const TimedPose> poses);

}  // namespace cvmcl::sim
