#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvmcl/encoder.hpp"
#include "cvmcl/filter.hpp"
#include "cvmcl/geo.hpp"
#include "cvmcl/match.hpp"
#include "cvmcl/sim.hpp"
#include "cvmcl/training.hpp"

namespace cvmcl::pipeline {

struct GridSettings {
  double spacing = 1.0;  // meters
  std::size_t n_headings = 8;
  geo::PairThresholds thresholds;

  [[nodiscard]] match::PoseGrid over(const geo::Rect& region) const;
};

struct TrainSettings {
  // Sized to train in under two minutes on one core.
  embed::TrainConfig config{.epochs = 4, .neg_per_pos = 3.0};
  std::size_t n_ground = 1500;  // training trajectory length
  double val_fraction = 0.1;    // trailing share of the trajectory held out
};

struct FilterSettings {
  filter::FilterConfig config;
  double alpha = 0.0;         // > 0 overrides calibration
  double alpha_scale = 20.0;  // alpha = alpha_scale / median distance
  double road_half_width = 2.0;
  std::size_t n_distractor_roads = 6;
  double oracle_heading_scale = 2.0;  // meters per unit of (cos, sin)
};

struct EvalSettings {
  geo::Rect train_region{8.0, 8.0, 120.0, 120.0};
  geo::Rect eval_region{48.0, 48.0, 80.0, 80.0};
  geo::Rect train_probe_region{48.0, 48.0, 80.0, 80.0};  // in the training world
  std::vector<double> topx{1.0, 5.0, 10.0, 20.0};
};

/// Every tunable of the experiment. Stage seeds are derived from `seed`.
struct RunConfig {
  std::uint64_t seed = 7;
  sim::WorldSpec world;
  sim::TrajectorySpec trajectory;
  sim::GroundViewSpec groundview;
  geo::CropSpec crop;
  embed::EncoderConfig encoder;
  TrainSettings train;
  GridSettings grid;
  FilterSettings filter;
  EvalSettings eval;

  /// Stage seeds: world(0), world(1), trajectories, camera, model init,
  /// training, filter.
  [[nodiscard]] sim::WorldSpec world_spec(int which) const;
  [[nodiscard]] sim::TrajectorySpec train_trajectory_spec() const;
  [[nodiscard]] sim::TrajectorySpec eval_trajectory_spec() const;
  [[nodiscard]] sim::GroundViewSpec ground_spec() const;
  [[nodiscard]] embed::EncoderConfig encoder_config() const;
  [[nodiscard]] embed::TrainConfig train_config() const;
  [[nodiscard]] std::uint64_t mining_seed() const;
  [[nodiscard]] std::uint64_t road_seed() const;
  /// Filter config for run `k` of a --seeds batch.
  [[nodiscard]] filter::FilterConfig filter_config(std::size_t run) const;

  void validate() const;
};

/// Parses an INI file; keys not set keep their defaults. Unknown sections or
/// keys and malformed values throw InvalidArgument naming the key.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);
/// Every key with its resolved value, in a fixed order.
std::string to_ini(const RunConfig& config);

}  // namespace cvmcl::pipeline
