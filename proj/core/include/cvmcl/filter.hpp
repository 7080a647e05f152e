#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cvmcl/geo.hpp"
#include "cvmcl/match.hpp"
#include "cvmcl/sim.hpp"

namespace cvmcl::filter {

struct Particle {
  geo::Pose2D pose;
  double weight = 0.0;

  friend bool operator==(const Particle&, const Particle&) = default;
};

/// Weighted pose samples; weights sum to one after every update.
struct ParticleSet {
  std::vector<Particle> particles;
  std::size_t step = 0;

  [[nodiscard]] std::size_t size() const noexcept { return particles.size(); }
  [[nodiscard]] std::vector<double> weights() const;
  friend bool operator==(const ParticleSet&, const ParticleSet&) = default;
};

struct MotionNoise {
  double v_rel = 0.05;  // relative speed std
  double omega = 0.05;  // rad/s
  double xy = 0.1;      // positional diffusion std, meters
};

struct FilterConfig {
  std::size_t n_particles = 2000;
  double alpha = 1.0;      // likelihood rate, 1/embedding-distance units
  double neff_frac = 0.8;  // resample when N_eff < neff_frac * N
  MotionNoise noise;
  double conv_std = 1.0;   // meters
  double on_road_prob = 0.8;
  std::uint64_t seed = 6;

  void validate() const;
};

/// Boolean raster aligned with a GeoRaster (same size and transform).
class RoadMask {
public:
  RoadMask(std::size_t width, std::size_t height, geo::GeoTransform transform, std::vector<std::uint8_t> cells);
  /// Empty mask matching the raster's grid.
  static RoadMask like(const geo::GeoRaster& raster);

  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t height() const noexcept { return height_; }
  [[nodiscard]] const geo::GeoTransform& transform() const noexcept { return transform_; }
  [[nodiscard]] bool at(std::size_t row, std::size_t col) const noexcept { return cells_[row * width_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool on) noexcept { cells_[row * width_ + col] = on ? 1 : 0; }
  [[nodiscard]] std::size_t count() const noexcept;
  /// True when the world point falls in a set cell.
  [[nodiscard]] bool contains(geo::Vec2 world) const noexcept;
  [[nodiscard]] const std::vector<std::uint8_t>& cells() const noexcept { return cells_; }

  /// Marks every cell within `half_width` meters of the polyline.
  void paint_polyline(std::span<const geo::Vec2> points, double half_width);

private:
  std::size_t width_, height_;
  geo::GeoTransform transform_;
  std::vector<std::uint8_t> cells_;
};

/// Counters for recoverable events.
struct FilterEvents {
  std::size_t mask_fallbacks = 0;  // mask given but empty
  std::size_t weight_resets = 0;   // every likelihood vanished
};

/// Each particle is drawn, with probability on_road_prob, uniformly over the
/// set mask cells, otherwise uniformly over `bounds`; heading uniform; equal
/// weights.
ParticleSet init_particles(const geo::Rect& bounds, const RoadMask* mask, double on_road_prob, std::size_t n,
                           std::uint64_t seed, FilterEvents* events = nullptr);

/// Samples the Gaussian motion model: v' = v(1+e_v), w' = w+e_w, unicycle
/// step, then positional diffusion. Particle i draws from its own stream
/// derived from (seed, set.step, i). Weights are untouched.
ParticleSet predict(ParticleSet set, const sim::Control& u, double dt, const MotionNoise& noise, std::uint64_t seed);

/// Pose -> embedding distance d(I_t, I_s) for the current ground embedding.
/// Returns +infinity when the pose cannot be evaluated. Must be safe to call
/// concurrently.
class DistanceProvider {
public:
  virtual ~DistanceProvider() = default;
  [[nodiscard]] virtual double distance(const geo::Pose2D& pose, std::span<const double> ground_embedding) const = 0;
};

/// Embeds the satellite view at each particle pose on the fly.
class OnTheFlyProvider final : public DistanceProvider {
public:
  explicit OnTheFlyProvider(match::SatEmbedder embedder) : embedder_(std::move(embedder)) {}
  [[nodiscard]] double distance(const geo::Pose2D& pose, std::span<const double> ground_embedding) const override;

private:
  match::SatEmbedder embedder_;
};

/// Looks up the nearest precomputed grid entry.
class IndexProvider final : public DistanceProvider {
public:
  /// Throws InvalidArgument when the grid does not enumerate the index.
  IndexProvider(const match::EmbeddingIndex& index, match::PoseGrid grid);
  [[nodiscard]] double distance(const geo::Pose2D& pose, std::span<const double> ground_embedding) const override;

private:
  const match::EmbeddingIndex* index_;
  match::PoseGrid grid_;
};

/// w_i <- alpha * exp(-alpha * d_i) * w_i, normalized. Evaluated in log space;
/// when every term vanishes the weights are reset to uniform and counted.
ParticleSet update_weights(ParticleSet set, std::span<const double> distances, double alpha,
                           FilterEvents* events = nullptr);

ParticleSet measurement_update(ParticleSet set, std::span<const double> ground_embedding,
                               const DistanceProvider& provider, double alpha, FilterEvents* events = nullptr);

/// 1 / sum(w^2).
double effective_n(const ParticleSet& set);

/// Indices selected by systematic resampling with offset u0 in [0, 1/N).
std::vector<std::size_t> systematic_indices(std::span<const double> weights, double u0);
/// Draws u0 from `rng`, copies the selected particles, sets weights to 1/N.
ParticleSet systematic_resample(const ParticleSet& set, Rng& rng);

struct Estimate {
  geo::Pose2D mean;
  double pos_std = 0.0;
};

/// Weighted mean position, circular-mean heading and sqrt of the weighted
/// mean squared distance to the mean position.
Estimate estimate(const ParticleSet& set);

/// Weighted mean and standard deviation of particle distances to the truth,
/// computed over the whole cloud.
struct CloudError {
  double mean = 0.0;
  double stddev = 0.0;
};
CloudError cloud_error(const ParticleSet& set, const geo::Pose2D& truth);

struct StepReport {
  std::size_t step = 0;
  Estimate estimate;
  double neff = 0.0;  // after the measurement update, before resampling
  bool resampled = false;
  bool converged = false;
};

struct StepResult {
  ParticleSet set;
  StepReport report;
};

/// Measurement update, then systematic resampling when N_eff < neff_frac * N.
StepResult correct(ParticleSet set, std::span<const double> ground_embedding, const DistanceProvider& provider,
                   const FilterConfig& config, FilterEvents* events = nullptr);

/// predict -> measurement update -> conditional resample.
StepResult step(ParticleSet set, const sim::Control& u, double dt, std::span<const double> ground_embedding,
                const DistanceProvider& provider, const FilterConfig& config, FilterEvents* events = nullptr);

struct TraceRow {
  std::size_t step = 0;
  geo::Pose2D mean;
  double pos_std = 0.0;
  double neff = 0.0;
  bool resampled = false;
  bool converged = false;
  geo::Pose2D truth;
  double err_m = 0.0;  // |mean - truth|
};

struct RunSummary {
  std::vector<TraceRow> trace;
  std::optional<std::size_t> convergence_step;  // first step with pos_std < conv_std
  CloudError final_error;                       // over all particles at the last step
  bool final_converged = false;
  FilterEvents events;
};

using StepObserver = std::function<void(const ParticleSet&, const StepReport&)>;

/// Kidnapped-start localization over a trajectory: particles start in
/// `bounds` (road-biased when a mask is given); the first observation is
/// applied without prediction, later steps predict with the noisy odometry of
/// the previous step.
RunSummary run_localization(const sim::Trajectory& trajectory, std::span<const std::vector<double>> ground_embeddings,
                            const DistanceProvider& provider, const geo::Rect& bounds, const RoadMask* mask,
                            const FilterConfig& config, double dt, const StepObserver& observer = {});

/// 1 / median of all (query, entry) distances.
double calibrate_alpha(const match::EmbeddingIndex& index, std::span<const std::vector<double>> ground_embeddings);

}  // namespace cvmcl::filter
