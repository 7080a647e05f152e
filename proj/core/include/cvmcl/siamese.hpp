#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cvmcl/common.hpp"
#include "cvmcl/encoder.hpp"
#include "cvmcl/geo.hpp"
#include "cvmcl/sim.hpp"

namespace cvmcl::embed {

/// Per-channel input standardization applied before an encoder sees a view.
struct ViewStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  static ViewStats identity(std::size_t channels);
  friend bool operator==(const ViewStats&, const ViewStats&) = default;
};

/// Accumulates per-channel moments over many tensors; finish() floors the
/// deviation at 1e-8.
class StatsAccumulator {
public:
  explicit StatsAccumulator(std::size_t channels);
  void add(const Tensor3& t);
  [[nodiscard]] ViewStats finish() const;

private:
  std::vector<double> sum_, sum_sq_;
  double count_ = 0.0;
};

Tensor3 standardize(const Tensor3& t, const ViewStats& stats);

/// Two independent encoders sharing one architecture.
struct SiameseModel {
  EncoderConfig config;
  EncoderParams ground;
  EncoderParams sat;
  ViewStats ground_stats;
  ViewStats sat_stats;

  /// Fresh model: independent seeded initializations, identity stats.
  static SiameseModel create(const EncoderConfig& config);

  [[nodiscard]] const EncoderParams& params(View v) const noexcept { return v == View::Ground ? ground : sat; }
  [[nodiscard]] EncoderParams& params(View v) noexcept { return v == View::Ground ? ground : sat; }
  [[nodiscard]] const ViewStats& stats(View v) const noexcept {
    return v == View::Ground ? ground_stats : sat_stats;
  }

  /// Standardizes the raw view and runs the matching encoder.
  [[nodiscard]] std::vector<double> embed(View v, const Tensor3& raw) const;
  [[nodiscard]] std::vector<double> embed_ground(const Tensor3& raw) const { return embed(View::Ground, raw); }
  [[nodiscard]] std::vector<double> embed_sat(const Tensor3& raw) const { return embed(View::Satellite, raw); }

  friend bool operator==(const SiameseModel&, const SiameseModel&) = default;
};

double euclidean(std::span<const double> a, std::span<const double> b);

/// label*d^2 + (1-label)*max(margin-d, 0)^2 with d the Euclidean distance.
double contrastive_loss(std::span<const double> e_ground, std::span<const double> e_sat, int label, double margin);

struct LossGradient {
  double loss = 0.0;
  double distance = 0.0;
  std::vector<double> d_ground;  // dL/de_ground; dL/de_sat is its negation
};

/// Loss and its gradient w.r.t. the ground embedding. Uses subgradient 0 at
/// the hinge (d == margin) and at d == 0 for negatives.
LossGradient contrastive_loss_grad(std::span<const double> e_ground, std::span<const double> e_sat, int label,
                                   double margin);

struct LabeledPair {
  Tensor3 ground;  // raw ground observation
  Tensor3 sat;     // raw satellite patch
  int label = 0;
};

struct PairGradients {
  double loss = 0.0;
  double distance = 0.0;
  std::vector<double> ground;  // layout of model.ground.values
  std::vector<double> sat;     // layout of model.sat.values
};

/// Exact gradient of the contrastive loss of one pair w.r.t. both encoders.
PairGradients backward(const SiameseModel& model, const LabeledPair& pair, double margin);

/// Source of training pairs, materialized on demand.
class PairSource {
public:
  virtual ~PairSource() = default;
  [[nodiscard]] virtual std::size_t size() const = 0;
  [[nodiscard]] virtual LabeledPair pair(std::size_t i) const = 0;
  [[nodiscard]] virtual int label(std::size_t i) const = 0;
};

class InMemoryPairs final : public PairSource {
public:
  explicit InMemoryPairs(std::vector<LabeledPair> pairs) : pairs_(std::move(pairs)) {}
  [[nodiscard]] std::size_t size() const override { return pairs_.size(); }
  [[nodiscard]] LabeledPair pair(std::size_t i) const override { return pairs_.at(i); }
  [[nodiscard]] int label(std::size_t i) const override { return pairs_.at(i).label; }

private:
  std::vector<LabeledPair> pairs_;
};

/// One mined correspondence: ground observation index, satellite pose, label.
struct MinedPair {
  std::size_t ground_index = 0;
  geo::Pose2D sat_pose;
  int label = 0;

  friend bool operator==(const MinedPair&, const MinedPair&) = default;
};

struct MiningResult {
  std::vector<MinedPair> pairs;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t skipped_no_positive = 0;  // observations without a Positive candidate
};

/// For every ground pose, all Positive grid poses become label-1 pairs and
/// round(neg_per_pos * positives) Negative poses, sampled uniformly without
/// replacement, become label-0 pairs. Excluded poses are dropped; grid poses
/// whose footprint is not fully inside the raster are never used.
MiningResult mine_pairs(std::span<const geo::Pose2D> ground_poses, const geo::GeoRaster& raster,
                        std::span<const geo::Pose2D> grid, const geo::CropSpec& crop,
                        const geo::PairThresholds& thresholds, double neg_per_pos, std::uint64_t seed);

/// Materializes mined pairs by cropping the raster on demand. Holds
/// references; the observations and raster must outlive it.
class MinedPairSource final : public PairSource {
public:
  MinedPairSource(std::span<const sim::GroundObservation> observations, const geo::GeoRaster& raster,
                  geo::CropSpec crop, std::vector<MinedPair> pairs);
  [[nodiscard]] std::size_t size() const override { return pairs_.size(); }
  [[nodiscard]] LabeledPair pair(std::size_t i) const override;
  [[nodiscard]] int label(std::size_t i) const override { return pairs_.at(i).label; }
  [[nodiscard]] const std::vector<MinedPair>& pairs() const noexcept { return pairs_; }

private:
  std::span<const sim::GroundObservation> observations_;
  const geo::GeoRaster* raster_;
  geo::CropSpec crop_;
  std::vector<MinedPair> pairs_;
};

}  // namespace cvmcl::embed
