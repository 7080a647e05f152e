#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cvmcl/geo.hpp"
#include "cvmcl/siamese.hpp"

namespace cvmcl::match {

/// Regular lattice of candidate satellite poses. Enumeration order is
/// row (y) major, then x, then heading.
struct PoseGrid {
  double x_spacing = 1.0;
  double y_spacing = 1.0;
  std::vector<double> headings;
  geo::Rect bounds;

  /// `count` headings evenly spaced from 0.
  static std::vector<double> uniform_headings(std::size_t count);

  void validate() const;
  [[nodiscard]] std::size_t nx() const noexcept;
  [[nodiscard]] std::size_t ny() const noexcept;
  [[nodiscard]] std::size_t size() const noexcept { return nx() * ny() * headings.size(); }
  [[nodiscard]] geo::Pose2D pose(std::size_t i) const noexcept;
  [[nodiscard]] std::vector<geo::Pose2D> poses() const;
  /// Index of the lattice pose nearest to `p` (position rounded per axis,
  /// heading by smallest angular difference); nullopt when `p` lies more than
  /// half a spacing outside the bounds.
  [[nodiscard]] std::optional<std::size_t> nearest(const geo::Pose2D& p) const noexcept;
};

struct IndexEntry {
  geo::Pose2D pose;
  std::vector<float> embedding;

  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

/// Precomputed satellite embeddings over a set of poses, tagged with the
/// fingerprint (checkpoint CRC) of the model that produced them.
class EmbeddingIndex {
public:
  EmbeddingIndex() = default;
  /// Throws InvalidArgument on empty input, ragged embeddings or duplicate
  /// poses.
  EmbeddingIndex(std::vector<IndexEntry> entries, std::uint32_t fingerprint);

  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return entries_.empty() ? 0 : entries_.front().embedding.size(); }
  [[nodiscard]] const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
  [[nodiscard]] const IndexEntry& operator[](std::size_t i) const noexcept { return entries_[i]; }
  [[nodiscard]] std::uint32_t fingerprint() const noexcept { return fingerprint_; }
  [[nodiscard]] double distance(std::size_t entry, std::span<const double> query) const;

  friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;

private:
  std::vector<IndexEntry> entries_;
  std::uint32_t fingerprint_ = 0;
};

/// Maps a satellite pose to its embedding; nullopt when the pose cannot be
/// embedded (footprint outside the map). Must be safe to call concurrently.
using SatEmbedder = std::function<std::optional<std::vector<double>>(const geo::Pose2D&)>;

/// Crops the raster at the pose and runs the satellite encoder. Poses whose
/// footprint misses the raster entirely yield nullopt.
SatEmbedder model_sat_embedder(const embed::SiameseModel& model, const geo::GeoRaster& raster,
                               const geo::CropSpec& crop);

/// Oracle embedding (x, y, k*cos(theta), k*sin(theta)); Euclidean distance in
/// this space is a true pose distance.
std::vector<double> pose_features(const geo::Pose2D& pose, double heading_scale);
SatEmbedder pose_feature_embedder(double heading_scale);

/// One entry per grid pose. Throws on an empty grid or when a pose cannot be
/// embedded.
EmbeddingIndex build_index(const SatEmbedder& embedder, const PoseGrid& grid, std::uint32_t fingerprint);
EmbeddingIndex build_index(const embed::SiameseModel& model, const geo::GeoRaster& raster, const PoseGrid& grid,
                           const geo::CropSpec& crop, std::uint32_t fingerprint);

struct Neighbor {
  std::size_t entry = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact k nearest entries by Euclidean distance, ascending; ties broken by
/// lexicographic pose order. Throws InvalidArgument unless 1 <= k <= size.
std::vector<Neighbor> query(const EmbeddingIndex& index, std::span<const double> embedding, std::size_t k);

struct ScoredPair {
  double distance = 0.0;
  int label = 0;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;
  double average_precision = 0.0;
};

/// Sweeps thresholds over the distinct distances in ascending order
/// (predict match iff distance <= threshold) and accumulates
/// AP = sum (R_i - R_{i-1}) * P_i. Throws InvalidArgument without positives.
PrCurve pr_curve(std::span<const ScoredPair> scored);

struct RetrievalQuery {
  std::vector<double> embedding;
  geo::Pose2D truth;
};

struct TopXResult {
  std::vector<double> x_percent;
  std::vector<double> fraction;        // per X, over evaluated queries
  std::size_t evaluated = 0;
  std::size_t excluded_no_positive = 0;
  std::vector<std::size_t> best_positive_rank;  // 1-based, per evaluated query
};

/// Fraction of queries whose best-ranked Positive entry (label_pair against
/// the truth pose) is within the top ceil(X% * size) results.
TopXResult topx_retrieval(const EmbeddingIndex& index, std::span<const RetrievalQuery> queries,
                          const geo::PairThresholds& thresholds, std::span<const double> x_percent);

/// Every (query, entry) pair labeled by label_pair, Excluded dropped.
std::vector<ScoredPair> score_all_pairs(const EmbeddingIndex& index, std::span<const RetrievalQuery> queries,
                                        const geo::PairThresholds& thresholds);

}  // namespace cvmcl::match
