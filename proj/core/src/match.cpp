#include "cvmcl/match.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "cvmcl/parallel.hpp"

namespace cvmcl::match {

using geo::Pose2D;

std::vector<double> PoseGrid::uniform_headings(std::size_t count) {
  std::vector<double> h(count);
  for (std::size_t k = 0; k < count; ++k) {
    h[k] = geo::wrap_angle(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count));
  }
  return h;
}

void PoseGrid::validate() const {
  if (!(x_spacing > 0.0) || !(y_spacing > 0.0)) {
    throw InvalidArgument("PoseGrid: spacing must be positive");
  }
  if (headings.empty()) {
    throw InvalidArgument("PoseGrid: empty heading set");
  }
  if (!(bounds.xmax >= bounds.xmin && bounds.ymax >= bounds.ymin)) {
    throw InvalidArgument("PoseGrid: inverted bounds");
  }
  for (std::size_t i = 0; i < headings.size(); ++i) {
    for (std::size_t j = i + 1; j < headings.size(); ++j) {
      if (std::abs(geo::angle_diff(headings[i], headings[j])) < 1e-12) {
        throw InvalidArgument("PoseGrid: headings must be distinct modulo 2*pi");
      }
    }
  }
}

std::size_t PoseGrid::nx() const noexcept {
  return static_cast<std::size_t>(std::floor((bounds.xmax - bounds.xmin) / x_spacing + 1e-9)) + 1;
}

std::size_t PoseGrid::ny() const noexcept {
  return static_cast<std::size_t>(std::floor((bounds.ymax - bounds.ymin) / y_spacing + 1e-9)) + 1;
}

Pose2D PoseGrid::pose(std::size_t i) const noexcept {
  const std::size_t nh = headings.size();
  const std::size_t ih = i % nh;
  const std::size_t rest = i / nh;
  const std::size_t ix = rest % nx();
  const std::size_t iy = rest / nx();
  return {bounds.xmin + static_cast<double>(ix) * x_spacing, bounds.ymin + static_cast<double>(iy) * y_spacing,
          headings[ih]};
}

std::vector<Pose2D> PoseGrid::poses() const {
  validate();
  std::vector<Pose2D> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = pose(i);
  }
  return out;
}

std::optional<std::size_t> PoseGrid::nearest(const Pose2D& p) const noexcept {
  const double fx = (p.x() - bounds.xmin) / x_spacing;
  const double fy = (p.y() - bounds.ymin) / y_spacing;
  const auto n_x = static_cast<double>(nx());
  const auto n_y = static_cast<double>(ny());
  if (!(fx >= -0.5 && fx <= n_x - 0.5 && fy >= -0.5 && fy <= n_y - 0.5)) {
    return std::nullopt;
  }
  const auto ix = static_cast<std::size_t>(std::clamp(std::round(fx), 0.0, n_x - 1.0));
  const auto iy = static_cast<std::size_t>(std::clamp(std::round(fy), 0.0, n_y - 1.0));
  std::size_t ih = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < headings.size(); ++k) {
    const double d = std::abs(geo::angle_diff(headings[k], p.theta()));
    if (d < best) {
      best = d;
      ih = k;
    }
  }
  return (iy * nx() + ix) * headings.size() + ih;
}

EmbeddingIndex::EmbeddingIndex(std::vector<IndexEntry> entries, std::uint32_t fingerprint)
    : entries_(std::move(entries)), fingerprint_(fingerprint) {
  if (entries_.empty()) {
    throw InvalidArgument("EmbeddingIndex: no entries");
  }
  const std::size_t d = entries_.front().embedding.size();
  for (const auto& e : entries_) {
    if (e.embedding.size() != d) {
      throw InvalidArgument("EmbeddingIndex: embeddings have different lengths");
    }
  }
  std::vector<Pose2D> poses(entries_.size());
  std::transform(entries_.begin(), entries_.end(), poses.begin(), [](const IndexEntry& e) { return e.pose; });
  std::sort(poses.begin(), poses.end());
  if (std::adjacent_find(poses.begin(), poses.end()) != poses.end()) {
    throw InvalidArgument("EmbeddingIndex: duplicate pose");
  }
}

double EmbeddingIndex::distance(std::size_t entry, std::span<const double> query) const {
  const auto& e = entries_[entry].embedding;
  if (query.size() != e.size()) {
    throw InvalidArgument("EmbeddingIndex: query length " + std::to_string(query.size()) + " != " +
                          std::to_string(e.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double d = static_cast<double>(e[i]) - query[i];
    s += d * d;
  }
  return std::sqrt(s);
}

SatEmbedder model_sat_embedder(const embed::SiameseModel& model, const geo::GeoRaster& raster,
                               const geo::CropSpec& crop) {
  return [&model, &raster, crop](const Pose2D& pose) -> std::optional<std::vector<double>> {
    try {
      return model.embed_sat(geo::crop_at_pose(raster, pose, crop).data);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
}

std::vector<double> pose_features(const Pose2D& pose, double heading_scale) {
  return {pose.x(), pose.y(), heading_scale * std::cos(pose.theta()), heading_scale * std::sin(pose.theta())};
}

SatEmbedder pose_feature_embedder(double heading_scale) {
  return [heading_scale](const Pose2D& pose) -> std::optional<std::vector<double>> {
    return pose_features(pose, heading_scale);
  };
}

EmbeddingIndex build_index(const SatEmbedder& embedder, const PoseGrid& grid, std::uint32_t fingerprint) {
  const std::vector<Pose2D> poses = grid.poses();
  if (poses.empty()) {
    throw InvalidArgument("build_index: empty grid");
  }
  std::vector<IndexEntry> entries(poses.size());
  parallel_for(poses.size(), [&](std::size_t i) {
    const auto e = embedder(poses[i]);
    if (!e) {
      throw Error("build_index: grid pose " + std::to_string(i) + " footprint does not intersect the raster");
    }
    entries[i].pose = poses[i];
    entries[i].embedding.assign(e->begin(), e->end());
  });
  return EmbeddingIndex(std::move(entries), fingerprint);
}

EmbeddingIndex build_index(const embed::SiameseModel& model, const geo::GeoRaster& raster, const PoseGrid& grid,
                           const geo::CropSpec& crop, std::uint32_t fingerprint) {
  return build_index(model_sat_embedder(model, raster, crop), grid, fingerprint);
}

namespace {

struct Ranked {
  double distance;
  std::size_t entry;
};

bool ranks_before(const EmbeddingIndex& index, const Ranked& a, const Ranked& b) {
  if (a.distance != b.distance) {
    return a.distance < b.distance;
  }
  return index[a.entry].pose < index[b.entry].pose;
}

std::vector<Ranked> all_distances(const EmbeddingIndex& index, std::span<const double> embedding) {
  std::vector<Ranked> r(index.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = {index.distance(i, embedding), i};
  }
  return r;
}

}  // namespace

std::vector<Neighbor> query(const EmbeddingIndex& index, std::span<const double> embedding, std::size_t k) {
  if (k < 1 || k > index.size()) {
    throw InvalidArgument("query: k=" + std::to_string(k) + " outside [1, " + std::to_string(index.size()) + "]");
  }
  std::vector<Ranked> r = all_distances(index, embedding);
  const auto cmp = [&](const Ranked& a, const Ranked& b) { return ranks_before(index, a, b); };
  std::partial_sort(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k), r.end(), cmp);
  std::vector<Neighbor> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = {r[i].entry, r[i].distance};
  }
  return out;
}

PrCurve pr_curve(std::span<const ScoredPair> scored) {
  std::vector<ScoredPair> s(scored.begin(), scored.end());
  const auto total_pos = static_cast<double>(
      std::count_if(s.begin(), s.end(), [](const ScoredPair& p) { return p.label == 1; }));
  if (total_pos == 0.0) {
    throw InvalidArgument("pr_curve: no positive pairs");
  }
  std::sort(s.begin(), s.end(), [](const ScoredPair& a, const ScoredPair& b) { return a.distance < b.distance; });

  PrCurve curve;
  double tp = 0.0, fp = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < s.size();) {
    const double threshold = s[i].distance;
    for (; i < s.size() && s[i].distance == threshold; ++i) {
      (s[i].label == 1 ? tp : fp) += 1.0;
    }
    const double precision = tp / (tp + fp);
    const double recall = tp / total_pos;
    curve.average_precision += (recall - prev_recall) * precision;
    prev_recall = recall;
    curve.points.push_back({threshold, precision, recall});
  }
  return curve;
}

TopXResult topx_retrieval(const EmbeddingIndex& index, std::span<const RetrievalQuery> queries,
                          const geo::PairThresholds& thresholds, std::span<const double> x_percent) {
  TopXResult result;
  result.x_percent.assign(x_percent.begin(), x_percent.end());
  std::vector<std::optional<std::size_t>> ranks(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    const std::vector<Ranked> r = all_distances(index, queries[q].embedding);
    std::optional<Ranked> best;
    for (const Ranked& cand : r) {
      if (geo::label_pair(queries[q].truth, index[cand.entry].pose, thresholds) != geo::PairLabel::Positive) {
        continue;
      }
      if (!best || ranks_before(index, cand, *best)) {
        best = cand;
      }
    }
    if (!best) {
      return;
    }
    std::size_t ahead = 0;
    for (const Ranked& cand : r) {
      ahead += ranks_before(index, cand, *best) ? 1 : 0;
    }
    ranks[q] = ahead + 1;
  });

  for (const auto& r : ranks) {
    if (r) {
      result.best_positive_rank.push_back(*r);
    } else {
      ++result.excluded_no_positive;
    }
  }
  result.evaluated = result.best_positive_rank.size();
  const auto n = static_cast<double>(index.size());
  for (double x : x_percent) {
    const auto cutoff = static_cast<std::size_t>(std::ceil(x * n / 100.0 - 1e-9));
    const auto hits = std::count_if(result.best_positive_rank.begin(), result.best_positive_rank.end(),
                                    [&](std::size_t rank) { return rank <= cutoff; });
    result.fraction.push_back(result.evaluated == 0
                                  ? 0.0
                                  : static_cast<double>(hits) / static_cast<double>(result.evaluated));
  }
  return result;
}

std::vector<ScoredPair> score_all_pairs(const EmbeddingIndex& index, std::span<const RetrievalQuery> queries,
                                        const geo::PairThresholds& thresholds) {
  std::vector<std::vector<ScoredPair>> per_query(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    for (std::size_t i = 0; i < index.size(); ++i) {
      const geo::PairLabel label = geo::label_pair(queries[q].truth, index[i].pose, thresholds);
      if (label == geo::PairLabel::Excluded) {
        continue;
      }
      per_query[q].push_back({index.distance(i, queries[q].embedding), label == geo::PairLabel::Positive ? 1 : 0});
    }
  });
  std::vector<ScoredPair> out;
  for (auto& v : per_query) {
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

}  // namespace cvmcl::match
