#include "cvmcl/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cvmcl::embed {

ViewStats ViewStats::identity(std::size_t channels) {
  return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

StatsAccumulator::StatsAccumulator(std::size_t channels) : sum_(channels, 0.0), sum_sq_(channels, 0.0) {}

void StatsAccumulator::add(const Tensor3& t) {
  if (t.channels != sum_.size()) {
    throw InvalidArgument("StatsAccumulator: channel count mismatch");
  }
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const double v = t.data[i];
    sum_[i % t.channels] += v;
    sum_sq_[i % t.channels] += v * v;
  }
  count_ += static_cast<double>(t.rows * t.cols);
}

ViewStats StatsAccumulator::finish() const {
  ViewStats s = ViewStats::identity(sum_.size());
  if (count_ == 0.0) {
    return s;
  }
  for (std::size_t c = 0; c < sum_.size(); ++c) {
    const double mean = sum_[c] / count_;
    const double var = std::max(0.0, sum_sq_[c] / count_ - mean * mean);
    s.mean[c] = mean;
    s.stddev[c] = std::max(std::sqrt(var), 1e-8);
  }
  return s;
}

Tensor3 standardize(const Tensor3& t, const ViewStats& stats) {
  if (stats.mean.size() != t.channels || stats.stddev.size() != t.channels) {
    throw InvalidArgument("standardize: stats have " + std::to_string(stats.mean.size()) + " channels, tensor has " +
                          std::to_string(t.channels));
  }
  Tensor3 out = t;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const std::size_t c = i % t.channels;
    out.data[i] = (out.data[i] - stats.mean[c]) / stats.stddev[c];
  }
  return out;
}

SiameseModel SiameseModel::create(const EncoderConfig& config) {
  config.validate();
  SiameseModel m{config,
                 init_params(config, View::Ground, mix_seed(config.seed, 1)),
                 init_params(config, View::Satellite, mix_seed(config.seed, 2)),
                 ViewStats::identity(config.ground.channels),
                 ViewStats::identity(config.sat.channels)};
  return m;
}

std::vector<double> SiameseModel::embed(View v, const Tensor3& raw) const {
  return forward(params(v), standardize(raw, stats(v)));
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("euclidean: length mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double contrastive_loss(std::span<const double> e_ground, std::span<const double> e_sat, int label, double margin) {
  const double d = euclidean(e_ground, e_sat);
  if (label == 1) {
    return d * d;
  }
  const double h = std::max(margin - d, 0.0);
  return h * h;
}

LossGradient contrastive_loss_grad(std::span<const double> e_ground, std::span<const double> e_sat, int label,
                                   double margin) {
  LossGradient g;
  g.distance = euclidean(e_ground, e_sat);
  g.d_ground.assign(e_ground.size(), 0.0);
  if (label == 1) {
    g.loss = g.distance * g.distance;
    for (std::size_t i = 0; i < e_ground.size(); ++i) {
      g.d_ground[i] = 2.0 * (e_ground[i] - e_sat[i]);
    }
    return g;
  }
  const double h = margin - g.distance;
  if (h <= 0.0 || g.distance == 0.0) {
    g.loss = h > 0.0 ? h * h : 0.0;
    return g;
  }
  g.loss = h * h;
  // d/de_g (m - d)^2 = -2 (m - d) (e_g - e_s) / d
  const double scale = -2.0 * h / g.distance;
  for (std::size_t i = 0; i < e_ground.size(); ++i) {
    g.d_ground[i] = scale * (e_ground[i] - e_sat[i]);
  }
  return g;
}

PairGradients backward(const SiameseModel& model, const LabeledPair& pair, double margin) {
  ForwardCache gc, sc;
  const std::vector<double> eg = forward(model.ground, standardize(pair.ground, model.ground_stats), &gc);
  const std::vector<double> es = forward(model.sat, standardize(pair.sat, model.sat_stats), &sc);
  const LossGradient lg = contrastive_loss_grad(eg, es, pair.label, margin);

  PairGradients out;
  out.loss = lg.loss;
  out.distance = lg.distance;
  out.ground.assign(model.ground.values.size(), 0.0);
  out.sat.assign(model.sat.values.size(), 0.0);
  const bool flat = std::all_of(lg.d_ground.begin(), lg.d_ground.end(), [](double v) { return v == 0.0; });
  if (flat) {
    return out;
  }
  std::vector<double> d_sat(lg.d_ground.size());
  std::transform(lg.d_ground.begin(), lg.d_ground.end(), d_sat.begin(), [](double v) { return -v; });
  embed::backward(model.ground, gc, lg.d_ground, out.ground);
  embed::backward(model.sat, sc, d_sat, out.sat);
  return out;
}

MiningResult mine_pairs(std::span<const geo::Pose2D> ground_poses, const geo::GeoRaster& raster,
                        std::span<const geo::Pose2D> grid, const geo::CropSpec& crop,
                        const geo::PairThresholds& thresholds, double neg_per_pos, std::uint64_t seed) {
  if (grid.empty()) {
    throw InvalidArgument("mine_pairs: empty candidate grid");
  }
  if (!(thresholds.pos_dist < thresholds.neg_dist)) {
    throw InvalidArgument("mine_pairs: pos_dist must be < neg_dist");
  }
  if (neg_per_pos < 0.0) {
    throw InvalidArgument("mine_pairs: neg_per_pos must be non-negative");
  }

  // Candidates whose whole footprint is sampled inside the raster.
  const geo::Rect b = raster.bounds();
  const double reach = crop.reach();
  std::vector<std::size_t> usable;
  usable.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const geo::Vec2 p = grid[i].position();
    if (p.x - reach >= b.xmin && p.x + reach <= b.xmax && p.y - reach >= b.ymin && p.y + reach <= b.ymax) {
      usable.push_back(i);
    }
  }

  MiningResult result;
  Rng rng = make_rng(seed, 0x6d696e65);  // "mine"
  std::vector<std::size_t> negatives;
  for (std::size_t gi = 0; gi < ground_poses.size(); ++gi) {
    const geo::Pose2D& g = ground_poses[gi];
    std::size_t n_pos = 0;
    negatives.clear();
    for (std::size_t idx : usable) {
      switch (geo::label_pair(g, grid[idx], thresholds)) {
        case geo::PairLabel::Positive:
          result.pairs.push_back({gi, grid[idx], 1});
          ++n_pos;
          break;
        case geo::PairLabel::Negative:
          negatives.push_back(idx);
          break;
        case geo::PairLabel::Excluded:
          break;
      }
    }
    if (n_pos == 0) {
      ++result.skipped_no_positive;
      continue;
    }
    result.positives += n_pos;
    const auto want = static_cast<std::size_t>(std::llround(neg_per_pos * static_cast<double>(n_pos)));
    const std::size_t take = std::min(want, negatives.size());
    // Partial Fisher-Yates: the first `take` entries are a uniform sample
    // without replacement.
    for (std::size_t k = 0; k < take; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, negatives.size() - 1);
      std::swap(negatives[k], negatives[pick(rng)]);
      result.pairs.push_back({gi, grid[negatives[k]], 0});
    }
    result.negatives += take;
  }
  return result;
}

MinedPairSource::MinedPairSource(std::span<const sim::GroundObservation> observations, const geo::GeoRaster& raster,
                                 geo::CropSpec crop, std::vector<MinedPair> pairs)
    : observations_(observations), raster_(&raster), crop_(crop), pairs_(std::move(pairs)) {
  for (const auto& p : pairs_) {
    if (p.ground_index >= observations_.size()) {
      throw InvalidArgument("MinedPairSource: pair references ground observation " +
                            std::to_string(p.ground_index) + " of " + std::to_string(observations_.size()));
    }
  }
}

LabeledPair MinedPairSource::pair(std::size_t i) const {
  const MinedPair& p = pairs_.at(i);
  return {observations_[p.ground_index].data, geo::crop_at_pose(*raster_, p.sat_pose, crop_).data, p.label};
}

}  // namespace cvmcl::embed
