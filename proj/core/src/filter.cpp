#include "cvmcl/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "cvmcl/parallel.hpp"
#include "cvmcl/siamese.hpp"

namespace cvmcl::filter {

using geo::Pose2D;
using geo::Vec2;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> ParticleSet::weights() const {
  std::vector<double> w(particles.size());
  std::transform(particles.begin(), particles.end(), w.begin(), [](const Particle& p) { return p.weight; });
  return w;
}

void FilterConfig::validate() const {
  if (n_particles < 2) {
    throw InvalidArgument("FilterConfig: n_particles must be >= 2");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("FilterConfig: alpha must be positive and finite");
  }
  if (!(neff_frac >= 0.0 && neff_frac <= 1.0)) {
    throw InvalidArgument("FilterConfig: neff_frac must lie in [0, 1]");
  }
  if (!(noise.v_rel >= 0.0 && noise.omega >= 0.0 && noise.xy >= 0.0)) {
    throw InvalidArgument("FilterConfig: motion noise must be non-negative");
  }
  if (!(conv_std > 0.0)) {
    throw InvalidArgument("FilterConfig: conv_std must be positive");
  }
  if (!(on_road_prob >= 0.0 && on_road_prob <= 1.0)) {
    throw InvalidArgument("FilterConfig: on_road_prob must lie in [0, 1]");
  }
}

RoadMask::RoadMask(std::size_t width, std::size_t height, geo::GeoTransform transform,
                   std::vector<std::uint8_t> cells)
    : width_(width), height_(height), transform_(transform), cells_(std::move(cells)) {
  if (width_ == 0 || height_ == 0 || cells_.size() != width_ * height_) {
    throw InvalidArgument("RoadMask: expected " + std::to_string(width_ * height_) + " cells, got " +
                          std::to_string(cells_.size()));
  }
}

RoadMask RoadMask::like(const geo::GeoRaster& raster) {
  return {raster.width(), raster.height(), raster.transform(),
          std::vector<std::uint8_t>(raster.width() * raster.height(), 0)};
}

std::size_t RoadMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](std::uint8_t c) { return c != 0; }));
}

bool RoadMask::contains(Vec2 world) const noexcept {
  const Vec2 px = transform_.world_to_pixel(world);
  const double c = std::round(px.x);
  const double r = std::round(px.y);
  if (!(c >= 0.0 && r >= 0.0 && c < static_cast<double>(width_) && r < static_cast<double>(height_))) {
    return false;
  }
  return at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
}

namespace {

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  }
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

}  // namespace

void RoadMask::paint_polyline(std::span<const Vec2> points, double half_width) {
  if (points.empty()) {
    return;
  }
  for (std::size_t r = 0; r < height_; ++r) {
    for (std::size_t c = 0; c < width_; ++c) {
      const Vec2 w = transform_.pixel_to_world({static_cast<double>(c), static_cast<double>(r)});
      double best = kInf;
      for (std::size_t k = 0; k + 1 < points.size(); ++k) {
        best = std::min(best, segment_distance(w, points[k], points[k + 1]));
      }
      if (points.size() == 1) {
        best = std::hypot(w.x - points[0].x, w.y - points[0].y);
      }
      if (best <= half_width) {
        set(r, c, true);
      }
    }
  }
}

ParticleSet init_particles(const geo::Rect& bounds, const RoadMask* mask, double on_road_prob, std::size_t n,
                           std::uint64_t seed, FilterEvents* events) {
  if (n == 0) {
    throw InvalidArgument("init_particles: n must be positive");
  }
  if (!(bounds.xmax >= bounds.xmin && bounds.ymax >= bounds.ymin)) {
    throw InvalidArgument("init_particles: inverted bounds");
  }
  std::vector<std::size_t> road;
  if (mask != nullptr) {
    for (std::size_t i = 0; i < mask->cells().size(); ++i) {
      if (mask->cells()[i] == 0) {
        continue;
      }
      const Vec2 w = mask->transform().pixel_to_world(
          {static_cast<double>(i % mask->width()), static_cast<double>(i / mask->width())});
      if (bounds.contains(w)) {
        road.push_back(i);
      }
    }
    if (road.empty() && events != nullptr) {
      ++events->mask_fallbacks;
    }
  }

  Rng rng = make_rng(seed, 0x696e6974);  // "init"
  std::uniform_real_distribution<double> ux(bounds.xmin, bounds.xmax);
  std::uniform_real_distribution<double> uy(bounds.ymin, bounds.ymax);
  std::uniform_real_distribution<double> uh(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  std::bernoulli_distribution on_road(road.empty() ? 0.0 : on_road_prob);

  ParticleSet set;
  set.particles.resize(n);
  const double w = 1.0 / static_cast<double>(n);
  for (Particle& p : set.particles) {
    Vec2 pos;
    if (on_road(rng)) {
      const std::size_t cell = road[std::uniform_int_distribution<std::size_t>(0, road.size() - 1)(rng)];
      const double c = static_cast<double>(cell % mask->width()) + jitter(rng);
      const double r = static_cast<double>(cell / mask->width()) + jitter(rng);
      pos = mask->transform().pixel_to_world({c, r});
    } else {
      pos = {ux(rng), uy(rng)};
    }
    p = {Pose2D(pos.x, pos.y, uh(rng)), w};
  }
  return set;
}

ParticleSet predict(ParticleSet set, const sim::Control& u, double dt, const MotionNoise& noise, std::uint64_t seed) {
  const std::uint64_t step_seed = mix_seed(seed, set.step);
  parallel_for(set.size(), [&](std::size_t i) {
    Rng rng = make_rng(step_seed, i);
    const sim::Control noisy{u.v * (1.0 + gaussian(rng, noise.v_rel)), u.omega + gaussian(rng, noise.omega)};
    const Pose2D moved = sim::unicycle_step(set.particles[i].pose, noisy, dt);
    const double ex = gaussian(rng, noise.xy);
    const double ey = gaussian(rng, noise.xy);
    set.particles[i].pose = Pose2D(moved.x() + ex, moved.y() + ey, moved.theta());
  });
  ++set.step;
  return set;
}

double OnTheFlyProvider::distance(const Pose2D& pose, std::span<const double> ground_embedding) const {
  const auto e = embedder_(pose);
  if (!e) {
    return kInf;
  }
  return embed::euclidean(ground_embedding, *e);
}

IndexProvider::IndexProvider(const match::EmbeddingIndex& index, match::PoseGrid grid)
    : index_(&index), grid_(std::move(grid)) {
  grid_.validate();
  if (grid_.size() != index.size()) {
    throw InvalidArgument("IndexProvider: grid has " + std::to_string(grid_.size()) + " poses, index has " +
                          std::to_string(index.size()));
  }
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Pose2D g = grid_.pose(i);
    const Pose2D& e = index[i].pose;
    if (g.distance_to(e) > 1e-9 || std::abs(geo::angle_diff(g.theta(), e.theta())) > 1e-9) {
      throw InvalidArgument("IndexProvider: index entry " + std::to_string(i) + " is not the grid pose");
    }
  }
}

double IndexProvider::distance(const Pose2D& pose, std::span<const double> ground_embedding) const {
  const auto i = grid_.nearest(pose);
  if (!i) {
    return kInf;
  }
  return index_->distance(*i, ground_embedding);
}

ParticleSet update_weights(ParticleSet set, std::span<const double> distances, double alpha, FilterEvents* events) {
  if (distances.size() != set.size()) {
    throw InvalidArgument("update_weights: " + std::to_string(distances.size()) + " distances for " +
                          std::to_string(set.size()) + " particles");
  }
  if (!(alpha > 0.0)) {
    throw InvalidArgument("update_weights: alpha must be positive");
  }
  const std::size_t n = set.size();
  std::vector<double> logw(n);
  double top = -kInf;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = distances[i];
    const double w = set.particles[i].weight;
    if (std::isnan(d) || d < 0.0) {
      throw InvalidArgument("update_weights: distance " + std::to_string(i) + " is negative or NaN");
    }
    // log(alpha) is common to every particle and cancels in normalization.
    logw[i] = (w > 0.0 && std::isfinite(d)) ? std::log(w) - alpha * d : -kInf;
    top = std::max(top, logw[i]);
  }
  if (top == -kInf) {
    for (Particle& p : set.particles) {
      p.weight = 1.0 / static_cast<double>(n);
    }
    if (events != nullptr) {
      ++events->weight_resets;
    }
    return set;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    logw[i] = std::exp(logw[i] - top);
    total += logw[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    set.particles[i].weight = logw[i] / total;
  }
  return set;
}

ParticleSet measurement_update(ParticleSet set, std::span<const double> ground_embedding,
                               const DistanceProvider& provider, double alpha, FilterEvents* events) {
  std::vector<double> d(set.size());
  parallel_for(set.size(), [&](std::size_t i) { d[i] = provider.distance(set.particles[i].pose, ground_embedding); });
  return update_weights(std::move(set), d, alpha, events);
}

double effective_n(const ParticleSet& set) {
  double s = 0.0;
  for (const Particle& p : set.particles) {
    s += p.weight * p.weight;
  }
  return s > 0.0 ? 1.0 / s : 0.0;
}

std::vector<std::size_t> systematic_indices(std::span<const double> weights, double u0) {
  const std::size_t n = weights.size();
  if (n == 0) {
    throw InvalidArgument("systematic_indices: no weights");
  }
  const auto nd = static_cast<double>(n);
  if (!(u0 >= 0.0 && u0 < 1.0 / nd)) {
    throw InvalidArgument("systematic_indices: u0 must lie in [0, 1/N)");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw InvalidArgument("systematic_indices: weights must have a positive finite sum");
  }
  // Positions u0*N + i against the cumulative sum scaled to N.
  const double scale = nd / total;
  const double u = u0 * nd;
  std::vector<std::size_t> out(n);
  double cum = weights[0] * scale;
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = u + static_cast<double>(i);
    while (pos >= cum && j + 1 < n) {
      ++j;
      cum += weights[j] * scale;
    }
    out[i] = j;
  }
  return out;
}

ParticleSet systematic_resample(const ParticleSet& set, Rng& rng) {
  const std::size_t n = set.size();
  std::uniform_real_distribution<double> unif(0.0, 1.0 / static_cast<double>(n));
  double u0 = unif(rng);
  u0 = std::min(u0, std::nextafter(1.0 / static_cast<double>(n), 0.0));
  const std::vector<std::size_t> idx = systematic_indices(set.weights(), u0);
  ParticleSet out;
  out.step = set.step;
  out.particles.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.particles[i] = {set.particles[idx[i]].pose, 1.0 / static_cast<double>(n)};
  }
  return out;
}

Estimate estimate(const ParticleSet& set) {
  double wsum = 0.0, mx = 0.0, my = 0.0, sc = 0.0, ss = 0.0;
  for (const Particle& p : set.particles) {
    wsum += p.weight;
    mx += p.weight * p.pose.x();
    my += p.weight * p.pose.y();
    sc += p.weight * std::cos(p.pose.theta());
    ss += p.weight * std::sin(p.pose.theta());
  }
  if (!(wsum > 0.0)) {
    throw InvalidArgument("estimate: weights sum to zero");
  }
  mx /= wsum;
  my /= wsum;
  double var = 0.0;
  for (const Particle& p : set.particles) {
    const double dx = p.pose.x() - mx, dy = p.pose.y() - my;
    var += p.weight * (dx * dx + dy * dy);
  }
  return {Pose2D(mx, my, std::atan2(ss, sc)), std::sqrt(var / wsum)};
}

CloudError cloud_error(const ParticleSet& set, const Pose2D& truth) {
  double wsum = 0.0, m = 0.0;
  for (const Particle& p : set.particles) {
    wsum += p.weight;
    m += p.weight * p.pose.distance_to(truth);
  }
  if (!(wsum > 0.0)) {
    throw InvalidArgument("cloud_error: weights sum to zero");
  }
  m /= wsum;
  double var = 0.0;
  for (const Particle& p : set.particles) {
    const double e = p.pose.distance_to(truth) - m;
    var += p.weight * e * e;
  }
  return {m, std::sqrt(var / wsum)};
}

namespace {

StepResult correct_with(ParticleSet set, std::span<const double> ground_embedding, const DistanceProvider& provider,
                        const FilterConfig& config, Rng& resample_rng, FilterEvents* events) {
  set = measurement_update(std::move(set), ground_embedding, provider, config.alpha, events);
  StepReport report;
  report.step = set.step;
  report.neff = effective_n(set);
  report.estimate = estimate(set);
  report.converged = report.estimate.pos_std < config.conv_std;
  if (report.neff < config.neff_frac * static_cast<double>(set.size())) {
    set = systematic_resample(set, resample_rng);
    report.resampled = true;
  }
  return {std::move(set), report};
}

Rng resample_rng_for(const FilterConfig& config, std::size_t step) {
  return make_rng(mix_seed(config.seed, 0x7265), step);  // "re"
}

}  // namespace

StepResult correct(ParticleSet set, std::span<const double> ground_embedding, const DistanceProvider& provider,
                   const FilterConfig& config, FilterEvents* events) {
  config.validate();
  Rng rng = resample_rng_for(config, set.step);
  return correct_with(std::move(set), ground_embedding, provider, config, rng, events);
}

StepResult step(ParticleSet set, const sim::Control& u, double dt, std::span<const double> ground_embedding,
                const DistanceProvider& provider, const FilterConfig& config, FilterEvents* events) {
  config.validate();
  set = predict(std::move(set), u, dt, config.noise, mix_seed(config.seed, 0x6d6f));  // "mo"
  return correct(std::move(set), ground_embedding, provider, config, events);
}

RunSummary run_localization(const sim::Trajectory& trajectory, std::span<const std::vector<double>> ground_embeddings,
                            const DistanceProvider& provider, const geo::Rect& bounds, const RoadMask* mask,
                            const FilterConfig& config, double dt, const StepObserver& observer) {
  config.validate();
  if (trajectory.empty()) {
    throw InvalidArgument("run_localization: empty trajectory");
  }
  if (ground_embeddings.size() != trajectory.size()) {
    throw InvalidArgument("run_localization: " + std::to_string(ground_embeddings.size()) + " observations for " +
                          std::to_string(trajectory.size()) + " trajectory steps");
  }
  RunSummary summary;
  ParticleSet set = init_particles(bounds, mask, config.on_road_prob, config.n_particles,
                                   mix_seed(config.seed, 0x6970), &summary.events);  // "ip"
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    StepResult r = k == 0 ? correct(std::move(set), ground_embeddings[k], provider, config, &summary.events)
                          : step(std::move(set), trajectory[k - 1].noisy, dt, ground_embeddings[k], provider, config,
                                 &summary.events);
    set = std::move(r.set);
    const StepReport& rep = r.report;
    const Pose2D& truth = trajectory[k].truth;
    summary.trace.push_back({k, rep.estimate.mean, rep.estimate.pos_std, rep.neff, rep.resampled, rep.converged,
                             truth, rep.estimate.mean.distance_to(truth)});
    if (rep.converged && !summary.convergence_step) {
      summary.convergence_step = k;
    }
    if (observer) {
      observer(set, rep);
    }
  }
  summary.final_error = cloud_error(set, trajectory.back().truth);
  summary.final_converged = summary.trace.back().converged;
  return summary;
}

double calibrate_alpha(const match::EmbeddingIndex& index, std::span<const std::vector<double>> ground_embeddings) {
  if (ground_embeddings.empty()) {
    throw InvalidArgument("calibrate_alpha: no observations");
  }
  std::vector<double> d(ground_embeddings.size() * index.size());
  parallel_for(ground_embeddings.size(), [&](std::size_t q) {
    for (std::size_t i = 0; i < index.size(); ++i) {
      d[q * index.size() + i] = index.distance(i, ground_embeddings[q]);
    }
  });
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (!(*mid > 0.0)) {
    throw Error("calibrate_alpha: median embedding distance is zero");
  }
  return 1.0 / *mid;
}

}  // namespace cvmcl::filter
