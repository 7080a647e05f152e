#include "cvmcl/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace cvmcl::geo {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

double wrap_angle(double a) noexcept {
  if (a > -std::numbers::pi && a <= std::numbers::pi) {
    return a;
  }
  double r = std::remainder(a, kTwoPi);
  if (r <= -std::numbers::pi) {
    r += kTwoPi;
  }
  if (r > std::numbers::pi) {
    r -= kTwoPi;
  }
  return r;
}

double angle_diff(double to, double from) noexcept { return wrap_angle(to - from); }

Vec2 Pose2D::heading() const noexcept { return {std::cos(theta_), std::sin(theta_)}; }

double Pose2D::distance_to(const Pose2D& other) const noexcept { return std::hypot(x_ - other.x_, y_ - other.y_); }

GeoTransform::GeoTransform(double a, double b, double c, double d, double e, double f)
    : a_(a), b_(b), c_(c), d_(d), e_(e), f_(f) {
  const double det = a * e - b * d;
  if (!(std::isfinite(det) && det != 0.0) || !std::isfinite(c) || !std::isfinite(f)) {
    throw InvalidArgument("GeoTransform: singular or non-finite affine transform");
  }
  ia_ = e / det;
  ib_ = -b / det;
  id_ = -d / det;
  ie_ = a / det;
}

GeoTransform GeoTransform::north_up(double x0, double y0, double pixel_size) {
  return {pixel_size, 0.0, x0, 0.0, -pixel_size, y0};
}

Vec2 GeoTransform::pixel_to_world(Vec2 p) const noexcept {
  return {a_ * p.x + b_ * p.y + c_, d_ * p.x + e_ * p.y + f_};
}

Vec2 GeoTransform::world_delta_to_pixel(Vec2 w) const noexcept {
  return {ia_ * w.x + ib_ * w.y, id_ * w.x + ie_ * w.y};
}

Vec2 GeoTransform::world_to_pixel(Vec2 w) const noexcept { return world_delta_to_pixel({w.x - c_, w.y - f_}); }

GeoTransform GeoTransform::translated(Vec2 offset) const {
  return {a_, b_, c_ + offset.x, d_, e_, f_ + offset.y};
}

GeoRaster::GeoRaster(std::size_t width, std::size_t height, std::size_t channels, std::vector<double> data,
                     GeoTransform transform)
    : transform_(transform) {
  if (width == 0 || height == 0 || channels == 0) {
    throw InvalidArgument("GeoRaster: empty raster");
  }
  if (data.size() != width * height * channels) {
    throw InvalidArgument("GeoRaster: data length " + std::to_string(data.size()) + " does not match " +
                          std::to_string(width) + "x" + std::to_string(height) + "x" + std::to_string(channels));
  }
  if (!std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); })) {
    throw InvalidArgument("GeoRaster: non-finite sample");
  }
  pixels_.rows = height;
  pixels_.cols = width;
  pixels_.channels = channels;
  pixels_.data = std::move(data);
}

GeoRaster::GeoRaster(Tensor3 pixels, GeoTransform transform)
    : GeoRaster(pixels.cols, pixels.rows, pixels.channels, std::move(pixels.data), transform) {}

Rect GeoRaster::bounds() const noexcept {
  const double w = static_cast<double>(width() - 1);
  const double h = static_cast<double>(height() - 1);
  const Vec2 corners[4] = {transform_.pixel_to_world({0, 0}), transform_.pixel_to_world({w, 0}),
                           transform_.pixel_to_world({0, h}), transform_.pixel_to_world({w, h})};
  Rect r{corners[0].x, corners[0].y, corners[0].x, corners[0].y};
  for (const auto& c : corners) {
    r.xmin = std::min(r.xmin, c.x);
    r.xmax = std::max(r.xmax, c.x);
    r.ymin = std::min(r.ymin, c.y);
    r.ymax = std::max(r.ymax, c.y);
  }
  return r;
}

bool GeoRaster::sample_pixel(Vec2 p, double* out) const noexcept {
  const double max_col = static_cast<double>(width() - 1);
  const double max_row = static_cast<double>(height() - 1);
  if (!(p.x >= 0.0 && p.x <= max_col && p.y >= 0.0 && p.y <= max_row)) {
    return false;
  }
  const double fc = std::floor(p.x);
  const double fr = std::floor(p.y);
  const std::size_t c0 = static_cast<std::size_t>(fc);
  const std::size_t r0 = static_cast<std::size_t>(fr);
  // On the last row/column the fraction is zero and the neighbour is unused.
  const std::size_t c1 = std::min(c0 + 1, width() - 1);
  const std::size_t r1 = std::min(r0 + 1, height() - 1);
  const double tx = p.x - fc;
  const double ty = p.y - fr;
  const std::size_t nc = channels();
  const double* p00 = &pixels_.data[pixels_.index(r0, c0, 0)];
  const double* p01 = &pixels_.data[pixels_.index(r0, c1, 0)];
  const double* p10 = &pixels_.data[pixels_.index(r1, c0, 0)];
  const double* p11 = &pixels_.data[pixels_.index(r1, c1, 0)];
  for (std::size_t ch = 0; ch < nc; ++ch) {
    if (tx == 0.0 && ty == 0.0) {
      out[ch] = p00[ch];
      continue;
    }
    const double top = p00[ch] + tx * (p01[ch] - p00[ch]);
    const double bottom = p10[ch] + tx * (p11[ch] - p10[ch]);
    out[ch] = top + ty * (bottom - top);
  }
  return true;
}

void CropSpec::validate() const {
  if (out_width == 0 || out_height == 0 || !(extent_across > 0.0) || !(extent_along > 0.0) || !(lookahead > 0.0)) {
    throw InvalidArgument("CropSpec: all fields must be strictly positive");
  }
  if (extent_along < extent_across) {
    throw InvalidArgument("CropSpec: extent_along must be >= extent_across");
  }
}

double CropSpec::reach() const noexcept { return lookahead + 0.5 * std::hypot(extent_across, extent_along); }

bool Patch::fully_valid() const noexcept {
  return std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
}

namespace {

// Offsets of a patch sample from the pose, expressed in the world frame.
Vec2 crop_offset(const Pose2D& pose, const CropSpec& spec, std::size_t row, std::size_t col) noexcept {
  const double h = static_cast<double>(spec.out_height);
  const double w = static_cast<double>(spec.out_width);
  const double along = spec.lookahead + (static_cast<double>(col) + 0.5 - 0.5 * w) * (spec.extent_along / w);
  const double left = (0.5 * h - (static_cast<double>(row) + 0.5)) * (spec.extent_across / h);
  const Vec2 u = pose.heading();
  return {along * u.x - left * u.y, along * u.y + left * u.x};
}

}  // namespace

Vec2 crop_sample_point(const Pose2D& pose, const CropSpec& spec, std::size_t row, std::size_t col) noexcept {
  const Vec2 o = crop_offset(pose, spec, row, col);
  return {pose.x() + o.x, pose.y() + o.y};
}

Patch crop_at_pose(const GeoRaster& raster, const Pose2D& pose, const CropSpec& spec) {
  spec.validate();
  const std::size_t nc = raster.channels();
  Patch patch{Tensor3(spec.out_height, spec.out_width, nc), std::vector<std::uint8_t>(spec.out_height * spec.out_width, 0)};

  // The pose is mapped to pixel space once and per-sample offsets go through
  // the linear part only; translating raster and pose together is then exact.
  const Vec2 origin = raster.transform().world_to_pixel(pose.position());
  std::size_t valid = 0;
  for (std::size_t r = 0; r < spec.out_height; ++r) {
    for (std::size_t c = 0; c < spec.out_width; ++c) {
      const Vec2 d = raster.transform().world_delta_to_pixel(crop_offset(pose, spec, r, c));
      double* out = &patch.data.data[patch.data.index(r, c, 0)];
      if (raster.sample_pixel({origin.x + d.x, origin.y + d.y}, out)) {
        patch.mask[r * spec.out_width + c] = 1;
        ++valid;
      }
    }
  }
  if (valid == 0) {
    throw Error("footprint out of bounds");
  }
  return patch;
}

PairLabel label_pair(const Pose2D& ground_pose, const Pose2D& sat_pose, double pos_dist, double pos_angle,
                     double neg_dist) noexcept {
  const double dist = ground_pose.distance_to(sat_pose);
  if (dist > neg_dist) {
    return PairLabel::Negative;
  }
  if (dist <= pos_dist && std::abs(angle_diff(sat_pose.theta(), ground_pose.theta())) <= pos_angle) {
    return PairLabel::Positive;
  }
  return PairLabel::Excluded;
}

}  // namespace cvmcl::geo
