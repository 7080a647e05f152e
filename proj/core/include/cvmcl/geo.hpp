#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "cvmcl/common.hpp"

namespace cvmcl::geo {

/// Wraps an angle into (-pi, pi]. An input of exactly -pi maps to +pi.
double wrap_angle(double a) noexcept;

/// Shortest signed arc from `from` to `to`, in (-pi, pi].
double angle_diff(double to, double from) noexcept;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Planar vehicle pose in the world frame. The heading is normalized into
/// (-pi, pi] on construction and by every composing operation.
class Pose2D {
public:
  Pose2D() = default;
  Pose2D(double x, double y, double theta) noexcept : x_(x), y_(y), theta_(wrap_angle(theta)) {}

  [[nodiscard]] double x() const noexcept { return x_; }
  [[nodiscard]] double y() const noexcept { return y_; }
  [[nodiscard]] double theta() const noexcept { return theta_; }
  [[nodiscard]] Vec2 position() const noexcept { return {x_, y_}; }
  [[nodiscard]] Vec2 heading() const noexcept;

  /// Distance between positions, ignoring heading.
  [[nodiscard]] double distance_to(const Pose2D& other) const noexcept;

  /// Lexicographic (x, y, theta) order; used for deterministic tie breaks.
  friend auto operator<=>(const Pose2D&, const Pose2D&) = default;
  friend bool operator==(const Pose2D&, const Pose2D&) = default;

private:
  double x_ = 0.0;
  double y_ = 0.0;
  double theta_ = 0.0;
};

/// Affine map from continuous pixel coordinates (col, row) to world (x, y):
///   x = a*col + b*row + c
///   y = d*col + e*row + f
/// Pixel (0, 0) refers to the centre of the top-left pixel (world-file
/// convention). For a north-up raster e is negative, so rows grow southward.
class GeoTransform {
public:
  /// Throws InvalidArgument when the linear part is singular.
  GeoTransform(double a, double b, double c, double d, double e, double f);

  static GeoTransform identity() { return {1.0, 0.0, 0.0, 0.0, 1.0, 0.0}; }
  /// North-up transform whose pixel (0, 0) centre sits at (x0, y0).
  static GeoTransform north_up(double x0, double y0, double pixel_size);

  [[nodiscard]] Vec2 pixel_to_world(Vec2 pixel) const noexcept;
  [[nodiscard]] Vec2 world_to_pixel(Vec2 world) const noexcept;
  /// Applies only the inverse linear part; maps a world displacement to a
  /// pixel displacement.
  [[nodiscard]] Vec2 world_delta_to_pixel(Vec2 delta) const noexcept;

  /// Coefficients in a, b, c, d, e, f order.
  [[nodiscard]] std::array<double, 6> coefficients() const noexcept { return {a_, b_, c_, d_, e_, f_}; }
  [[nodiscard]] GeoTransform translated(Vec2 offset) const;

  friend bool operator==(const GeoTransform& l, const GeoTransform& r) noexcept {
    return l.coefficients() == r.coefficients();
  }

private:
  double a_, b_, c_, d_, e_, f_;
  double ia_, ib_, id_, ie_;  // inverse of [[a b] [d e]]
};

struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  [[nodiscard]] bool contains(Vec2 p) const noexcept {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }
  [[nodiscard]] double width() const noexcept { return xmax - xmin; }
  [[nodiscard]] double height() const noexcept { return ymax - ymin; }
  [[nodiscard]] bool empty() const noexcept { return !(xmax > xmin && ymax > ymin); }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Multi-channel georeferenced image. Samples are stored row-major with
/// interleaved channels and must all be finite.
class GeoRaster {
public:
  GeoRaster(std::size_t width, std::size_t height, std::size_t channels, std::vector<double> data,
            GeoTransform transform);
  GeoRaster(Tensor3 pixels, GeoTransform transform);

  [[nodiscard]] std::size_t width() const noexcept { return pixels_.cols; }
  [[nodiscard]] std::size_t height() const noexcept { return pixels_.rows; }
  [[nodiscard]] std::size_t channels() const noexcept { return pixels_.channels; }
  [[nodiscard]] const GeoTransform& transform() const noexcept { return transform_; }
  [[nodiscard]] const Tensor3& pixels() const noexcept { return pixels_; }
  [[nodiscard]] double at(std::size_t row, std::size_t col, std::size_t ch) const noexcept {
    return pixels_.at(row, col, ch);
  }

  /// Axis-aligned world bounding box of the pixel-centre lattice.
  [[nodiscard]] Rect bounds() const noexcept;

  /// Bilinear sample of every channel at a continuous pixel position. Returns
  /// false (and leaves `out` untouched) when the position lies outside the
  /// lattice of pixel centres.
  bool sample_pixel(Vec2 pixel, double* out) const noexcept;
  bool sample_world(Vec2 world, double* out) const noexcept {
    return sample_pixel(transform_.world_to_pixel(world), out);
  }

private:
  Tensor3 pixels_;
  GeoTransform transform_;
};

/// Footprint of a heading-aligned satellite patch. Patch rows sample the
/// across-track axis, columns the along-track (heading) axis.
struct CropSpec {
  std::size_t out_width = 40;   // columns, along-track
  std::size_t out_height = 27;  // rows, across-track
  double extent_across = 5.3;   // meters
  double extent_along = 7.8;    // meters
  double lookahead = 0.5;       // meters in front of the pose

  /// Throws InvalidArgument unless every field is positive and
  /// extent_along >= extent_across.
  void validate() const;
  /// Half-diagonal of the footprint plus the lookahead: the farthest any
  /// patch sample can be from its pose.
  [[nodiscard]] double reach() const noexcept;
};

struct Patch {
  Tensor3 data;               // out_height x out_width x channels
  std::vector<std::uint8_t> mask;  // out_height x out_width, 1 = inside raster

  [[nodiscard]] bool fully_valid() const noexcept;
};

/// World position of patch sample (row, col) for a pose. Row 0 lies on the
/// left of the heading; rows grow to the right.
Vec2 crop_sample_point(const Pose2D& pose, const CropSpec& spec, std::size_t row, std::size_t col) noexcept;

/// Heading-aligned bilinear crop centred `lookahead` meters in front of the
/// pose. Samples outside the raster are zero with mask 0. Throws Error
/// ("footprint out of bounds") when no sample lands inside the raster.
Patch crop_at_pose(const GeoRaster& raster, const Pose2D& pose, const CropSpec& spec);

enum class PairLabel : std::uint8_t { Positive, Negative, Excluded };

struct PairThresholds {
  double pos_dist = 0.8;                           // meters
  double pos_angle = 30.0 * std::numbers::pi / 180.0;  // radians
  double neg_dist = 8.0;                           // meters
};

/// Positive iff distance <= pos_dist and |heading difference| <= pos_angle;
/// Negative iff distance > neg_dist; Excluded otherwise.
PairLabel label_pair(const Pose2D& ground_pose, const Pose2D& sat_pose, double pos_dist, double pos_angle,
                     double neg_dist) noexcept;
inline PairLabel label_pair(const Pose2D& ground_pose, const Pose2D& sat_pose, const PairThresholds& t) noexcept {
  return label_pair(ground_pose, sat_pose, t.pos_dist, t.pos_angle, t.neg_dist);
}

}  // namespace cvmcl::geo
