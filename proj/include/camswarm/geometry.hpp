#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "camswarm/error.hpp"

// All angles at this interface are in degrees. World frame: x east, y north,
// z up. Bearings and yaws run clockwise from north. Cameras are level.
namespace camswarm::geometry {

struct Vec2 {
  double x = 0;
  double y = 0;
  bool operator==(const Vec2&) const = default;
};

struct Vec3 {
  double x = 0;
  double y = 0;
  double z = 0;
  bool operator==(const Vec3&) const = default;
};

/// Maps any finite angle into (-180, 180].
double wrap_angle(double deg);
/// Maps any finite angle into [0, 360).
double wrap_360(double deg);
/// |wrap_angle(a - b)|, in [0, 180].
double circular_distance(double a, double b);
/// Mean direction of `degs`; returns 0 when the resultant vanishes.
double circular_mean(std::span<const double> degs);

double relative_yaw(double device_yaw_vs_north, double host_yaw_vs_north);

struct OrientationFrame {
  DeviceId device = 0;
  double yaw_vs_north = 0;  // [0, 360)
  double rel_yaw = 0;       // (-180, 180], against the host
  double display_yaw = 0;   // always -rel_yaw
};

OrientationFrame make_orientation_frame(DeviceId device, double yaw_vs_north, double host_yaw_vs_north);
/// Frame reconstructed from a broadcast display yaw.
OrientationFrame frame_from_display(DeviceId device, double display_yaw);

/// Where `other` sits on the observer's self-centric compass: the target is
/// at the center and the observer is pinned at 180 (south).
double compass_placement(const OrientationFrame& observer, const OrientationFrame& other);
double compass_placement(double observer_display_yaw, double other_display_yaw);

/// Normalized viewport rectangle, origin top-left.
struct GuideBox {
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.5;
  double h = 0.5;

  bool valid() const;
  /// Throws Error(Validation) unless w, h > 0 and the box lies inside [0,1]^2.
  void validate() const;
  bool operator==(const GuideBox&) const = default;
};

struct GuideFitThresholds {
  double min_size_ratio = 0.9;
  double max_size_ratio = 1.1;
  double max_center_offset = 0.05;
};

struct GuideFit {
  double size_ratio = 1.0;
  double center_offset = 0.0;
  bool satisfied = true;
};

/// Only requires w, h > 0 on the observed box: a target may overflow the
/// viewport.
GuideFit guide_fit(const GuideBox& observed, const GuideBox& guide,
                   const GuideFitThresholds& thresholds = {});

struct PixelBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

struct CameraModel {
  Vec3 position;
  double yaw = 0;  // bearing of the optical axis
  double focal_px = 1000;
  int width_px = 1920;
  int height_px = 1080;

  /// Throws Error(Validation).
  void validate() const;
  Vec2 principal_point() const { return {width_px / 2.0, height_px / 2.0}; }
  /// Pixel box expressed as a normalized viewport box.
  GuideBox normalize(const PixelBox& box) const;
};

/// Level camera on a circle of `radius` around `center` at bearing
/// `angle_deg` (seen from the center), aimed at the center.
CameraModel camera_on_circle(const Vec3& center, double angle_deg, double radius, double focal_px = 1000,
                             int width_px = 1920, int height_px = 1080);

struct PlanarTarget {
  Vec3 center;
  Vec3 normal{0, -1, 0};
  double width = 1.0;
  double height = 1.0;
};

/// Corners in the order (-w/2,-h/2), (w/2,-h/2), (w/2,h/2), (-w/2,h/2) of the
/// target's in-plane frame; the second axis is world-up for vertical targets.
std::array<Vec3, 4> target_corners(const PlanarTarget& target);

struct Projection {
  std::array<Vec2, 4> corners;
  PixelBox bbox;
};

/// Throws Error(Projection) when any corner has non-positive depth.
Projection project_target(const CameraModel& cam, const PlanarTarget& target);

/// Angle between the target plane normal and the optical axis, in [0, 90],
/// from four image corners in target_corners order. `rect_aspect` is
/// width / height. Throws Error(DegenerateInput).
double recover_plane_angle(std::span<const Vec2, 4> corners_px, double rect_aspect, const CameraModel& cam);

/// Angle between target normal and the camera's optical axis computed
/// directly from the 3D poses.
double true_plane_angle(const CameraModel& cam, const PlanarTarget& target);

struct SpacingMetrics {
  double angle_rsd = 0;
  std::vector<double> gaps;
};

/// Arc model: the n-1 gaps between sorted yaws, no wrap-around gap.
/// Throws Error(InsufficientDevices) below 3 yaws, Error(DegenerateInput) on a
/// zero mean gap.
SpacingMetrics spacing_metrics(std::span<const double> rel_yaws);

/// Population std / mean. Throws Error(DegenerateInput).
double size_rsd(std::span<const double> sizes_px);

}  // namespace camswarm::geometry
