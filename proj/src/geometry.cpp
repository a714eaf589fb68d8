#include "camswarm/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace camswarm::geometry {
namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

double rad(double deg) { return deg / kDegPerRad; }

Eigen::Vector3d to_eigen(const Vec3& v) { return {v.x, v.y, v.z}; }

struct CameraFrame {
  Eigen::Vector3d right, down, forward;
};

CameraFrame camera_frame(double yaw_deg) {
  const double s = std::sin(rad(yaw_deg));
  const double c = std::cos(rad(yaw_deg));
  return {{c, -s, 0.0}, {0.0, 0.0, -1.0}, {s, c, 0.0}};
}

double population_rsd(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / n) / mean;
}

// Similarity transform taking the points to zero centroid and mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(const std::array<Eigen::Vector2d, 4>& pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= 4.0;
  double mean_dist = 0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= 4.0;
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return t;
}

// Four-point direct linear transform, src -> dst.
Eigen::Matrix3d homography_dlt(const std::array<Eigen::Vector2d, 4>& src,
                               const std::array<Eigen::Vector2d, 4>& dst) {
  const Eigen::Matrix3d ts = normalizing_transform(src);
  const Eigen::Matrix3d td = normalizing_transform(dst);
  Eigen::Matrix<double, 8, 9> a;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d p = ts * src[static_cast<std::size_t>(i)].homogeneous();
    const Eigen::Vector3d q = td * dst[static_cast<std::size_t>(i)].homogeneous();
    const double x = p.x() / p.z(), y = p.y() / p.z();
    const double u = q.x() / q.z(), v = q.y() / q.z();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return td.inverse() * hn * ts;
}

bool degenerate_quad(std::span<const Vec2, 4> c) {
  double scale = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      scale = std::max(scale, std::hypot(c[i].x - c[j].x, c[i].y - c[j].y));
    }
  }
  if (!(scale > 0)) return true;
  for (std::size_t skip = 0; skip < 4; ++skip) {
    std::array<Vec2, 3> t;
    std::size_t k = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      if (i != skip) t[k++] = c[i];
    }
    const double cross = (t[1].x - t[0].x) * (t[2].y - t[0].y) - (t[1].y - t[0].y) * (t[2].x - t[0].x);
    if (std::abs(cross) <= 1e-9 * scale * scale) return true;
  }
  return false;
}

}  // namespace

double wrap_angle(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r <= -180.0) {
    r += 360.0;
  } else if (r > 180.0) {
    r -= 360.0;
  }
  return r;
}

double wrap_360(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0) r += 360.0;
  if (r >= 360.0) r -= 360.0;
  return r;
}

double circular_distance(double a, double b) { return std::abs(wrap_angle(a - b)); }

double circular_mean(std::span<const double> degs) {
  double s = 0, c = 0;
  for (double d : degs) {
    s += std::sin(rad(d));
    c += std::cos(rad(d));
  }
  if (std::hypot(s, c) <= 1e-12 * static_cast<double>(degs.size())) return 0.0;
  return wrap_angle(std::atan2(s, c) * kDegPerRad);
}

double relative_yaw(double device_yaw_vs_north, double host_yaw_vs_north) {
  return wrap_angle(device_yaw_vs_north - host_yaw_vs_north);
}

OrientationFrame make_orientation_frame(DeviceId device, double yaw_vs_north, double host_yaw_vs_north) {
  OrientationFrame f;
  f.device = device;
  f.yaw_vs_north = wrap_360(yaw_vs_north);
  f.rel_yaw = relative_yaw(yaw_vs_north, host_yaw_vs_north);
  f.display_yaw = -f.rel_yaw;
  return f;
}

OrientationFrame frame_from_display(DeviceId device, double display_yaw) {
  OrientationFrame f;
  f.device = device;
  f.display_yaw = display_yaw;
  f.rel_yaw = -display_yaw;
  f.yaw_vs_north = std::nan("");
  return f;
}

double compass_placement(double observer_display_yaw, double other_display_yaw) {
  return wrap_360(180.0 + (other_display_yaw - observer_display_yaw));
}

double compass_placement(const OrientationFrame& observer, const OrientationFrame& other) {
  if (observer.device == other.device) return 180.0;
  return compass_placement(observer.display_yaw, other.display_yaw);
}

bool GuideBox::valid() const {
  constexpr double eps = 1e-12;
  return std::isfinite(cx) && std::isfinite(cy) && w > 0 && h > 0 && cx - w / 2 >= -eps &&
         cx + w / 2 <= 1 + eps && cy - h / 2 >= -eps && cy + h / 2 <= 1 + eps;
}

void GuideBox::validate() const {
  if (!valid()) throw Error(ErrorCode::Validation, "guide box must have w, h > 0 and lie within [0,1]^2");
}

GuideFit guide_fit(const GuideBox& observed, const GuideBox& guide, const GuideFitThresholds& thresholds) {
  guide.validate();
  if (!(observed.w > 0 && observed.h > 0))
    throw Error(ErrorCode::Validation, "observed box must have positive extent");
  GuideFit fit;
  fit.size_ratio = std::sqrt((observed.w * observed.h) / (guide.w * guide.h));
  fit.center_offset = std::hypot(observed.cx - guide.cx, observed.cy - guide.cy);
  fit.satisfied = fit.size_ratio >= thresholds.min_size_ratio && fit.size_ratio <= thresholds.max_size_ratio &&
                  fit.center_offset <= thresholds.max_center_offset;
  return fit;
}

void CameraModel::validate() const {
  if (!(focal_px > 0)) throw Error(ErrorCode::Validation, "focal length must be positive");
  if (width_px <= 0 || height_px <= 0) throw Error(ErrorCode::Validation, "image size must be positive");
}

GuideBox CameraModel::normalize(const PixelBox& box) const {
  return {(box.x0 + box.x1) / 2.0 / width_px, (box.y0 + box.y1) / 2.0 / height_px, box.width() / width_px,
          box.height() / height_px};
}

CameraModel camera_on_circle(const Vec3& center, double angle_deg, double radius, double focal_px, int width_px,
                             int height_px) {
  CameraModel cam;
  cam.position = {center.x + radius * std::sin(rad(angle_deg)), center.y + radius * std::cos(rad(angle_deg)),
                  center.z};
  cam.yaw = wrap_360(angle_deg + 180.0);
  cam.focal_px = focal_px;
  cam.width_px = width_px;
  cam.height_px = height_px;
  return cam;
}

std::array<Vec3, 4> target_corners(const PlanarTarget& target) {
  const Eigen::Vector3d n = to_eigen(target.normal).normalized();
  const Eigen::Vector3d up(0, 0, 1);
  Eigen::Vector3d axis_h = up.cross(n);
  if (axis_h.norm() < 1e-12) axis_h = Eigen::Vector3d::UnitX();
  axis_h.normalize();
  const Eigen::Vector3d axis_v = n.cross(axis_h);
  const Eigen::Vector3d c = to_eigen(target.center);
  const double hw = target.width / 2, hh = target.height / 2;
  const std::array<std::pair<double, double>, 4> st{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  std::array<Vec3, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    const Eigen::Vector3d p = c + st[i].first * axis_h + st[i].second * axis_v;
    out[i] = {p.x(), p.y(), p.z()};
  }
  return out;
}

Projection project_target(const CameraModel& cam, const PlanarTarget& target) {
  cam.validate();
  const auto frame = camera_frame(cam.yaw);
  const Eigen::Vector3d origin = to_eigen(cam.position);
  const Vec2 pp = cam.principal_point();
  Projection out;
  const auto corners = target_corners(target);
  for (std::size_t i = 0; i < 4; ++i) {
    const Eigen::Vector3d d = to_eigen(corners[i]) - origin;
    const double z = frame.forward.dot(d);
    if (!(z > 0)) throw Error(ErrorCode::Projection, "target corner behind the camera");
    out.corners[i] = {cam.focal_px * frame.right.dot(d) / z + pp.x, cam.focal_px * frame.down.dot(d) / z + pp.y};
  }
  out.bbox = {out.corners[0].x, out.corners[0].y, out.corners[0].x, out.corners[0].y};
  for (const auto& p : out.corners) {
    out.bbox.x0 = std::min(out.bbox.x0, p.x);
    out.bbox.y0 = std::min(out.bbox.y0, p.y);
    out.bbox.x1 = std::max(out.bbox.x1, p.x);
    out.bbox.y1 = std::max(out.bbox.y1, p.y);
  }
  return out;
}

double recover_plane_angle(std::span<const Vec2, 4> corners_px, double rect_aspect, const CameraModel& cam) {
  cam.validate();
  if (!(rect_aspect > 0) || !std::isfinite(rect_aspect))
    throw Error(ErrorCode::DegenerateInput, "rectangle aspect must be positive");
  for (const auto& p : corners_px) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error(ErrorCode::DegenerateInput, "non-finite corner");
  }
  if (degenerate_quad(corners_px))
    throw Error(ErrorCode::DegenerateInput, "corner set is collinear or has duplicates");

  const double ha = rect_aspect / 2;
  const std::array<Eigen::Vector2d, 4> canonical{
      Eigen::Vector2d(-ha, -0.5), Eigen::Vector2d(ha, -0.5), Eigen::Vector2d(ha, 0.5), Eigen::Vector2d(-ha, 0.5)};
  std::array<Eigen::Vector2d, 4> image;
  for (std::size_t i = 0; i < 4; ++i) image[i] = {corners_px[i].x, corners_px[i].y};

  const Eigen::Matrix3d h = homography_dlt(canonical, image);
  Eigen::Matrix3d k;
  const Vec2 pp = cam.principal_point();
  k << cam.focal_px, 0, pp.x, 0, cam.focal_px, pp.y, 0, 0, 1;
  Eigen::Matrix3d m = k.inverse() * h;
  m /= 0.5 * (m.col(0).norm() + m.col(1).norm());
  if (m(2, 2) < 0) m = -m;  // target center in front of the camera

  // Nearest orthonormal pair to the first two columns.
  Eigen::MatrixXd basis(3, 2);
  basis << m.col(0), m.col(1);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::MatrixXd ortho = svd.matrixU() * svd.matrixV().transpose();
  const Eigen::Vector3d normal = Eigen::Vector3d(ortho.col(0)).cross(Eigen::Vector3d(ortho.col(1)));
  return std::atan2(std::hypot(normal.x(), normal.y()), std::abs(normal.z())) * kDegPerRad;
}

double true_plane_angle(const CameraModel& cam, const PlanarTarget& target) {
  const auto frame = camera_frame(cam.yaw);
  const Eigen::Vector3d n = to_eigen(target.normal).normalized();
  const double x = frame.right.dot(n), y = frame.down.dot(n), z = frame.forward.dot(n);
  return std::atan2(std::hypot(x, y), std::abs(z)) * kDegPerRad;
}

SpacingMetrics spacing_metrics(std::span<const double> rel_yaws) {
  if (rel_yaws.size() < 3) throw Error(ErrorCode::InsufficientDevices, "spacing metrics need at least 3 devices");
  std::vector<double> sorted(rel_yaws.begin(), rel_yaws.end());
  std::sort(sorted.begin(), sorted.end());
  SpacingMetrics out;
  out.gaps.reserve(sorted.size() - 1);
  for (std::size_t i = 1; i < sorted.size(); ++i) out.gaps.push_back(sorted[i] - sorted[i - 1]);
  const double mean = std::accumulate(out.gaps.begin(), out.gaps.end(), 0.0) / static_cast<double>(out.gaps.size());
  if (!(mean > 0)) throw Error(ErrorCode::DegenerateInput, "mean gap is zero");
  out.angle_rsd = population_rsd(out.gaps);
  return out;
}

double size_rsd(std::span<const double> sizes_px) {
  if (sizes_px.size() < 2) throw Error(ErrorCode::DegenerateInput, "size rsd needs at least 2 sizes");
  for (double s : sizes_px) {
    if (!(s > 0)) throw Error(ErrorCode::DegenerateInput, "object sizes must be positive");
  }
  return population_rsd(sizes_px);
}

}  // namespace camswarm::geometry
