#pragma once

#include <optional>
#include <span>
#include <string_view>

#include <Eigen/Dense>

#include "orient/mesh.hpp"

namespace orient {

using Mat3 = Eigen::Matrix3d;

/// Proper rotation (orthonormal, det = +1). Construction through the checked
/// factory rejects anything further than 1e-6 from SO(3).
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  static Rotation identity() { return {}; }
  static Rotation from_matrix(const Mat3& m, double tol = 1e-6);

  const Mat3& matrix() const { return m_; }
  Rotation inverse() const { return Rotation(m_.transpose(), Unchecked{}); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation operator*(const Rotation& rhs) const { return Rotation(m_ * rhs.m_, Unchecked{}); }

  bool operator==(const Rotation& rhs) const { return m_ == rhs.m_; }

 private:
  struct Unchecked {};
  Rotation(const Mat3& m, Unchecked) : m_(m) {}
  friend Rotation rotation_from_axis_angle(const Vec3&, double);
  friend Rotation yaw_rotation_deg(double);
  friend Rotation rotation_from_columns(const Vec3&, const Vec3&, const Vec3&);

  Mat3 m_;
};

/// {x : normal . x = offset}
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
};

/// Pinhole intrinsics in pixels. Pixel (i, j) has its center at (i, j).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Which of the four horizontal views shows the object's front.
enum class ViewLabel { kFront, kBack, kLeft, kRight, kNoFrontView };

std::string_view to_string(ViewLabel label);

constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Rodrigues: R = I + sin(a) K + (1 - cos(a)) K^2.
Rotation rotation_from_axis_angle(const Vec3& axis, double angle_rad);

/// Rotation about the canonical up axis, counterclockwise seen from +Z.
/// Multiples of 90 degrees produce exact matrices.
Rotation yaw_rotation_deg(double deg);

/// Builds a rotation whose columns are the given orthonormal vectors.
Rotation rotation_from_columns(const Vec3& x, const Vec3& y, const Vec3& z);

/// Minimal-angle rotation taking the direction of `from` onto `to`.
Rotation align_vectors(const Vec3& from, const Vec3& to);

Rotation yaw_for_label(ViewLabel label);

double rotation_error_deg(const Rotation& pred, const Rotation& gt);
double front_direction_error_deg(const Rotation& pred, const Rotation& gt);

/// Rotation whose rows are the principal axes of `points`, ordered by
/// decreasing variance.
Rotation pca_align(std::span<const Vec3> points);

/// Total least squares plane. If `viewpoint` is given the normal points to
/// its side of the plane, otherwise into the +Z hemisphere.
Plane fit_plane_least_squares(std::span<const Vec3> points,
                              const std::optional<Vec3>& viewpoint = std::nullopt);

Vec3 ray_plane_intersect(const Ray& ray, const Plane& plane);

Ray pixel_to_ray(const CameraIntrinsics& intr, const Vec2& pixel);

TriMesh rotated(const TriMesh& mesh, const Rotation& r);

}  // namespace orient
