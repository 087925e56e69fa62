#include "orient/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "orient/error.hpp"

namespace orient {

std::string_view to_string(ViewLabel label) {
  switch (label) {
    case ViewLabel::kFront: return "front";
    case ViewLabel::kBack: return "back";
    case ViewLabel::kLeft: return "left";
    case ViewLabel::kRight: return "right";
    case ViewLabel::kNoFrontView: return "none";
  }
  return "none";
}

Rotation Rotation::from_matrix(const Mat3& m, double tol) {
  if (!m.allFinite()) throw Error(ErrorCode::kInvalidArgument, "rotation matrix has non-finite entries");
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = m.determinant();
  if (ortho > tol || std::abs(det - 1.0) > tol) {
    throw Error(ErrorCode::kInvalidArgument, "matrix is not a proper rotation");
  }
  return Rotation(m, Unchecked{});
}

Rotation rotation_from_axis_angle(const Vec3& axis, double angle_rad) {
  const double len = axis.norm();
  if (!std::isfinite(len) || std::abs(len - 1.0) > 1e-6) {
    throw Error(ErrorCode::kInvalidArgument, "rotation axis must be unit length");
  }
  const Vec3 k = axis / len;
  Mat3 K;
  K << 0.0, -k.z(), k.y(),
       k.z(), 0.0, -k.x(),
       -k.y(), k.x(), 0.0;
  const Mat3 R = Mat3::Identity() + std::sin(angle_rad) * K + (1.0 - std::cos(angle_rad)) * (K * K);
  return Rotation(R, Rotation::Unchecked{});
}

Rotation yaw_rotation_deg(double deg) {
  double c = 0.0;
  double s = 0.0;
  const double quarters = deg / 90.0;
  if (quarters == std::round(quarters)) {
    const long q = ((static_cast<long>(std::round(quarters)) % 4) + 4) % 4;
    static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
    static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
    c = kCos[q];
    s = kSin[q];
  } else {
    c = std::cos(deg2rad(deg));
    s = std::sin(deg2rad(deg));
  }
  Mat3 R;
  R << c, -s, 0.0,
       s, c, 0.0,
       0.0, 0.0, 1.0;
  return Rotation(R, Rotation::Unchecked{});
}

Rotation rotation_from_columns(const Vec3& x, const Vec3& y, const Vec3& z) {
  Mat3 R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  return Rotation(R, Rotation::Unchecked{});
}

Rotation align_vectors(const Vec3& from, const Vec3& to) {
  const double nf = from.norm();
  const double nt = to.norm();
  if (!(nf > 0.0) || !(nt > 0.0) || !std::isfinite(nf) || !std::isfinite(nt)) {
    throw Error(ErrorCode::kInvalidArgument, "align_vectors needs nonzero finite vectors");
  }
  const Vec3 a = from / nf;
  const Vec3 b = to / nt;
  const Vec3 c = a.cross(b);
  const double s = c.norm();
  const double cosang = a.dot(b);
  if (s > 1e-12) return rotation_from_axis_angle(c / s, std::atan2(s, cosang));
  if (cosang > 0.0) return Rotation::identity();

  // Antiparallel: turn half way round an axis perpendicular to `a`, built
  // from the basis vector `a` is least aligned with.
  int k = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(a[i]) < std::abs(a[k])) k = i;
  }
  const Vec3 axis = a.cross(Vec3::Unit(k)).normalized();
  return rotation_from_axis_angle(axis, kPi);
}

Rotation yaw_for_label(ViewLabel label) {
  switch (label) {
    case ViewLabel::kFront: return yaw_rotation_deg(0.0);
    case ViewLabel::kBack: return yaw_rotation_deg(180.0);
    case ViewLabel::kLeft: return yaw_rotation_deg(90.0);
    case ViewLabel::kRight: return yaw_rotation_deg(-90.0);
    case ViewLabel::kNoFrontView: break;
  }
  throw Error(ErrorCode::kNoFrontView, "object has no recognizable front view");
}

double rotation_error_deg(const Rotation& pred, const Rotation& gt) {
  // arccos((tr(M) - 1) / 2) evaluated as atan2(sin, cos) of the same angle;
  // the plain arccos loses ~1e-8 rad next to zero.
  const Mat3 M = pred.matrix() * gt.matrix().transpose();
  const double cos_part = std::clamp(M.trace() - 1.0, -2.0, 2.0);
  const Vec3 vee(M(2, 1) - M(1, 2), M(0, 2) - M(2, 0), M(1, 0) - M(0, 1));
  return rad2deg(std::atan2(vee.norm(), cos_part));
}

double front_direction_error_deg(const Rotation& pred, const Rotation& gt) {
  const Vec3 a = pred * CanonicalFrame::forward();
  const Vec3 b = gt * CanonicalFrame::forward();
  return rad2deg(std::atan2(a.cross(b).norm(), a.dot(b)));
}

namespace {

struct Moments {
  Vec3 mean;
  Mat3 cov;
};

Moments centered_moments(std::span<const Vec3> points) {
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : points) {
    const Vec3 d = p - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  return {mean, cov};
}

}  // namespace

Rotation pca_align(std::span<const Vec3> points) {
  if (points.size() < 4) throw Error(ErrorCode::kDegenerate, "PCA needs at least 4 points");
  const Moments mo = centered_moments(points);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(mo.cov);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::kDegenerate, "eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  const Vec3 values = eig.eigenvalues();
  if (!(values(0) > 1e-12 * std::max(values(2), 1e-300))) {
    throw Error(ErrorCode::kDegenerate, "point cloud is coplanar or collinear");
  }

  Mat3 rows;
  for (int i = 0; i < 3; ++i) {
    Vec3 axis = eig.eigenvectors().col(2 - i);
    double m3 = 0.0;
    double scale = 0.0;
    for (const Vec3& p : points) {
      const double t = axis.dot(p - mo.mean);
      m3 += t * t * t;
      scale += std::abs(t * t * t);
    }
    bool flip = false;
    if (std::abs(m3) > 1e-9 * scale) {
      flip = m3 < 0.0;
    } else {
      Eigen::Index k = 0;
      axis.cwiseAbs().maxCoeff(&k);
      flip = axis(k) < 0.0;
    }
    rows.row(i) = (flip ? -axis : axis).transpose();
  }
  if (rows.determinant() < 0.0) rows.row(2) *= -1.0;
  return Rotation::from_matrix(rows);
}

Plane fit_plane_least_squares(std::span<const Vec3> points, const std::optional<Vec3>& viewpoint) {
  if (points.size() < 3) throw Error(ErrorCode::kDegenerate, "plane fit needs at least 3 points");
  const Moments mo = centered_moments(points);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(mo.cov);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::kDegenerate, "eigendecomposition failed");
  const Vec3 values = eig.eigenvalues();
  if (!(values(1) > 1e-12 * std::max(values(2), 1e-300))) {
    throw Error(ErrorCode::kDegenerate, "points are collinear");
  }
  Vec3 n = eig.eigenvectors().col(0).normalized();
  if (viewpoint) {
    if (n.dot(*viewpoint - mo.mean) < 0.0) n = -n;
  } else if (n.z() < 0.0) {
    n = -n;
  }
  return {n, n.dot(mo.mean)};
}

Vec3 ray_plane_intersect(const Ray& ray, const Plane& plane) {
  const double denom = plane.normal.dot(ray.direction);
  if (std::abs(denom) <= 1e-9) throw Error(ErrorCode::kParallelRay, "ray is parallel to the plane");
  const double t = (plane.offset - plane.normal.dot(ray.origin)) / denom;
  if (!(t > 0.0)) throw Error(ErrorCode::kBehindOrigin, "plane intersection lies behind the ray origin");
  return ray.origin + t * ray.direction;
}

Ray pixel_to_ray(const CameraIntrinsics& intr, const Vec2& pixel) {
  const Vec3 d((pixel.x() - intr.cx) / intr.fx, (pixel.y() - intr.cy) / intr.fy, 1.0);
  return {Vec3::Zero(), d.normalized()};
}

TriMesh rotated(const TriMesh& mesh, const Rotation& r) {
  TriMesh out = mesh;
  for (Vec3& v : out.vertices) v = r * v;
  return out;
}

}  // namespace orient
