#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "orient/geometry.hpp"
#include "orient/image.hpp"
#include "orient/mesh.hpp"

namespace orient {

// Shared framing for every rig. Cameras sit on a sphere around the origin
// and look at it; the unit cube fits inside the orthographic frame with
// margin.
namespace rig {
inline constexpr double kOrthoDistance = 2.0;
inline constexpr double kOrthoHalfExtent = 0.75;
inline constexpr double kEvalDistance = 2.2;
inline constexpr double kEvalVerticalFovDeg = 40.0;
inline constexpr double kEvalMaxPolarDeg = 60.0;
inline constexpr double kEvalMaxRollDeg = 30.0;
inline constexpr int kEvalResolution = 128;
}  // namespace rig

struct Orthographic {
  double half_extent = rig::kOrthoHalfExtent;  // world units across the shorter image side / 2
};

struct Perspective {
  CameraIntrinsics intrinsics;
};

/// Camera frame: +X right, +Y down, +Z along the viewing direction.
/// `rotation`/`translation` map world points into that frame.
struct Camera {
  std::variant<Orthographic, Perspective> projection = Orthographic{};
  Rotation rotation;
  Vec3 translation = Vec3::Zero();
  int width = 1;
  int height = 1;

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -(rotation.inverse() * translation); }
  bool is_orthographic() const { return std::holds_alternative<Orthographic>(projection); }
};

struct DirectionalLight {
  Vec3 to_light = Vec3(0.0, 0.0, -1.0);  // camera frame; default is a headlight
  double ambient = 0.35;
  double diffuse = 0.65;
  bool two_sided = false;
};

struct RenderOptions {
  unsigned threads = 1;
  Vec3 default_color = Vec3::Constant(0.7);
};

struct RenderOutput {
  Image color;
  std::vector<double> depth;  // camera-frame Z, +inf where empty
  std::vector<std::uint8_t> mask;

  int width() const { return color.width; }
  int height() const { return color.height; }
  double coverage() const;
};

/// Rotation of a camera orbiting the origin: azimuth counterclockwise about
/// +Z from +X, polar = elevation above the horizontal plane, roll about the
/// viewing axis. Quarter-turn angles are exact.
Rotation orbit_rotation(double azimuth_deg, double polar_deg, double roll_deg);

Camera orbit_camera(double azimuth_deg, double polar_deg, double roll_deg, double distance,
                    std::variant<Orthographic, Perspective> projection, int width, int height);

/// Intrinsics for a square-pixel camera with the principal point at the
/// image center.
CameraIntrinsics intrinsics_from_fov(double vertical_fov_deg, int width, int height);

/// Azimuths of the four-view rig in output order [front, back, left, right].
inline constexpr double kFourViewAzimuths[4] = {0.0, 180.0, 270.0, 90.0};
inline constexpr double kSixViewAzimuths[6] = {0.0, 45.0, -45.0, 90.0, -90.0, 180.0};

std::vector<Camera> orthogonal_four_views(int resolution);
std::vector<Camera> six_canonical_views(int resolution);

struct EvaluationPose {
  double azimuth_deg = 0.0;
  double polar_deg = 0.0;
  double roll_deg = 0.0;
};

EvaluationPose sample_evaluation_pose(std::uint64_t seed);
Camera evaluation_camera(std::uint64_t seed, int resolution = rig::kEvalResolution);

RenderOutput render(const TriMesh& mesh, const Camera& camera, const DirectionalLight& light = {},
                    const RenderOptions& options = {});

}  // namespace orient
