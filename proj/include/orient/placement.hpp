#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "orient/geometry.hpp"
#include "orient/image.hpp"
#include "orient/sampling.hpp"

namespace orient {

/// Metric camera-frame Z per pixel. A value is valid when finite and > 0;
/// NaN or <= 0 marks a hole.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 0.0f) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  bool valid(int x, int y) const {
    const float v = at(x, y);
    return std::isfinite(v) && v > 0.0f;
  }
};

/// "DMAP" magic, uint32 LE width, uint32 LE height, then float32 LE depths
/// row-major.
std::string encode_dmap(const DepthMap& depth);
DepthMap decode_dmap(std::string_view bytes);

struct SceneBundle {
  Image image;
  DepthMap depth;
  CameraIntrinsics intrinsics;
};

/// Checks the bundle invariants (matching sizes, positive focal lengths).
void validate(const SceneBundle& scene);

/// Directory holding image.png, depth.dmap and intrinsics.json.
SceneBundle load_scene_bundle(const std::filesystem::path& dir);
void save_scene_bundle(const std::filesystem::path& dir, const SceneBundle& scene);

nlohmann::json to_json(const CameraIntrinsics& intr);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);

struct Arrow2D {
  Vec2 start;
  Vec2 end;
};

struct Arrow3D {
  Vec3 start;
  Vec3 end;
};

struct PlaneRegion {
  enum class Kind { kWholeImage, kWindow };
  Kind kind = Kind::kWholeImage;
  double radius_px = 0.0;  // window: pixels within this distance of the arrow segment
  int stride = 0;          // 0 picks a stride that keeps roughly 40k samples
  bool ransac = false;     // inliers within 2% of the median depth

  static PlaneRegion whole_image() { return {}; }
  static PlaneRegion window(double radius) { return {Kind::kWindow, radius, 1, false}; }
};

struct Placement {
  Vec3 position = Vec3::Zero();  // camera frame, meters
  Rotation rotation;             // canonical -> camera frame
  double scale = 1.0;            // meters per normalized model unit
  Vec3 forward_3d = Vec3::UnitX();
  Plane plane;
};

nlohmann::json to_json(const Placement& p);
Placement placement_from_json(const nlohmann::json& j);

PointCloud unproject_depth(const DepthMap& depth, const CameraIntrinsics& intr, int stride = 1);

Placement plan_placement(const SceneBundle& scene, const Arrow2D& arrow, double scale,
                         const PlaneRegion& region = PlaneRegion::whole_image());

struct Placement3D {
  Placement placement;
  bool twist_undefined = false;  // arrow parallel to the up hint; no twist applied
};

Placement3D plan_placement_3d(const Arrow3D& arrow, const Vec3& up_hint, double scale = 1.0);

struct PreviewImage {
  Image image;
  std::vector<std::uint8_t> overlay;  // pixels where the object is visible
};

/// Renders the normalized mesh at the placement, resting on the plane (its
/// lowest canonical point sits at the placement position), and composites
/// it over the scene with a z-test against the scene depth.
PreviewImage render_placement_preview(const SceneBundle& scene, const TriMesh& mesh, const Placement& placement);

}  // namespace orient
