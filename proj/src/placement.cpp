#include "orient/placement.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <random>

#include "orient/error.hpp"
#include "orient/render.hpp"

namespace orient {
namespace {

constexpr std::string_view kDmapMagic = "DMAP";

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out += static_cast<char>((v >> (8 * k)) & 0xFF);
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + k])) << (8 * k);
  return v;
}

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kParse, "expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

bool inside_image(const Vec2& p, int w, int h) {
  return p.x() >= -0.5 && p.y() >= -0.5 && p.x() <= w - 0.5 && p.y() <= h - 0.5 && p.allFinite();
}

double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

Plane ransac_plane(const PointCloud& points, const Vec3& viewpoint) {
  std::vector<double> depths;
  depths.reserve(points.size());
  for (const Vec3& p : points) depths.push_back(p.z());
  auto mid = depths.begin() + static_cast<std::ptrdiff_t>(depths.size() / 2);
  std::nth_element(depths.begin(), mid, depths.end());
  const double threshold = 0.02 * std::abs(*mid);

  std::mt19937_64 rng(0x5eed);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  std::size_t best_count = 0;
  Plane best;
  constexpr int kIterations = 256;
  for (int it = 0; it < kIterations; ++it) {
    const Vec3& a = points[pick(rng)];
    const Vec3& b = points[pick(rng)];
    const Vec3& c = points[pick(rng)];
    Vec3 n = (b - a).cross(c - a);
    if (n.norm() < 1e-12) continue;
    n.normalize();
    const Plane candidate{n, n.dot(a)};
    std::size_t count = 0;
    for (const Vec3& p : points) count += std::abs(candidate.signed_distance(p)) <= threshold ? 1 : 0;
    if (count > best_count) {
      best_count = count;
      best = candidate;
    }
  }
  if (best_count < 3) return fit_plane_least_squares(points, viewpoint);
  PointCloud inliers;
  inliers.reserve(best_count);
  for (const Vec3& p : points) {
    if (std::abs(best.signed_distance(p)) <= threshold) inliers.push_back(p);
  }
  return fit_plane_least_squares(inliers, viewpoint);
}

}  // namespace

std::string encode_dmap(const DepthMap& depth) {
  std::string out(kDmapMagic);
  put_u32(out, static_cast<std::uint32_t>(depth.width));
  put_u32(out, static_cast<std::uint32_t>(depth.height));
  out.reserve(out.size() + depth.values.size() * 4);
  for (float v : depth.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
  }
  return out;
}

DepthMap decode_dmap(std::string_view bytes) {
  const std::string_view magic(kDmapMagic);
  if (bytes.substr(0, 4) != magic.substr(0, std::min<std::size_t>(4, bytes.size()))) {
    throw Error(ErrorCode::kParse, "not a DMAP depth file");
  }
  if (bytes.size() < 12) throw Error(ErrorCode::kTruncated, "DMAP header is truncated");
  const std::uint32_t w = get_u32(bytes, 4);
  const std::uint32_t h = get_u32(bytes, 8);
  const std::uint64_t expected = 12 + static_cast<std::uint64_t>(w) * h * 4;
  if (bytes.size() < expected) throw Error(ErrorCode::kTruncated, "DMAP payload is truncated");
  if (bytes.size() > expected) throw Error(ErrorCode::kParse, "DMAP has trailing bytes");
  DepthMap d(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    const std::uint32_t bits = get_u32(bytes, 12 + i * 4);
    std::memcpy(&d.values[i], &bits, 4);
  }
  return d;
}

void validate(const SceneBundle& scene) {
  if (scene.image.width != scene.depth.width || scene.image.height != scene.depth.height) {
    throw Error(ErrorCode::kInvalidArgument, "scene image and depth sizes differ");
  }
  if (scene.image.width <= 0 || scene.image.height <= 0) throw Error(ErrorCode::kInvalidArgument, "empty scene");
  if (!(scene.intrinsics.fx > 0.0) || !(scene.intrinsics.fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
}

nlohmann::json to_json(const CameraIntrinsics& intr) {
  return {{"fx", intr.fx}, {"fy", intr.fy}, {"cx", intr.cx}, {"cy", intr.cy}};
}

CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  try {
    return {j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(), j.at("cy").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("invalid intrinsics: ") + e.what());
  }
}

SceneBundle load_scene_bundle(const std::filesystem::path& dir) {
  SceneBundle s;
  s.image = decode_png(read_file(dir / "image.png"));
  s.depth = decode_dmap(read_file(dir / "depth.dmap"));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "intrinsics.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("invalid intrinsics.json: ") + e.what());
  }
  s.intrinsics = intrinsics_from_json(j);
  validate(s);
  return s;
}

void save_scene_bundle(const std::filesystem::path& dir, const SceneBundle& scene) {
  validate(scene);
  std::filesystem::create_directories(dir);
  write_file(dir / "image.png", encode_png(scene.image));
  write_file(dir / "depth.dmap", encode_dmap(scene.depth));
  write_file(dir / "intrinsics.json", to_json(scene.intrinsics).dump(2));
}

nlohmann::json to_json(const Placement& p) {
  const Mat3& R = p.rotation.matrix();
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({R(r, 0), R(r, 1), R(r, 2)});
  return {{"position", vec_json(p.position)},
          {"rotation", rows},
          {"scale", p.scale},
          {"forward_3d", vec_json(p.forward_3d)},
          {"plane", {{"normal", vec_json(p.plane.normal)}, {"offset", p.plane.offset}}}};
}

Placement placement_from_json(const nlohmann::json& j) {
  try {
    Placement p;
    p.position = vec_from_json(j.at("position"));
    const auto& rows = j.at("rotation");
    if (!rows.is_array() || rows.size() != 3) throw Error(ErrorCode::kParse, "rotation must be 3x3 row-major");
    Mat3 R;
    for (int r = 0; r < 3; ++r) R.row(r) = vec_from_json(rows[r]).transpose();
    p.rotation = Rotation::from_matrix(R);
    p.scale = j.at("scale").get<double>();
    p.forward_3d = j.contains("forward_3d") ? vec_from_json(j["forward_3d"]) : p.rotation * CanonicalFrame::forward();
    if (j.contains("plane")) {
      p.plane.normal = vec_from_json(j["plane"].at("normal"));
      p.plane.offset = j["plane"].at("offset").get<double>();
    } else {
      p.plane.normal = p.rotation * CanonicalFrame::up();
      p.plane.offset = p.plane.normal.dot(p.position);
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("invalid placement: ") + e.what());
  }
}

PointCloud unproject_depth(const DepthMap& depth, const CameraIntrinsics& intr, int stride) {
  if (stride < 1) throw Error(ErrorCode::kInvalidArgument, "stride must be >= 1");
  PointCloud out;
  for (int y = 0; y < depth.height; y += stride) {
    for (int x = 0; x < depth.width; x += stride) {
      if (!depth.valid(x, y)) continue;
      const double z = depth.at(x, y);
      out.emplace_back(z * (x - intr.cx) / intr.fx, z * (y - intr.cy) / intr.fy, z);
    }
  }
  if (out.size() < 3) throw Error(ErrorCode::kInsufficientDepth, "fewer than 3 valid depth samples");
  return out;
}

Placement plan_placement(const SceneBundle& scene, const Arrow2D& arrow, double scale, const PlaneRegion& region) {
  validate(scene);
  const int w = scene.depth.width;
  const int h = scene.depth.height;
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::kInvalidArgument, "scale must be positive");
  if (!inside_image(arrow.start, w, h) || !inside_image(arrow.end, w, h)) {
    throw Error(ErrorCode::kArrowOutOfBounds, "arrow endpoints must lie inside the image");
  }
  if (arrow.start == arrow.end) throw Error(ErrorCode::kDegenerateArrow, "arrow start and end coincide");

  PointCloud points;
  if (region.kind == PlaneRegion::Kind::kWindow) {
    if (!(region.radius_px > 0.0)) throw Error(ErrorCode::kInvalidArgument, "window radius must be positive");
    const int stride = std::max(1, region.stride);
    for (int y = 0; y < h; y += stride) {
      for (int x = 0; x < w; x += stride) {
        if (!scene.depth.valid(x, y)) continue;
        if (distance_to_segment(Vec2(x, y), arrow.start, arrow.end) > region.radius_px) continue;
        const double z = scene.depth.at(x, y);
        points.emplace_back(z * (x - scene.intrinsics.cx) / scene.intrinsics.fx,
                            z * (y - scene.intrinsics.cy) / scene.intrinsics.fy, z);
      }
    }
    if (points.size() < 3) throw Error(ErrorCode::kInsufficientDepth, "not enough valid depth near the arrow");
  } else {
    const int stride =
        region.stride > 0 ? region.stride
                          : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(w) * h / 40000.0)));
    points = unproject_depth(scene.depth, scene.intrinsics, stride);
  }

  const Vec3 camera_center = Vec3::Zero();
  const Plane plane = region.ransac ? ransac_plane(points, camera_center) : fit_plane_least_squares(points, camera_center);

  const Vec3 p_start = ray_plane_intersect(pixel_to_ray(scene.intrinsics, arrow.start), plane);
  const Vec3 p_end = ray_plane_intersect(pixel_to_ray(scene.intrinsics, arrow.end), plane);
  const Vec3 v_target = p_end - p_start;
  const Vec3 v_in_plane = v_target - v_target.dot(plane.normal) * plane.normal;
  if (v_in_plane.norm() <= 1e-9 * std::max(1.0, p_start.norm())) {
    throw Error(ErrorCode::kDegenerateArrow, "arrow has no extent along the support plane");
  }
  const Vec3 forward = v_in_plane.normalized();

  // Stand the object up on the plane, then turn it about the normal until
  // its forward axis follows the arrow.
  const Rotation upright = align_vectors(CanonicalFrame::up(), plane.normal);
  const Vec3 fwd0 = upright * CanonicalFrame::forward();
  const double yaw = std::atan2(fwd0.cross(forward).dot(plane.normal), fwd0.dot(forward));
  const Rotation rotation = rotation_from_axis_angle(plane.normal, yaw) * upright;

  Placement p;
  p.position = p_start;
  p.rotation = rotation;
  p.scale = scale;
  p.forward_3d = forward;
  p.plane = plane;
  return p;
}

Placement3D plan_placement_3d(const Arrow3D& arrow, const Vec3& up_hint, double scale) {
  const Vec3 dir = arrow.end - arrow.start;
  if (!(dir.norm() > 0.0)) throw Error(ErrorCode::kDegenerateArrow, "arrow start and end coincide");
  if (!(up_hint.norm() > 0.0)) throw Error(ErrorCode::kInvalidArgument, "up hint must be nonzero");
  const Vec3 f = dir.normalized();
  const Vec3 hint = up_hint.normalized();

  const Rotation align = align_vectors(CanonicalFrame::forward(), f);
  Placement3D out;
  Rotation twist;
  // The best reachable up is the hint projected orthogonally to the arrow.
  const Vec3 target_up = hint - hint.dot(f) * f;
  if (target_up.norm() < 1e-9) {
    out.twist_undefined = true;
  } else {
    const Vec3 up0 = align * CanonicalFrame::up();
    const Vec3 tu = target_up.normalized();
    twist = rotation_from_axis_angle(f, std::atan2(up0.cross(tu).dot(f), up0.dot(tu)));
  }
  Placement& p = out.placement;
  p.rotation = twist * align;
  p.position = arrow.start;
  p.scale = scale;
  p.forward_3d = f;
  p.plane = {hint, hint.dot(arrow.start)};
  return out;
}

PreviewImage render_placement_preview(const SceneBundle& scene, const TriMesh& mesh, const Placement& placement) {
  validate(scene);
  const double base = bounding_box(mesh).min.z();
  TriMesh placed = mesh;
  for (Vec3& v : placed.vertices) {
    v = placement.position + placement.scale * (placement.rotation * (v - Vec3(0.0, 0.0, base)));
  }
  Camera cam;
  cam.projection = Perspective{scene.intrinsics};
  cam.width = scene.image.width;
  cam.height = scene.image.height;
  const RenderOutput obj = render(placed, cam);

  PreviewImage out;
  out.image = scene.image;
  out.overlay.assign(obj.mask.size(), 0);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * cam.width + x;
      if (!obj.mask[i]) continue;
      if (scene.depth.valid(x, y) && scene.depth.at(x, y) < obj.depth[i]) continue;
      out.overlay[i] = 1;
      out.image.set(x, y, obj.color.pixel(x, y));
    }
  }
  return out;
}

}  // namespace orient
