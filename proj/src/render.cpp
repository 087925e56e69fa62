#include "orient/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "orient/error.hpp"

namespace orient {
namespace {

constexpr double kNearPlane = 1e-3;
// Screen-space guard band (pixels). Keeps 8-bit subpixel fixed point well
// inside int64 range for the edge functions.
constexpr double kGuardBand = 1 << 20;
constexpr int kSubpixelBits = 8;
constexpr double kSubpixelScale = 1 << kSubpixelBits;

std::pair<double, double> exact_cos_sin(double deg) {
  const double quarters = deg / 90.0;
  if (quarters == std::round(quarters)) {
    const long q = ((static_cast<long>(std::round(quarters)) % 4) + 4) % 4;
    static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
    static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
    return {kCos[q], kSin[q]};
  }
  return {std::cos(deg2rad(deg)), std::sin(deg2rad(deg))};
}

double unit_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Clip-space vertex: camera-frame position before projection.
struct ClipVert {
  Vec3 p;
};

// Projected vertex. `q` is linear in screen space: z for orthographic,
// 1/z for perspective.
struct ScreenVert {
  double u = 0.0;
  double v = 0.0;
  double q = 0.0;
};

struct Primitive {
  std::array<ScreenVert, 3> v;
  std::array<std::uint8_t, 3> color;
};

template <typename V, typename Inside, typename Lerp>
std::vector<V> clip_polygon(const std::vector<V>& poly, Inside inside, Lerp lerp) {
  std::vector<V> out;
  if (poly.empty()) return out;
  out.reserve(poly.size() + 2);
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const V& a = poly[i];
    const V& b = poly[(i + 1) % poly.size()];
    const double da = inside(a);
    const double db = inside(b);
    if (da >= 0.0) out.push_back(a);
    if ((da >= 0.0) != (db >= 0.0)) out.push_back(lerp(a, b, da / (da - db)));
  }
  return out;
}

std::vector<ScreenVert> guard_band_clip(std::vector<ScreenVert> poly) {
  auto lerp = [](const ScreenVert& a, const ScreenVert& b, double t) {
    return ScreenVert{a.u + t * (b.u - a.u), a.v + t * (b.v - a.v), a.q + t * (b.q - a.q)};
  };
  poly = clip_polygon(poly, [](const ScreenVert& s) { return s.u + kGuardBand; }, lerp);
  poly = clip_polygon(poly, [](const ScreenVert& s) { return kGuardBand - s.u; }, lerp);
  poly = clip_polygon(poly, [](const ScreenVert& s) { return s.v + kGuardBand; }, lerp);
  poly = clip_polygon(poly, [](const ScreenVert& s) { return kGuardBand - s.v; }, lerp);
  return poly;
}

std::uint8_t to_byte(double c) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
}

std::vector<Primitive> setup_primitives(const TriMesh& mesh, const Camera& camera, const DirectionalLight& light,
                                        const RenderOptions& options) {
  const bool ortho = camera.is_orthographic();
  double scale = 0.0;
  CameraIntrinsics intr;
  if (ortho) {
    const double half = std::get<Orthographic>(camera.projection).half_extent;
    scale = std::min(camera.width, camera.height) / (2.0 * half);
  } else {
    intr = std::get<Perspective>(camera.projection).intrinsics;
  }
  const double ox = 0.5 * (camera.width - 1);
  const double oy = 0.5 * (camera.height - 1);
  const Vec3 to_light = light.to_light.normalized();

  std::vector<Vec3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = camera.to_camera(mesh.vertices[i]);

  std::vector<Primitive> prims;
  prims.reserve(mesh.faces.size());
  for (const Face& f : mesh.faces) {
    const Vec3& a = cam[f[0]];
    const Vec3& b = cam[f[1]];
    const Vec3& c = cam[f[2]];
    const Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    if (!(len > 0.0)) continue;

    double lambert = n.dot(to_light) / len;
    lambert = light.two_sided ? std::abs(lambert) : std::max(0.0, lambert);
    const double shade = light.ambient + light.diffuse * lambert;
    Vec3 base = options.default_color;
    if (mesh.has_colors()) {
      base = (mesh.vertex_colors[f[0]] + mesh.vertex_colors[f[1]] + mesh.vertex_colors[f[2]]) / 3.0;
    }
    const std::array<std::uint8_t, 3> color{to_byte(base.x() * shade), to_byte(base.y() * shade),
                                            to_byte(base.z() * shade)};

    std::vector<ClipVert> poly{{a}, {b}, {c}};
    const bool all_in = a.z() >= kNearPlane && b.z() >= kNearPlane && c.z() >= kNearPlane;
    if (!all_in) {
      poly = clip_polygon(
          poly, [](const ClipVert& v) { return v.p.z() - kNearPlane; },
          [](const ClipVert& x, const ClipVert& y, double t) { return ClipVert{x.p + t * (y.p - x.p)}; });
      if (poly.size() < 3) continue;
    }

    std::vector<ScreenVert> screen;
    screen.reserve(poly.size());
    for (const ClipVert& v : poly) {
      if (ortho) {
        screen.push_back({scale * v.p.x() + ox, scale * v.p.y() + oy, v.p.z()});
      } else {
        const double iz = 1.0 / v.p.z();
        screen.push_back({intr.fx * v.p.x() * iz + intr.cx, intr.fy * v.p.y() * iz + intr.cy, iz});
      }
    }
    bool needs_guard = false;
    for (const auto& s : screen) {
      needs_guard |= std::abs(s.u) > kGuardBand || std::abs(s.v) > kGuardBand;
    }
    if (needs_guard) {
      screen = guard_band_clip(std::move(screen));
      if (screen.size() < 3) continue;
    }
    for (std::size_t i = 1; i + 1 < screen.size(); ++i) {
      prims.push_back({{screen[0], screen[i], screen[i + 1]}, color});
    }
  }
  return prims;
}

struct FixedVert {
  std::int64_t x;
  std::int64_t y;
};

inline std::int64_t edge(const FixedVert& a, const FixedVert& b, std::int64_t px, std::int64_t py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// For positively oriented triangles in y-down screen space.
inline bool is_top_left(const FixedVert& a, const FixedVert& b) {
  const std::int64_t dx = b.x - a.x;
  const std::int64_t dy = b.y - a.y;
  return dy < 0 || (dy == 0 && dx > 0);
}

void rasterize_band(const std::vector<Primitive>& prims, bool ortho, int width, int row_begin, int row_end,
                    RenderOutput& out) {
  for (const Primitive& prim : prims) {
    std::array<FixedVert, 3> fv;
    std::array<double, 3> q;
    for (int i = 0; i < 3; ++i) {
      fv[i] = {std::llround(prim.v[i].u * kSubpixelScale), std::llround(prim.v[i].v * kSubpixelScale)};
      q[i] = prim.v[i].q;
    }
    std::int64_t area = edge(fv[0], fv[1], fv[2].x, fv[2].y);
    if (area == 0) continue;
    if (area < 0) {
      std::swap(fv[1], fv[2]);
      std::swap(q[1], q[2]);
      area = -area;
    }

    const std::int64_t min_x = std::min({fv[0].x, fv[1].x, fv[2].x});
    const std::int64_t max_x = std::max({fv[0].x, fv[1].x, fv[2].x});
    const std::int64_t min_y = std::min({fv[0].y, fv[1].y, fv[2].y});
    const std::int64_t max_y = std::max({fv[0].y, fv[1].y, fv[2].y});
    // Pixel centers sit on integer coordinates.
    const auto ceil_div = [](std::int64_t v) { return (v + (1 << kSubpixelBits) - 1) >> kSubpixelBits; };
    const auto floor_div = [](std::int64_t v) { return v >> kSubpixelBits; };
    const int x0 = static_cast<int>(std::max<std::int64_t>(ceil_div(min_x), 0));
    const int x1 = static_cast<int>(std::min<std::int64_t>(floor_div(max_x), width - 1));
    const int y0 = static_cast<int>(std::max<std::int64_t>(ceil_div(min_y), row_begin));
    const int y1 = static_cast<int>(std::min<std::int64_t>(floor_div(max_y), row_end - 1));
    if (x0 > x1 || y0 > y1) continue;

    const bool tl0 = is_top_left(fv[1], fv[2]);
    const bool tl1 = is_top_left(fv[2], fv[0]);
    const bool tl2 = is_top_left(fv[0], fv[1]);
    const double inv_area = 1.0 / static_cast<double>(area);

    for (int y = y0; y <= y1; ++y) {
      const std::int64_t py = static_cast<std::int64_t>(y) << kSubpixelBits;
      for (int x = x0; x <= x1; ++x) {
        const std::int64_t px = static_cast<std::int64_t>(x) << kSubpixelBits;
        const std::int64_t w0 = edge(fv[1], fv[2], px, py);
        const std::int64_t w1 = edge(fv[2], fv[0], px, py);
        const std::int64_t w2 = edge(fv[0], fv[1], px, py);
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        if ((w0 == 0 && !tl0) || (w1 == 0 && !tl1) || (w2 == 0 && !tl2)) continue;

        const double qi = (static_cast<double>(w0) * q[0] + static_cast<double>(w1) * q[1] +
                           static_cast<double>(w2) * q[2]) * inv_area;
        const double depth = ortho ? qi : 1.0 / qi;
        const std::size_t idx = static_cast<std::size_t>(y) * width + x;
        if (depth < out.depth[idx]) {
          out.depth[idx] = depth;
          out.mask[idx] = 1;
          out.color.set(x, y, prim.color);
        }
      }
    }
  }
}

}  // namespace

double RenderOutput::coverage() const {
  if (mask.empty()) return 0.0;
  std::size_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(mask.size());
}

Rotation orbit_rotation(double azimuth_deg, double polar_deg, double roll_deg) {
  const auto [ca, sa] = exact_cos_sin(azimuth_deg);
  const auto [cp, sp] = exact_cos_sin(polar_deg);
  const Vec3 eye(cp * ca, cp * sa, sp);
  const Vec3 forward = -eye;
  Vec3 right = forward.cross(CanonicalFrame::up());
  if (right.norm() < 1e-12) throw Error(ErrorCode::kInvalidArgument, "orbit camera looks straight along the up axis");
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 R;
  R.row(0) = right.transpose();
  R.row(1) = down.transpose();
  R.row(2) = forward.transpose();
  if (roll_deg != 0.0) {
    const auto [cr, sr] = exact_cos_sin(roll_deg);
    Mat3 roll;
    roll << cr, -sr, 0.0,
            sr, cr, 0.0,
            0.0, 0.0, 1.0;
    R = roll * R;
  }
  return Rotation::from_matrix(R);
}

Camera orbit_camera(double azimuth_deg, double polar_deg, double roll_deg, double distance,
                    std::variant<Orthographic, Perspective> projection, int width, int height) {
  if (width < 1 || height < 1) throw Error(ErrorCode::kInvalidArgument, "camera resolution must be >= 1x1");
  Camera cam;
  cam.projection = projection;
  cam.rotation = orbit_rotation(azimuth_deg, polar_deg, roll_deg);
  // The eye is at distance * (unit eye direction), which the camera maps to
  // the origin; the world origin lands at (0, 0, distance).
  cam.translation = Vec3(0.0, 0.0, distance);
  cam.width = width;
  cam.height = height;
  return cam;
}

CameraIntrinsics intrinsics_from_fov(double vertical_fov_deg, int width, int height) {
  const double f = 0.5 * height / std::tan(0.5 * deg2rad(vertical_fov_deg));
  return {f, f, 0.5 * (width - 1), 0.5 * (height - 1)};
}

namespace {
std::vector<Camera> ortho_rig(std::span<const double> azimuths, int resolution) {
  if (resolution < 64) throw Error(ErrorCode::kInvalidArgument, "rig resolution must be >= 64");
  std::vector<Camera> cams;
  for (double az : azimuths) {
    cams.push_back(orbit_camera(az, 0.0, 0.0, rig::kOrthoDistance, Orthographic{rig::kOrthoHalfExtent},
                                resolution, resolution));
  }
  return cams;
}
}  // namespace

std::vector<Camera> orthogonal_four_views(int resolution) {
  return ortho_rig(kFourViewAzimuths, resolution);
}

std::vector<Camera> six_canonical_views(int resolution) {
  return ortho_rig(kSixViewAzimuths, resolution);
}

EvaluationPose sample_evaluation_pose(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EvaluationPose pose;
  pose.azimuth_deg = 360.0 * unit_double(rng);
  pose.polar_deg = rig::kEvalMaxPolarDeg * unit_double(rng);
  pose.roll_deg = rig::kEvalMaxRollDeg * (2.0 * unit_double(rng) - 1.0);
  return pose;
}

Camera evaluation_camera(std::uint64_t seed, int resolution) {
  const EvaluationPose pose = sample_evaluation_pose(seed);
  return orbit_camera(pose.azimuth_deg, pose.polar_deg, pose.roll_deg, rig::kEvalDistance,
                      Perspective{intrinsics_from_fov(rig::kEvalVerticalFovDeg, resolution, resolution)}, resolution,
                      resolution);
}

RenderOutput render(const TriMesh& mesh, const Camera& camera, const DirectionalLight& light,
                    const RenderOptions& options) {
  if (camera.width < 1 || camera.height < 1) throw Error(ErrorCode::kInvalidArgument, "invalid camera resolution");
  RenderOutput out;
  out.color = Image(camera.width, camera.height, 255);
  const std::size_t n = static_cast<std::size_t>(camera.width) * camera.height;
  out.depth.assign(n, std::numeric_limits<double>::infinity());
  out.mask.assign(n, 0);
  if (mesh.faces.empty()) return out;

  const std::vector<Primitive> prims = setup_primitives(mesh, camera, light, options);
  const bool ortho = camera.is_orthographic();

  // Bands own disjoint rows and replay primitives in the same order, so the
  // image does not depend on the thread count.
  const unsigned threads = std::clamp<unsigned>(options.threads, 1u, static_cast<unsigned>(camera.height));
  if (threads == 1) {
    rasterize_band(prims, ortho, camera.width, 0, camera.height, out);
    return out;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    const int r0 = static_cast<int>(static_cast<long>(camera.height) * t / threads);
    const int r1 = static_cast<int>(static_cast<long>(camera.height) * (t + 1) / threads);
    pool.emplace_back([&, r0, r1] { rasterize_band(prims, ortho, camera.width, r0, r1, out); });
  }
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace orient
