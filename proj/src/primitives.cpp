#include "orient/primitives.hpp"

#include <cmath>

#include "orient/error.hpp"
#include "orient/geometry.hpp"

namespace orient {

TriMesh make_box(const Vec3& lo, const Vec3& hi, const std::optional<Vec3>& color) {
  TriMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  }
  // Counterclockwise seen from outside.
  m.faces = {{0, 2, 3}, {0, 3, 1},   // -z
             {4, 5, 7}, {4, 7, 6},   // +z
             {0, 1, 5}, {0, 5, 4},   // -y
             {2, 6, 7}, {2, 7, 3},   // +y
             {0, 4, 6}, {0, 6, 2},   // -x
             {1, 3, 7}, {1, 7, 5}};  // +x
  if (color) m.vertex_colors.assign(m.vertices.size(), *color);
  return m;
}

TriMesh make_uv_sphere(const Vec3& center, double radius, int slices, int stacks, const std::optional<Vec3>& color) {
  if (slices < 3 || stacks < 2) throw Error(ErrorCode::kInvalidArgument, "sphere needs >= 3 slices and >= 2 stacks");
  TriMesh m;
  m.vertices.push_back(center + Vec3(0, 0, radius));
  for (int i = 1; i < stacks; ++i) {
    const double theta = kPi * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double phi = 2.0 * kPi * j / slices;
      m.vertices.push_back(center + radius * Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                                                  std::cos(theta)));
    }
  }
  m.vertices.push_back(center - Vec3(0, 0, radius));
  const auto ring = [slices](int i, int j) { return static_cast<std::uint32_t>(1 + (i - 1) * slices + (j % slices)); };
  const auto bottom = static_cast<std::uint32_t>(m.vertices.size() - 1);
  for (int j = 0; j < slices; ++j) m.faces.push_back({0, ring(1, j), ring(1, j + 1)});
  for (int i = 1; i + 1 < stacks; ++i) {
    for (int j = 0; j < slices; ++j) {
      m.faces.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      m.faces.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  }
  for (int j = 0; j < slices; ++j) m.faces.push_back({bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
  if (color) m.vertex_colors.assign(m.vertices.size(), *color);
  return m;
}

TriMesh merge(std::initializer_list<TriMesh> parts) {
  TriMesh out;
  bool colored = true;
  for (const TriMesh& p : parts) colored &= p.has_colors();
  for (const TriMesh& p : parts) {
    const auto base = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
    if (colored) out.vertex_colors.insert(out.vertex_colors.end(), p.vertex_colors.begin(), p.vertex_colors.end());
    for (const Face& f : p.faces) out.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
  }
  return out;
}

}  // namespace orient
