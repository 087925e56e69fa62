#pragma once

#include <optional>

#include "orient/mesh.hpp"

namespace orient {

/// Axis-aligned box with outward-facing triangles.
TriMesh make_box(const Vec3& min, const Vec3& max, const std::optional<Vec3>& color = std::nullopt);

/// Latitude/longitude sphere; `slices` longitude segments starting at +X.
TriMesh make_uv_sphere(const Vec3& center, double radius, int slices, int stacks,
                       const std::optional<Vec3>& color = std::nullopt);

/// Concatenates meshes. Colors survive only if every part has them.
TriMesh merge(std::initializer_list<TriMesh> parts);

}  // namespace orient
