#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace orient {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Face = std::array<std::uint32_t, 3>;

/// The model frame every module assumes: +X forward, +Z up, right-handed
/// (so +Y is the object's left). Fixed for the whole library.
struct CanonicalFrame {
  static Vec3 forward() { return Vec3::UnitX(); }
  static Vec3 up() { return Vec3::UnitZ(); }
  static Vec3 left() { return Vec3::UnitY(); }
};

/// Indexed triangle mesh. `vertex_colors` is either empty or has one RGB
/// triple in [0,1] per vertex.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> vertex_colors;

  bool has_colors() const { return !vertex_colors.empty(); }
  double face_area(std::size_t f) const;

  friend bool operator==(const TriMesh&, const TriMesh&) = default;
};

struct BoundingBox {
  Vec3 min;
  Vec3 max;

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
};

BoundingBox bounding_box(const TriMesh& mesh);

/// Throws Error(kIndexOutOfRange / kEmptyMesh / kInvalidArgument) when the
/// mesh breaks a structural invariant.
void validate(const TriMesh& mesh);

TriMesh parse_obj(std::string_view text);
TriMesh parse_ply(std::string_view bytes);

std::string write_obj(const TriMesh& mesh);

enum class PlyEncoding { kAscii, kBinaryLittleEndian };
std::string write_ply(const TriMesh& mesh, PlyEncoding encoding);

/// Centers the bounding box at the origin and scales uniformly so that the
/// longest box edge has length 1.
TriMesh normalize_mesh(const TriMesh& mesh);

/// Dispatches on the file extension (.obj or .ply, case-insensitive).
TriMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const std::filesystem::path& path, const TriMesh& mesh);

bool is_mesh_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace orient
