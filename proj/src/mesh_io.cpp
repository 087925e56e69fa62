#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "orient/error.hpp"
#include "orient/mesh.hpp"

namespace orient {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::optional<long long> to_int(std::string_view s) {
  long long v = 0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::string line_error(std::size_t line_no, const std::string& what) {
  return "line " + std::to_string(line_no) + ": " + what;
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

double TriMesh::face_area(std::size_t f) const {
  const Face& t = faces[f];
  const Vec3& a = vertices[t[0]];
  return 0.5 * (vertices[t[1]] - a).cross(vertices[t[2]] - a).norm();
}

BoundingBox bounding_box(const TriMesh& mesh) {
  if (mesh.vertices.empty()) throw Error(ErrorCode::kEmptyMesh, "mesh has no vertices");
  BoundingBox box{mesh.vertices.front(), mesh.vertices.front()};
  for (const Vec3& v : mesh.vertices) {
    box.min = box.min.cwiseMin(v);
    box.max = box.max.cwiseMax(v);
  }
  return box;
}

void validate(const TriMesh& mesh) {
  if (mesh.vertices.empty() || mesh.faces.empty()) {
    throw Error(ErrorCode::kEmptyMesh, "mesh needs at least one vertex and one face");
  }
  if (mesh.has_colors() && mesh.vertex_colors.size() != mesh.vertices.size()) {
    throw Error(ErrorCode::kInvalidArgument, "vertex color count does not match vertex count");
  }
  const auto n = mesh.vertices.size();
  for (const Face& f : mesh.faces) {
    for (auto idx : f) {
      if (idx >= n) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    "face index " + std::to_string(idx) + " >= vertex count " + std::to_string(n));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// OBJ

TriMesh parse_obj(std::string_view text) {
  TriMesh mesh;
  std::vector<Vec3> colors;
  std::size_t colored = 0;
  std::size_t line_no = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    auto tok = split_ws(line);
    if (tok[0] == "v") {
      if (tok.size() != 4 && tok.size() != 5 && tok.size() != 7) {
        throw Error(ErrorCode::kParse, line_error(line_no, "malformed vertex line"));
      }
      double c[6] = {0, 0, 0, 0, 0, 0};
      for (std::size_t i = 1; i < tok.size(); ++i) {
        auto v = to_double(tok[i]);
        if (!v || !std::isfinite(*v)) {
          throw Error(ErrorCode::kParse, line_error(line_no, "malformed vertex line"));
        }
        c[i - 1] = *v;
      }
      mesh.vertices.emplace_back(c[0], c[1], c[2]);
      if (tok.size() == 7) {
        colors.emplace_back(c[3], c[4], c[5]);
        ++colored;
      } else {
        colors.emplace_back(0.7, 0.7, 0.7);
      }
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw Error(ErrorCode::kParse, line_error(line_no, "face needs >= 3 vertices"));
      std::vector<std::uint32_t> poly;
      poly.reserve(tok.size() - 1);
      const auto nv = static_cast<long long>(mesh.vertices.size());
      for (std::size_t i = 1; i < tok.size(); ++i) {
        std::string_view ref = tok[i].substr(0, tok[i].find('/'));
        auto idx = to_int(ref);
        if (!idx || *idx == 0) throw Error(ErrorCode::kParse, line_error(line_no, "malformed face index"));
        long long resolved = *idx > 0 ? *idx - 1 : nv + *idx;
        if (resolved < 0 || resolved >= nv) {
          throw Error(ErrorCode::kIndexOutOfRange,
                      line_error(line_no, "face index " + std::string(ref) + " out of range"));
        }
        poly.push_back(static_cast<std::uint32_t>(resolved));
      }
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        mesh.faces.push_back({poly[0], poly[i], poly[i + 1]});
      }
    }
    // vn, vt, g, o, s, usemtl, mtllib and friends carry nothing we need.
  }

  if (mesh.faces.empty()) throw Error(ErrorCode::kEmptyMesh, "OBJ contains no faces");
  if (colored == mesh.vertices.size()) mesh.vertex_colors = std::move(colors);
  return mesh;
}

std::string write_obj(const TriMesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 48 + mesh.faces.size() * 24);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    out += "v ";
    append_double(out, v.x());
    out += ' ';
    append_double(out, v.y());
    out += ' ';
    append_double(out, v.z());
    if (mesh.has_colors()) {
      const Vec3& c = mesh.vertex_colors[i];
      for (int k = 0; k < 3; ++k) {
        out += ' ';
        append_double(out, c[k]);
      }
    }
    out += '\n';
  }
  for (const Face& f : mesh.faces) {
    out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' +
           std::to_string(f[2] + 1) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// PLY

namespace {

enum class ScalarType { kI8, kU8, kI16, kU16, kI32, kU32, kF32, kF64 };

std::optional<ScalarType> scalar_type(std::string_view name) {
  if (name == "char" || name == "int8") return ScalarType::kI8;
  if (name == "uchar" || name == "uint8") return ScalarType::kU8;
  if (name == "short" || name == "int16") return ScalarType::kI16;
  if (name == "ushort" || name == "uint16") return ScalarType::kU16;
  if (name == "int" || name == "int32") return ScalarType::kI32;
  if (name == "uint" || name == "uint32") return ScalarType::kU32;
  if (name == "float" || name == "float32") return ScalarType::kF32;
  if (name == "double" || name == "float64") return ScalarType::kF64;
  return std::nullopt;
}

struct PlyProperty {
  std::string name;
  ScalarType type;
  bool is_list = false;
  ScalarType count_type = ScalarType::kU8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

static_assert(std::endian::native == std::endian::little, "binary PLY reader assumes a little-endian host");

// Sequential reader over the PLY body, either ASCII tokens or packed LE values.
class PlyBody {
 public:
  PlyBody(std::string_view body, bool binary) : body_(body), binary_(binary) {}

  double read(ScalarType t) {
    return binary_ ? read_binary(t) : read_ascii();
  }

  void next_record() {
    if (binary_) return;
    // ASCII records are line-based; skip whatever remains on the line.
    while (pos_ < body_.size() && body_[pos_] != '\n') {
      if (!std::isspace(static_cast<unsigned char>(body_[pos_]))) {
        throw Error(ErrorCode::kParse, "PLY ASCII record has trailing values");
      }
      ++pos_;
    }
    if (pos_ < body_.size()) ++pos_;
  }

 private:
  double read_ascii() {
    while (pos_ < body_.size() && body_[pos_] != '\n' &&
           std::isspace(static_cast<unsigned char>(body_[pos_]))) {
      ++pos_;
    }
    if (pos_ >= body_.size() || body_[pos_] == '\n') {
      // Blank lines between records are tolerated; a short record is not.
      while (pos_ < body_.size() && std::isspace(static_cast<unsigned char>(body_[pos_]))) ++pos_;
      if (pos_ >= body_.size()) throw Error(ErrorCode::kTruncated, "PLY body ends before all elements were read");
    }
    std::size_t end = pos_;
    while (end < body_.size() && !std::isspace(static_cast<unsigned char>(body_[end]))) ++end;
    auto v = to_double(body_.substr(pos_, end - pos_));
    if (!v) throw Error(ErrorCode::kParse, "malformed PLY ASCII value '" + std::string(body_.substr(pos_, end - pos_)) + "'");
    pos_ = end;
    return *v;
  }

  template <typename T>
  T load() {
    if (pos_ + sizeof(T) > body_.size()) {
      throw Error(ErrorCode::kTruncated, "PLY binary payload is truncated");
    }
    T v;
    std::memcpy(&v, body_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  double read_binary(ScalarType t) {
    switch (t) {
      case ScalarType::kI8: return load<std::int8_t>();
      case ScalarType::kU8: return load<std::uint8_t>();
      case ScalarType::kI16: return load<std::int16_t>();
      case ScalarType::kU16: return load<std::uint16_t>();
      case ScalarType::kI32: return load<std::int32_t>();
      case ScalarType::kU32: return load<std::uint32_t>();
      case ScalarType::kF32: return load<float>();
      case ScalarType::kF64: return load<double>();
    }
    return 0.0;
  }

  std::string_view body_;
  bool binary_;
  std::size_t pos_ = 0;
};

}  // namespace

TriMesh parse_ply(std::string_view bytes) {
  // Header is ASCII, terminated by "end_header\n".
  constexpr std::string_view kEnd = "end_header";
  std::size_t header_end = std::string_view::npos;
  std::size_t search = 0;
  while (true) {
    std::size_t at = bytes.find(kEnd, search);
    if (at == std::string_view::npos) break;
    if (at == 0 || bytes[at - 1] == '\n') {
      std::size_t nl = bytes.find('\n', at);
      header_end = nl == std::string_view::npos ? bytes.size() : nl + 1;
      break;
    }
    search = at + 1;
  }
  if (bytes.substr(0, 3) != "ply" || header_end == std::string_view::npos) {
    throw Error(ErrorCode::kParse, "not a PLY file (missing magic or end_header)");
  }

  std::vector<PlyElement> elements;
  bool binary = false;
  bool have_format = false;
  std::istringstream header{std::string(bytes.substr(0, header_end))};
  std::string raw;
  while (std::getline(header, raw)) {
    auto tok = split_ws(raw);
    if (tok.empty()) continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw Error(ErrorCode::kParse, "malformed format line");
      if (tok[1] == "ascii") {
        binary = false;
      } else if (tok[1] == "binary_little_endian") {
        binary = true;
      } else {
        throw Error(ErrorCode::kUnsupportedFormat, "unsupported PLY format '" + std::string(tok[1]) + "'");
      }
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw Error(ErrorCode::kParse, "malformed element line");
      auto count = to_int(tok[2]);
      if (!count || *count < 0) throw Error(ErrorCode::kParse, "malformed element count");
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(*count), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw Error(ErrorCode::kParse, "property before element");
      PlyProperty prop;
      if (tok.size() == 5 && tok[1] == "list") {
        auto ct = scalar_type(tok[2]);
        auto vt = scalar_type(tok[3]);
        if (!ct || !vt) throw Error(ErrorCode::kParse, "unknown PLY list type");
        prop = {std::string(tok[4]), *vt, true, *ct};
      } else if (tok.size() == 3) {
        auto t = scalar_type(tok[1]);
        if (!t) throw Error(ErrorCode::kParse, "unknown PLY property type '" + std::string(tok[1]) + "'");
        prop = {std::string(tok[2]), *t, false, ScalarType::kU8};
      } else {
        throw Error(ErrorCode::kParse, "malformed property line");
      }
      elements.back().properties.push_back(std::move(prop));
    }
    // comment / obj_info / ply / end_header lines are skipped.
  }
  if (!have_format) throw Error(ErrorCode::kParse, "PLY header has no format line");

  TriMesh mesh;
  bool saw_vertex = false;
  bool saw_face = false;
  PlyBody body(bytes.substr(header_end), binary);

  for (const PlyElement& el : elements) {
    if (el.name == "vertex") {
      saw_vertex = true;
      int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
      for (int i = 0; i < static_cast<int>(el.properties.size()); ++i) {
        const auto& n = el.properties[i].name;
        if (n == "x") ix = i;
        else if (n == "y") iy = i;
        else if (n == "z") iz = i;
        else if (n == "red" || n == "r") ir = i;
        else if (n == "green" || n == "g") ig = i;
        else if (n == "blue" || n == "b") ib = i;
      }
      if (ix < 0 || iy < 0 || iz < 0) throw Error(ErrorCode::kParse, "PLY vertex element lacks x/y/z");
      const bool colored = ir >= 0 && ig >= 0 && ib >= 0;
      mesh.vertices.reserve(el.count);
      std::vector<double> values(el.properties.size());
      for (std::size_t r = 0; r < el.count; ++r) {
        for (std::size_t p = 0; p < el.properties.size(); ++p) {
          const auto& prop = el.properties[p];
          if (prop.is_list) {
            auto n = static_cast<std::size_t>(body.read(prop.count_type));
            for (std::size_t k = 0; k < n; ++k) body.read(prop.type);
            values[p] = 0.0;
          } else {
            values[p] = body.read(prop.type);
          }
        }
        body.next_record();
        mesh.vertices.emplace_back(values[ix], values[iy], values[iz]);
        if (colored) {
          Vec3 c(values[ir], values[ig], values[ib]);
          if (el.properties[ir].type == ScalarType::kU8) c /= 255.0;
          mesh.vertex_colors.push_back(c);
        }
      }
    } else if (el.name == "face") {
      saw_face = true;
      int idx_prop = -1;
      for (int i = 0; i < static_cast<int>(el.properties.size()); ++i) {
        const auto& p = el.properties[i];
        if (p.is_list && (p.name == "vertex_indices" || p.name == "vertex_index")) idx_prop = i;
      }
      if (idx_prop < 0) throw Error(ErrorCode::kParse, "PLY face element lacks a vertex index list");
      std::vector<std::uint32_t> poly;
      for (std::size_t r = 0; r < el.count; ++r) {
        for (std::size_t p = 0; p < el.properties.size(); ++p) {
          const auto& prop = el.properties[p];
          if (!prop.is_list) {
            body.read(prop.type);
            continue;
          }
          auto n = static_cast<std::size_t>(body.read(prop.count_type));
          if (static_cast<int>(p) == idx_prop) {
            poly.clear();
            for (std::size_t k = 0; k < n; ++k) {
              double v = body.read(prop.type);
              if (v < 0 || v >= static_cast<double>(mesh.vertices.size())) {
                throw Error(ErrorCode::kIndexOutOfRange, "PLY face index out of range");
              }
              poly.push_back(static_cast<std::uint32_t>(v));
            }
            if (poly.size() < 3) throw Error(ErrorCode::kParse, "PLY face with fewer than 3 vertices");
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
              mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
            }
          } else {
            for (std::size_t k = 0; k < n; ++k) body.read(prop.type);
          }
        }
        body.next_record();
      }
    } else {
      for (std::size_t r = 0; r < el.count; ++r) {
        for (const auto& prop : el.properties) {
          std::size_t n = prop.is_list ? static_cast<std::size_t>(body.read(prop.count_type)) : 1;
          for (std::size_t k = 0; k < n; ++k) body.read(prop.type);
        }
        body.next_record();
      }
    }
  }

  if (!saw_vertex) throw Error(ErrorCode::kParse, "PLY has no vertex element");
  if (!saw_face || mesh.faces.empty()) throw Error(ErrorCode::kEmptyMesh, "PLY contains no faces");
  validate(mesh);
  return mesh;
}

std::string write_ply(const TriMesh& mesh, PlyEncoding encoding) {
  const bool binary = encoding == PlyEncoding::kBinaryLittleEndian;
  std::string out = "ply\nformat ";
  out += binary ? "binary_little_endian 1.0\n" : "ascii 1.0\n";
  out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (mesh.has_colors()) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "element face " + std::to_string(mesh.faces.size()) + "\n";
  out += "property list uchar uint vertex_indices\nend_header\n";

  auto color_byte = [](double c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
  };
  auto put = [&out](const auto& v) {
    char buf[sizeof(v)];
    std::memcpy(buf, &v, sizeof(v));
    out.append(buf, sizeof(v));
  };

  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    if (binary) {
      put(v.x());
      put(v.y());
      put(v.z());
      if (mesh.has_colors()) {
        for (int k = 0; k < 3; ++k) put(color_byte(mesh.vertex_colors[i][k]));
      }
    } else {
      append_double(out, v.x());
      out += ' ';
      append_double(out, v.y());
      out += ' ';
      append_double(out, v.z());
      if (mesh.has_colors()) {
        for (int k = 0; k < 3; ++k) out += ' ' + std::to_string(color_byte(mesh.vertex_colors[i][k]));
      }
      out += '\n';
    }
  }
  for (const Face& f : mesh.faces) {
    if (binary) {
      put(std::uint8_t{3});
      for (auto idx : f) put(static_cast<std::uint32_t>(idx));
    } else {
      out += "3 " + std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' + std::to_string(f[2]) + '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

TriMesh normalize_mesh(const TriMesh& mesh) {
  BoundingBox box = bounding_box(mesh);
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0)) throw Error(ErrorCode::kDegenerate, "all vertices coincide; cannot normalize");
  const Vec3 center = box.center();
  const double s = 1.0 / longest;
  TriMesh out = mesh;
  for (Vec3& v : out.vertices) v = (v - center) * s;
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

namespace {
std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}
}  // namespace

bool is_mesh_file(const std::filesystem::path& path) {
  const auto ext = lower_ext(path);
  return ext == ".obj" || ext == ".ply";
}

TriMesh load_mesh(const std::filesystem::path& path) {
  const auto ext = lower_ext(path);
  const std::string bytes = read_file(path);
  if (ext == ".obj") return parse_obj(bytes);
  if (ext == ".ply") return parse_ply(bytes);
  throw Error(ErrorCode::kUnsupportedFormat, "unsupported mesh extension '" + ext + "'");
}

void save_mesh(const std::filesystem::path& path, const TriMesh& mesh) {
  const auto ext = lower_ext(path);
  if (ext == ".obj") {
    write_file(path, write_obj(mesh));
  } else if (ext == ".ply") {
    write_file(path, write_ply(mesh, PlyEncoding::kBinaryLittleEndian));
  } else {
    throw Error(ErrorCode::kUnsupportedFormat, "unsupported mesh extension '" + ext + "'");
  }
}

}  // namespace orient
