#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "orient/mesh.hpp"

namespace orient {

using PointCloud = std::vector<Vec3>;

/// Exact nearest-neighbour queries over a fixed point set (3-d tree).
class KdTree {
 public:
  struct Hit {
    std::size_t index = 0;
    double squared_distance = 0.0;
  };

  explicit KdTree(std::span<const Vec3> points);

  Hit nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    // Leaves use [begin, end) into order_; inner nodes split on `axis`.
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Area-weighted uniform samples on the surface. Zero-area faces are never
/// selected. Deterministic for a given seed.
PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed);

enum class ChamferVariant {
  /// 1/2 (mean_a min |p-q|^2 + mean_b min |p-q|^2)
  kMeanSquared,
  /// 1/2 (mean_a min |p-q| + mean_b min |p-q|)
  kMeanEuclidean,
};

inline constexpr ChamferVariant kDefaultChamferVariant = ChamferVariant::kMeanSquared;

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b,
                        ChamferVariant variant = kDefaultChamferVariant);

struct MisalignmentOptions {
  double gamma = 0.01;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  ChamferVariant variant = kDefaultChamferVariant;
};

struct MisalignmentResult {
  bool flagged = false;
  double cd = 0.0;
};

/// Samples both meshes independently and flags the pair when CD > gamma.
MisalignmentResult flag_misalignment(const TriMesh& pred, const TriMesh& gt,
                                     const MisalignmentOptions& options = {});

}  // namespace orient
