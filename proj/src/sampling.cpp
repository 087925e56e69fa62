#include "orient/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "orient/error.hpp"

namespace orient {
namespace {

constexpr std::uint32_t kLeafSize = 8;

// Engine-agnostic double in [0, 1); std::uniform_real_distribution output is
// not pinned down across standard libraries.
double unit_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  if (points_.empty()) throw Error(ErrorCode::kEmptyInput, "cannot index an empty point cloud");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1, -1, 0.0});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  Eigen::Index axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi(axis) == lo(axis)) return id;  // all coincident

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_[a](axis) < points_[b](axis); });
  const double split = points_[order_[mid]](axis);

  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& n = nodes_[id];
  n.axis = static_cast<int>(axis);
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

void KdTree::search(std::int32_t node_id, const Vec3& q, Hit& best) const {
  const Node& n = nodes_[node_id];
  if (n.axis < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const std::uint32_t idx = order_[i];
      const double d = (points_[idx] - q).squaredNorm();
      if (d < best.squared_distance || (d == best.squared_distance && idx < best.index)) {
        best = {idx, d};
      }
    }
    return;
  }
  // Left holds coordinates <= split, right holds >= split.
  const double diff = q(n.axis) - n.split;
  const std::int32_t near = diff < 0.0 ? n.left : n.right;
  const std::int32_t far = diff < 0.0 ? n.right : n.left;
  search(near, q, best);
  if (diff * diff <= best.squared_distance) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  Hit best{0, std::numeric_limits<double>::infinity()};
  search(0, query, best);
  return best;
}

PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  validate(mesh);
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cumulative[f] = total;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kDegenerate, "mesh has zero surface area");

  std::mt19937_64 rng(seed);
  PointCloud out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = unit_double(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const Face& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
    const double r1 = std::sqrt(unit_double(rng));
    const double r2 = unit_double(rng);
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    out.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
  }
  return out;
}

namespace {

double directed_term(const KdTree& tree, std::span<const Vec3> queries, ChamferVariant variant) {
  double sum = 0.0;
  for (const Vec3& q : queries) {
    const double d2 = tree.nearest(q).squared_distance;
    sum += variant == ChamferVariant::kMeanSquared ? d2 : std::sqrt(d2);
  }
  return sum / static_cast<double>(queries.size());
}

}  // namespace

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b, ChamferVariant variant) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kEmptyInput, "chamfer distance needs non-empty clouds");
  const KdTree tree_a(a);
  const KdTree tree_b(b);
  // Summing the two terms in a fixed order keeps cd(a, b) == cd(b, a) bitwise.
  const double ab = directed_term(tree_b, a, variant);
  const double ba = directed_term(tree_a, b, variant);
  return 0.5 * (std::min(ab, ba) + std::max(ab, ba));
}

MisalignmentResult flag_misalignment(const TriMesh& pred, const TriMesh& gt, const MisalignmentOptions& options) {
  if (options.samples == 0) throw Error(ErrorCode::kInvalidArgument, "sample count must be positive");
  // Independent streams per side; comparing a mesh with itself still sees
  // sampling noise, as in a real two-sample comparison.
  const PointCloud a = sample_surface(pred, options.samples, options.seed);
  const PointCloud b = sample_surface(gt, options.samples, options.seed ^ 0x9E3779B97F4A7C15ull);
  const double cd = chamfer_distance(a, b, options.variant);
  return {cd > options.gamma, cd};
}

}  // namespace orient
