#pragma once

#include <random>
#include <string>
#include <vector>

#include "orient/mesh.hpp"
#include "orient/primitives.hpp"

namespace orient::testing {

struct NamedMesh {
  std::string id;
  std::string category;
  TriMesh mesh;
};

// Procedural objects with no yaw or mirror symmetry: each has a distinct
// front part on +X and extra features off the XZ plane.
inline std::vector<NamedMesh> asymmetric_meshes() {
  const Vec3 red(0.85, 0.25, 0.2), blue(0.2, 0.35, 0.85), green(0.25, 0.75, 0.3), gray(0.6, 0.6, 0.6),
      yellow(0.9, 0.8, 0.2);
  std::vector<NamedMesh> out;
  out.push_back({"chair", "furniture",
                 normalize_mesh(merge({make_box({-0.5, -0.5, 0.0}, {0.5, 0.5, 0.15}, gray),
                                       make_box({-0.5, -0.5, 0.15}, {-0.35, 0.5, 1.1}, blue),
                                       make_box({0.35, 0.3, -0.6}, {0.5, 0.45, 0.0}, red),
                                       make_box({-0.5, -0.5, -0.6}, {-0.35, -0.35, 0.0}, green),
                                       make_uv_sphere({0.45, -0.3, 0.35}, 0.18, 16, 8, yellow)}))});
  out.push_back({"car", "vehicle",
                 normalize_mesh(merge({make_box({-1.0, -0.4, 0.0}, {1.0, 0.4, 0.4}, red),
                                       make_box({-0.7, -0.35, 0.4}, {0.2, 0.35, 0.75}, blue),
                                       make_box({0.8, 0.1, 0.4}, {1.0, 0.4, 0.55}, yellow),
                                       make_uv_sphere({-0.6, 0.45, 0.1}, 0.15, 16, 8, gray)}))});
  out.push_back({"lamp", "furniture",
                 normalize_mesh(merge({make_box({-0.3, -0.3, 0.0}, {0.3, 0.3, 0.08}, gray),
                                       make_box({-0.25, -0.05, 0.08}, {-0.15, 0.05, 1.0}, blue),
                                       make_box({-0.25, -0.05, 0.9}, {0.5, 0.05, 1.0}, green),
                                       make_uv_sphere({0.5, 0.1, 0.8}, 0.15, 16, 8, yellow)}))});
  out.push_back({"dog", "animal",
                 normalize_mesh(merge({make_box({-0.6, -0.2, 0.3}, {0.4, 0.2, 0.65}, yellow),
                                       make_uv_sphere({0.55, 0.0, 0.8}, 0.22, 16, 8, red),
                                       make_box({-0.85, -0.05, 0.55}, {-0.6, 0.05, 0.62}, gray),
                                       make_box({0.25, 0.1, 0.0}, {0.35, 0.2, 0.3}, blue),
                                       make_box({-0.5, -0.2, 0.0}, {-0.4, -0.1, 0.3}, green)}))});
  out.push_back({"kettle", "kitchen",
                 normalize_mesh(merge({make_uv_sphere({0.0, 0.0, 0.4}, 0.4, 24, 12, gray),
                                       make_box({0.3, -0.05, 0.3}, {0.8, 0.05, 0.4}, red),
                                       make_box({-0.65, -0.05, 0.15}, {-0.35, 0.05, 0.75}, blue),
                                       make_box({-0.1, 0.2, 0.7}, {0.1, 0.45, 0.9}, green)}))});
  return out;
}

inline TriMesh unit_cube() { return make_box({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}); }

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

}  // namespace orient::testing
