#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "orient/geometry.hpp"
#include "orient/image.hpp"
#include "orient/metrics.hpp"
#include "orient/render.hpp"

namespace orient {

/// Orbit angles of a viewpoint, in degrees.
struct ViewAngles {
  double azimuth_deg = 0.0;
  double polar_deg = 0.0;
  double roll_deg = 0.0;
};

/// Object rotation R such that rendering R * mesh from the reference (front)
/// viewpoint is the same view as rendering mesh from the orbit viewpoint
/// `angles`. Identity at (0, 0, 0).
Rotation view_rotation(const ViewAngles& angles);

struct HypothesisGrid {
  std::vector<Rotation> rotations;
  std::vector<ViewAngles> angles;
  int n_azimuth = 1;
  int n_polar = 1;
  int n_roll = 1;
  ViewAngles spacing;  // lattice step per axis (used as the initial refinement step)

  std::size_t size() const { return rotations.size(); }
};

/// Azimuth over [0, 360), polar over [0, 60], roll over [-30, 30].
HypothesisGrid make_grid(int n_azimuth, int n_polar, int n_roll);

/// Builds a one-off grid from explicit angles.
HypothesisGrid grid_from_angles(std::vector<ViewAngles> angles);

enum class DescriptorKind { kDownsampledGray, kGradientHistogram, kExternalFile };

struct Descriptor {
  DescriptorKind kind = DescriptorKind::kDownsampledGray;
  int grid = 32;  // output side for gray; cell count per side for gradients
  int bins = 9;
  std::filesystem::path feature_dir;  // external-file kind: <index>.feat and query.feat

  static Descriptor downsampled_gray(int grid = 32) { return {DescriptorKind::kDownsampledGray, grid, 9, {}}; }
  static Descriptor gradient_histogram(int cells = 8, int bins = 9) {
    return {DescriptorKind::kGradientHistogram, cells, bins, {}};
  }
  static Descriptor external(std::filesystem::path dir) { return {DescriptorKind::kExternalFile, 0, 0, std::move(dir)}; }

  /// Pixels whose mask entry is zero are treated as white background.
  std::vector<double> compute(const Image& image, const std::vector<std::uint8_t>* mask = nullptr) const;
};

double descriptor_distance(const std::vector<double>& a, const std::vector<double>& b);

/// Little-endian float32 vector file.
std::vector<double> read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const std::vector<double>& values);

struct RankedHypothesis {
  std::size_t index = 0;  // grid index; equals grid size for a refined pose
  Rotation rotation;
  ViewAngles angles;
  double distance = 0.0;
  bool refined = false;
};

struct EstimateResult {
  Rotation best;
  ViewAngles best_angles;
  double best_distance = 0.0;
  std::vector<RankedHypothesis> ranked;  // ascending distance; ranked[0] is best
};

struct EstimateOptions {
  bool refine = false;
  std::size_t refine_top = 1;  // how many of the best grid poses seed a refinement
  int refine_halvings = 3;
  std::size_t top_k = 0;  // 0 keeps the full ranking
  unsigned threads = 1;
  DirectionalLight light;
};

EstimateResult estimate_orientation(const TriMesh& template_mesh, const Image& query, const Camera& camera,
                                    const HypothesisGrid& grid, const Descriptor& descriptor,
                                    const EstimateOptions& options = {});

/// Perspective camera at the front viewpoint used by the evaluation harness.
Camera reference_camera(int resolution = rig::kEvalResolution);

struct EvalObject {
  std::string id;
  std::filesystem::path mesh;
  std::string category;
  bool stick_like = false;
};

struct EvalManifest {
  std::vector<EvalObject> objects;
  int trials = 1;
};

EvalManifest load_eval_manifest(const std::filesystem::path& path);
nlohmann::json to_json(const EvalManifest& manifest);

struct EvalOptions {
  int resolution = rig::kEvalResolution;
  EstimateOptions estimate;
  /// Overrides the shared grid per trial, given the ground-truth viewpoint.
  std::function<HypothesisGrid(const ViewAngles& gt)> grid_for_trial;
  /// Applied to each prediction before scoring; used to inject perturbations.
  std::function<Rotation(const Rotation& pred, const EvalObject& object)> post_process;
};

struct EvalResult {
  MetricsReport report;
  std::vector<EvalRecord> records;
};

EvalResult evaluate_estimator(const EvalManifest& manifest, const HypothesisGrid& grid, const Descriptor& descriptor,
                              std::uint64_t seed, const EvalOptions& options = {});
EvalResult evaluate_estimator(const std::filesystem::path& manifest_path, const HypothesisGrid& grid,
                              const Descriptor& descriptor, std::uint64_t seed, const EvalOptions& options = {});

}  // namespace orient
