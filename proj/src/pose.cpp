#include "orient/pose.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <thread>

#include "orient/error.hpp"

namespace orient {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n == 1) return {0.5 * (lo + hi)};
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
  return out;
}

std::vector<double> grayscale(const Image& image, const std::vector<std::uint8_t>* mask) {
  std::vector<double> g(static_cast<std::size_t>(image.width) * image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * image.width + x;
      if (mask != nullptr && !(*mask)[i]) {
        g[i] = 1.0;
        continue;
      }
      const auto p = image.pixel(x, y);
      g[i] = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
    }
  }
  return g;
}

std::vector<double> downsample(const std::vector<double>& g, int w, int h, int side) {
  std::vector<double> out(static_cast<std::size_t>(side) * side, 0.0);
  for (int cy = 0; cy < side; ++cy) {
    const int y0 = static_cast<int>(static_cast<long>(cy) * h / side);
    const int y1 = std::max(y0 + 1, static_cast<int>(static_cast<long>(cy + 1) * h / side));
    for (int cx = 0; cx < side; ++cx) {
      const int x0 = static_cast<int>(static_cast<long>(cx) * w / side);
      const int x1 = std::max(x0 + 1, static_cast<int>(static_cast<long>(cx + 1) * w / side));
      double sum = 0.0;
      int n = 0;
      for (int y = y0; y < std::min(y1, h); ++y) {
        for (int x = x0; x < std::min(x1, w); ++x) {
          sum += g[static_cast<std::size_t>(y) * w + x];
          ++n;
        }
      }
      out[static_cast<std::size_t>(cy) * side + cx] = n > 0 ? sum / n : 1.0;
    }
  }
  return out;
}

std::vector<double> orientation_histogram(const std::vector<double>& g, int w, int h, int cells, int bins) {
  std::vector<double> hist(static_cast<std::size_t>(cells) * cells * bins, 0.0);
  auto at = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return g[static_cast<std::size_t>(y) * w + x];
  };
  for (int y = 0; y < h; ++y) {
    const int cy = std::min(cells - 1, static_cast<int>(static_cast<long>(y) * cells / h));
    for (int x = 0; x < w; ++x) {
      const double gx = at(x + 1, y) - at(x - 1, y);
      const double gy = at(x, y + 1) - at(x, y - 1);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx);
      if (angle < 0.0) angle += kPi;  // unsigned orientation
      const int bin = std::min(bins - 1, static_cast<int>(angle / kPi * bins));
      const int cx = std::min(cells - 1, static_cast<int>(static_cast<long>(x) * cells / w));
      hist[(static_cast<std::size_t>(cy) * cells + cx) * bins + bin] += mag;
    }
  }
  double norm = 0.0;
  for (double v : hist) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : hist) v /= norm;
  }
  return hist;
}

// Distances of rendered hypotheses, evaluated in parallel chunks; every
// slot is written by exactly one worker so the result is schedule-free.
std::vector<double> score_rotations(const TriMesh& mesh, const std::vector<Rotation>& rotations,
                                    const Camera& camera, const Descriptor& descriptor,
                                    const std::vector<double>& query_features, const EstimateOptions& options) {
  std::vector<double> dist(rotations.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const RenderOutput r = render(rotated(mesh, rotations[i]), camera, options.light);
      dist[i] = descriptor_distance(descriptor.compute(r.color, &r.mask), query_features);
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(rotations.size())));
  if (threads <= 1) {
    work(0, rotations.size());
    return dist;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back(work, rotations.size() * t / threads, rotations.size() * (t + 1) / threads);
  }
  for (auto& th : pool) th.join();
  return dist;
}

struct RefineOutcome {
  ViewAngles angles;
  double distance;
};

RefineOutcome refine_pose(const TriMesh& mesh, const Camera& camera, const Descriptor& descriptor,
                          const std::vector<double>& query_features, const HypothesisGrid& grid,
                          const ViewAngles& start, double start_distance, const EstimateOptions& options) {
  auto score = [&](const ViewAngles& a) {
    const RenderOutput r = render(rotated(mesh, view_rotation(a)), camera, options.light);
    return descriptor_distance(descriptor.compute(r.color, &r.mask), query_features);
  };
  ViewAngles best = start;
  double best_d = start_distance;
  double step[3] = {grid.spacing.azimuth_deg, grid.spacing.polar_deg, grid.spacing.roll_deg};
  constexpr int kMaxSweepsPerLevel = 16;
  for (int level = 0; level <= options.refine_halvings; ++level) {
    for (int sweep = 0; sweep < kMaxSweepsPerLevel; ++sweep) {
      bool improved = false;
      for (int axis = 0; axis < 3; ++axis) {
        for (double sign : {1.0, -1.0}) {
          ViewAngles probe = best;
          double* field = axis == 0 ? &probe.azimuth_deg : axis == 1 ? &probe.polar_deg : &probe.roll_deg;
          *field += sign * step[axis];
          // Keep clear of the straight-down pole where the orbit frame is undefined.
          probe.polar_deg = std::clamp(probe.polar_deg, -89.0, 89.0);
          const double d = score(probe);
          if (d < best_d) {
            best_d = d;
            best = probe;
            improved = true;
          }
        }
      }
      if (!improved) break;
    }
    for (double& s : step) s *= 0.5;
  }
  return {best, best_d};
}

}  // namespace

Rotation view_rotation(const ViewAngles& a) {
  static const Rotation front_inv = orbit_rotation(0.0, 0.0, 0.0).inverse();
  return front_inv * orbit_rotation(a.azimuth_deg, a.polar_deg, a.roll_deg);
}

HypothesisGrid make_grid(int n_azimuth, int n_polar, int n_roll) {
  if (n_azimuth < 1 || n_polar < 1 || n_roll < 1) {
    throw Error(ErrorCode::kInvalidArgument, "grid counts must be >= 1");
  }
  HypothesisGrid grid;
  grid.n_azimuth = n_azimuth;
  grid.n_polar = n_polar;
  grid.n_roll = n_roll;
  grid.spacing.azimuth_deg = 360.0 / n_azimuth;
  grid.spacing.polar_deg = n_polar > 1 ? rig::kEvalMaxPolarDeg / (n_polar - 1) : rig::kEvalMaxPolarDeg / 2.0;
  grid.spacing.roll_deg = n_roll > 1 ? 2.0 * rig::kEvalMaxRollDeg / (n_roll - 1) : rig::kEvalMaxRollDeg;

  // A single polar/roll sample sits at 0, the identity view.
  const std::vector<double> polars = n_polar == 1 ? std::vector<double>{0.0} : linspace(0.0, rig::kEvalMaxPolarDeg, n_polar);
  const std::vector<double> rolls =
      n_roll == 1 ? std::vector<double>{0.0} : linspace(-rig::kEvalMaxRollDeg, rig::kEvalMaxRollDeg, n_roll);
  for (int a = 0; a < n_azimuth; ++a) {
    const double az = 360.0 * a / n_azimuth;
    for (double p : polars) {
      for (double r : rolls) {
        const ViewAngles angles{az, p, r};
        grid.angles.push_back(angles);
        grid.rotations.push_back(view_rotation(angles));
      }
    }
  }
  return grid;
}

HypothesisGrid grid_from_angles(std::vector<ViewAngles> angles) {
  if (angles.empty()) throw Error(ErrorCode::kInvalidArgument, "grid must not be empty");
  HypothesisGrid grid;
  grid.n_azimuth = static_cast<int>(angles.size());
  grid.spacing = {10.0, 10.0, 10.0};
  for (const auto& a : angles) grid.rotations.push_back(view_rotation(a));
  grid.angles = std::move(angles);
  return grid;
}

std::vector<double> Descriptor::compute(const Image& image, const std::vector<std::uint8_t>* mask) const {
  switch (kind) {
    case DescriptorKind::kDownsampledGray:
      return downsample(grayscale(image, mask), image.width, image.height, grid);
    case DescriptorKind::kGradientHistogram:
      return orientation_histogram(grayscale(image, mask), image.width, image.height, grid, bins);
    case DescriptorKind::kExternalFile:
      break;
  }
  throw Error(ErrorCode::kInvalidArgument, "external descriptors are read from feature files, not computed");
}

double descriptor_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDescriptorMismatch, "descriptor lengths differ (" + std::to_string(a.size()) + " vs " +
                                                    std::to_string(b.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<double> read_feature_file(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() % 4 != 0 || bytes.empty()) {
    throw Error(ErrorCode::kDescriptorMismatch, path.string() + " is not a float32 vector");
  }
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + k])) << (8 * k);
    float f;
    std::memcpy(&f, &bits, 4);
    out[i] = f;
  }
  return out;
}

void write_feature_file(const std::filesystem::path& path, const std::vector<double>& values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int k = 0; k < 4; ++k) bytes[i * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
  }
  write_file(path, bytes);
}

EstimateResult estimate_orientation(const TriMesh& template_mesh, const Image& query, const Camera& camera,
                                    const HypothesisGrid& grid, const Descriptor& descriptor,
                                    const EstimateOptions& options) {
  if (grid.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty hypothesis grid");

  std::vector<double> distances;
  std::vector<double> query_features;
  const bool external = descriptor.kind == DescriptorKind::kExternalFile;
  if (external) {
    query_features = read_feature_file(descriptor.feature_dir / "query.feat");
    distances.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto f = read_feature_file(descriptor.feature_dir / (std::to_string(i) + ".feat"));
      distances[i] = descriptor_distance(f, query_features);
    }
  } else {
    if (query.width != camera.width || query.height != camera.height) {
      throw Error(ErrorCode::kInvalidArgument, "query resolution must match the camera resolution");
    }
    query_features = descriptor.compute(query);
    distances = score_rotations(template_mesh, grid.rotations, camera, descriptor, query_features, options);
  }

  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });

  EstimateResult result;
  result.ranked.reserve(order.size() + 1);
  for (std::size_t i : order) result.ranked.push_back({i, grid.rotations[i], grid.angles[i], distances[i], false});

  if (options.refine && !external) {
    RefineOutcome best{result.ranked[0].angles, result.ranked[0].distance};
    const std::size_t seeds = std::min(std::max<std::size_t>(options.refine_top, 1), result.ranked.size());
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto& h = result.ranked[s];
      const RefineOutcome r =
          refine_pose(template_mesh, camera, descriptor, query_features, grid, h.angles, h.distance, options);
      if (r.distance < best.distance) best = r;
    }
    if (best.distance < result.ranked[0].distance) {
      result.ranked.insert(result.ranked.begin(),
                           {grid.size(), view_rotation(best.angles), best.angles, best.distance, true});
    }
  }
  if (options.top_k > 0 && result.ranked.size() > options.top_k) result.ranked.resize(options.top_k);

  result.best = result.ranked[0].rotation;
  result.best_angles = result.ranked[0].angles;
  result.best_distance = result.ranked[0].distance;
  return result;
}

Camera reference_camera(int resolution) {
  return orbit_camera(0.0, 0.0, 0.0, rig::kEvalDistance,
                      Perspective{intrinsics_from_fov(rig::kEvalVerticalFovDeg, resolution, resolution)}, resolution,
                      resolution);
}

EvalManifest load_eval_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, "invalid evaluation manifest: " + std::string(e.what()));
  }
  EvalManifest m;
  m.trials = j.value("trials", 1);
  if (m.trials < 1) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  const auto base = path.parent_path();
  for (const auto& o : j.at("objects")) {
    EvalObject obj;
    obj.id = o.at("id").get<std::string>();
    std::filesystem::path mesh = o.at("mesh").get<std::string>();
    obj.mesh = mesh.is_absolute() ? mesh : base / mesh;
    obj.category = o.value("category", std::string("default"));
    obj.stick_like = o.value("stick_like", false);
    m.objects.push_back(std::move(obj));
  }
  return m;
}

nlohmann::json to_json(const EvalManifest& manifest) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : manifest.objects) {
    objects.push_back({{"id", o.id}, {"mesh", o.mesh.string()}, {"category", o.category}, {"stick_like", o.stick_like}});
  }
  return {{"schema", 1}, {"trials", manifest.trials}, {"objects", objects}};
}

EvalResult evaluate_estimator(const EvalManifest& manifest, const HypothesisGrid& grid, const Descriptor& descriptor,
                              std::uint64_t seed, const EvalOptions& options) {
  if (manifest.objects.empty()) throw Error(ErrorCode::kEmptyInput, "evaluation manifest lists no objects");
  std::vector<EvalObject> objects = manifest.objects;
  std::sort(objects.begin(), objects.end(), [](const EvalObject& a, const EvalObject& b) { return a.id < b.id; });

  const Camera ref = reference_camera(options.resolution);
  EvalResult result;
  for (std::size_t oi = 0; oi < objects.size(); ++oi) {
    const EvalObject& obj = objects[oi];
    const TriMesh mesh = normalize_mesh(load_mesh(obj.mesh));
    for (int t = 0; t < manifest.trials; ++t) {
      const std::uint64_t trial_seed = splitmix64(seed ^ splitmix64((oi << 20) + static_cast<std::uint64_t>(t)));
      const EvaluationPose pose = sample_evaluation_pose(trial_seed);
      const ViewAngles gt_angles{pose.azimuth_deg, pose.polar_deg, pose.roll_deg};
      const Rotation gt = view_rotation(gt_angles);
      const RenderOutput query = render(mesh, evaluation_camera(trial_seed, options.resolution), options.estimate.light);

      const HypothesisGrid trial_grid = options.grid_for_trial ? options.grid_for_trial(gt_angles) : HypothesisGrid{};
      const HypothesisGrid& g = options.grid_for_trial ? trial_grid : grid;
      const EstimateResult est = estimate_orientation(mesh, query.color, ref, g, descriptor, options.estimate);
      Rotation pred = est.best;
      if (options.post_process) pred = options.post_process(pred, obj);
      result.records.push_back({obj.id + "#" + std::to_string(t), obj.category, obj.stick_like, gt, pred});
    }
  }
  result.report = aggregate_metrics(result.records);
  return result;
}

EvalResult evaluate_estimator(const std::filesystem::path& manifest_path, const HypothesisGrid& grid,
                              const Descriptor& descriptor, std::uint64_t seed, const EvalOptions& options) {
  return evaluate_estimator(load_eval_manifest(manifest_path), grid, descriptor, seed, options);
}

}  // namespace orient
