// Command-line front end. Reports go to stdout as JSON; meshes and images go
// to files. Exit status: 0 success, 1 domain error, 2 usage error.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "orient/curation.hpp"
#include "orient/error.hpp"
#include "orient/geometry.hpp"
#include "orient/mesh.hpp"
#include "orient/metrics.hpp"
#include "orient/placement.hpp"
#include "orient/pose.hpp"
#include "orient/render.hpp"
#include "orient/sampling.hpp"
#include "orient/service.hpp"
#include "orient/vlm.hpp"

namespace {

using nlohmann::json;
using namespace orient;

json rotation_json(const Rotation& r) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({r.matrix()(i, 0), r.matrix()(i, 1), r.matrix()(i, 2)});
  return rows;
}

json angles_json(const ViewAngles& a) {
  return {{"azimuth_deg", a.azimuth_deg}, {"polar_deg", a.polar_deg}, {"roll_deg", a.roll_deg}};
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<double> split_numbers(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError("not a number list: " + s);
    }
  }
  return out;
}

struct VlmFlags {
  VlmConfig config;
  std::string wire = "chat-completion-json";
  std::string prompt_file;

  void attach(CLI::App* cmd) {
    cmd->add_option("--endpoint", config.endpoint_url, "VLM endpoint URL")->required();
    cmd->add_option("--model", config.model_name, "Model name")->capture_default_str();
    cmd->add_option("--api-key-env", config.api_key_env, "Environment variable holding the API key")
        ->capture_default_str();
    cmd->add_option("--wire", wire, "chat-completion-json or gemini-style-json")->capture_default_str();
    cmd->add_option("--timeout", config.timeout_s, "Per-request timeout in seconds")->capture_default_str();
    cmd->add_option("--max-retries", config.max_retries, "Retries after the first attempt")->capture_default_str();
    cmd->add_option("--backoff", config.initial_backoff_s, "Initial retry backoff in seconds")->capture_default_str();
    cmd->add_option("--category", config.category, "Category hint for the recognition rules");
    cmd->add_option("--prompt-file", prompt_file, "Prompt template file");
    cmd->add_option("--resolution", config.resolution, "Side of each rendered view")->capture_default_str();
    cmd->add_option("--max-in-flight", config.max_in_flight, "Concurrent VLM requests")->capture_default_str();
  }

  VlmConfig resolve() {
    config.wire_style = wire_style_from_string(wire);
    if (!prompt_file.empty()) config.prompt_template = read_file(prompt_file);
    return config;
  }
};

HypothesisGrid parse_grid(const std::string& spec) {
  const std::vector<double> n = split_numbers(spec);
  if (n.size() != 3) throw CLI::ValidationError("--grid expects n_azimuth,n_polar,n_roll");
  return make_grid(static_cast<int>(n[0]), static_cast<int>(n[1]), static_cast<int>(n[2]));
}

Descriptor parse_descriptor(const std::string& kind, const std::string& features) {
  if (kind == "gray") return Descriptor::downsampled_gray();
  if (kind == "gradient") return Descriptor::gradient_histogram();
  if (kind == "external") {
    if (features.empty()) throw CLI::ValidationError("--descriptor external needs --features");
    return Descriptor::external(features);
  }
  throw CLI::ValidationError("unknown descriptor: " + kind);
}

ChamferVariant parse_variant(const std::string& v) {
  if (v == "squared") return ChamferVariant::kMeanSquared;
  if (v == "euclidean") return ChamferVariant::kMeanEuclidean;
  throw CLI::ValidationError("--variant must be squared or euclidean");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mesh orientation toolkit"};
  app.require_subcommand(1);

  // curate
  auto* curate = app.add_subcommand("curate", "Canonicalize a directory of meshes with a VLM");
  std::string in_dir, out_dir;
  bool resume = false;
  int workers = 4;
  VlmFlags curate_vlm;
  curate->add_option("in", in_dir, "Input directory (<category>/<id>.obj|ply)")->required();
  curate->add_option("out", out_dir, "Output directory")->required();
  curate->add_flag("--resume", resume, "Skip objects already in the manifest");
  curate->add_option("--workers", workers, "Worker threads")->capture_default_str();
  curate_vlm.attach(curate);

  // error-analysis
  auto* analysis = app.add_subcommand("error-analysis", "Compare curated meshes against references");
  std::string cand_dir, ref_dir, skip_file, annotate_path;
  ErrorAnalysisOptions ea;
  std::string ea_variant = "squared";
  analysis->add_option("candidate", cand_dir, "Candidate directory")->required();
  analysis->add_option("reference", ref_dir, "Reference directory")->required();
  analysis->add_option("--gamma", ea.gamma, "CD threshold")->capture_default_str();
  analysis->add_option("--samples", ea.samples, "Surface samples per mesh")->capture_default_str();
  analysis->add_option("--seed", ea.seed, "Sampling seed")->capture_default_str();
  analysis->add_option("--skip", skip_file, "Newline-delimited ids to exclude");
  analysis->add_option("--variant", ea_variant, "squared or euclidean")->capture_default_str();
  analysis->add_option("--manifest", annotate_path, "Curation manifest to annotate in place");

  // chamfer
  auto* chamfer = app.add_subcommand("chamfer", "Chamfer distance between two meshes");
  std::string mesh_a, mesh_b, cd_variant = "squared";
  MisalignmentOptions mo;
  bool no_normalize = false;
  chamfer->add_option("a", mesh_a, "First mesh")->required();
  chamfer->add_option("b", mesh_b, "Second mesh")->required();
  chamfer->add_option("--samples", mo.samples, "Surface samples per mesh")->capture_default_str();
  chamfer->add_option("--seed", mo.seed, "Sampling seed")->capture_default_str();
  chamfer->add_option("--gamma", mo.gamma, "Misalignment threshold")->capture_default_str();
  chamfer->add_option("--variant", cd_variant, "squared or euclidean")->capture_default_str();
  chamfer->add_flag("--no-normalize", no_normalize, "Compare meshes as stored");

  // pca-align
  auto* pca = app.add_subcommand("pca-align", "Principal-axis alignment baseline");
  std::string pca_mesh, pca_out;
  std::size_t pca_samples = 10000;
  std::uint64_t pca_seed = 0;
  pca->add_option("mesh", pca_mesh, "Input mesh")->required();
  pca->add_option("--out", pca_out, "Write the aligned mesh here");
  pca->add_option("--samples", pca_samples, "Surface samples")->capture_default_str();
  pca->add_option("--seed", pca_seed, "Sampling seed")->capture_default_str();

  // canonicalize
  auto* canon = app.add_subcommand("canonicalize", "Canonicalize one mesh with a VLM");
  std::string canon_mesh, canon_out;
  VlmFlags canon_vlm;
  canon->add_option("mesh", canon_mesh, "Input mesh")->required();
  canon->add_option("--out", canon_out, "Write the canonicalized mesh here");
  canon_vlm.attach(canon);

  // render-views
  auto* views = app.add_subcommand("render-views", "Render the four- or six-view rig");
  std::string views_mesh, views_set = "four", views_out = ".";
  int views_res = 512;
  views->add_option("mesh", views_mesh, "Input mesh")->required();
  views->add_option("--set", views_set, "four or six")->check(CLI::IsMember({"four", "six"}))->capture_default_str();
  views->add_option("--out", views_out, "Output directory")->capture_default_str();
  views->add_option("--resolution", views_res, "Image side in pixels")->capture_default_str();

  // estimate
  auto* estimate = app.add_subcommand("estimate", "Estimate the orientation of a query image");
  std::string est_template, est_query, est_grid = "36,4,3", est_desc = "gray", est_features;
  bool est_refine = false;
  std::size_t est_top = 5;
  estimate->add_option("template", est_template, "Template mesh")->required();
  estimate->add_option("query", est_query, "Query PNG rendered from the reference camera")->required();
  estimate->add_option("--grid", est_grid, "n_azimuth,n_polar,n_roll")->capture_default_str();
  estimate->add_option("--descriptor", est_desc, "gray, gradient or external")->capture_default_str();
  estimate->add_option("--features", est_features, "Feature directory for the external descriptor");
  estimate->add_flag("--refine", est_refine, "Local descent around the best grid pose");
  estimate->add_option("--top-k", est_top, "Ranked hypotheses to report")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Run the estimator over an evaluation manifest");
  std::string eval_manifest, eval_grid = "36,4,3", eval_desc = "gray";
  std::uint64_t eval_seed = 0;
  bool eval_no_refine = false;
  int eval_res = rig::kEvalResolution;
  eval->add_option("manifest", eval_manifest, "Evaluation manifest JSON")->required();
  eval->add_option("--grid", eval_grid, "n_azimuth,n_polar,n_roll")->capture_default_str();
  eval->add_option("--descriptor", eval_desc, "gray or gradient")->capture_default_str();
  eval->add_option("--seed", eval_seed, "Trial seed")->capture_default_str();
  eval->add_flag("--no-refine", eval_no_refine, "Grid search only");
  eval->add_option("--resolution", eval_res, "Render resolution")->capture_default_str();

  // place
  auto* place = app.add_subcommand("place", "Plan an object placement from an arrow");
  std::string scene_dir, arrow_spec, region_kind = "whole", preview_mesh, preview_out;
  double scale = 0.0, radius = 40.0;
  bool ransac = false;
  place->add_option("scene", scene_dir, "Scene bundle directory")->required();
  place->add_option("--arrow", arrow_spec, "x1,y1,x2,y2 in pixels")->required();
  place->add_option("--scale", scale, "Object size in meters")->required();
  place->add_option("--region", region_kind, "whole or window")
      ->check(CLI::IsMember({"whole", "window"}))
      ->capture_default_str();
  place->add_option("--radius", radius, "Window radius in pixels")->capture_default_str();
  place->add_flag("--ransac", ransac, "Robust plane fit");
  place->add_option("--preview-mesh", preview_mesh, "Mesh to composite into the scene");
  place->add_option("--preview-out", preview_out, "Preview PNG path");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP service for placement planning and previews");
  ServiceConfig sc;
  serve_cmd->add_option("--scenes", sc.scenes_dir, "Scenes directory")->required();
  serve_cmd->add_option("--meshes", sc.meshes_dir, "Meshes directory")->required();
  serve_cmd->add_option("--host", sc.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", sc.port, "Port (0 = ephemeral)")->capture_default_str();
  serve_cmd->add_option("--max-image-bytes", sc.max_image_bytes, "Largest scene image served")->capture_default_str();
  serve_cmd->add_option("--render-slots", sc.render_slots, "Concurrent previews (0 = cores)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*curate) {
      CurationOptions opts;
      opts.resume = resume;
      opts.workers = workers;
      const VlmClient client(curate_vlm.resolve());
      emit(to_json(curate_directory(in_dir, out_dir, client, opts)));
    } else if (*analysis) {
      ea.variant = parse_variant(ea_variant);
      if (!skip_file.empty()) ea.skip = read_skip_list(skip_file);
      const ErrorAnalysisReport report = vlm_error_analysis(cand_dir, ref_dir, ea);
      if (!annotate_path.empty()) {
        CurationManifest m = load_curation_manifest(annotate_path);
        annotate_manifest(m, report);
        save_curation_manifest(annotate_path, m);
      }
      emit(to_json(report));
    } else if (*chamfer) {
      mo.variant = parse_variant(cd_variant);
      TriMesh a = load_mesh(mesh_a);
      TriMesh b = load_mesh(mesh_b);
      if (!no_normalize) {
        a = normalize_mesh(a);
        b = normalize_mesh(b);
      }
      const MisalignmentResult r = flag_misalignment(a, b, mo);
      emit({{"cd", r.cd}, {"flag", r.flagged}, {"gamma", mo.gamma}, {"samples", mo.samples}, {"variant", cd_variant}});
    } else if (*pca) {
      const TriMesh mesh = load_mesh(pca_mesh);
      const PointCloud pts = sample_surface(mesh, pca_samples, pca_seed);
      const Rotation r = pca_align(pts);
      if (!pca_out.empty()) {
        Vec3 mean = Vec3::Zero();
        for (const Vec3& p : pts) mean += p;
        mean /= static_cast<double>(pts.size());
        TriMesh out = mesh;
        for (Vec3& v : out.vertices) v = r * (v - mean);
        save_mesh(pca_out, out);
      }
      emit({{"rotation", rotation_json(r)}, {"samples", pca_samples}});
    } else if (*canon) {
      const VlmClient client(canon_vlm.resolve());
      const auto [mesh, verdict] = client.canonicalize(normalize_mesh(load_mesh(canon_mesh)));
      const bool excluded = verdict.label == ViewLabel::kNoFrontView;
      if (!canon_out.empty() && !excluded) save_mesh(canon_out, mesh);
      emit({{"label", to_string(verdict.label)},
            {"image_index", verdict.image_index},
            {"applied_yaw_deg", excluded ? json(nullptr) : json(verdict.correction_yaw_deg())},
            {"excluded", excluded},
            {"attempts", verdict.attempts},
            {"raw_response", verdict.raw_response}});
    } else if (*views) {
      const TriMesh mesh = normalize_mesh(load_mesh(views_mesh));
      const bool four = views_set == "four";
      const std::vector<Camera> cams = four ? orthogonal_four_views(views_res) : six_canonical_views(views_res);
      static const char* kFourNames[4] = {"front", "back", "left", "right"};
      std::filesystem::create_directories(views_out);
      json files = json::array();
      for (std::size_t i = 0; i < cams.size(); ++i) {
        const std::string name =
            four ? kFourNames[i] : "az_" + std::to_string(static_cast<int>(kSixViewAzimuths[i]));
        const std::filesystem::path path = std::filesystem::path(views_out) / (name + ".png");
        write_file(path, encode_png(render(mesh, cams[i]).color));
        files.push_back({{"view", name}, {"path", path.string()}});
      }
      emit({{"set", views_set}, {"resolution", views_res}, {"views", files}});
    } else if (*estimate) {
      const TriMesh mesh = normalize_mesh(load_mesh(est_template));
      const Image query = decode_png(read_file(est_query));
      if (query.width != query.height) throw Error(ErrorCode::kInvalidArgument, "query image must be square");
      EstimateOptions eo;
      eo.refine = est_refine;
      eo.top_k = est_top;
      const EstimateResult r = estimate_orientation(mesh, query, reference_camera(query.width), parse_grid(est_grid),
                                                    parse_descriptor(est_desc, est_features), eo);
      json ranked = json::array();
      for (const RankedHypothesis& h : r.ranked) {
        ranked.push_back({{"index", h.index},
                          {"angles", angles_json(h.angles)},
                          {"distance", h.distance},
                          {"refined", h.refined}});
      }
      emit({{"rotation", rotation_json(r.best)},
            {"angles", angles_json(r.best_angles)},
            {"distance", r.best_distance},
            {"ranked", ranked}});
    } else if (*eval) {
      EvalOptions opts;
      opts.resolution = eval_res;
      opts.estimate.refine = !eval_no_refine;
      const EvalResult r =
          evaluate_estimator(std::filesystem::path(eval_manifest), parse_grid(eval_grid),
                             parse_descriptor(eval_desc, {}), eval_seed, opts);
      emit(to_json(r.report));
    } else if (*place) {
      const std::vector<double> a = split_numbers(arrow_spec);
      if (a.size() != 4) throw CLI::ValidationError("--arrow expects x1,y1,x2,y2");
      const SceneBundle scene = load_scene_bundle(scene_dir);
      const PlaneRegion region = region_kind == "window" ? PlaneRegion::window(radius) : PlaneRegion::whole_image();
      PlaneRegion r = region;
      r.ransac = ransac;
      const Placement p = plan_placement(scene, {Vec2(a[0], a[1]), Vec2(a[2], a[3])}, scale, r);
      if (!preview_mesh.empty()) {
        if (preview_out.empty()) throw CLI::ValidationError("--preview-mesh needs --preview-out");
        const PreviewImage preview = render_placement_preview(scene, normalize_mesh(load_mesh(preview_mesh)), p);
        write_file(preview_out, encode_png(preview.image));
      }
      emit(to_json(p));
    } else if (*serve_cmd) {
      serve(sc, [&](int port) { std::cerr << "listening on " << sc.host << ":" << port << std::endl; });
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    emit({{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}});
    return 1;
  } catch (const std::exception& e) {
    emit({{"error", {{"code", to_string(ErrorCode::kIo)}, {"message", e.what()}}}});
    return 1;
  }
  return 0;
}
