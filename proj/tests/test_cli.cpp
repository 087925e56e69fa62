// Drives the installed command-line tool as a subprocess.

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "orient/curation.hpp"
#include "orient/placement.hpp"
#include "orient/pose.hpp"
#include "support/corpus.hpp"
#include "support/fixtures.hpp"
#include "support/mock_vlm.hpp"
#include "support/scenes.hpp"

using namespace orient;
using nlohmann::json;
using orient::testing::fresh_dir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
  json parsed() const { return json::parse(out); }
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

Run run(const std::string& args) {
  const std::string cmd = quote(ORIENT_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string p(const fs::path& path) { return quote(path.string()); }

// The documented top-level keys of each report.
void check_keys(const json& j, std::initializer_list<const char*> keys) {
  REQUIRE(j.is_object());
  for (const char* k : keys) CHECK_MESSAGE(j.contains(k), "missing key: " << k);
}

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
  CHECK(run("").status == 2);
  CHECK(run("bogus").status == 2);
  CHECK(run("chamfer only-one.obj").status == 2);
  CHECK(run("place /tmp --scale 1").status == 2);  // --arrow missing
  CHECK(run("place /tmp --arrow 1,2,3 --scale 1").status == 2);
  CHECK(run("render-views x.obj --set seven").status == 2);
}

TEST_CASE("cli: chamfer, pca-align and render-views") {
  const fs::path dir = fresh_dir("orient_cli_geom");
  save_mesh(dir / "cube.obj", orient::testing::unit_cube());
  const TriMesh chair = orient::testing::asymmetric_meshes()[0].mesh;
  save_mesh(dir / "chair.obj", chair);
  save_mesh(dir / "chair_turned.obj", rotated(chair, yaw_rotation_deg(90.0)));

  const Run same = run("chamfer " + p(dir / "cube.obj") + " " + p(dir / "cube.obj") + " --samples 2000");
  REQUIRE(same.status == 0);
  check_keys(same.parsed(), {"cd", "flag", "gamma", "samples", "variant"});
  CHECK(same.parsed()["flag"] == false);
  CHECK(same.parsed()["cd"].get<double>() < 1e-2);

  const Run turned = run("chamfer " + p(dir / "chair.obj") + " " + p(dir / "chair_turned.obj") + " --samples 4000");
  REQUIRE(turned.status == 0);
  CHECK(turned.parsed()["flag"] == true);

  const Run pca = run("pca-align " + p(dir / "chair.obj") + " --samples 3000 --out " + p(dir / "aligned.ply"));
  REQUIRE(pca.status == 0);
  check_keys(pca.parsed(), {"rotation", "samples"});
  CHECK(pca.parsed()["rotation"].size() == 3);
  CHECK(load_mesh(dir / "aligned.ply").faces.size() == chair.faces.size());

  const Run views = run("render-views " + p(dir / "chair.obj") + " --resolution 64 --out " + p(dir / "views"));
  REQUIRE(views.status == 0);
  check_keys(views.parsed(), {"set", "resolution", "views"});
  CHECK(views.parsed()["views"].size() == 4);
  for (const char* name : {"front", "back", "left", "right"}) {
    const Image img = decode_png(read_file(dir / "views" / (std::string(name) + ".png")));
    CHECK(img.width == 64);
  }
  const Run six = run("render-views " + p(dir / "chair.obj") + " --set six --resolution 64 --out " + p(dir / "six"));
  REQUIRE(six.status == 0);
  CHECK(six.parsed()["views"].size() == 6);

  const Run missing = run("chamfer " + p(dir / "nope.obj") + " " + p(dir / "cube.obj"));
  CHECK(missing.status == 1);
  CHECK(missing.parsed()["error"].contains("code"));
  fs::remove_all(dir);
}

TEST_CASE("cli: place prints the library placement and writes a preview") {
  const fs::path dir = fresh_dir("orient_cli_place");
  std::mt19937_64 rng(4);
  const auto scene = orient::testing::random_scene(rng, 96, 72);
  save_scene_bundle(dir / "scene", scene.bundle);
  save_mesh(dir / "chair.obj", orient::testing::asymmetric_meshes()[0].mesh);

  const Run r = run("place " + p(dir / "scene") + " --arrow 30,60,60,55 --scale 0.4 --preview-mesh " +
                    p(dir / "chair.obj") + " --preview-out " + p(dir / "preview.png"));
  REQUIRE(r.status == 0);
  check_keys(r.parsed(), {"position", "rotation", "forward_3d", "plane", "scale"});
  const Placement got = placement_from_json(r.parsed());
  const Placement want = plan_placement(load_scene_bundle(dir / "scene"), {Vec2(30, 60), Vec2(60, 55)}, 0.4);
  CHECK((got.position - want.position).norm() < 1e-9);
  CHECK((got.forward_3d - want.forward_3d).norm() < 1e-9);
  CHECK(decode_png(read_file(dir / "preview.png")).width == 96);

  const Run degenerate = run("place " + p(dir / "scene") + " --arrow 10,10,10,10 --scale 1");
  CHECK(degenerate.status == 1);
  CHECK(degenerate.parsed()["error"]["code"] == "degenerate_arrow");
  fs::remove_all(dir);
}

TEST_CASE("cli: estimate and eval") {
  const fs::path dir = fresh_dir("orient_cli_pose");
  const TriMesh mesh = normalize_mesh(orient::testing::asymmetric_meshes()[1].mesh);
  save_mesh(dir / "car.ply", mesh);
  const HypothesisGrid grid = make_grid(8, 2, 1);
  const RenderOutput q = render(rotated(normalize_mesh(load_mesh(dir / "car.ply")), grid.rotations[5]),
                                reference_camera(48));
  write_file(dir / "query.png", encode_png(q.color));

  const Run est = run("estimate " + p(dir / "car.ply") + " " + p(dir / "query.png") + " --grid 8,2,1 --top-k 3");
  REQUIRE(est.status == 0);
  const json j = est.parsed();
  check_keys(j, {"rotation", "angles", "distance", "ranked"});
  CHECK(j["ranked"].size() == 3);
  CHECK(j["ranked"][0]["index"] == 5);
  CHECK(j["distance"].get<double>() == doctest::Approx(0.0));

  { std::ofstream(dir / "eval.json") << R"({"trials": 2, "objects": [{"id": "car", "mesh": "car.ply"}]})"; }
  const Run ev = run("eval " + p(dir / "eval.json") + " --grid 8,2,1 --no-refine --resolution 48");
  REQUIRE(ev.status == 0);
  check_keys(ev.parsed(), {"schema", "threshold_deg", "overall", "per_category"});
  CHECK(ev.parsed()["per_category"].contains("default"));
  fs::remove_all(dir);
}

TEST_CASE("cli: curate against a loopback model, then error-analysis") {
  orient::testing::MockVlmServer server;
  const fs::path in = fresh_dir("orient_cli_curate_in");
  const fs::path out = fresh_dir("orient_cli_curate_out");
  auto meshes = orient::testing::asymmetric_meshes();
  meshes.resize(2);  // chair, car
  const auto files = orient::testing::write_corpus(in, meshes);
  server.script(orient::testing::view_key(files[0], 64), {"1"});
  server.script(orient::testing::view_key(files[1], 64), {"2"});
  server.fallback({"HTTP 400"});

  const std::string vlm = " --endpoint " + quote(server.chat_url()) + " --api-key-env '' --backoff 0 --resolution 64";
  const Run r = run("curate " + p(in) + " " + p(out) + vlm + " --workers 2");
  REQUIRE(r.status == 0);
  check_keys(r.parsed(), {"schema", "objects", "review_queue"});
  const CurationManifest m = manifest_from_json(r.parsed());
  REQUIRE(m.objects.size() == 2);
  CHECK(m.find("vehicle/car")->applied_yaw_deg == -90.0);
  CHECK(server.requests() == 2);
  CHECK(fs::exists(out / kManifestName));

  // Against the untouched input the car is a quarter turn off.
  const Run ea = run("error-analysis " + p(out) + " " + p(in) + " --samples 3000 --manifest " + p(out / kManifestName));
  REQUIRE(ea.status == 0);
  check_keys(ea.parsed(), {"schema", "gamma", "overall", "per_category", "flagged", "skipped", "cd"});
  CHECK(ea.parsed()["flagged"] == json{"vehicle/car"});
  const CurationManifest annotated = load_curation_manifest(out / kManifestName);
  CHECK(std::find(annotated.review_queue.begin(), annotated.review_queue.end(), "vehicle/car") !=
        annotated.review_queue.end());

  const Run unknown_wire = run("curate " + p(in) + " " + p(out) + vlm + " --wire carrier-pigeon");
  CHECK(unknown_wire.status == 1);
  fs::remove_all(in);
  fs::remove_all(out);
}

TEST_CASE("cli: eval on the closed-loop fixture matches the library run") {
  // Same fixture and settings as the estimator acceptance criterion.
  const fs::path dir = fresh_dir("orient_cli_eval_fixture");
  EvalManifest manifest;
  manifest.trials = 10;
  json objects = json::array();
  for (const auto& m : orient::testing::asymmetric_meshes()) {
    save_mesh(dir / (m.id + ".ply"), m.mesh);
    manifest.objects.push_back({m.id, dir / (m.id + ".ply"), m.category, false});
    objects.push_back({{"id", m.id}, {"mesh", m.id + ".ply"}, {"category", m.category}});
  }
  { std::ofstream(dir / "eval.json") << json{{"trials", 10}, {"objects", objects}}.dump(); }

  EvalOptions opts;
  opts.estimate.refine = true;
  const EvalResult lib = evaluate_estimator(manifest, make_grid(36, 4, 3), Descriptor::downsampled_gray(), 5005, opts);
  const Run cli = run("eval " + p(dir / "eval.json") + " --grid 36,4,3 --seed 5005");
  REQUIRE(cli.status == 0);
  CHECK(cli.parsed() == to_json(lib.report));
  fs::remove_all(dir);
}
