#include "orient/service.hpp"

#include <algorithm>
#include <condition_variable>
#include <iostream>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "orient/error.hpp"

namespace orient {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

ServiceResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

ServiceResponse error_response(int status, std::string_view code, std::string_view message) {
  return json_response(status, {{"error", {{"code", code}, {"message", message}}}});
}

ServiceResponse error_response(const Error& e) {
  const int status = e.code() == ErrorCode::kNotFound ? 404 : 400;
  return error_response(status, to_string(e.code()), e.what());
}

json parse_body(std::string_view body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kParse, "request body is not valid JSON");
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "request body must be a JSON object");
  return j;
}

PlaneRegion region_from_json(const json& j) {
  PlaneRegion r;
  if (j.is_null()) return r;
  if (j.is_string()) {
    if (j.get<std::string>() == "whole") return r;
    throw Error(ErrorCode::kInvalidArgument, "region must be \"whole\" or an object");
  }
  const std::string kind = j.value("kind", std::string("whole"));
  if (kind == "window") {
    r = PlaneRegion::window(j.at("radius_px").get<double>());
  } else if (kind != "whole") {
    throw Error(ErrorCode::kInvalidArgument, "unknown region kind: " + kind);
  }
  if (j.contains("stride")) r.stride = j["stride"].get<int>();
  if (j.contains("ransac")) r.ransac = j["ransac"].get<bool>();
  if (r.stride < 0) throw Error(ErrorCode::kInvalidArgument, "stride must be >= 0");
  return r;
}

}  // namespace

void ServiceConfig::validate() const {
  std::error_code ec;
  if (!fs::is_directory(scenes_dir, ec)) throw Error(ErrorCode::kNotFound, "scenes_dir is not a directory: " + scenes_dir.string());
  if (!fs::is_directory(meshes_dir, ec)) throw Error(ErrorCode::kNotFound, "meshes_dir is not a directory: " + meshes_dir.string());
  if (max_image_bytes == 0) throw Error(ErrorCode::kInvalidArgument, "max_image_bytes must be positive");
  if (port < 0 || port > 65535) throw Error(ErrorCode::kInvalidArgument, "port out of range");
}

struct PlacementService::State {
  struct Scene {
    SceneBundle bundle;
    std::string png;
  };
  std::map<std::string, Scene> scenes;
  std::map<std::string, TriMesh> meshes;

  unsigned render_slots = 1;
  mutable std::mutex mu;
  mutable std::condition_variable cv;
  mutable unsigned rendering = 0;

  const Scene& scene(const std::string& id) const {
    const auto it = scenes.find(id);
    if (it == scenes.end()) throw Error(ErrorCode::kNotFound, "unknown scene: " + id);
    return it->second;
  }
  const TriMesh& mesh(const std::string& id) const {
    const auto it = meshes.find(id);
    if (it == meshes.end()) throw Error(ErrorCode::kNotFound, "unknown mesh: " + id);
    return it->second;
  }

  ServiceResponse plan(std::string_view body) const;
  ServiceResponse preview(std::string_view body) const;
};

PlacementService::PlacementService(const ServiceConfig& config) : state_(std::make_unique<State>()) {
  config.validate();
  state_->render_slots = config.render_slots ? config.render_slots : std::max(1u, std::thread::hardware_concurrency());

  for (const auto& de : fs::directory_iterator(config.scenes_dir)) {
    if (!de.is_directory() || !fs::exists(de.path() / "image.png")) continue;
    const std::string id = de.path().filename().string();
    try {
      if (fs::file_size(de.path() / "image.png") > config.max_image_bytes) {
        std::cerr << "skipping scene " << id << ": image exceeds max_image_bytes\n";
        continue;
      }
      State::Scene s;
      s.bundle = load_scene_bundle(de.path());
      s.png = read_file(de.path() / "image.png");
      state_->scenes.emplace(id, std::move(s));
    } catch (const std::exception& e) {
      std::cerr << "skipping scene " << id << ": " << e.what() << "\n";
    }
  }
  for (const auto& de : fs::recursive_directory_iterator(config.meshes_dir)) {
    if (!de.is_regular_file() || !is_mesh_file(de.path())) continue;
    fs::path rel = fs::relative(de.path(), config.meshes_dir);
    const std::string id = rel.replace_extension().generic_string();
    try {
      state_->meshes.emplace(id, normalize_mesh(load_mesh(de.path())));
    } catch (const std::exception& e) {
      std::cerr << "skipping mesh " << id << ": " << e.what() << "\n";
    }
  }
}

PlacementService::~PlacementService() = default;

std::vector<std::string> PlacementService::scene_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, s] : state_->scenes) ids.push_back(id);
  return ids;
}

std::vector<std::string> PlacementService::mesh_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, m] : state_->meshes) ids.push_back(id);
  return ids;
}

ServiceResponse PlacementService::State::plan(std::string_view body) const {
  const json j = parse_body(body);
  const Scene& s = scene(j.at("scene_id").get<std::string>());
  const json& a = j.at("arrow");
  const Arrow2D arrow{Vec2(a.at("x1").get<double>(), a.at("y1").get<double>()),
                      Vec2(a.at("x2").get<double>(), a.at("y2").get<double>())};
  const double scale = j.at("scale").get<double>();
  const PlaneRegion region = region_from_json(j.contains("region") ? j["region"] : json(nullptr));
  return json_response(200, to_json(plan_placement(s.bundle, arrow, scale, region)));
}

ServiceResponse PlacementService::State::preview(std::string_view body) const {
  const json j = parse_body(body);
  const Scene& s = scene(j.at("scene_id").get<std::string>());
  const TriMesh& m = mesh(j.at("mesh_id").get<std::string>());
  const Placement placement = placement_from_json(j.at("placement"));

  std::unique_lock lock(mu);
  cv.wait(lock, [&] { return rendering < render_slots; });
  ++rendering;
  lock.unlock();
  struct Release {
    const State& st;
    ~Release() {
      {
        std::lock_guard l(st.mu);
        --st.rendering;
      }
      st.cv.notify_one();
    }
  } release{*this};

  const PreviewImage preview = render_placement_preview(s.bundle, m, placement);
  return {200, "image/png", encode_png(preview.image)};
}

ServiceResponse PlacementService::handle(std::string_view method, std::string_view path, std::string_view body) const {
  path = path.substr(0, path.find('?'));
  try {
    if (method == "OPTIONS") return {204, "text/plain", ""};
    const bool get = method == "GET";
    const bool post = method == "POST";

    if (path == "/scenes") {
      if (!get) return error_response(405, "method_not_allowed", "use GET");
      return json_response(200, scene_ids());
    }
    if (path == "/meshes") {
      if (!get) return error_response(405, "method_not_allowed", "use GET");
      return json_response(200, mesh_ids());
    }
    if (path == "/plan-placement") {
      if (!post) return error_response(405, "method_not_allowed", "use POST");
      return state_->plan(body);
    }
    if (path == "/preview") {
      if (!post) return error_response(405, "method_not_allowed", "use POST");
      return state_->preview(body);
    }
    constexpr std::string_view kScenes = "/scenes/";
    if (path.substr(0, kScenes.size()) == kScenes) {
      if (!get) return error_response(405, "method_not_allowed", "use GET");
      std::string_view rest = path.substr(kScenes.size());
      constexpr std::string_view kImage = "/image.png";
      if (rest.size() > kImage.size() && rest.substr(rest.size() - kImage.size()) == kImage) {
        const State::Scene& s = state_->scene(std::string(rest.substr(0, rest.size() - kImage.size())));
        return {200, "image/png", s.png};
      }
      if (rest.find('/') == std::string_view::npos) {
        const State::Scene& s = state_->scene(std::string(rest));
        return json_response(200, {{"id", rest},
                                   {"width", s.bundle.image.width},
                                   {"height", s.bundle.image.height},
                                   {"intrinsics", to_json(s.bundle.intrinsics)}});
      }
    }
    return error_response(404, "not_found", "no such endpoint: " + std::string(path));
  } catch (const Error& e) {
    return error_response(e);
  } catch (const json::exception& e) {
    return error_response(400, to_string(ErrorCode::kInvalidArgument), e.what());
  }
}

struct HttpServer::Impl {
  PlacementService service;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Impl(const ServiceConfig& config) : service(config) {
    // Catch-all routes rather than a pre-routing handler: httplib reads the
    // request body only after pre-routing.
    const auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      const ServiceResponse r = service.handle(req.method, req.path, req.body);
      res.status = r.status;
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_content(r.body, r.content_type);
    };
    const std::string any = ".*";
    server.Get(any, handler).Post(any, handler).Put(any, handler).Patch(any, handler).Delete(any, handler);
    server.Options(any, handler);
    // httplib's default adds SO_REUSEPORT, which would let a second server
    // share the port silently.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    if (config.port == 0) {
      port = server.bind_to_any_port(config.host);
    } else if (server.bind_to_port(config.host, config.port)) {
      port = config.port;
    } else {
      port = -1;
    }
    if (port <= 0) {
      throw Error(ErrorCode::kIo, "cannot bind " + config.host + ":" + std::to_string(config.port));
    }
  }
};

HttpServer::HttpServer(const ServiceConfig& config) : impl_(std::make_unique<Impl>(config)) {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::port() const { return impl_->port; }

void HttpServer::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  impl_->server.stop();
  impl_->thread.join();
}

void HttpServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void serve(const ServiceConfig& config, const std::function<void(int)>& on_ready) {
  HttpServer server(config);
  if (on_ready) on_ready(server.port());
  server.wait();
}

}  // namespace orient
