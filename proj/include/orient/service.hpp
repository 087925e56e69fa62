#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "orient/mesh.hpp"
#include "orient/placement.hpp"

namespace orient {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds an ephemeral port
  std::filesystem::path scenes_dir;
  std::filesystem::path meshes_dir;
  std::size_t max_image_bytes = 64u << 20;
  unsigned render_slots = 0;  // concurrent previews; 0 = logical cores

  void validate() const;
};

struct ServiceResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Request handling, independent of the HTTP server so it can be tested
/// in-process. Scenes and meshes are loaded once at construction and never
/// written back.
class PlacementService {
 public:
  explicit PlacementService(const ServiceConfig& config);
  ~PlacementService();

  ServiceResponse handle(std::string_view method, std::string_view path, std::string_view body) const;

  std::vector<std::string> scene_ids() const;
  std::vector<std::string> mesh_ids() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// Owns a listening HTTP server running on a background thread.
class HttpServer {
 public:
  /// Binds and starts listening; throws Error(kIo) if the address is taken.
  explicit HttpServer(const ServiceConfig& config);
  ~HttpServer();

  int port() const;
  /// Blocks until another thread calls stop().
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks until the server stops. `on_ready` receives the bound port.
void serve(const ServiceConfig& config, const std::function<void(int)>& on_ready = {});

}  // namespace orient
