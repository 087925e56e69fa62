#pragma once

#include <array>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "orient/geometry.hpp"
#include "orient/image.hpp"
#include "orient/mesh.hpp"

namespace orient {

enum class WireStyle { kChatCompletion, kGemini };

std::string_view to_string(WireStyle style);
WireStyle wire_style_from_string(std::string_view s);

/// Placeholders understood by build_prompt: {category}, {rules},
/// {answer_format}. "{{" and "}}" are literal braces.
std::string default_prompt_template();

struct VlmConfig {
  std::string endpoint_url;  // "{model}" in the URL is replaced by model_name
  std::string model_name = "gemini-2.0-flash";
  std::string api_key_env = "ORIENT_VLM_API_KEY";  // empty: endpoint needs no key
  WireStyle wire_style = WireStyle::kChatCompletion;
  double timeout_s = 60.0;
  int max_retries = 2;
  double initial_backoff_s = 1.0;  // doubles after every failed attempt
  std::string prompt_template = default_prompt_template();
  std::string category;  // optional hint; selects the recognition rules
  int resolution = 512;  // side of each rendered view
  int max_in_flight = 4;

  void validate() const;
};

/// Instantiates the template. `category` overrides config.category when
/// non-empty. Unknown or unterminated placeholders throw Error(kTemplate).
std::string build_prompt(const VlmConfig& config, std::string_view category = {});

struct VlmVerdict {
  ViewLabel label = ViewLabel::kNoFrontView;
  int image_index = 0;  // 1..4, 0 for NONE
  std::string raw_response;
  int attempts = 0;

  /// Yaw in degrees that brings the recognized front to azimuth 0, in
  /// (-180, 180]. Undefined for NONE.
  double correction_yaw_deg() const;
};

/// Reply grammar: after trimming whitespace and markdown fences the reply
/// must start with one of 1, 2, 3, 4, NONE followed by a word boundary.
/// Failing that, a reply that mentions exactly one distinct such token as a
/// standalone word is accepted. Returns nothing when neither applies.
std::optional<int> parse_reply(std::string_view reply);

/// Index (1..4) to label for images in azimuth order [0, 90, 180, 270].
ViewLabel label_for_index(int index);

struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  double timeout_s = 60.0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Posts a request. Connection-level failures throw Error(kTransport);
/// HTTP error statuses are returned, not thrown.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

std::shared_ptr<HttpTransport> make_http_transport();

/// Thread-safe; at most config.max_in_flight requests run at once.
class VlmClient {
 public:
  explicit VlmClient(VlmConfig config, std::shared_ptr<HttpTransport> transport = make_http_transport());

  const VlmConfig& config() const { return config_; }

  /// Images in azimuth order [0, 90, 180, 270]. `category` selects the
  /// recognition rules (config.category when empty).
  VlmVerdict recognize_front_view(const std::array<Image, 4>& views, std::string_view category = {}) const;

  /// Renders the four orthographic views, asks for the front and yaws the
  /// mesh so the recognized front faces +X. NONE leaves the mesh untouched.
  std::pair<TriMesh, VlmVerdict> canonicalize(const TriMesh& mesh, std::string_view category = {}) const;

  /// Throws Error(kMissingApiKey) when the configured variable is unset.
  std::string api_key() const;

 private:
  std::string request_body(const std::array<Image, 4>& views, std::string_view category) const;
  std::optional<std::string> reply_text(const std::string& body) const;

  VlmConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  mutable int in_flight_ = 0;
};

/// The four views sent to the model, in azimuth order [0, 90, 180, 270].
std::array<Image, 4> render_vlm_views(const TriMesh& mesh, int resolution);

VlmVerdict recognize_front_view(const std::array<Image, 4>& views, const VlmConfig& config);
std::pair<TriMesh, VlmVerdict> canonicalize_with_vlm(const TriMesh& mesh, const VlmConfig& config);

/// Replaces every occurrence of `secret` in `text`.
std::string redact(std::string text, std::string_view secret);

}  // namespace orient
