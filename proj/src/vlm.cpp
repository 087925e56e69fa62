#include "orient/vlm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "orient/error.hpp"
#include "orient/render.hpp"

namespace orient {
namespace {

using nlohmann::json;

struct RuleSet {
  std::string_view name;
  std::vector<std::string_view> categories;
  std::string_view text;
};

// Conventions for which side counts as the front. Every rule is written for
// the model, so it is phrased in terms of what is visible in an image.
const std::vector<RuleSet>& rule_sets() {
  static const std::vector<RuleSet> rules = {
      {"stick-like",
       {"fork", "knife", "spoon", "pen", "pencil", "sword", "brush", "toothbrush", "screwdriver", "chopsticks",
        "bat", "baseball_bat", "stick", "wand", "umbrella", "spatula", "ladle", "hammer", "axe", "broom", "key",
        "flashlight", "candle", "arrow", "spear", "paintbrush"},
       "Stick-like objects (forks, knives, pens, tools): the front is the view looking at the working end, "
       "the tines, blade or tip, pointing toward the camera; the handle points away."},
      {"vehicles",
       {"car", "truck", "bus", "train", "airplane", "plane", "boat", "ship", "bicycle", "motorcycle", "tractor",
        "tank", "van", "scooter", "helicopter", "jeep", "race_car", "car_(automobile)"},
       "Vehicles: the front is the side that leads when the vehicle moves forward, with headlights, "
       "windshield, nose or bow facing the camera."},
      {"animals",
       {"dog", "cat", "horse", "bird", "cow", "sheep", "pig", "bear", "elephant", "giraffe", "zebra", "lion",
        "tiger", "rabbit", "fish", "duck", "chicken", "mouse", "deer", "frog", "dinosaur", "penguin", "monkey",
        "teddy_bear", "animal"},
       "Animals and figures: the front is the view of the face, with the head looking toward the camera."},
      {"ambiguous-handle",
       {"mug", "cup", "kettle", "teapot", "pitcher", "jug", "pan", "frying_pan", "saucepan", "pot", "bucket",
        "watering_can", "basket", "bag", "handbag", "coffee_maker"},
       "Objects with a handle (mugs, kettles, pans): the front is the side with the spout or pouring lip "
       "facing the camera and the handle behind; a mug without a spout is seen with its handle on the right."},
  };
  return rules;
}

constexpr std::string_view kGeneralRules =
    "Furniture, appliances and devices: the front is the side a person faces when using the object, "
    "such as the seat side of a chair, the screen of a monitor or the door of an oven.";

constexpr std::string_view kAnswerFormat =
    "Reply with a single token; answer with exactly one of: 1, 2, 3, 4, NONE";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string rules_for(const std::string& category) {
  const std::string cat = lower(category);
  std::string out;
  auto add = [&](std::string_view text) {
    out += "- ";
    out += text;
    out += '\n';
  };
  bool matched = false;
  for (const RuleSet& r : rule_sets()) {
    if (std::find(r.categories.begin(), r.categories.end(), cat) != r.categories.end()) {
      add(r.text);
      matched = true;
    }
  }
  if (!matched) {
    for (const RuleSet& r : rule_sets()) add(r.text);
  }
  add(kGeneralRules);
  out.pop_back();
  return out;
}

std::string strip_fences(std::string_view reply) {
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return std::string_view{};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  };
  std::string_view s = trim(reply);
  if (s.substr(0, 3) == "```") {
    const auto nl = s.find('\n');
    s = nl == std::string_view::npos ? s.substr(3) : s.substr(nl + 1);
    s = trim(s);
    if (s.size() >= 3 && s.substr(s.size() - 3) == "```") s = trim(s.substr(0, s.size() - 3));
  }
  return std::string(s);
}

int token_value(const std::string& tok) { return tok.size() == 1 ? tok[0] - '0' : 0; }

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "endpoint URL needs a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport : public HttpTransport {
 public:
  HttpResponse post(const HttpRequest& request) override {
    const UrlParts parts = split_url(request.url);
    httplib::Client client(parts.origin);
    if (!client.is_valid()) throw Error(ErrorCode::kTransport, "unsupported endpoint " + parts.origin);
    const auto timeout = std::chrono::duration<double>(request.timeout_s);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
      if (lower(k) == "content-type") {
        content_type = v;
      } else {
        headers.emplace(k, v);
      }
    }
    auto res = client.Post(parts.path, headers, request.body, content_type);
    if (!res) throw Error(ErrorCode::kTransport, "request failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }
};

class InFlightSlot {
 public:
  InFlightSlot(std::mutex& mu, std::condition_variable& cv, int& count, int limit) : mu_(mu), cv_(cv), count_(count) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return count_ < limit; });
    ++count_;
  }
  ~InFlightSlot() {
    {
      std::lock_guard lock(mu_);
      --count_;
    }
    cv_.notify_one();
  }
  InFlightSlot(const InFlightSlot&) = delete;
  InFlightSlot& operator=(const InFlightSlot&) = delete;

 private:
  std::mutex& mu_;
  std::condition_variable& cv_;
  int& count_;
};

}  // namespace

std::string_view to_string(WireStyle style) {
  return style == WireStyle::kGemini ? "gemini-style-json" : "chat-completion-json";
}

WireStyle wire_style_from_string(std::string_view s) {
  if (s == "chat-completion-json" || s == "chat") return WireStyle::kChatCompletion;
  if (s == "gemini-style-json" || s == "gemini") return WireStyle::kGemini;
  throw Error(ErrorCode::kInvalidArgument, "unknown wire style: " + std::string(s));
}

std::string default_prompt_template() {
  return "You are shown four renderings of the same 3D object, labelled image 1, image 2, image 3 and image 4 in "
         "the order they are attached. They were taken from the front, back, left and right of the object in an "
         "unknown assignment, so each image is a candidate front view.\n"
         "Object category: {category}.\n"
         "\n"
         "Decide which image shows the front of the object, the side that faces a viewer who uses or looks at the "
         "object in its natural way.\n"
         "\n"
         "Recognition rules:\n"
         "{rules}\n"
         "\n"
         "If no image shows a clear front, for example because the object is rotationally symmetric, has no "
         "distinguishable front, or is lying on its side, answer NONE.\n"
         "{answer_format}\n";
}

void VlmConfig::validate() const {
  if (max_retries < 0) throw Error(ErrorCode::kInvalidArgument, "max_retries must be >= 0");
  if (!(timeout_s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "timeout must be positive");
  if (initial_backoff_s < 0.0) throw Error(ErrorCode::kInvalidArgument, "backoff must be >= 0");
  if (max_in_flight < 1) throw Error(ErrorCode::kInvalidArgument, "max_in_flight must be >= 1");
  if (resolution < 64) throw Error(ErrorCode::kInvalidArgument, "view resolution must be >= 64");
}

std::string build_prompt(const VlmConfig& config, std::string_view category) {
  const std::string cat = category.empty() ? config.category : std::string(category);
  const std::string& t = config.prompt_template;
  std::string out;
  out.reserve(t.size() + 1024);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const char c = t[i];
    if (c == '{' && i + 1 < t.size() && t[i + 1] == '{') {
      out += '{';
      ++i;
    } else if (c == '}' && i + 1 < t.size() && t[i + 1] == '}') {
      out += '}';
      ++i;
    } else if (c == '{') {
      const auto close = t.find('}', i);
      if (close == std::string::npos) throw Error(ErrorCode::kTemplate, "unterminated placeholder in prompt template");
      const std::string name = t.substr(i + 1, close - i - 1);
      if (name == "category") {
        out += cat.empty() ? "unknown" : cat;
      } else if (name == "rules") {
        out += rules_for(cat);
      } else if (name == "answer_format") {
        out += kAnswerFormat;
      } else {
        throw Error(ErrorCode::kTemplate, "unknown placeholder {" + name + "} in prompt template");
      }
      i = close;
    } else if (c == '}') {
      throw Error(ErrorCode::kTemplate, "unmatched '}' in prompt template");
    } else {
      out += c;
    }
  }
  return out;
}

ViewLabel label_for_index(int index) {
  switch (index) {
    case 1: return ViewLabel::kFront;
    case 2: return ViewLabel::kLeft;   // camera at +Y sees the object's left side
    case 3: return ViewLabel::kBack;
    case 4: return ViewLabel::kRight;
    default: return ViewLabel::kNoFrontView;
  }
}

double VlmVerdict::correction_yaw_deg() const {
  static constexpr double kYaw[5] = {0.0, 0.0, -90.0, 180.0, 90.0};
  return image_index >= 1 && image_index <= 4 ? kYaw[image_index] : 0.0;
}

std::optional<int> parse_reply(std::string_view reply) {
  static const std::regex strict(R"(^(1|2|3|4|NONE)\b)", std::regex::icase);
  static const std::regex token(R"(\b(1|2|3|4|NONE)\b)", std::regex::icase);
  const std::string s = strip_fences(reply);
  std::smatch m;
  if (std::regex_search(s, m, strict)) return token_value(m[1].str());
  std::set<int> seen;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), token); it != std::sregex_iterator(); ++it) {
    seen.insert(token_value((*it)[1].str()));
  }
  if (seen.size() == 1) return *seen.begin();
  return std::nullopt;
}

std::string redact(std::string text, std::string_view secret) {
  if (secret.empty()) return text;
  for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
    text.replace(pos, secret.size(), "[REDACTED]");
    pos += 10;
  }
  return text;
}

std::shared_ptr<HttpTransport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

VlmClient::VlmClient(VlmConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
  if (!transport_) throw Error(ErrorCode::kInvalidArgument, "VLM client needs a transport");
}

std::string VlmClient::api_key() const {
  if (config_.api_key_env.empty()) return {};
  const char* v = std::getenv(config_.api_key_env.c_str());
  if (v == nullptr || *v == '\0') {
    throw Error(ErrorCode::kMissingApiKey, "environment variable " + config_.api_key_env + " is not set");
  }
  return v;
}

std::string VlmClient::request_body(const std::array<Image, 4>& views, std::string_view category) const {
  const std::string prompt = build_prompt(config_, category);
  std::vector<std::string> encoded;
  for (const Image& im : views) encoded.push_back(base64_encode(encode_png(im)));

  json body;
  if (config_.wire_style == WireStyle::kChatCompletion) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    for (const std::string& b64 : encoded) {
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + b64}}}});
    }
    body = {{"model", config_.model_name},
            {"temperature", 0},
            {"max_tokens", 16},
            {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  } else {
    json parts = json::array();
    parts.push_back({{"text", prompt}});
    for (const std::string& b64 : encoded) {
      parts.push_back({{"inline_data", {{"mime_type", "image/png"}, {"data", b64}}}});
    }
    body = {{"contents", json::array({{{"role", "user"}, {"parts", parts}}})},
            {"generationConfig", {{"temperature", 0}, {"maxOutputTokens", 16}}}};
  }
  return body.dump();
}

std::optional<std::string> VlmClient::reply_text(const std::string& body) const {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  try {
    if (config_.wire_style == WireStyle::kChatCompletion) {
      const json& content = j.at("choices").at(0).at("message").at("content");
      if (content.is_string()) return content.get<std::string>();
      std::string text;
      for (const json& part : content) {
        if (part.contains("text")) text += part["text"].get<std::string>();
      }
      return text;
    }
    std::string text;
    for (const json& part : j.at("candidates").at(0).at("content").at("parts")) {
      if (part.contains("text")) text += part["text"].get<std::string>();
    }
    return text;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

VlmVerdict VlmClient::recognize_front_view(const std::array<Image, 4>& views, std::string_view category) const {
  const std::string key = api_key();
  HttpRequest req;
  req.url = config_.endpoint_url;
  if (const auto pos = req.url.find("{model}"); pos != std::string::npos) req.url.replace(pos, 7, config_.model_name);
  req.timeout_s = config_.timeout_s;
  req.body = request_body(views, category);
  req.headers.emplace_back("Content-Type", "application/json");
  if (!key.empty()) {
    if (config_.wire_style == WireStyle::kChatCompletion) {
      req.headers.emplace_back("Authorization", "Bearer " + key);
    } else {
      req.headers.emplace_back("x-goog-api-key", key);
    }
  }

  std::string last_problem;
  ErrorCode last_code = ErrorCode::kTransport;
  std::string last_raw;
  const int max_attempts = config_.max_retries + 1;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1 && config_.initial_backoff_s > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(config_.initial_backoff_s * std::ldexp(1.0, attempt - 2)));
    }
    HttpResponse res;
    try {
      InFlightSlot slot(mu_, cv_, in_flight_, config_.max_in_flight);
      res = transport_->post(req);
    } catch (const Error& e) {
      last_code = ErrorCode::kTransport;
      last_problem = redact(e.what(), key);
      continue;
    }
    if (res.status == 429 || res.status >= 500) {
      last_code = ErrorCode::kTransport;
      last_problem = "HTTP " + std::to_string(res.status);
      continue;
    }
    if (res.status < 200 || res.status >= 300) {
      throw Error(ErrorCode::kTransport,
                  "HTTP " + std::to_string(res.status) + ": " + redact(res.body.substr(0, 200), key));
    }
    const auto text = reply_text(res.body);
    last_raw = redact(text.value_or(res.body), key);
    const auto idx = text ? parse_reply(*text) : std::nullopt;
    if (!idx) {
      last_code = ErrorCode::kUnparseableReply;
      last_problem = "unparseable reply: " + last_raw.substr(0, 200);
      continue;
    }
    VlmVerdict v;
    v.image_index = *idx;
    v.label = label_for_index(*idx);
    v.raw_response = last_raw;
    v.attempts = attempt;
    return v;
  }
  throw Error(last_code, last_problem + " (after " + std::to_string(max_attempts) + " attempts)");
}

std::array<Image, 4> render_vlm_views(const TriMesh& mesh, int resolution) {
  // The rig is ordered [front, back, left, right] = azimuths {0, 180, 270, 90}.
  const std::vector<Camera> cams = orthogonal_four_views(resolution);
  static constexpr int kAzimuthOrder[4] = {0, 3, 1, 2};
  std::array<Image, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = render(mesh, cams[kAzimuthOrder[i]]).color;
  return out;
}

std::pair<TriMesh, VlmVerdict> VlmClient::canonicalize(const TriMesh& mesh, std::string_view category) const {
  VlmVerdict v = recognize_front_view(render_vlm_views(mesh, config_.resolution), category);
  if (v.label == ViewLabel::kNoFrontView) return {mesh, v};
  return {rotated(mesh, yaw_rotation_deg(v.correction_yaw_deg())), v};
}

VlmVerdict recognize_front_view(const std::array<Image, 4>& views, const VlmConfig& config) {
  return VlmClient(config).recognize_front_view(views);
}

std::pair<TriMesh, VlmVerdict> canonicalize_with_vlm(const TriMesh& mesh, const VlmConfig& config) {
  return VlmClient(config).canonicalize(mesh);
}

}  // namespace orient
