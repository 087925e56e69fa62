#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <deque>
#include <random>
#include <thread>

#include <json.hpp>

#include "orient/error.hpp"
#include "orient/primitives.hpp"
#include "orient/render.hpp"
#include "orient/vlm.hpp"
#include "support/fixtures.hpp"
#include "support/mock_vlm.hpp"

using namespace orient;
using nlohmann::json;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an orient::Error");
  return ErrorCode::kIo;
}

std::string error_text(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

std::string chat_reply(const std::string& text) {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

// In-process transport: replays scripted responses and records requests.
// A status of -1 simulates a connection failure.
class FakeTransport : public HttpTransport {
 public:
  explicit FakeTransport(std::vector<HttpResponse> replies, int delay_ms = 0)
      : replies_(replies.begin(), replies.end()), delay_ms_(delay_ms) {}

  HttpResponse post(const HttpRequest& request) override {
    const int now = ++in_flight_;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
    HttpResponse r;
    {
      std::lock_guard lock(mu_);
      requests_.push_back(request);
      r = replies_.front();
      if (replies_.size() > 1) replies_.pop_front();
    }
    --in_flight_;
    if (r.status == -1) throw Error(ErrorCode::kTransport, "connection refused");
    return r;
  }

  std::vector<HttpRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  int max_in_flight() const { return max_in_flight_; }

 private:
  mutable std::mutex mu_;
  std::deque<HttpResponse> replies_;
  std::vector<HttpRequest> requests_;
  int delay_ms_ = 0;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

VlmConfig fast_config() {
  VlmConfig c;
  c.endpoint_url = "http://vlm.invalid/v1/chat/completions";
  c.api_key_env = "";
  c.initial_backoff_s = 0.0;
  c.resolution = 64;
  return c;
}

std::array<Image, 4> blank_views() { return {Image(64, 64), Image(64, 64), Image(64, 64), Image(64, 64)}; }

// Decides the front from pixels: the view showing the most strongly red
// pixels. Stands in for a perfect model on meshes with a red front face.
class GeometricFrontTransport : public HttpTransport {
 public:
  HttpResponse post(const HttpRequest& request) override {
    const json body = json::parse(request.body);
    int best = 0;
    long best_count = 0;
    int index = 0;
    for (const json& part : body["messages"][0]["content"]) {
      if (part["type"] != "image_url") continue;
      ++index;
      const std::string url = part["image_url"]["url"];
      const std::string b64 = url.substr(url.find(',') + 1);
      const Image im = decode_png(base64_decode(b64));
      long count = 0;
      for (std::size_t i = 0; i < im.rgb.size(); i += 3) count += im.rgb[i] > 2 * im.rgb[i + 1] + 20;
      if (count > best_count) {
        best_count = count;
        best = index;
      }
    }
    return {200, chat_reply(best == 0 ? "NONE" : std::to_string(best))};
  }

 private:
  static std::string base64_decode(const std::string& in) {
    static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    int val = 0;
    int bits = -8;
    for (char c : in) {
      const auto p = alphabet.find(c);
      if (p == std::string::npos) break;
      val = (val << 6) + static_cast<int>(p);
      bits += 6;
      if (bits >= 0) {
        out.push_back(static_cast<char>((val >> bits) & 0xFF));
        bits -= 8;
      }
    }
    return out;
  }
};

}  // namespace

TEST_CASE("reply parsing: strict grammar first, then a single unambiguous token") {
  struct Row {
    std::string reply;
    std::optional<int> expected;
  };
  const std::vector<Row> table = {
      {"1", 1},
      {"  3\n", 3},
      {"4.", 4},
      {"none", 0},
      {"NONE - the object is a sphere", 0},
      {"```\n2\n```", 2},
      {"```text\nNONE\n```", 0},
      {"2 because the seat faces the camera", 2},
      {"The front is image 3.", 3},
      {"Image 3 shows the front; image 3 is clearly it.", 3},
      {"Either 1 or 2", std::nullopt},
      {"12", std::nullopt},
      {"image5", std::nullopt},
      {"", std::nullopt},
      {"I cannot tell", std::nullopt},
      {"front: 4", 4},
      {"1 or maybe 2", 1},
  };
  for (const Row& r : table) {
    INFO(r.reply);
    CHECK(parse_reply(r.reply) == r.expected);
  }
}

TEST_CASE("labels and correction yaws follow the azimuth order of the images") {
  CHECK(label_for_index(1) == ViewLabel::kFront);
  CHECK(label_for_index(2) == ViewLabel::kLeft);
  CHECK(label_for_index(3) == ViewLabel::kBack);
  CHECK(label_for_index(4) == ViewLabel::kRight);
  CHECK(label_for_index(0) == ViewLabel::kNoFrontView);
  const double expected[5] = {0.0, 0.0, -90.0, 180.0, 90.0};
  for (int i = 1; i <= 4; ++i) {
    VlmVerdict v;
    v.image_index = i;
    CHECK(v.correction_yaw_deg() == expected[i]);
    // The correction turns the azimuth the chosen image was taken from onto +X.
    const double azimuth = 90.0 * (i - 1);
    const Vec3 seen(std::cos(deg2rad(azimuth)), std::sin(deg2rad(azimuth)), 0.0);
    CHECK((yaw_rotation_deg(v.correction_yaw_deg()) * seen - CanonicalFrame::forward()).norm() < 1e-12);
  }
}

TEST_CASE("prompt template placeholders, escapes and category rules") {
  VlmConfig c = fast_config();
  const std::string generic = build_prompt(c);
  CHECK(generic.find("Object category: unknown.") != std::string::npos);
  CHECK(generic.find("Stick-like") != std::string::npos);
  CHECK(generic.find("Vehicles") != std::string::npos);
  CHECK(generic.find("exactly one of: 1, 2, 3, 4, NONE") != std::string::npos);
  CHECK(generic.find('{') == std::string::npos);

  const std::string fork = build_prompt(c, "fork");
  CHECK(fork.find("Object category: fork.") != std::string::npos);
  CHECK(fork.find("Stick-like") != std::string::npos);
  CHECK(fork.find("Vehicles") == std::string::npos);
  CHECK(fork.find("Furniture") != std::string::npos);

  c.category = "Car";
  CHECK(build_prompt(c).find("Vehicles") != std::string::npos);
  CHECK(build_prompt(c).find("Animals") == std::string::npos);

  c.prompt_template = "{{literal}} {category} }}";
  CHECK(build_prompt(c, "mug") == "{literal} mug }");
  for (const char* bad : {"{nope}", "{category", "stray } brace"}) {
    c.prompt_template = bad;
    CHECK(code_of([&] { build_prompt(c); }) == ErrorCode::kTemplate);
  }
}

TEST_CASE("config validation and wire style names") {
  VlmConfig c = fast_config();
  CHECK_NOTHROW(c.validate());
  c.resolution = 32;
  CHECK_THROWS_AS(c.validate(), Error);
  c = fast_config();
  c.max_retries = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = fast_config();
  c.max_in_flight = 0;
  CHECK_THROWS_AS(VlmClient(c, std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, ""}})), Error);
  CHECK(wire_style_from_string("gemini") == WireStyle::kGemini);
  CHECK(wire_style_from_string(to_string(WireStyle::kChatCompletion)) == WireStyle::kChatCompletion);
  CHECK_THROWS_AS(wire_style_from_string("xml"), Error);
}

TEST_CASE("retries: transient failures then success") {
  auto t = std::make_shared<FakeTransport>(std::vector<HttpResponse>{
      {503, "busy"}, {-1, ""}, {200, chat_reply("4")}});
  const VlmClient client(fast_config(), t);
  const VlmVerdict v = client.recognize_front_view(blank_views());
  CHECK(v.image_index == 4);
  CHECK(v.label == ViewLabel::kRight);
  CHECK(v.attempts == 3);
  CHECK(t->requests().size() == 3);
}

TEST_CASE("retries: budget exhaustion, non-retryable statuses and unparseable replies") {
  SUBCASE("5xx forever") {
    auto t = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{500, ""}});
    VlmConfig c = fast_config();
    c.max_retries = 3;
    CHECK(code_of([&] { VlmClient(c, t).recognize_front_view(blank_views()); }) == ErrorCode::kTransport);
    CHECK(t->requests().size() == 4);
  }
  SUBCASE("429 is retried") {
    auto t = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{429, ""}, {200, chat_reply("NONE")}});
    const VlmVerdict v = VlmClient(fast_config(), t).recognize_front_view(blank_views());
    CHECK(v.label == ViewLabel::kNoFrontView);
    CHECK(v.attempts == 2);
  }
  SUBCASE("4xx fails immediately") {
    auto t = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{401, "bad key"}, {200, chat_reply("1")}});
    CHECK(code_of([&] { VlmClient(fast_config(), t).recognize_front_view(blank_views()); }) == ErrorCode::kTransport);
    CHECK(t->requests().size() == 1);
  }
  SUBCASE("malformed replies are retried, then reported") {
    auto t = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, chat_reply("maybe the second?")},
                                                                      {200, "not json"}});
    CHECK(code_of([&] { VlmClient(fast_config(), t).recognize_front_view(blank_views()); }) ==
          ErrorCode::kUnparseableReply);
    CHECK(t->requests().size() == 3);
  }
}

TEST_CASE("backoff doubles between attempts") {
  auto t = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{500, ""}});
  VlmConfig c = fast_config();
  c.max_retries = 2;
  c.initial_backoff_s = 0.05;
  const auto t0 = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(VlmClient(c, t).recognize_front_view(blank_views()), Error);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(elapsed >= 0.15 - 1e-3);  // 0.05 + 0.10
  CHECK(elapsed < 2.0);
}

TEST_CASE("api key: missing variable is reported, the key never leaks into errors") {
  VlmConfig c = fast_config();
  c.api_key_env = "ORIENT_TEST_KEY_UNSET_VARIABLE";
  ::unsetenv(c.api_key_env.c_str());
  auto t = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, chat_reply("1")}});
  CHECK(code_of([&] { VlmClient(c, t).recognize_front_view(blank_views()); }) == ErrorCode::kMissingApiKey);
  CHECK(t->requests().empty());

  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> ch('a', 'z');
  for (int trial = 0; trial < 20; ++trial) {
    std::string secret = "sk-";
    for (int i = 0; i < 24; ++i) secret += static_cast<char>(ch(rng));
    c.api_key_env = "ORIENT_TEST_KEY";
    ::setenv("ORIENT_TEST_KEY", secret.c_str(), 1);
    // Endpoints that echo the credential back in errors and replies.
    auto echo = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{403, "denied for key " + secret}});
    const std::string msg = error_text([&] { VlmClient(c, echo).recognize_front_view(blank_views()); });
    CHECK(msg.find(secret) == std::string::npos);
    CHECK(msg.find("[REDACTED]") != std::string::npos);
    REQUIRE(echo->requests().size() == 1);
    const auto headers = echo->requests()[0].headers;
    CHECK(std::find(headers.begin(), headers.end(), std::pair<std::string, std::string>("Authorization",
                                                                                       "Bearer " + secret)) !=
          headers.end());

    auto chatty = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, chat_reply("2 (" + secret + ")")}});
    const VlmVerdict v = VlmClient(c, chatty).recognize_front_view(blank_views());
    CHECK(v.raw_response.find(secret) == std::string::npos);
  }
  ::unsetenv("ORIENT_TEST_KEY");
  CHECK(redact("a-b-a", "a") == "[REDACTED]-b-[REDACTED]");
  CHECK(redact("abc", "") == "abc");
}

TEST_CASE("request bodies for both wire formats") {
  auto t = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, chat_reply("1")}});
  VlmConfig c = fast_config();
  c.model_name = "test-model";
  VlmClient(c, t).recognize_front_view(blank_views(), "dog");
  const json chat = json::parse(t->requests()[0].body);
  CHECK(chat["model"] == "test-model");
  CHECK(chat["temperature"] == 0);
  const auto& content = chat["messages"][0]["content"];
  REQUIRE(content.size() == 5);
  CHECK(content[0]["type"] == "text");
  CHECK(content[0]["text"].get<std::string>().find("Animals") != std::string::npos);
  CHECK(content[1]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0) == 0);

  const std::string gemini_reply =
      json{{"candidates", {{{"content", {{"parts", {{{"text", "3"}}}}}}}}}}.dump();
  auto g = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, gemini_reply}});
  c.wire_style = WireStyle::kGemini;
  c.endpoint_url = "https://vlm.invalid/v1beta/models/{model}:generateContent";
  const VlmVerdict v = VlmClient(c, g).recognize_front_view(blank_views());
  CHECK(v.image_index == 3);
  const HttpRequest req = g->requests()[0];
  CHECK(req.url == "https://vlm.invalid/v1beta/models/test-model:generateContent");
  const json body = json::parse(req.body);
  REQUIRE(body["contents"][0]["parts"].size() == 5);
  CHECK(body["contents"][0]["parts"][2]["inline_data"]["mime_type"] == "image/png");
  CHECK(body["generationConfig"]["temperature"] == 0);
}

TEST_CASE("chat replies given as content parts are joined") {
  const std::string parts = json{{"choices", {{{"message", {{"content", {{{"type", "text"}, {"text", "NONE"}}}}}}}}}}.dump();
  auto t = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, parts}});
  CHECK(VlmClient(fast_config(), t).recognize_front_view(blank_views()).label == ViewLabel::kNoFrontView);
}

TEST_CASE("concurrent callers respect the in-flight limit") {
  auto t = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, chat_reply("1")}}, 20);
  VlmConfig c = fast_config();
  c.max_in_flight = 2;
  const VlmClient client(c, t);
  const auto views = blank_views();
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { client.recognize_front_view(views); });
  for (auto& th : threads) th.join();
  CHECK(t->requests().size() == 8);
  CHECK(t->max_in_flight() <= 2);
}

TEST_CASE("views are rendered in azimuth order") {
  const TriMesh m = orient::testing::asymmetric_meshes()[0].mesh;
  const auto views = render_vlm_views(m, 64);
  const auto rig = orthogonal_four_views(64);  // [front, back, left, right]
  CHECK(views[0] == render(m, rig[0]).color);
  CHECK(views[1] == render(m, rig[3]).color);
  CHECK(views[2] == render(m, rig[1]).color);
  CHECK(views[3] == render(m, rig[2]).color);
}

TEST_CASE("canonicalization with a perfect model is idempotent and undoes quarter turns") {
  // Gray body with a red slab on the +X side.
  const TriMesh base = normalize_mesh(merge({make_box({-0.5, -0.4, 0.0}, {0.4, 0.4, 0.6}, Vec3(0.5, 0.5, 0.5)),
                                              make_box({0.4, -0.3, 0.1}, {0.5, 0.3, 0.5}, Vec3(0.9, 0.1, 0.1))}));
  const VlmClient client(fast_config(), std::make_shared<GeometricFrontTransport>());
  for (double yaw : {0.0, 90.0, 180.0, 270.0}) {
    const TriMesh turned = rotated(base, yaw_rotation_deg(yaw));
    const auto [once, v1] = client.canonicalize(turned);
    CHECK(v1.label != ViewLabel::kNoFrontView);
    for (std::size_t i = 0; i < base.vertices.size(); ++i) CHECK((once.vertices[i] - base.vertices[i]).norm() < 1e-9);
    const auto [twice, v2] = client.canonicalize(once);
    CHECK(v2.image_index == 1);
    CHECK(twice.vertices == once.vertices);
  }
  const TriMesh sphere = make_uv_sphere(Vec3::Zero(), 0.5, 16, 8, Vec3(0.5, 0.5, 0.5));
  const auto [same, none] = client.canonicalize(sphere);
  CHECK(none.label == ViewLabel::kNoFrontView);
  CHECK(same.vertices == sphere.vertices);
}

TEST_CASE("real HTTP transport against a loopback mock, both wire formats") {
  orient::testing::MockVlmServer server;
  server.fallback({"HTTP 500", "2"});
  VlmConfig c = fast_config();
  c.endpoint_url = server.chat_url();
  c.api_key_env = "ORIENT_TEST_HTTP_KEY";
  ::setenv("ORIENT_TEST_HTTP_KEY", "sk-loopback", 1);
  const VlmVerdict v = VlmClient(c).recognize_front_view(blank_views());
  CHECK(v.image_index == 2);
  CHECK(v.attempts == 2);
  CHECK(server.requests() == 2);
  CHECK(server.auth_headers()[0] == "Bearer sk-loopback");

  c.wire_style = WireStyle::kGemini;
  c.endpoint_url = server.gemini_url();
  server.fallback({"4"});
  CHECK(VlmClient(c).recognize_front_view(blank_views()).image_index == 4);
  CHECK(server.auth_headers().back() == "sk-loopback");
  ::unsetenv("ORIENT_TEST_HTTP_KEY");

  // Nothing listens on the port once the server is gone.
  c.endpoint_url = "http://127.0.0.1:1/v1/chat/completions";
  c.api_key_env = "";
  c.max_retries = 1;
  c.timeout_s = 2.0;
  CHECK(code_of([&] { VlmClient(c).recognize_front_view(blank_views()); }) == ErrorCode::kTransport);
}
