#include <atomic>
#include <string>
#include <thread>
#include <vector>

#include "crvae/backends.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace crvae;
using nlohmann::json;

namespace {

ImageBuf test_image() {
  ImageBuf img(4, 4);
  img.at(0, 0, 0) = 1.0;
  img.at(3, 3, 2) = 0.5;
  return img;
}

// Running local server for the http-kind tests; stops on destruction.
struct LocalServer {
  httplib::Server srv;
  int port = 0;
  std::thread th;

  void start() {
    port = srv.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    th = std::thread([this] { srv.listen_after_bind(); });
    srv.wait_until_ready();
  }
  ~LocalServer() {
    srv.stop();
    if (th.joinable()) th.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("backend config validation") {
  BackendConfig cfg;
  CHECK_NOTHROW(cfg.validate());  // mock defaults

  cfg.temperature = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.temperature = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.temperature = 0.9;

  cfg.kind = "carrier-pigeon";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg.kind = "http";  // needs an endpoint
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.endpoint = "http://127.0.0.1:9";
  CHECK_NOTHROW(cfg.validate());

  cfg.kind = "command";  // needs a command
  cfg.command.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.command = "cat";
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("factories dispatch on kind") {
  BackendConfig cfg;
  cfg.kind = "mock";
  CHECK(dynamic_cast<MockLlmBackend*>(make_llm_backend(cfg).get()) != nullptr);
  CHECK(dynamic_cast<MockPhraseBackend*>(make_phrase_backend(cfg).get()) != nullptr);

  cfg.kind = "https-not-a-kind";
  CHECK_THROWS_AS(make_llm_backend(cfg), ConfigError);
}

TEST_CASE("https endpoints are rejected up front") {
  BackendConfig cfg;
  cfg.kind = "http";
  cfg.endpoint = "https://secure.example:443";
  auto be = make_llm_backend(cfg);
  CHECK_THROWS_AS(be->chat("hi"), ConfigError);
}

TEST_CASE("mock llm is deterministic and scriptable") {
  BackendConfig cfg;
  MockLlmBackend a(cfg), b(cfg);
  ImageBuf img = test_image();

  std::string c1 = a.caption_image(img, "A news photo of ");
  std::string c2 = b.caption_image(img, "A news photo of ");
  CHECK(c1 == c2);
  CHECK(c1.rfind("A news photo of ", 0) == 0);  // prompt echoed as caption prefix
  CHECK(c1.size() > std::string("A news photo of ").size());

  // different image -> different subject text (hash-driven)
  ImageBuf other(4, 4);
  other.at(2, 2, 1) = 0.9;
  CHECK(a.caption_image(other, "A news photo of ") != c1);

  // scripted responses are served first, then the hash fallback resumes
  a.push_response("a scripted caption");
  CHECK(a.caption_image(img, "") == "a scripted caption");
  CHECK(a.caption_image(img, "") != "a scripted caption");

  // outgoing prompts are captured verbatim
  REQUIRE(!a.sent_prompts().empty());
  CHECK(a.sent_prompts().front() == "A news photo of ");
}

TEST_CASE("mock chat yields ten parseable numbered tags") {
  BackendConfig cfg;
  MockLlmBackend mock(cfg);
  std::string reply = mock.chat(
      "<s> [INST] <<SYS>>\nsystem\n<</SYS>>\n"
      "Text caption: storm hits the coast overnight\n"
      "Image description: dark clouds over a pier\n[/INST] </s>");
  int items = 0;
  for (size_t pos = 0; (pos = reply.find('\n', pos)) != std::string::npos; ++pos) ++items;
  CHECK(items >= 9);  // 10 lines
  CHECK(reply.find("1. ") != std::string::npos);
  CHECK(reply.find("10. ") != std::string::npos);
  // deterministic
  CHECK(mock.chat("same prompt") == mock.chat("same prompt"));
}

TEST_CASE("mock phrase embeddings: 768-dim unit rows, equal phrase = equal vector") {
  BackendConfig cfg;
  MockPhraseBackend mock(cfg);
  Matd m = mock.embed({"storm damage", "flood rescue", "storm damage"});
  REQUIRE(m.rows() == 3);
  REQUIRE(m.cols() == 768);
  CHECK((m.row(0) - m.row(2)).norm() == 0.0);  // equal phrase -> identical vector
  CHECK((m.row(0) - m.row(1)).norm() > 0.1);
  for (int i = 0; i < 3; ++i) CHECK(m.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
  // distinct phrases are near-orthogonal in 768 dims
  CHECK(std::abs(m.row(0).dot(m.row(1))) < 0.2);
  CHECK(mock.embed({}).rows() == 0);
}

TEST_CASE("http llm backend round-trips caption and chat") {
  LocalServer server;
  json seen_caption, seen_chat;
  std::string seen_auth;
  server.srv.Post("/v1/caption", [&](const httplib::Request& req, httplib::Response& res) {
    seen_caption = json::parse(req.body);
    seen_auth = req.get_header_value("Authorization");
    res.set_content(R"({"caption":"a person at a desk"})", "application/json");
  });
  server.srv.Post("/v1/chat", [&](const httplib::Request& req, httplib::Response& res) {
    seen_chat = json::parse(req.body);
    res.set_content(R"({"text":"1. tag one\n2. tag two"})", "application/json");
  });
  server.start();

  BackendConfig cfg;
  cfg.kind = "http";
  cfg.endpoint = server.endpoint() + "/v1";
  cfg.api_key = "sk-test-123";
  cfg.model_id = "blip-2";
  cfg.temperature = 0.9;
  cfg.max_tokens = 99;
  auto be = make_llm_backend(cfg);

  ImageBuf img = test_image();
  CHECK(be->caption_image(img, "A news photo of ") == "a person at a desk");
  CHECK(seen_caption["model"] == "blip-2");
  CHECK(seen_caption["prompt"] == "A news photo of ");
  CHECK(seen_caption["max_tokens"] == 99);
  CHECK(seen_auth == "Bearer sk-test-123");
  // the image travels as base64 P6 bytes
  std::string b64 = seen_caption["image_b64"].get<std::string>();
  CHECK(b64.size() > 0);
  CHECK(base64_encode(ppm_bytes(img)) == b64);

  CHECK(be->chat("prompt body") == "1. tag one\n2. tag two");
  CHECK(seen_chat["temperature"] == 0.9);
  CHECK(seen_chat["prompt"] == "prompt body");
}

TEST_CASE("http phrase backend parses vectors and rejects bad shapes") {
  LocalServer server;
  std::atomic<int> mode{0};
  server.srv.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body);
    const auto& phrases = body["phrases"];
    if (mode == 0) {
      json vectors = json::array();
      for (size_t i = 0; i < phrases.size(); ++i) {
        std::vector<double> v(768, 0.0);
        v[i] = 1.0;
        vectors.push_back(v);
      }
      res.set_content(json{{"vectors", vectors}}.dump(), "application/json");
    } else {
      res.set_content(R"({"vectors":[[1,2,3]]})", "application/json");  // wrong width
    }
  });
  server.start();

  BackendConfig cfg;
  cfg.kind = "http";
  cfg.endpoint = server.endpoint();
  auto be = make_phrase_backend(cfg);

  Matd m = be->embed({"alpha", "beta"});
  REQUIRE(m.rows() == 2);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(1, 1) == 1.0);
  CHECK(m(0, 1) == 0.0);

  mode = 1;
  CHECK_THROWS_AS(be->embed({"gamma"}), BackendError);
}

TEST_CASE("http backend retries transient failures with backoff") {
  LocalServer server;
  std::atomic<int> calls{0};
  server.srv.Post("/chat", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls <= 2) {
      res.status = 500;
      res.set_content("busy", "text/plain");
    } else {
      res.set_content(R"({"text":"finally"})", "application/json");
    }
  });
  server.start();

  BackendConfig cfg;
  cfg.kind = "http";
  cfg.endpoint = server.endpoint();
  cfg.retries = 3;
  cfg.backoff_s = 0.01;
  auto be = make_llm_backend(cfg);
  CHECK(be->chat("x") == "finally");
  CHECK(calls == 3);

  // exhausting retries surfaces the last error
  calls = -100;  // next 100+ calls all fail
  cfg.retries = 1;
  auto be2 = make_llm_backend(cfg);
  try {
    be2->chat("x");
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(std::string(e.what()).find("500") != std::string::npos);
  }
}

TEST_CASE("command backend round-trips through a subprocess") {
  testutil::TempDir tmp("cmd");
  // a tiny shim that answers all three ops with fixed payloads
  testutil::spit(tmp.str("shim.py"),
                 "import json,sys\n"
                 "req=json.load(sys.stdin)\n"
                 "op=req.get('op')\n"
                 "if op=='caption': out={'caption':'cmd caption of '+req['model']}\n"
                 "elif op=='chat': out={'text':'\\n'.join(f'{i}. tag {i}' for i in range(1,11))}\n"
                 "else: out={'vectors':[[float(i==j) for j in range(768)] for i,_ in enumerate(req['phrases'])]}\n"
                 "json.dump(out,sys.stdout)\n");

  BackendConfig cfg;
  cfg.kind = "command";
  cfg.command = "python3 " + tmp.str("shim.py");
  cfg.model_id = "local-model";
  auto llm = make_llm_backend(cfg);
  CHECK(llm->caption_image(test_image(), "") == "cmd caption of local-model");
  std::string tags = llm->chat("anything");
  CHECK(tags.find("1. tag 1") != std::string::npos);
  CHECK(tags.find("10. tag 10") != std::string::npos);

  auto phrase = make_phrase_backend(cfg);
  Matd m = phrase->embed({"a", "b"});
  CHECK(m(0, 0) == 1.0);
  CHECK(m(1, 1) == 1.0);

  // a command that fails every attempt surfaces a BackendError
  BackendConfig bad = cfg;
  bad.command = "false";
  bad.retries = 1;
  bad.backoff_s = 0.01;
  auto broken = make_llm_backend(bad);
  CHECK_THROWS_AS(broken->chat("x"), BackendError);
}

TEST_CASE("ppm_bytes emits a parseable P6 payload") {
  ImageBuf img = test_image();
  std::string bytes = ppm_bytes(img);
  CHECK(bytes.rfind("P6\n", 0) == 0);
  CHECK(bytes.find("4 4\n255\n") != std::string::npos);
  // header + 4*4*3 payload bytes
  CHECK(bytes.size() == bytes.find("255\n") + 4 + 48);
}

TEST_CASE("base64 encoding matches known vectors") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
}
