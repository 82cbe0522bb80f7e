#include "crvae/backends.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace crvae {

void BackendConfig::validate() const {
  if (!(temperature >= 0.0 && temperature <= 1.0))
    throw ConfigError("backend temperature must lie in [0,1], got " + std::to_string(temperature));
  if (kind != "mock" && kind != "http" && kind != "command")
    throw ConfigError("unknown backend kind '" + kind + "' (expected mock, http, or command)");
  if (kind == "http" && endpoint.empty())
    throw ConfigError("http backend requires an endpoint");
  if (kind == "command" && command.empty())
    throw ConfigError("command backend requires a command");
  if (max_tokens <= 0) throw ConfigError("backend max_tokens must be positive");
  if (retries < 0) throw ConfigError("backend retries must be non-negative");
}

std::string ppm_bytes(const ImageBuf& img) {
  std::ostringstream out;
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(img.at(r, c, ch), 0.0, 1.0);
        out.put(static_cast<char>(std::lround(v * 255.0)));
      }
  return out.str();
}

std::string base64_encode(const std::string& bytes) {
  static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 2 < bytes.size()) {
    const uint32_t n = (static_cast<uint8_t>(bytes[i]) << 16) |
                       (static_cast<uint8_t>(bytes[i + 1]) << 8) |
                       static_cast<uint8_t>(bytes[i + 2]);
    out.push_back(tbl[(n >> 18) & 63]);
    out.push_back(tbl[(n >> 12) & 63]);
    out.push_back(tbl[(n >> 6) & 63]);
    out.push_back(tbl[n & 63]);
    i += 3;
  }
  if (i + 1 == bytes.size()) {
    const uint32_t n = static_cast<uint8_t>(bytes[i]) << 16;
    out.push_back(tbl[(n >> 18) & 63]);
    out.push_back(tbl[(n >> 12) & 63]);
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const uint32_t n =
        (static_cast<uint8_t>(bytes[i]) << 16) | (static_cast<uint8_t>(bytes[i + 1]) << 8);
    out.push_back(tbl[(n >> 18) & 63]);
    out.push_back(tbl[(n >> 12) & 63]);
    out.push_back(tbl[(n >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

namespace {

uint64_t hash_bytes(const std::string& s, uint64_t seed) {
  uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
  for (unsigned char c : s) h = splitmix64(h + c);
  return h;
}

// -------------------------------------------------------------------------
// mock

const char* kMockSubjects[] = {"a reporter", "a crowd",  "a delegate", "an official",
                               "a vehicle",  "a banner", "a building", "a speaker"};
const char* kMockSettings[] = {"outside a courthouse", "at a press briefing", "on a city street",
                               "near a stadium",       "inside a studio",     "at an airport",
                               "beside a podium",      "in a public square"};

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; }

// Distinct lowercase content words of a text slot, order of first appearance.
std::vector<std::string> harvest_words(const std::string& text) {
  static const std::set<std::string> kStop = {"the", "and",  "with", "that", "this", "from",
                                              "for", "are",  "was",  "has",  "have", "you",
                                              "not", "its",  "a",    "an",   "of",   "in",
                                              "to",  "is",   "on",   "at",   "by",   "it"};
  std::vector<std::string> out;
  std::set<std::string> seen;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word_char(text[i])) ++i;
    size_t j = i;
    while (j < text.size() && is_word_char(text[j])) ++j;
    if (j > i) {
      std::string w = text.substr(i, j - i);
      for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (w.size() >= 3 && !kStop.count(w) && seen.insert(w).second) out.push_back(w);
    }
    i = j;
  }
  return out;
}

std::string slot_between(const std::string& s, const std::string& from, const std::string& to) {
  const size_t a = s.find(from);
  if (a == std::string::npos) return "";
  const size_t start = a + from.size();
  const size_t b = s.find(to, start);
  return s.substr(start, b == std::string::npos ? std::string::npos : b - start);
}

// -------------------------------------------------------------------------
// http

struct ParsedEndpoint {
  std::string host;
  int port = 80;
  std::string prefix;  // path prepended to /caption etc., no trailing slash
};

ParsedEndpoint parse_endpoint(const std::string& url) {
  if (url.rfind("https://", 0) == 0)
    throw ConfigError("https endpoints are not supported by this build; use http://");
  if (url.rfind("http://", 0) != 0)
    throw ConfigError("backend endpoint must start with http://, got '" + url + "'");
  std::string rest = url.substr(7);
  ParsedEndpoint ep;
  const size_t slash = rest.find('/');
  std::string hostport = rest.substr(0, slash);
  if (slash != std::string::npos) {
    ep.prefix = rest.substr(slash);
    while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  }
  const size_t colon = hostport.find(':');
  if (colon != std::string::npos) {
    ep.host = hostport.substr(0, colon);
    try {
      ep.port = std::stoi(hostport.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad port in backend endpoint '" + url + "'");
    }
  } else {
    ep.host = hostport;
  }
  if (ep.host.empty()) throw ConfigError("backend endpoint has no host: '" + url + "'");
  return ep;
}

// POSTs JSON with retry/backoff; returns the parsed response body.
nlohmann::json post_json(const BackendConfig& cfg, const std::string& path,
                         const nlohmann::json& body) {
  const ParsedEndpoint ep = parse_endpoint(cfg.endpoint);
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::duration<double>(
          cfg.backoff_s * static_cast<double>(1 << (attempt - 1))));
    httplib::Client cli(ep.host, ep.port);
    cli.set_connection_timeout(10, 0);
    cli.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
    auto res = cli.Post(ep.prefix + path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      continue;
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("bad response JSON: ") + e.what();
    }
  }
  throw BackendError("POST " + ep.prefix + path + " failed after " +
                     std::to_string(cfg.retries + 1) + " attempt(s): " + last_error);
}

std::string require_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string())
    throw BackendError(where + " response is missing string field \"" + key + "\"");
  return j[key].get<std::string>();
}

class HttpLlmBackend : public LlmBackend {
 public:
  explicit HttpLlmBackend(BackendConfig cfg) : LlmBackend(std::move(cfg)) {}

  std::string caption_image(const ImageBuf& image, const std::string& prompt) override {
    nlohmann::json req{{"model", cfg_.model_id},
                       {"image_b64", base64_encode(ppm_bytes(image))},
                       {"prompt", prompt},
                       {"max_tokens", cfg_.max_tokens}};
    return require_string(post_json(cfg_, "/caption", req), "caption", "/caption");
  }

  std::string chat(const std::string& prompt) override {
    nlohmann::json req{{"model", cfg_.model_id},
                       {"prompt", prompt},
                       {"temperature", cfg_.temperature},
                       {"max_tokens", cfg_.max_tokens}};
    return require_string(post_json(cfg_, "/chat", req), "text", "/chat");
  }
};

class HttpPhraseBackend : public PhraseBackend {
 public:
  explicit HttpPhraseBackend(BackendConfig cfg) : PhraseBackend(std::move(cfg)) {}

  Matd embed(const std::vector<std::string>& phrases) override {
    if (phrases.empty()) return Matd(0, kDim);
    nlohmann::json req{{"model", cfg_.model_id}, {"phrases", phrases}};
    nlohmann::json res = post_json(cfg_, "/embed", req);
    if (!res.contains("vectors") || !res["vectors"].is_array() ||
        res["vectors"].size() != phrases.size())
      throw BackendError("/embed response must carry one vector per phrase");
    Matd out(phrases.size(), kDim);
    for (size_t i = 0; i < phrases.size(); ++i) {
      const auto& row = res["vectors"][i];
      if (!row.is_array() || row.size() != static_cast<size_t>(kDim))
        throw BackendError("/embed vector " + std::to_string(i) + " is not length " +
                           std::to_string(kDim));
      for (int d = 0; d < kDim; ++d) out(static_cast<Eigen::Index>(i), d) = row[d].get<double>();
    }
    if (!out.allFinite()) throw BackendError("/embed returned non-finite values");
    return out;
  }
};

// -------------------------------------------------------------------------
// command

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s)
    if (c == '\'')
      out += "'\\''";
    else
      out.push_back(c);
  out += "'";
  return out;
}

std::atomic<uint64_t> g_cmd_counter{0};

// Runs cfg.command once with the request JSON on stdin, expecting a response
// JSON on stdout (same schema as the http kind, plus an "op" discriminator).
nlohmann::json run_command(const BackendConfig& cfg, const nlohmann::json& req) {
  namespace fs = std::filesystem;
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::duration<double>(
          cfg.backoff_s * static_cast<double>(1 << (attempt - 1))));
    const uint64_t n = g_cmd_counter.fetch_add(1);
    const fs::path in =
        fs::temp_directory_path() / ("crvae_cmd_" + std::to_string(n) + "_in.json");
    const fs::path out =
        fs::temp_directory_path() / ("crvae_cmd_" + std::to_string(n) + "_out.json");
    {
      std::ofstream f(in, std::ios::binary);
      f << req.dump();
    }
    const std::string cmdline =
        cfg.command + " < " + shell_quote(in.string()) + " > " + shell_quote(out.string());
    const int rc = std::system(cmdline.c_str());
    nlohmann::json parsed;
    bool ok = false;
    if (rc == 0) {
      std::ifstream f(out, std::ios::binary);
      std::stringstream buf;
      buf << f.rdbuf();
      try {
        parsed = nlohmann::json::parse(buf.str());
        ok = true;
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("bad response JSON: ") + e.what();
      }
    } else {
      last_error = "command exited with status " + std::to_string(rc);
    }
    std::error_code ec;
    fs::remove(in, ec);
    fs::remove(out, ec);
    if (ok) return parsed;
  }
  throw BackendError("backend command failed after " + std::to_string(cfg.retries + 1) +
                     " attempt(s): " + last_error);
}

class CommandLlmBackend : public LlmBackend {
 public:
  explicit CommandLlmBackend(BackendConfig cfg) : LlmBackend(std::move(cfg)) {}

  std::string caption_image(const ImageBuf& image, const std::string& prompt) override {
    nlohmann::json req{{"op", "caption"},
                       {"model", cfg_.model_id},
                       {"image_b64", base64_encode(ppm_bytes(image))},
                       {"prompt", prompt},
                       {"max_tokens", cfg_.max_tokens}};
    return require_string(run_command(cfg_, req), "caption", "caption");
  }

  std::string chat(const std::string& prompt) override {
    nlohmann::json req{{"op", "chat"},
                       {"model", cfg_.model_id},
                       {"prompt", prompt},
                       {"temperature", cfg_.temperature},
                       {"max_tokens", cfg_.max_tokens}};
    return require_string(run_command(cfg_, req), "text", "chat");
  }
};

class CommandPhraseBackend : public PhraseBackend {
 public:
  explicit CommandPhraseBackend(BackendConfig cfg) : PhraseBackend(std::move(cfg)) {}

  Matd embed(const std::vector<std::string>& phrases) override {
    if (phrases.empty()) return Matd(0, kDim);
    nlohmann::json req{{"op", "embed"}, {"model", cfg_.model_id}, {"phrases", phrases}};
    nlohmann::json res = run_command(cfg_, req);
    if (!res.contains("vectors") || !res["vectors"].is_array() ||
        res["vectors"].size() != phrases.size())
      throw BackendError("embed response must carry one vector per phrase");
    Matd out(phrases.size(), kDim);
    for (size_t i = 0; i < phrases.size(); ++i) {
      const auto& row = res["vectors"][i];
      if (!row.is_array() || row.size() != static_cast<size_t>(kDim))
        throw BackendError("embed vector " + std::to_string(i) + " is not length " +
                           std::to_string(kDim));
      for (int d = 0; d < kDim; ++d) out(static_cast<Eigen::Index>(i), d) = row[d].get<double>();
    }
    if (!out.allFinite()) throw BackendError("embed returned non-finite values");
    return out;
  }
};

}  // namespace

std::string MockLlmBackend::caption_image(const ImageBuf& image, const std::string& prompt) {
  sent_.push_back(prompt);
  if (!scripted_.empty()) {
    std::string r = std::move(scripted_.front());
    scripted_.pop_front();
    return r;
  }
  const uint64_t h = hash_bytes(ppm_bytes(image), hash_bytes(prompt, 0));
  std::ostringstream out;
  if (!prompt.empty()) out << prompt;
  out << kMockSubjects[h % 8] << " " << kMockSettings[(h >> 8) % 8];
  return out.str();
}

std::string MockLlmBackend::chat(const std::string& prompt) {
  sent_.push_back(prompt);
  if (!scripted_.empty()) {
    std::string r = std::move(scripted_.front());
    scripted_.pop_front();
    return r;
  }
  // Tags echo the content slots, never the instruction block, so downstream
  // similarity between related clusters stays meaningful in mock runs.
  std::vector<std::string> words;
  {
    std::string slot = slot_between(prompt, "Text caption:", "Image description:");
    std::string slot2 = slot_between(prompt, "Image description:", "[/INST]");
    if (slot.empty() && slot2.empty())
      words = harvest_words(prompt);
    else {
      words = harvest_words(slot);
      for (auto& w : harvest_words(slot2))
        if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }
  }
  const uint64_t h = hash_bytes(prompt, 1);
  std::ostringstream out;
  std::set<std::string> used;
  int emitted = 0;
  for (size_t i = 0; emitted < 10; ++i) {
    std::string tag;
    if (i < words.size()) {
      tag = words[i];
      const size_t partner = (i + 1 + (h >> (i % 32)) % 3) % words.size();
      if (partner != i && words.size() > 1) tag += " " + words[partner];
    } else {
      tag = "scene detail " + std::to_string(i - words.size() + 1);
    }
    if (!used.insert(tag).second) continue;
    ++emitted;
    out << emitted << ". " << tag << "\n";
  }
  return out.str();
}

Matd MockPhraseBackend::embed(const std::vector<std::string>& phrases) {
  Matd out(phrases.size(), kDim);
  for (size_t i = 0; i < phrases.size(); ++i) {
    Rng rng(hash_bytes(phrases[i], 2));
    VecX<double> v = rng.randn<double>(kDim, 1).col(0);
    out.row(static_cast<Eigen::Index>(i)) = (v / v.norm()).transpose();
  }
  return out;
}

std::unique_ptr<LlmBackend> make_llm_backend(const BackendConfig& cfg) {
  cfg.validate();
  if (cfg.kind == "mock") return std::make_unique<MockLlmBackend>(cfg);
  if (cfg.kind == "http") return std::make_unique<HttpLlmBackend>(cfg);
  return std::make_unique<CommandLlmBackend>(cfg);
}

std::unique_ptr<PhraseBackend> make_phrase_backend(const BackendConfig& cfg) {
  cfg.validate();
  if (cfg.kind == "mock") return std::make_unique<MockPhraseBackend>(cfg);
  if (cfg.kind == "http") return std::make_unique<HttpPhraseBackend>(cfg);
  return std::make_unique<CommandPhraseBackend>(cfg);
}

}  // namespace crvae
