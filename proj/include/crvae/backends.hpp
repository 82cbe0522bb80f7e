#pragma once

// Pluggable clients for the three external model services the pipeline talks
// to: an image-captioning model, a chat model, and a phrase-embedding model.
// The first two share one transport (LlmBackend); embeddings get their own
// (PhraseBackend) since deployments rarely co-host them.
//
// Three kinds are built in:
//   mock    - deterministic, in-process; tests and the bundled demo use it.
//   http    - JSON-over-HTTP client (POST /caption, /chat, /embed).
//   command - spawns a local program per request; JSON on stdin/stdout.

#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "crvae/image.hpp"
#include "crvae/types.hpp"

namespace crvae {

struct BackendConfig {
  std::string kind = "mock";  // mock | http | command
  std::string endpoint;       // http kind: e.g. "http://127.0.0.1:8601"
  std::string api_key;        // optional bearer token
  std::string command;        // command kind: program run per request
  std::string model_id = "unspecified";
  double temperature = 0.9;
  int max_tokens = 256;
  int retries = 2;       // extra attempts after the first
  double backoff_s = 0.25;

  void validate() const;  // temperature must lie in [0,1]
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;

  // Captions one frame. `prompt` is the conditional prefix; empty means
  // unconditional captioning.
  virtual std::string caption_image(const ImageBuf& image, const std::string& prompt) = 0;

  // One-shot chat completion at the configured temperature.
  virtual std::string chat(const std::string& prompt) = 0;

  const BackendConfig& config() const { return cfg_; }

 protected:
  explicit LlmBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {}
  BackendConfig cfg_;
};

class PhraseBackend {
 public:
  static constexpr int kDim = 768;

  virtual ~PhraseBackend() = default;

  // One row per phrase, order preserved, kDim columns.
  virtual Matd embed(const std::vector<std::string>& phrases) = 0;

  const BackendConfig& config() const { return cfg_; }

 protected:
  explicit PhraseBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {}
  BackendConfig cfg_;
};

// Deterministic stand-in: replies are synthesized from a hash of the request,
// so identical inputs always produce identical outputs. Tests can also queue
// verbatim replies with push_response(); queued replies are served first.
class MockLlmBackend : public LlmBackend {
 public:
  explicit MockLlmBackend(BackendConfig cfg) : LlmBackend(std::move(cfg)) {}

  std::string caption_image(const ImageBuf& image, const std::string& prompt) override;
  std::string chat(const std::string& prompt) override;

  void push_response(std::string text) { scripted_.push_back(std::move(text)); }

  // Outgoing requests, verbatim, for golden-file capture.
  const std::vector<std::string>& sent_prompts() const { return sent_; }

 private:
  std::deque<std::string> scripted_;
  std::vector<std::string> sent_;
};

// Deterministic unit vectors seeded by each phrase's bytes: equal phrases map
// to equal vectors, distinct phrases to near-orthogonal ones (768 dims).
class MockPhraseBackend : public PhraseBackend {
 public:
  explicit MockPhraseBackend(BackendConfig cfg) : PhraseBackend(std::move(cfg)) {}

  Matd embed(const std::vector<std::string>& phrases) override;
};

std::unique_ptr<LlmBackend> make_llm_backend(const BackendConfig& cfg);
std::unique_ptr<PhraseBackend> make_phrase_backend(const BackendConfig& cfg);

// P6 bytes of an image, as sent to http/command backends (base64-wrapped).
std::string ppm_bytes(const ImageBuf& img);
std::string base64_encode(const std::string& bytes);

}  // namespace crvae
