#include "crvae/runconfig.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "crvae/checkpoint.hpp"
#include "crvae/ingest.hpp"
#include "json.hpp"

namespace crvae {
namespace {

using nlohmann::json;

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (base / path).lexically_normal().string();
}

BackendConfig backend_from(const json& j) {
  BackendConfig b;
  b.kind = j.value("kind", b.kind);
  b.endpoint = j.value("endpoint", b.endpoint);
  b.api_key = j.value("api_key", b.api_key);
  b.command = j.value("command", b.command);
  b.model_id = j.value("model_id", b.model_id);
  b.temperature = j.value("temperature", b.temperature);
  b.max_tokens = j.value("max_tokens", b.max_tokens);
  b.retries = j.value("retries", b.retries);
  b.backoff_s = j.value("backoff_s", b.backoff_s);
  return b;
}

json backend_to(const BackendConfig& b) {
  return json{{"kind", b.kind},           {"endpoint", b.endpoint},
              {"api_key", b.api_key},     {"command", b.command},
              {"model_id", b.model_id},   {"temperature", b.temperature},
              {"max_tokens", b.max_tokens}, {"retries", b.retries},
              {"backoff_s", b.backoff_s}};
}

std::map<int, std::string> names_from(const json& j) {
  std::map<int, std::string> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    try {
      out[std::stoi(it.key())] = it.value().get<std::string>();
    } catch (const std::exception&) {
      throw ConfigError("cluster_names keys must be integer cluster ids, got '" + it.key() + "'");
    }
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (run_dir.empty()) throw ConfigError("run_dir must not be empty");
  if (rate_s <= 0) throw ConfigError("frames.rate_s must be positive");
  if (alignment_mode != "timestamp" && alignment_mode != "uniform")
    throw ConfigError("alignment.mode must be 'timestamp' or 'uniform', got '" + alignment_mode +
                      "'");
  if (alignment_mode == "uniform" && (keep_num <= 0 || window <= 0 || keep_num > window))
    throw ConfigError("uniform alignment needs 0 < keep_num <= window");
  if (!transcript_path.empty())
    transcript_format_from_string(transcript_format);  // throws on bad value
  for (const auto& e : embeddings) {
    if (e.path.empty()) throw ConfigError("embeddings entries need a path");
    if (e.dim <= 0) throw ConfigError("embeddings dim must be positive");
  }
  if (!embeddings.empty() && embeddings.front().dim != model.embed_dim)
    throw ConfigError("model.embed_dim (" + std::to_string(model.embed_dim) +
                      ") must match the first embedding table dim (" +
                      std::to_string(embeddings.front().dim) + ")");
  model.validate();
  if (k_min < 1) throw ConfigError("cluster.k_min must be >= 1");
  if (k_max < k_min) throw ConfigError("cluster.k_max must be >= k_min");
  if (restarts < 1) throw ConfigError("cluster.restarts must be >= 1");
  if (perplexity <= 0) throw ConfigError("cluster.perplexity must be positive");
  llm_backend.validate();
  phrase_backend.validate();
  if (tag_retries < 0) throw ConfigError("interpret.tag_retries must be non-negative");
  if (plot_format != "svg" && plot_format != "ppm")
    throw ConfigError("compare.plot_format must be 'svg' or 'ppm'");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError(path + ": config must be a JSON object");

  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  RunConfig cfg;
  cfg.run_dir = resolve(base, j.value("run_dir", cfg.run_dir));
  cfg.seed = j.value("seed", cfg.seed);
  cfg.language = j.value("language", cfg.language);

  if (j.contains("frames")) {
    const auto& f = j["frames"];
    cfg.frames_source = resolve(base, f.value("source", std::string()));
    cfg.rate_s = f.value("rate_s", cfg.rate_s);
    cfg.media_tool = f.value("media_tool", cfg.media_tool);
  }
  if (j.contains("transcript")) {
    const auto& t = j["transcript"];
    cfg.transcript_path = resolve(base, t.value("path", std::string()));
    cfg.transcript_format = t.value("format", cfg.transcript_format);
  }
  if (j.contains("alignment")) {
    const auto& a = j["alignment"];
    cfg.alignment_mode = a.value("mode", cfg.alignment_mode);
    cfg.keep_num = a.value("keep_num", cfg.keep_num);
    cfg.window = a.value("window", cfg.window);
  }
  if (j.contains("embeddings")) {
    for (const auto& e : j["embeddings"]) {
      EmbeddingSpec spec;
      spec.path = resolve(base, e.value("path", std::string()));
      spec.dim = e.value("dim", spec.dim);
      spec.language = e.value("language", spec.language);
      cfg.embeddings.push_back(std::move(spec));
    }
  }
  cfg.segmenter = j.value("segmenter", cfg.segmenter);
  if (j.contains("model")) cfg.model = model_config_from_json(j["model"].dump());
  if (j.contains("cluster")) {
    const auto& c = j["cluster"];
    cfg.k_min = c.value("k_min", cfg.k_min);
    cfg.k_max = c.value("k_max", cfg.k_max);
    cfg.restarts = c.value("restarts", cfg.restarts);
    cfg.chosen_k = c.value("chosen_k", cfg.chosen_k);
    cfg.perplexity = c.value("perplexity", cfg.perplexity);
  }
  if (j.contains("llm_backend")) cfg.llm_backend = backend_from(j["llm_backend"]);
  if (j.contains("phrase_backend")) cfg.phrase_backend = backend_from(j["phrase_backend"]);
  if (j.contains("interpret")) {
    const auto& i = j["interpret"];
    cfg.conditional_captions = i.value("conditional", cfg.conditional_captions);
    cfg.tag_retries = i.value("tag_retries", cfg.tag_retries);
  }
  if (j.contains("compare")) {
    const auto& c = j["compare"];
    cfg.other_run = resolve(base, c.value("other_run", std::string()));
    if (c.contains("cluster_names")) cfg.cluster_names = names_from(c["cluster_names"]);
    if (c.contains("other_cluster_names"))
      cfg.other_cluster_names = names_from(c["other_cluster_names"]);
    cfg.plot_format = c.value("plot_format", cfg.plot_format);
  }

  cfg.model.seed = cfg.seed;
  apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

void apply_env_overrides(RunConfig& cfg) {
  if (const char* v = std::getenv("CRVAE_LLM_ENDPOINT")) cfg.llm_backend.endpoint = v;
  if (const char* v = std::getenv("CRVAE_LLM_API_KEY")) cfg.llm_backend.api_key = v;
  if (const char* v = std::getenv("CRVAE_PHRASE_ENDPOINT")) cfg.phrase_backend.endpoint = v;
  if (const char* v = std::getenv("CRVAE_PHRASE_API_KEY")) cfg.phrase_backend.api_key = v;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json names_a, names_b;
  for (const auto& [id, name] : cfg.cluster_names) names_a[std::to_string(id)] = name;
  for (const auto& [id, name] : cfg.other_cluster_names) names_b[std::to_string(id)] = name;
  json embs = json::array();
  for (const auto& e : cfg.embeddings)
    embs.push_back({{"path", e.path}, {"dim", e.dim}, {"language", e.language}});
  json j{
      {"run_dir", cfg.run_dir},
      {"seed", cfg.seed},
      {"language", cfg.language},
      {"frames",
       {{"source", cfg.frames_source}, {"rate_s", cfg.rate_s}, {"media_tool", cfg.media_tool}}},
      {"transcript", {{"path", cfg.transcript_path}, {"format", cfg.transcript_format}}},
      {"alignment",
       {{"mode", cfg.alignment_mode}, {"keep_num", cfg.keep_num}, {"window", cfg.window}}},
      {"embeddings", embs},
      {"segmenter", cfg.segmenter},
      {"model", nlohmann::json::parse(model_config_to_json(cfg.model))},
      {"cluster",
       {{"k_min", cfg.k_min},
        {"k_max", cfg.k_max},
        {"restarts", cfg.restarts},
        {"chosen_k", cfg.chosen_k},
        {"perplexity", cfg.perplexity}}},
      {"llm_backend", backend_to(cfg.llm_backend)},
      {"phrase_backend", backend_to(cfg.phrase_backend)},
      {"interpret",
       {{"conditional", cfg.conditional_captions}, {"tag_retries", cfg.tag_retries}}},
      {"compare",
       {{"other_run", cfg.other_run},
        {"cluster_names", names_a},
        {"other_cluster_names", names_b},
        {"plot_format", cfg.plot_format}}},
  };
  return j.dump(2);
}

}  // namespace crvae
