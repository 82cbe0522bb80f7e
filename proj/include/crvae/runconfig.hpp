#pragma once

// One JSON config drives every pipeline stage. Relative paths inside the
// file resolve against the file's own directory, so configs can travel with
// their data. Precedence: flags > environment > file > defaults.

#include <map>
#include <string>
#include <vector>

#include "crvae/backends.hpp"
#include "crvae/model.hpp"

namespace crvae {

struct EmbeddingSpec {
  std::string path;
  int dim = 300;
  std::string language;
};

struct RunConfig {
  std::string run_dir = "run";
  std::uint64_t seed = 0;  // mirrored into model.seed on load
  std::string language = "en";

  // frames
  std::string frames_source;  // video file or directory of .ppm frames
  double rate_s = 2.0;
  std::string media_tool = "ffmpeg";

  // transcript
  std::string transcript_path;
  std::string transcript_format = "timed-json";

  // alignment
  std::string alignment_mode = "timestamp";  // timestamp | uniform
  int keep_num = 5;
  int window = 21;

  // text
  std::vector<EmbeddingSpec> embeddings;  // lookup chain, first hit wins
  std::string segmenter = "whitespace";

  ModelConfig model;

  // clustering
  int k_min = 2;
  int k_max = 10;
  int restarts = 10;
  int chosen_k = 0;  // 0 = not chosen yet
  double perplexity = 30.0;

  BackendConfig llm_backend;
  BackendConfig phrase_backend;

  // interpret
  bool conditional_captions = false;
  int tag_retries = 2;  // extra chat attempts when fewer than 10 tags parse

  // compare
  std::string other_run;  // run directory of the other side; empty = self
  std::map<int, std::string> cluster_names;
  std::map<int, std::string> other_cluster_names;
  std::string plot_format = "svg";  // svg | ppm

  void validate() const;
};

// Parses the file, resolves relative paths, applies environment overrides
// (CRVAE_LLM_ENDPOINT, CRVAE_LLM_API_KEY, CRVAE_PHRASE_ENDPOINT,
// CRVAE_PHRASE_API_KEY), and validates.
RunConfig load_run_config(const std::string& path);

void apply_env_overrides(RunConfig& cfg);

std::string run_config_to_json(const RunConfig& cfg);

}  // namespace crvae
