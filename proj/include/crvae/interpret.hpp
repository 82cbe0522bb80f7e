#pragma once

// Turns clusters into human-readable form: per-frame captions from the
// vision-captioning backend, then a 10-tag summary per cluster from the chat
// backend. Prompt construction is byte-stable so outgoing requests can be
// golden-file tested.

#include <map>
#include <string>
#include <vector>

#include "crvae/backends.hpp"
#include "crvae/image.hpp"

namespace crvae {

// Conditional captioning prefix, byte-exact including the trailing space.
inline constexpr const char* kCaptionPrefix = "A news photo of ";

struct FrameDescription {
  int pair_id = -1;
  std::string caption;  // response verbatim; non-empty
  std::string model_id;
  bool conditional = false;
};

struct TagSet {
  int cluster_id = -1;
  std::vector<std::string> tags;  // exactly 10 unless uninterpreted
  std::string raw_response;       // every response received, retained verbatim
  bool uninterpreted = false;
};

// Captions one frame. Conditional mode sends kCaptionPrefix, unconditional
// mode sends the bare image. Transport failures propagate as BackendError;
// the pipeline downgrades them to per-frame warnings.
FrameDescription describe_frame(const ImageBuf& image, int pair_id, LlmBackend& backend,
                                bool conditional);

// Fills the tag-request template with the cluster's captions (pair-id order)
// and frame descriptions. Throws ContractViolation if both lists are empty.
std::string build_cluster_prompt(const std::vector<std::string>& captions,
                                 const std::vector<std::string>& descriptions);

// Asks the chat backend for tags and parses a 10-item list out of the reply:
// strict list syntax first, up to max_requests attempts, then looser
// line-based padding. Persistent failure marks the set uninterpreted.
TagSet generate_tags(int cluster_id, const std::string& prompt, LlmBackend& backend,
                     int max_requests = 3);

// List-item parsers, exposed for tests. Strict requires a numbered or
// bulleted item per line; loose takes any non-empty line that is not a
// heading. Both trim and deduplicate (case-insensitive), preserving order.
std::vector<std::string> parse_tags_strict(const std::string& response);
std::vector<std::string> parse_tags_loose(const std::string& response);

void write_descriptions_csv(const std::string& path,
                            const std::vector<FrameDescription>& descriptions,
                            const std::vector<std::string>& comments);
std::vector<FrameDescription> read_descriptions_csv(const std::string& path);

void write_tagsets_json(const std::string& path, const std::vector<TagSet>& sets, uint64_t seed);
std::vector<TagSet> read_tagsets_json(const std::string& path);

}  // namespace crvae
