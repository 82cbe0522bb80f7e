#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "crvae/types.hpp"

namespace crvae {

// Token -> vector table in whitespace-delimited text format (one line = token
// followed by `dim` floats). Immutable after load; duplicate tokens keep the
// first occurrence. Lookup through a chain of tables never throws.
class EmbeddingTable {
 public:
  EmbeddingTable(int dim, std::string language) : dim_(dim), language_(std::move(language)) {}

  int dim() const { return dim_; }
  const std::string& language() const { return language_; }
  Eigen::Index size() const { return vectors_.rows(); }
  const Matd& vectors() const { return vectors_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // -1 when absent
  int find(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
  }
  Eigen::Ref<const Vecd> vector_of(int row) const { return vectors_.row(row).transpose(); }

 private:
  friend EmbeddingTable load_embedding_table(const std::string& path, int dim,
                                             const std::string& language);
  int dim_;
  std::string language_;
  std::vector<std::string> tokens_;
  Matd vectors_;  // (n x dim)
  std::unordered_map<std::string, int> index_;
};

EmbeddingTable load_embedding_table(const std::string& path, int dim,
                                    const std::string& language = "");

// Lowercased word tokens: maximal runs of ASCII alphanumerics or non-ASCII
// bytes; ASCII punctuation separates and is dropped.
std::vector<std::string> tokenize_en(const std::string& text);

// Pluggable word segmenters for languages without whitespace boundaries.
using Segmenter = std::function<std::vector<std::string>(const std::string&)>;
void register_segmenter(const std::string& name, Segmenter fn);
// throws ConfigError when the name is not registered ("whitespace" is built in)
Segmenter get_segmenter(const std::string& name);

// Runs the segmenter, then filters tokens made entirely of punctuation
// (CJK-style marks included).
std::vector<std::string> segment_zh(const std::string& text, const Segmenter& segmenter);

// Splits a UTF-8 string into codepoint-sized substrings (bytes of invalid
// sequences come back individually).
std::vector<std::string> utf8_chars(const std::string& s);

struct EmbeddedCaption {
  std::vector<std::string> tokens;  // surface form per real row (post fallback expansion)
  Matd vectors;                     // (max_len x dim); pad rows are zero
  std::vector<char> mask;           // max_len; 1 = real token
};

// Per token: first table in the chain containing it wins; unknown tokens are
// split into characters if every character resolves somewhere in the chain;
// otherwise the token contributes one zero row. Result truncated/padded to
// max_len.
EmbeddedCaption embed_tokens(const std::vector<std::string>& tokens,
                             const std::vector<const EmbeddingTable*>& chain, int max_len);
EmbeddedCaption embed_tokens(const std::vector<std::string>& tokens, const EmbeddingTable& table,
                             int max_len);

}  // namespace crvae
