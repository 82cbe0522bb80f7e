#include "crvae/textprep.hpp"

#include <cctype>
#include <fstream>
#include <mutex>
#include <sstream>
#include <unordered_set>

namespace crvae {

EmbeddingTable load_embedding_table(const std::string& path, int dim,
                                    const std::string& language) {
  if (dim <= 0) throw ConfigError("embedding table: dim must be positive");
  std::ifstream in(path);
  if (!in) throw ParseError("embedding table: cannot open " + path);
  EmbeddingTable table(dim, language);
  std::vector<double> flat;  // row-major staging; one Eigen build at the end
  std::vector<double> values;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    values.clear();
    double v;
    while (ss >> v) values.push_back(v);
    if (static_cast<int>(values.size()) != dim)
      throw ParseError("embedding table: line " + std::to_string(line_no) + " of " + path +
                       " has " + std::to_string(values.size()) + " floats, expected " +
                       std::to_string(dim));
    if (table.index_.count(token)) continue;  // first occurrence wins
    table.index_.emplace(token, static_cast<int>(table.tokens_.size()));
    table.tokens_.push_back(token);
    flat.insert(flat.end(), values.begin(), values.end());
  }
  const Eigen::Index n = static_cast<Eigen::Index>(table.tokens_.size());
  table.vectors_.resize(n, dim);
  for (Eigen::Index r = 0; r < n; ++r)
    for (int j = 0; j < dim; ++j) table.vectors_(r, j) = flat[static_cast<size_t>(r) * dim + j];
  return table;
}

std::vector<std::string> tokenize_en(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::isupper(c) ? std::tolower(c) : c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

namespace {

std::unordered_map<std::string, Segmenter>& segmenter_registry() {
  static std::unordered_map<std::string, Segmenter> reg = [] {
    std::unordered_map<std::string, Segmenter> r;
    r.emplace("whitespace", [](const std::string& text) {
      std::vector<std::string> toks;
      std::istringstream ss(text);
      std::string t;
      while (ss >> t) toks.push_back(t);
      return toks;
    });
    return r;
  }();
  return reg;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

bool is_punct_char(const std::string& ch) {
  static const std::unordered_set<std::string> cjk = {
      "，", "。", "！", "？", "、", "；", "：", "“", "”", "‘", "’",
      "（", "）", "《", "》", "【", "】", "…", "—", "·", "「", "」"};
  if (ch.size() == 1) {
    unsigned char c = static_cast<unsigned char>(ch[0]);
    return std::ispunct(c) || std::isspace(c);
  }
  return cjk.count(ch) > 0;
}

}  // namespace

void register_segmenter(const std::string& name, Segmenter fn) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  segmenter_registry()[name] = std::move(fn);
}

Segmenter get_segmenter(const std::string& name) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  auto& reg = segmenter_registry();
  auto it = reg.find(name);
  if (it == reg.end())
    throw ConfigError("no segmenter registered under '" + name +
                      "' (built-in: \"whitespace\")");
  return it->second;
}

std::vector<std::string> segment_zh(const std::string& text, const Segmenter& segmenter) {
  std::vector<std::string> out;
  for (auto& tok : segmenter(text)) {
    bool all_punct = true;
    for (auto& ch : utf8_chars(tok))
      if (!is_punct_char(ch)) {
        all_punct = false;
        break;
      }
    if (!tok.empty() && !all_punct) out.push_back(tok);
  }
  return out;
}

std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    if ((c & 0x80) == 0)
      len = 1;
    else if ((c & 0xE0) == 0xC0)
      len = 2;
    else if ((c & 0xF0) == 0xE0)
      len = 3;
    else if ((c & 0xF8) == 0xF0)
      len = 4;
    if (i + len > s.size()) len = 1;  // truncated sequence: emit byte-wise
    for (size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
        len = 1;  // malformed continuation
        break;
      }
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

EmbeddedCaption embed_tokens(const std::vector<std::string>& tokens,
                             const std::vector<const EmbeddingTable*>& chain, int max_len) {
  if (max_len <= 0) throw ContractViolation("embed_tokens: max_len must be positive");
  if (chain.empty()) throw ContractViolation("embed_tokens: empty table chain");
  const int dim = chain[0]->dim();

  auto lookup = [&](const std::string& tok) -> std::pair<const EmbeddingTable*, int> {
    for (const auto* t : chain) {
      int row = t->find(tok);
      if (row >= 0) return {t, row};
    }
    return {nullptr, -1};
  };

  // expand tokens through the fallback chain into (surface, vector) rows
  std::vector<std::string> surfaces;
  std::vector<Vecd> rows;
  for (const auto& tok : tokens) {
    auto [table, row] = lookup(tok);
    if (table != nullptr) {
      surfaces.push_back(tok);
      rows.push_back(table->vector_of(row));
      continue;
    }
    auto chars = utf8_chars(tok);
    std::vector<std::pair<const EmbeddingTable*, int>> hits;
    bool all_found = !chars.empty();
    for (const auto& ch : chars) {
      auto hit = lookup(ch);
      if (hit.first == nullptr) {
        all_found = false;
        break;
      }
      hits.push_back(hit);
    }
    if (all_found) {
      for (size_t k = 0; k < chars.size(); ++k) {
        surfaces.push_back(chars[k]);
        rows.push_back(hits[k].first->vector_of(hits[k].second));
      }
    } else {
      surfaces.push_back(tok);  // unknown: single zero row
      rows.push_back(Vecd::Zero(dim));
    }
  }

  EmbeddedCaption cap;
  const int real = std::min<int>(static_cast<int>(rows.size()), max_len);
  cap.vectors = Matd::Zero(max_len, dim);
  cap.mask.assign(max_len, 0);
  for (int i = 0; i < real; ++i) {
    cap.tokens.push_back(surfaces[i]);
    cap.vectors.row(i) = rows[i].transpose();
    cap.mask[i] = 1;
  }
  return cap;
}

EmbeddedCaption embed_tokens(const std::vector<std::string>& tokens, const EmbeddingTable& table,
                             int max_len) {
  return embed_tokens(tokens, std::vector<const EmbeddingTable*>{&table}, max_len);
}

}  // namespace crvae
