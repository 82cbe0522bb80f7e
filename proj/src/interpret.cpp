#include "crvae/interpret.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "crvae/csv.hpp"
#include "json.hpp"

namespace crvae {
namespace {

// System block of the tag-request template, one flowed paragraph. The double
// spaces after sentence ends are deliberate; goldens pin every byte.
const char* kTagSystemBlock =
    "Please generate 10 short tags for a series of frames sampled from a YouTube news video "
    "based on the images and captions provided.  Please avoid generic words that describe the "
    "whole video, but emphasize the unique characteristics of these frames.  You may need to "
    "implicitly infer the meanings of the objects in the image description according to the "
    "video context.";

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Strips one leading list marker: "3.", "12)", "-", "*", or "•".
// Returns false if no marker is present.
bool strip_marker(const std::string& line, std::string& item) {
  size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
    size_t j = i;
    while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
    if (j < line.size() && (line[j] == '.' || line[j] == ')')) {
      item = trim(line.substr(j + 1));
      return true;
    }
    return false;
  }
  if (i < line.size() && (line[i] == '-' || line[i] == '*')) {
    item = trim(line.substr(i + 1));
    return true;
  }
  if (i + 3 <= line.size() && line.compare(i, 3, "\xe2\x80\xa2") == 0) {  // •
    item = trim(line.substr(i + 3));
    return true;
  }
  return false;
}

std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return trim(s.substr(1, s.size() - 2));
  return s;
}

std::vector<std::string> dedup_keep_order(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& it : items)
    if (!it.empty() && seen.insert(lower(it)).second) out.push_back(it);
  return out;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> lines;
  std::istringstream ss(s);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::vector<std::string> parse_tags_strict(const std::string& response) {
  std::vector<std::string> items;
  for (const auto& line : split_lines(response)) {
    std::string item;
    if (strip_marker(line, item)) {
      item = strip_quotes(item);
      if (!item.empty()) items.push_back(item);
    }
  }
  return dedup_keep_order(items);
}

std::vector<std::string> parse_tags_loose(const std::string& response) {
  std::vector<std::string> items;
  for (const auto& line : split_lines(response)) {
    std::string item;
    if (!strip_marker(line, item)) item = trim(line);
    item = strip_quotes(item);
    if (item.empty() || item.back() == ':') continue;  // headings like "Tags:"
    items.push_back(item);
  }
  return dedup_keep_order(items);
}

FrameDescription describe_frame(const ImageBuf& image, int pair_id, LlmBackend& backend,
                                bool conditional) {
  FrameDescription d;
  d.pair_id = pair_id;
  d.conditional = conditional;
  d.model_id = backend.config().model_id;
  d.caption = backend.caption_image(image, conditional ? kCaptionPrefix : "");
  if (d.caption.empty()) throw BackendError("caption backend returned an empty caption");
  return d;
}

std::string build_cluster_prompt(const std::vector<std::string>& captions,
                                 const std::vector<std::string>& descriptions) {
  if (captions.empty() && descriptions.empty())
    throw ContractViolation("cluster prompt needs at least one caption or description");
  auto join = [](const std::vector<std::string>& parts) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
      if (i) out += " ";
      out += parts[i];
    }
    return out;
  };
  std::string prompt;
  prompt += "<s> [INST] <<SYS>>\n";
  prompt += kTagSystemBlock;
  prompt += "\n<</SYS>>\n";
  prompt += "Text caption: " + join(captions) + "\n";
  prompt += "Image description: " + join(descriptions) + "\n";
  prompt += "[/INST] </s>";
  return prompt;
}

TagSet generate_tags(int cluster_id, const std::string& prompt, LlmBackend& backend,
                     int max_requests) {
  if (max_requests < 1) throw ConfigError("generate_tags needs max_requests >= 1");
  TagSet set;
  set.cluster_id = cluster_id;
  std::vector<std::string> best;
  std::string best_response;
  for (int attempt = 0; attempt < max_requests; ++attempt) {
    const std::string response = backend.chat(prompt);
    if (!set.raw_response.empty()) set.raw_response += "\n---\n";
    set.raw_response += response;
    std::vector<std::string> tags = parse_tags_strict(response);
    if (tags.size() > best.size() || best_response.empty()) {
      best = tags;
      best_response = response;
    }
    if (best.size() >= 10) break;
  }
  if (best.size() < 10) {
    // pad from a looser read of the most productive response
    std::set<std::string> have;
    for (const auto& t : best) have.insert(lower(t));
    for (const auto& t : parse_tags_loose(best_response)) {
      if (best.size() >= 10) break;
      if (have.insert(lower(t)).second) best.push_back(t);
    }
  }
  if (best.size() >= 10) {
    best.resize(10);
    set.tags = std::move(best);
  } else {
    set.uninterpreted = true;  // raw_response keeps everything we got
  }
  return set;
}

void write_descriptions_csv(const std::string& path,
                            const std::vector<FrameDescription>& descriptions,
                            const std::vector<std::string>& comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot write " + path);
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "pair_id,caption,model_id,conditional\n";
  for (const auto& d : descriptions)
    out << csv::join_row({std::to_string(d.pair_id), d.caption, d.model_id,
                          d.conditional ? "1" : "0"})
        << "\n";
}

std::vector<FrameDescription> read_descriptions_csv(const std::string& path) {
  const auto& rows = csv::read_file(path).rows;
  if (rows.empty() || rows[0] != std::vector<std::string>{"pair_id", "caption", "model_id",
                                                          "conditional"})
    throw ParseError(path + ": not a descriptions file");
  std::vector<FrameDescription> out;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 4)
      throw ParseError(path + ": record " + std::to_string(i) + " has " +
                       std::to_string(rows[i].size()) + " fields, expected 4");
    FrameDescription d;
    d.pair_id = std::stoi(rows[i][0]);
    d.caption = rows[i][1];
    d.model_id = rows[i][2];
    d.conditional = rows[i][3] == "1";
    out.push_back(std::move(d));
  }
  return out;
}

void write_tagsets_json(const std::string& path, const std::vector<TagSet>& sets, uint64_t seed) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : sets)
    arr.push_back({{"cluster_id", s.cluster_id},
                   {"tags", s.tags},
                   {"raw_response", s.raw_response},
                   {"uninterpreted", s.uninterpreted}});
  nlohmann::json doc{{"format", "crvae v1"}, {"seed", seed}, {"clusters", arr}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

std::vector<TagSet> read_tagsets_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("clusters") || !doc["clusters"].is_array())
    throw ParseError(path + ": expected a tag-set document with a \"clusters\" array");
  std::vector<TagSet> out;
  for (const auto& j : doc["clusters"]) {
    TagSet s;
    s.cluster_id = j.at("cluster_id").get<int>();
    s.tags = j.at("tags").get<std::vector<std::string>>();
    s.raw_response = j.value("raw_response", std::string());
    s.uninterpreted = j.value("uninterpreted", false);
    if (!s.uninterpreted && s.tags.size() != 10)
      throw ParseError(path + ": cluster " + std::to_string(s.cluster_id) +
                       " has " + std::to_string(s.tags.size()) + " tags, expected 10");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace crvae
