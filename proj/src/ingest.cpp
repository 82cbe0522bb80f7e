#include "crvae/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "crvae/csv.hpp"

namespace fs = std::filesystem;

namespace crvae {
namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out.push_back(c);
  }
  out += "'";
  return out;
}

std::vector<Frame> frames_from_dir(const fs::path& dir, const IngestOptions& opt) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  std::vector<Frame> frames;
  for (const auto& f : files) {
    ImageBuf img;
    try {
      img = read_ppm(f.string());
    } catch (const ParseError& e) {
      log_warn(std::string("ingest: skipping undecodable frame: ") + e.what());
      continue;
    }
    Frame fr;
    fr.index = static_cast<int>(frames.size());
    fr.timestamp_s = fr.index * opt.rate_s;
    fr.image = bilinear_resize(img, opt.target_h, opt.target_w);
    fr.source_path = f.string();
    frames.push_back(std::move(fr));
  }
  return frames;
}

}  // namespace

std::vector<Frame> sample_frames(const std::string& source, const IngestOptions& opt) {
  if (opt.rate_s <= 0) throw ConfigError("ingest: rate_s must be > 0");
  fs::path src(source);
  if (!fs::exists(src)) throw StageError("ingest: source not readable: " + source);
  if (fs::is_directory(src)) return frames_from_dir(src, opt);

  if (opt.work_dir.empty())
    throw ConfigError("ingest: video sources need a work_dir for extracted frames");
  fs::create_directories(opt.work_dir);
  // 1 frame every rate_s seconds; the tool names frames in decode order so the
  // lexicographic read-back below preserves it.
  std::string pattern = (fs::path(opt.work_dir) / "frame_%06d.ppm").string();
  char fps[64];
  std::snprintf(fps, sizeof(fps), "fps=1/%.6f", opt.rate_s);
  std::string cmd = opt.media_tool + " -hide_banner -loglevel error -i " + shell_quote(source) +
                    " -vf " + fps + " " + shell_quote(pattern) + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw StageError("ingest: cannot launch media tool: " + opt.media_tool);
  std::string output;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe)) output += buf;
  int rc = pclose(pipe);
  if (rc != 0)
    throw StageError("ingest: frame extraction failed (" + opt.media_tool +
                     " exited nonzero): " + output);
  return frames_from_dir(opt.work_dir, opt);
}

TranscriptFormat transcript_format_from_string(const std::string& s) {
  if (s == "timed-json") return TranscriptFormat::TimedJson;
  if (s == "timestamped-text") return TranscriptFormat::TimestampedText;
  throw ConfigError("unknown transcript format: " + s +
                    " (expected timed-json or timestamped-text)");
}

namespace {

std::vector<Segment> parse_timed_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("transcript: cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("transcript: " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw ParseError("transcript: " + path + ": expected a JSON array");
  std::vector<Segment> segs;
  for (size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    if (!rec.is_object() || !rec.contains("text") || !rec.contains("start") ||
        !rec.contains("duration"))
      throw ParseError("transcript: " + path + ": record " + std::to_string(i + 1) +
                       " missing text/start/duration");
    Segment s;
    s.index = static_cast<int>(segs.size());
    try {
      s.start_s = rec.at("start").get<double>();
      s.duration_s = rec.at("duration").get<double>();
      s.text = rec.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("transcript: " + path + ": record " + std::to_string(i + 1) + ": " +
                       e.what());
    }
    if (s.duration_s <= 0)
      throw ParseError("transcript: " + path + ": record " + std::to_string(i + 1) +
                       " has non-positive duration");
    segs.push_back(std::move(s));
  }
  std::stable_sort(segs.begin(), segs.end(),
                   [](const Segment& a, const Segment& b) { return a.start_s < b.start_s; });
  for (size_t i = 0; i < segs.size(); ++i) segs[i].index = static_cast<int>(i);
  return segs;
}

std::vector<Segment> parse_timestamped_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("transcript: cannot open " + path);
  std::vector<Segment> segs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    size_t first = trimmed.find_first_not_of(" \t");
    if (first == std::string::npos) continue;  // blank line
    trimmed = trimmed.substr(first);
    int mm, ss;
    int consumed = 0;
    if (std::sscanf(trimmed.c_str(), "[%d:%d]%n", &mm, &ss, &consumed) != 2 || consumed == 0)
      throw ParseError("transcript: " + path + ": line " + std::to_string(line_no) +
                       ": expected \"[MM:SS] text\"");
    if (mm < 0 || ss < 0 || ss > 59)
      throw ParseError("transcript: " + path + ": line " + std::to_string(line_no) +
                       ": bad timestamp");
    std::string text = trimmed.substr(consumed);
    size_t ts = text.find_first_not_of(" \t");
    text = ts == std::string::npos ? "" : text.substr(ts);
    if (text.empty())
      throw ParseError("transcript: " + path + ": line " + std::to_string(line_no) +
                       ": empty segment text");
    Segment s;
    s.index = static_cast<int>(segs.size());
    s.start_s = mm * 60 + ss;
    s.text = std::move(text);
    segs.push_back(std::move(s));
  }
  // durations: to the next stamp; the tail reuses the previous gap
  for (size_t i = 0; i + 1 < segs.size(); ++i)
    segs[i].duration_s = segs[i + 1].start_s - segs[i].start_s;
  if (!segs.empty()) {
    if (segs.size() >= 2)
      segs.back().duration_s = segs[segs.size() - 2].duration_s;
    else
      segs.back().duration_s = 1.0;
    for (auto& s : segs)
      if (s.duration_s <= 0) s.duration_s = 1.0;  // repeated stamps
  }
  return segs;
}

}  // namespace

std::vector<Segment> parse_transcript(const std::string& path, TranscriptFormat format) {
  return format == TranscriptFormat::TimedJson ? parse_timed_json(path)
                                               : parse_timestamped_text(path);
}

AlignedPairList align_by_timestamp(const std::vector<Frame>& frames,
                                   const std::vector<Segment>& segments) {
  if (frames.empty() || segments.empty())
    throw ContractViolation("align_by_timestamp: empty inputs");
  AlignedPairList out;
  for (const auto& seg : segments) {
    int best = 0;
    double best_d = std::abs(frames[0].timestamp_s - seg.start_s);
    for (size_t i = 1; i < frames.size(); ++i) {
      double d = std::abs(frames[i].timestamp_s - seg.start_s);
      if (d < best_d) {  // strict: ties keep the earlier frame
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    out.pairs.push_back({static_cast<int>(out.pairs.size()), frames[best].index, seg.index});
  }
  return out;
}

std::vector<int> uniform_keep_indices(int window, int keep_num) {
  if (window <= 0 || keep_num <= 0)
    throw ConfigError("align_uniform: window and keep_num must be positive");
  if (keep_num > window) throw ConfigError("align_uniform: keep_num must be <= window");
  std::vector<int> idx(keep_num);
  for (int i = 0; i < keep_num; ++i) idx[i] = ((2 * i + 1) * window) / (2 * keep_num);
  return idx;
}

AlignedPairList align_uniform(const std::vector<Frame>& frames,
                              const std::vector<Segment>& segments, int keep_num, int window) {
  const std::vector<int> local = uniform_keep_indices(window, keep_num);
  std::vector<int> kept;
  for (size_t base = 0; base < frames.size(); base += window)
    for (int li : local) {
      size_t i = base + li;
      if (i < frames.size() && i < base + static_cast<size_t>(window))
        kept.push_back(static_cast<int>(i));
    }
  const size_t n = std::min(kept.size(), segments.size());
  AlignedPairList out;
  for (size_t i = 0; i < n; ++i)
    out.pairs.push_back(
        {static_cast<int>(i), frames[kept[i]].index, segments[i].index});
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows,
                    const std::vector<std::string>& comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("manifest: cannot write " + path);
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "pair_id,frame_path,frame_timestamp_s,segment_index,caption\n";
  for (const auto& r : rows)
    out << csv::join_row({std::to_string(r.pair_id), r.frame_path,
                          csv::format_g17(r.frame_timestamp_s), std::to_string(r.segment_index),
                          r.caption})
        << "\n";
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  csv::Table t = csv::read_file(path);
  if (t.rows.empty()) throw ParseError("manifest: empty file " + path);
  const std::vector<std::string> header = {"pair_id", "frame_path", "frame_timestamp_s",
                                           "segment_index", "caption"};
  if (t.rows[0] != header) throw ParseError("manifest: unexpected header in " + path);
  std::vector<ManifestRow> rows;
  for (size_t i = 1; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (r.size() != 5)
      throw ParseError("manifest: row " + std::to_string(i + 1) + " has " +
                       std::to_string(r.size()) + " fields");
    ManifestRow m;
    m.pair_id = std::stoi(r[0]);
    m.frame_path = r[1];
    m.frame_timestamp_s = std::stod(r[2]);
    m.segment_index = std::stoi(r[3]);
    m.caption = r[4];
    rows.push_back(std::move(m));
  }
  return rows;
}

}  // namespace crvae
