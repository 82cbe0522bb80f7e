#pragma once

#include <string>
#include <vector>

#include "crvae/image.hpp"
#include "crvae/types.hpp"

namespace crvae {

struct Frame {
  int index = 0;
  double timestamp_s = 0;
  ImageBuf image;
  std::string source_path;
};

struct Segment {
  int index = 0;
  double start_s = 0;
  double duration_s = 0;
  std::string text;
};

struct AlignedPair {
  int pair_id = 0;
  int frame_index = 0;
  int segment_index = 0;
};

struct AlignedPairList {
  std::vector<AlignedPair> pairs;
  std::string source_lang;
  std::string manifest_path;
};

struct IngestOptions {
  double rate_s = 2.0;
  int target_h = 120;
  int target_w = 200;
  // External decoder used for video files; a directory of .ppm frames (sorted
  // lexicographically, timestamps synthesized at rate_s) bypasses it.
  std::string media_tool = "ffmpeg";
  std::string work_dir;  // where extracted frames land (video sources only)
};

// Directory source: every .ppm inside, sorted by name; frame k gets timestamp
// k*rate_s. Video source: frames extracted at 1/rate_s via the media tool
// into work_dir, then read back the same way. Frames are bilinearly resized
// to (target_h, target_w). Unreadable source -> StageError; an undecodable
// frame is skipped with a warning and indices stay contiguous.
std::vector<Frame> sample_frames(const std::string& source, const IngestOptions& opt);

enum class TranscriptFormat { TimedJson, TimestampedText };

// TimedJson: array of {"text": str, "start": float, "duration": float}.
// TimestampedText: lines of "[MM:SS] free text"; each stamped line is one
// segment whose duration runs to the next stamp (the last one reuses the
// previous duration, or 1s for a single segment).
std::vector<Segment> parse_transcript(const std::string& path, TranscriptFormat format);
TranscriptFormat transcript_format_from_string(const std::string& s);

// One pair per segment: the frame whose timestamp is nearest the segment
// start, ties toward the earlier frame.
AlignedPairList align_by_timestamp(const std::vector<Frame>& frames,
                                   const std::vector<Segment>& segments);

// Kept local indices within each consecutive `window`-frame block, for
// i in [0, keep_num): ((2i+1)*window) / (2*keep_num)  — integer division.
std::vector<int> uniform_keep_indices(int window, int keep_num);

// Downsample frames blockwise with uniform_keep_indices, then pair kept
// frames with segments in rank order, truncating to the shorter side.
AlignedPairList align_uniform(const std::vector<Frame>& frames,
                              const std::vector<Segment>& segments, int keep_num, int window);

struct ManifestRow {
  int pair_id = 0;
  std::string frame_path;
  double frame_timestamp_s = 0;
  int segment_index = 0;
  std::string caption;
};

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows,
                    const std::vector<std::string>& comments);
std::vector<ManifestRow> read_manifest(const std::string& path);

}  // namespace crvae
