#include "crvae/synth.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "crvae/csv.hpp"
#include "crvae/image.hpp"
#include "crvae/textprep.hpp"
#include "json.hpp"

namespace crvae {
namespace {

constexpr int kScenes = 4;
constexpr int kFramesPerScene = 8;
constexpr int kImgH = 48;
constexpr int kImgW = 80;

// Four scenes with disjoint vocabularies so clusters separate in both the
// image and the text paths.  Within a scene the chyron repeats verbatim:
// any caption difference would have to be reconstructed, which pushes
// same-scene latents apart and muddies the demo clustering.
const char* kSceneCaption[kScenes] = {
    "the judge announced a courthouse verdict on appeal",
    "the storm flooded the coastal town overnight",
    "the home team scored twice at the packed stadium",
    "stocks rallied as trading opened higher this morning"};

const double kSceneBg[kScenes][3] = {
    {0.20, 0.25, 0.55}, {0.15, 0.45, 0.45}, {0.20, 0.50, 0.20}, {0.50, 0.30, 0.15}};
const double kSceneFg[kScenes][3] = {
    {0.95, 0.85, 0.30}, {0.90, 0.90, 0.95}, {0.95, 0.40, 0.35}, {0.30, 0.80, 0.90}};

// Scene backdrop plus a marker block that slides with the frame index; the
// scene is recoverable from color alone, the frame from geometry.
ImageBuf render_frame(int scene, int frame, std::uint64_t seed) {
  ImageBuf img(kImgH, kImgW);
  Rng rng(splitmix64(seed ^ (static_cast<std::uint64_t>(scene) << 8) ^
                     static_cast<std::uint64_t>(frame)));
  for (int r = 0; r < kImgH; ++r)
    for (int c = 0; c < kImgW; ++c) {
      const double shade = 1.0 - 0.15 * (static_cast<double>(r) / kImgH);
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = kSceneBg[scene][ch] * shade;
    }
  // horizon band, scene-specific height
  const int band = 8 + 6 * scene;
  for (int c = 0; c < kImgW; ++c)
    for (int ch = 0; ch < 3; ++ch) img.at(band, c, ch) = kSceneFg[scene][ch] * 0.6;
  // marker is fixed per scene; frames within a scene differ only by a faint
  // speckle, so the encoder keeps them close and K-means recovers scenes
  const int bw = 14, bh = 12;
  const int x0 = 10 + 15 * scene;
  const int y0 = 10 + 3 * scene;
  for (int r = y0; r < y0 + bh; ++r)
    for (int c = x0; c < x0 + bw; ++c)
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = kSceneFg[scene][ch];
  for (int k = 0; k < 10; ++k) {
    const int r = static_cast<int>(rng.index(kImgH));
    const int c = static_cast<int>(rng.index(kImgW));
    for (int ch = 0; ch < 3; ++ch)
      img.at(r, c, ch) = std::clamp(img.at(r, c, ch) + rng.uniform(-0.03, 0.03), 0.0, 1.0);
  }
  return img;
}

}  // namespace

std::string write_synthetic_dataset(const std::string& out_dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  fs::create_directories(root / "frames");

  for (int scene = 0; scene < kScenes; ++scene)
    for (int frame = 0; frame < kFramesPerScene; ++frame) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03d.ppm", scene * kFramesPerScene + frame);
      write_ppm((root / "frames" / name).string(), render_frame(scene, frame, seed));
    }

  {
    nlohmann::json segments = nlohmann::json::array();
    for (int scene = 0; scene < kScenes; ++scene)
      for (int i = 0; i < 4; ++i)
        segments.push_back({{"text", kSceneCaption[scene]},
                            {"start", 4.0 * (scene * 4 + i)},
                            {"duration", 4.0}});
    std::ofstream out(root / "transcript.json", std::ios::binary);
    out << segments.dump(2) << "\n";
  }

  {
    std::set<std::string> vocab;
    for (const char* text : kSceneCaption)
      for (const auto& tok : tokenize_en(text)) vocab.insert(tok);
    Rng rng(splitmix64(seed ^ 0x76c4bULL));
    std::ofstream out(root / "vocab.txt", std::ios::binary);
    for (const auto& word : vocab) {
      out << word;
      VecX<double> v = rng.randn<double>(16, 1).col(0);
      v /= v.norm();
      for (int d = 0; d < 16; ++d) out << " " << csv::format_g17(v(d));
      out << "\n";
    }
  }

  nlohmann::json cfg{
      {"run_dir", "run"},
      {"seed", seed},
      {"language", "en"},
      {"frames", {{"source", "frames"}, {"rate_s", 2.0}}},
      {"transcript", {{"path", "transcript.json"}, {"format", "timed-json"}}},
      {"alignment", {{"mode", "timestamp"}}},
      {"embeddings", nlohmann::json::array({{{"path", "vocab.txt"}, {"dim", 16},
                                             {"language", "en"}}})},
      {"model",
       {{"image_h", 24},
        {"image_w", 40},
        {"channels", 8},
        {"lstm_hidden", 32},
        {"lstm_layers", 2},
        {"embed_dim", 16},
        {"mid_dim", 128},
        {"latent_dim", 32},
        {"max_len", 8},
        {"lr", 3e-3},
        {"epochs", 150},
        {"batch_size", 8}}},
      {"cluster",
       {{"k_min", 2}, {"k_max", 5}, {"restarts", 8}, {"chosen_k", 4}, {"perplexity", 5.0}}},
      {"llm_backend", {{"kind", "mock"}}},
      {"phrase_backend", {{"kind", "mock"}}},
      {"interpret", {{"conditional", true}}},
      {"compare", {{"plot_format", "svg"}}},
  };
  const fs::path cfg_path = root / "config.json";
  std::ofstream out(cfg_path, std::ios::binary);
  out << cfg.dump(2) << "\n";
  return cfg_path.string();
}

}  // namespace crvae
