#pragma once

// Stage orchestration over a fixed run-directory layout. Each stage reads
// only earlier-stage artifacts, writes its own, and is byte-reproducible for
// a given seed (logs carry timestamps and are exempt). A `.lock` file guards
// the directory for the lifetime of one invocation.

#include <filesystem>
#include <string>
#include <vector>

#include "crvae/runconfig.hpp"
#include "crvae/types.hpp"

namespace crvae {

struct RunPaths {
  std::filesystem::path root;

  explicit RunPaths(const std::string& run_dir) : root(run_dir) {}

  std::filesystem::path lock() const { return root / ".lock"; }
  std::filesystem::path logs_dir() const { return root / "logs"; }
  std::filesystem::path frames_dir() const { return root / "frames"; }
  std::filesystem::path work_dir() const { return root / "work"; }
  std::filesystem::path manifest() const { return root / "manifest.csv"; }
  std::filesystem::path checkpoint() const { return root / "checkpoints" / "model.ckpt"; }
  std::filesystem::path loss_curve_csv() const { return root / "loss_curve.csv"; }
  std::filesystem::path loss_curve_svg() const { return root / "loss_curve.svg"; }
  std::filesystem::path latents() const { return root / "latents.csv"; }
  std::filesystem::path sweep_csv() const { return root / "sweep.csv"; }
  std::filesystem::path sweep_svg() const { return root / "sweep.svg"; }
  std::filesystem::path clusters() const { return root / "clusters.csv"; }
  std::filesystem::path centroids() const { return root / "centroids.csv"; }
  std::filesystem::path tsne_csv() const { return root / "tsne.csv"; }
  std::filesystem::path tsne_svg() const { return root / "tsne.svg"; }
  std::filesystem::path descriptions() const { return root / "descriptions.csv"; }
  std::filesystem::path tags() const { return root / "tags.json"; }
  std::filesystem::path raw_dir() const { return root / "raw_responses"; }
  std::filesystem::path heatmap_csv() const { return root / "heatmap.csv"; }
  std::filesystem::path heatmap_image(const std::string& fmt) const {
    return root / ("heatmap." + fmt);
  }
};

// Refuses to construct while another invocation holds the directory; removes
// the lock on destruction.
class StageLock {
 public:
  explicit StageLock(const RunPaths& paths);
  ~StageLock();
  StageLock(const StageLock&) = delete;
  StageLock& operator=(const StageLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Stage entry points. Each takes and releases the run lock, logs timing to
// logs/<stage>.log, and throws (ConfigError/ParseError for bad input,
// StageError/BackendError for runtime failure). cmd_cluster: k = 0 defers to
// config chosen_k, then k_min with a warning. cmd_compare: other_run_dir = ""
// defers to config, then self-comparison with a warning.
void cmd_ingest(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_encode(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg);
void cmd_cluster(const RunConfig& cfg, int k = 0);
void cmd_interpret(const RunConfig& cfg);
void cmd_compare(const RunConfig& cfg, const std::string& other_run_dir = "");
void cmd_all(const RunConfig& cfg);

// Latent/cluster artifact round-trips (also used by tests).
void write_latents_csv(const std::string& path, const Matd& latents,
                       const std::vector<int>& pair_ids, const std::vector<std::string>& comments);
std::pair<Matd, std::vector<int>> read_latents_csv(const std::string& path);
void write_clusters_csv(const std::string& path, const std::vector<int>& pair_ids,
                        const std::vector<int>& assignments,
                        const std::vector<std::string>& comments);
std::pair<std::vector<int>, std::vector<int>> read_clusters_csv(const std::string& path);

// "crvae v1 seed=<seed>" — the header comment stamped into every artifact.
std::vector<std::string> artifact_comments(const RunConfig& cfg);

}  // namespace crvae
