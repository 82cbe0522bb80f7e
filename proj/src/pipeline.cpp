#include "crvae/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "crvae/checkpoint.hpp"
#include "crvae/cluster.hpp"
#include "crvae/compare.hpp"
#include "crvae/csv.hpp"
#include "crvae/ingest.hpp"
#include "crvae/interpret.hpp"
#include "crvae/plot.hpp"
#include "crvae/textprep.hpp"
#include "crvae/train.hpp"
#include "crvae/tsne.hpp"

namespace crvae {
namespace {

namespace fs = std::filesystem;

std::string iso_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Appends a timing line per stage and mirrors warnings into the log. Logs
// are the one artifact exempt from byte-level reproducibility.
void run_logged(const RunPaths& p, const char* stage, const std::function<void()>& fn) {
  fs::create_directories(p.logs_dir());
  std::ofstream log(p.logs_dir() / (std::string(stage) + ".log"),
                    std::ios::binary | std::ios::app);
  log << iso_now() << " stage=" << stage << " start\n";
  log.flush();
  set_warn_sink([&log](const std::string& msg) {
    log << iso_now() << " warning: " << msg << "\n";
    log.flush();
  });
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  try {
    fn();
  } catch (const std::exception& e) {
    set_warn_sink(nullptr);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", elapsed());
    log << iso_now() << " stage=" << stage << " failed elapsed_s=" << buf << " error=" << e.what()
        << "\n";
    throw;
  }
  set_warn_sink(nullptr);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", elapsed());
  log << iso_now() << " stage=" << stage << " ok elapsed_s=" << buf << "\n";
}

void require_artifact(const fs::path& path, const char* producer) {
  if (!fs::exists(path))
    throw StageError(path.string() + " not found; run `crvae " + producer + "` first");
}

std::string rel_frame_name(int pair_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%06d.ppm", pair_id);
  return std::string("frames/") + buf;
}

// ---------------------------------------------------------------- ingest --

void ingest_impl(const RunConfig& cfg, const RunPaths& p) {
  if (cfg.frames_source.empty()) throw ConfigError("config has no frames.source");
  if (cfg.transcript_path.empty()) throw ConfigError("config has no transcript.path");

  IngestOptions opt;
  opt.rate_s = cfg.rate_s;
  opt.target_h = cfg.model.image_h;
  opt.target_w = cfg.model.image_w;
  opt.media_tool = cfg.media_tool;
  opt.work_dir = p.work_dir().string();

  std::vector<Frame> frames = sample_frames(cfg.frames_source, opt);
  std::vector<Segment> segments =
      parse_transcript(cfg.transcript_path, transcript_format_from_string(cfg.transcript_format));
  if (frames.empty()) throw StageError("no frames decoded from " + cfg.frames_source);
  if (segments.empty()) throw StageError("no segments parsed from " + cfg.transcript_path);

  AlignedPairList aligned = cfg.alignment_mode == "uniform"
                                ? align_uniform(frames, segments, cfg.keep_num, cfg.window)
                                : align_by_timestamp(frames, segments);

  fs::create_directories(p.frames_dir());
  std::vector<ManifestRow> rows;
  for (const auto& pr : aligned.pairs) {
    const Frame& f = frames[static_cast<size_t>(pr.frame_index)];
    const Segment& s = segments[static_cast<size_t>(pr.segment_index)];
    const std::string rel = rel_frame_name(pr.pair_id);
    write_ppm((p.root / rel).string(), f.image);
    rows.push_back({pr.pair_id, rel, f.timestamp_s, s.index, s.text});
  }
  write_manifest(p.manifest().string(), rows, artifact_comments(cfg));
}

// ------------------------------------------------------------- dataset ----

std::vector<PairSample<double>> build_dataset(const RunConfig& cfg, const RunPaths& p,
                                              const ModelConfig& model) {
  require_artifact(p.manifest(), "ingest");
  if (cfg.embeddings.empty())
    throw ConfigError("config has no embeddings; the text path needs at least one table");

  std::vector<EmbeddingTable> tables;
  tables.reserve(cfg.embeddings.size());
  for (const auto& spec : cfg.embeddings)
    tables.push_back(load_embedding_table(spec.path, spec.dim, spec.language));
  std::vector<const EmbeddingTable*> chain;
  for (const auto& t : tables) chain.push_back(&t);

  const bool zh = cfg.language == "zh";
  Segmenter segmenter = zh ? get_segmenter(cfg.segmenter) : Segmenter();

  std::vector<PairSample<double>> data;
  for (const auto& row : read_manifest(p.manifest().string())) {
    fs::path img_path(row.frame_path);
    if (img_path.is_relative()) img_path = p.root / img_path;
    ImageBuf img = read_ppm(img_path.string());
    if (img.h != model.image_h || img.w != model.image_w)
      img = bilinear_resize(img, model.image_h, model.image_w);

    const std::vector<std::string> tokens =
        zh ? segment_zh(row.caption, segmenter) : tokenize_en(row.caption);
    EmbeddedCaption ec = embed_tokens(tokens, chain, model.max_len);

    PairSample<double> s;
    s.image = to_chw(img);
    s.caption = ec.vectors;
    s.mask = ec.mask;
    s.pair_id = row.pair_id;
    data.push_back(std::move(s));
  }
  if (data.empty()) throw StageError("manifest " + p.manifest().string() + " has no pairs");
  return data;
}

// ---------------------------------------------------------------- train --

void train_impl(const RunConfig& cfg, const RunPaths& p) {
  auto data = build_dataset(cfg, p, cfg.model);
  Rng rng(cfg.seed);
  CrvaeModel<double> model(cfg.model, rng);
  Trainer<double> trainer(model, cfg.model);
  TrainResult res = trainer.run(data, rng);
  if (res.aborted)
    log_warn("training aborted after epoch " + std::to_string(res.completed_epochs) +
             " (non-finite loss); checkpoint holds the last finite state");

  fs::create_directories(p.checkpoint().parent_path());
  save_checkpoint(p.checkpoint().string(), model, cfg.model, res.completed_epochs, res.curve);
  write_loss_curve_csv(p.loss_curve_csv().string(), res.curve, artifact_comments(cfg));
  if (!res.curve.empty()) {
    Series total{"total", {}, {}}, image{"image", {}, {}}, text{"text", {}, {}};
    for (size_t i = 0; i < res.curve.size(); ++i) {
      const double x = static_cast<double>(i + 1);
      total.xs.push_back(x);
      total.ys.push_back(res.curve[i].total);
      image.xs.push_back(x);
      image.ys.push_back(res.curve[i].image_loss);
      text.xs.push_back(x);
      text.ys.push_back(res.curve[i].text_loss);
    }
    svg_line_chart(p.loss_curve_svg().string(), "Training loss", "epoch", "loss",
                   {total, image, text}, artifact_comments(cfg));
  }
}

// --------------------------------------------------------------- encode --

void encode_impl(const RunConfig& cfg, const RunPaths& p) {
  require_artifact(p.checkpoint(), "train");
  CheckpointData ckpt = load_checkpoint(p.checkpoint().string());
  Rng rng(ckpt.config.seed);
  CrvaeModel<double> model(ckpt.config, rng);
  restore_model(model, ckpt);

  auto data = build_dataset(cfg, p, ckpt.config);
  Matd latents = extract_latents(model, data, ckpt.config);
  std::vector<int> pair_ids;
  for (const auto& s : data) pair_ids.push_back(s.pair_id);
  write_latents_csv(p.latents().string(), latents, pair_ids, artifact_comments(cfg));
}

// ---------------------------------------------------------------- sweep --

void sweep_impl(const RunConfig& cfg, const RunPaths& p) {
  require_artifact(p.latents(), "encode");
  auto [latents, pair_ids] = read_latents_csv(p.latents().string());
  const int n = static_cast<int>(latents.rows());
  int k_max = cfg.k_max;
  if (k_max > n) {
    log_warn("k_max " + std::to_string(k_max) + " exceeds dataset size " + std::to_string(n) +
             "; clamping");
    k_max = n;
  }
  if (cfg.k_min > k_max)
    throw StageError("k_min " + std::to_string(cfg.k_min) + " exceeds usable k_max " +
                     std::to_string(k_max));
  KSweepReport report = sweep_k(latents, cfg.k_min, k_max, cfg.seed, cfg.restarts);
  write_sweep_csv(p.sweep_csv().string(), report, artifact_comments(cfg));

  Series intra{"avg intra", {}, {}}, cross{"avg cross", {}, {}}, rob{"robustness", {}, {}};
  for (const auto& row : report.rows) {
    intra.xs.push_back(row.K);
    intra.ys.push_back(row.avg_intra);
    if (row.avg_cross) {
      cross.xs.push_back(row.K);
      cross.ys.push_back(*row.avg_cross);
    }
    if (row.robustness) {
      rob.xs.push_back(row.K);
      rob.ys.push_back(*row.robustness);
    }
  }
  std::vector<Series> series{intra};
  if (!cross.xs.empty()) series.push_back(cross);
  if (!rob.xs.empty()) series.push_back(rob);
  svg_line_chart(p.sweep_svg().string(), "K sweep", "K", "metric", series,
                 artifact_comments(cfg));
}

// -------------------------------------------------------------- cluster --

void cluster_impl(const RunConfig& cfg, const RunPaths& p, int k_flag) {
  require_artifact(p.latents(), "encode");
  auto [latents, pair_ids] = read_latents_csv(p.latents().string());
  const int n = static_cast<int>(latents.rows());

  int K = k_flag > 0 ? k_flag : cfg.chosen_k;
  if (K <= 0) {
    K = cfg.k_min;
    log_warn("no K chosen (flag or cluster.chosen_k); defaulting to k_min=" + std::to_string(K));
  }
  if (K < cfg.k_min || K > cfg.k_max)
    log_warn("K=" + std::to_string(K) + " lies outside the swept range [" +
             std::to_string(cfg.k_min) + ", " + std::to_string(cfg.k_max) + "]; proceeding");

  Clustering c = kmeans(latents, K, cfg.seed, cfg.restarts);
  std::vector<std::string> comments = artifact_comments(cfg);
  comments.push_back("avg_intra=" + csv::format_g17(avg_intra_distance(c, latents)));
  if (auto cross = avg_cross_distance(c)) comments.push_back("avg_cross=" + csv::format_g17(*cross));
  write_clusters_csv(p.clusters().string(), pair_ids, c.assignments, comments);

  {
    std::ofstream out(p.centroids(), std::ios::binary);
    if (!out) throw StageError("cannot write " + p.centroids().string());
    for (const auto& cm : artifact_comments(cfg)) out << "# " << cm << "\n";
    std::vector<std::string> header{"cluster"};
    for (Eigen::Index d = 0; d < c.centroids.cols(); ++d)
      header.push_back("z" + std::to_string(d));
    out << csv::join_row(header) << "\n";
    for (Eigen::Index i = 0; i < c.centroids.rows(); ++i) {
      std::vector<std::string> row{std::to_string(i)};
      for (Eigen::Index d = 0; d < c.centroids.cols(); ++d)
        row.push_back(csv::format_g17(c.centroids(i, d)));
      out << csv::join_row(row) << "\n";
    }
  }

  // projection is a nicety: degrade to a warning when the backend is missing
  if (n >= 3 && tsne_backend_available()) {
    double perplexity = cfg.perplexity;
    if (perplexity >= n) {
      perplexity = (n - 1) / 2.0;
      log_warn("perplexity " + csv::format_g17(cfg.perplexity) + " >= dataset size " +
               std::to_string(n) + "; using " + csv::format_g17(perplexity));
    }
    Matd proj = project_2d(latents, perplexity, cfg.seed);
    {
      std::ofstream out(p.tsne_csv(), std::ios::binary);
      if (!out) throw StageError("cannot write " + p.tsne_csv().string());
      for (const auto& cm : artifact_comments(cfg)) out << "# " << cm << "\n";
      out << "pair_id,x,y,cluster\n";
      for (Eigen::Index i = 0; i < proj.rows(); ++i)
        out << pair_ids[static_cast<size_t>(i)] << "," << csv::format_g17(proj(i, 0)) << ","
            << csv::format_g17(proj(i, 1)) << "," << c.assignments[static_cast<size_t>(i)]
            << "\n";
    }
    std::vector<double> xs(proj.rows()), ys(proj.rows());
    for (Eigen::Index i = 0; i < proj.rows(); ++i) {
      xs[static_cast<size_t>(i)] = proj(i, 0);
      ys[static_cast<size_t>(i)] = proj(i, 1);
    }
    svg_scatter(p.tsne_svg().string(), "Latent projection (K=" + std::to_string(K) + ")", xs, ys,
                c.assignments, artifact_comments(cfg));
  } else if (n >= 3) {
    log_warn("t-SNE backend unavailable (python3 + scikit-learn); skipping projection");
  } else {
    log_warn("fewer than 3 points; skipping projection");
  }
}

// ------------------------------------------------------------ interpret --

void interpret_impl(const RunConfig& cfg, const RunPaths& p) {
  require_artifact(p.manifest(), "ingest");
  require_artifact(p.clusters(), "cluster");
  auto manifest = read_manifest(p.manifest().string());
  auto [pair_ids, assignments] = read_clusters_csv(p.clusters().string());
  std::map<int, int> cluster_of;
  for (size_t i = 0; i < pair_ids.size(); ++i) cluster_of[pair_ids[i]] = assignments[i];

  auto backend = make_llm_backend(cfg.llm_backend);

  std::vector<FrameDescription> descriptions;
  std::map<int, std::string> description_of;
  for (const auto& row : manifest) {
    fs::path img_path(row.frame_path);
    if (img_path.is_relative()) img_path = p.root / img_path;
    try {
      ImageBuf img = read_ppm(img_path.string());
      FrameDescription d =
          describe_frame(img, row.pair_id, *backend, cfg.conditional_captions);
      description_of[d.pair_id] = d.caption;
      descriptions.push_back(std::move(d));
    } catch (const BackendError& e) {
      log_warn("pair " + std::to_string(row.pair_id) + ": caption failed: " + e.what());
    }
  }
  write_descriptions_csv(p.descriptions().string(), descriptions, artifact_comments(cfg));

  std::set<int> cluster_ids(assignments.begin(), assignments.end());
  fs::create_directories(p.raw_dir());
  std::vector<TagSet> sets;
  for (int id : cluster_ids) {
    std::vector<std::string> captions, descs;
    for (const auto& row : manifest) {  // manifest is pair-id order
      auto it = cluster_of.find(row.pair_id);
      if (it == cluster_of.end() || it->second != id) continue;
      captions.push_back(row.caption);
      auto dit = description_of.find(row.pair_id);
      if (dit != description_of.end()) descs.push_back(dit->second);
    }
    const std::string prompt = build_cluster_prompt(captions, descs);
    TagSet set = generate_tags(id, prompt, *backend, 1 + cfg.tag_retries);
    if (set.uninterpreted)
      log_warn("cluster " + std::to_string(id) + " is uninterpreted after " +
               std::to_string(1 + cfg.tag_retries) + " attempt(s)");
    std::ofstream raw(p.raw_dir() / ("cluster_" + std::to_string(id) + ".txt"),
                      std::ios::binary);
    raw << set.raw_response;
    sets.push_back(std::move(set));
  }
  write_tagsets_json(p.tags().string(), sets, cfg.seed);
}

// -------------------------------------------------------------- compare --

void compare_impl(const RunConfig& cfg, const RunPaths& p, const std::string& other_run_dir) {
  require_artifact(p.tags(), "interpret");
  std::vector<TagSet> mine = read_tagsets_json(p.tags().string());

  std::string other_dir = !other_run_dir.empty() ? other_run_dir : cfg.other_run;
  std::vector<TagSet> theirs;
  std::map<int, std::string> their_names = cfg.other_cluster_names;
  if (other_dir.empty()) {
    log_warn("no comparison run configured; comparing the run against itself");
    theirs = mine;
    their_names = cfg.cluster_names;
  } else {
    RunPaths other(other_dir);
    if (!fs::exists(other.tags()))
      throw StageError(other.tags().string() +
                       " not found; run `crvae interpret` on that run first");
    theirs = read_tagsets_json(other.tags().string());
  }

  auto backend = make_phrase_backend(cfg.phrase_backend);
  PairSimilarityMatrix m =
      similarity_matrix(mine, theirs, *backend, cfg.cluster_names, their_names);
  export_heatmap(m, p.heatmap_csv().string(), p.heatmap_image(cfg.plot_format).string(),
                 cfg.plot_format, artifact_comments(cfg));
}

}  // namespace

StageLock::StageLock(const RunPaths& paths) : path_(paths.lock()) {
  fs::create_directories(paths.root);
  if (fs::exists(path_))
    throw StageError("run directory " + paths.root.string() +
                     " is locked by another invocation (remove " + path_.string() +
                     " if that invocation is gone)");
  std::ofstream out(path_, std::ios::binary);
  out << iso_now() << "\n";
}

StageLock::~StageLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::vector<std::string> artifact_comments(const RunConfig& cfg) {
  return {"crvae v1 seed=" + std::to_string(cfg.seed)};
}

void cmd_ingest(const RunConfig& cfg) {
  RunPaths p(cfg.run_dir);
  StageLock lock(p);
  run_logged(p, "ingest", [&] { ingest_impl(cfg, p); });
}

void cmd_train(const RunConfig& cfg) {
  RunPaths p(cfg.run_dir);
  StageLock lock(p);
  run_logged(p, "train", [&] { train_impl(cfg, p); });
}

void cmd_encode(const RunConfig& cfg) {
  RunPaths p(cfg.run_dir);
  StageLock lock(p);
  run_logged(p, "encode", [&] { encode_impl(cfg, p); });
}

void cmd_sweep(const RunConfig& cfg) {
  RunPaths p(cfg.run_dir);
  StageLock lock(p);
  run_logged(p, "sweep", [&] { sweep_impl(cfg, p); });
}

void cmd_cluster(const RunConfig& cfg, int k) {
  RunPaths p(cfg.run_dir);
  StageLock lock(p);
  run_logged(p, "cluster", [&] { cluster_impl(cfg, p, k); });
}

void cmd_interpret(const RunConfig& cfg) {
  RunPaths p(cfg.run_dir);
  StageLock lock(p);
  run_logged(p, "interpret", [&] { interpret_impl(cfg, p); });
}

void cmd_compare(const RunConfig& cfg, const std::string& other_run_dir) {
  RunPaths p(cfg.run_dir);
  StageLock lock(p);
  run_logged(p, "compare", [&] { compare_impl(cfg, p, other_run_dir); });
}

void cmd_all(const RunConfig& cfg) {
  RunPaths p(cfg.run_dir);
  StageLock lock(p);
  run_logged(p, "ingest", [&] { ingest_impl(cfg, p); });
  run_logged(p, "train", [&] { train_impl(cfg, p); });
  run_logged(p, "encode", [&] { encode_impl(cfg, p); });
  run_logged(p, "sweep", [&] { sweep_impl(cfg, p); });
  run_logged(p, "cluster", [&] { cluster_impl(cfg, p, 0); });
  run_logged(p, "interpret", [&] { interpret_impl(cfg, p); });
  run_logged(p, "compare", [&] { compare_impl(cfg, p, ""); });
}

void write_latents_csv(const std::string& path, const Matd& latents,
                       const std::vector<int>& pair_ids,
                       const std::vector<std::string>& comments) {
  if (latents.rows() != static_cast<Eigen::Index>(pair_ids.size()))
    throw ContractViolation("latents/pair_ids length mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot write " + path);
  for (const auto& c : comments) out << "# " << c << "\n";
  std::vector<std::string> header{"pair_id"};
  for (Eigen::Index d = 0; d < latents.cols(); ++d) header.push_back("z" + std::to_string(d));
  out << csv::join_row(header) << "\n";
  for (Eigen::Index i = 0; i < latents.rows(); ++i) {
    std::vector<std::string> row{std::to_string(pair_ids[static_cast<size_t>(i)])};
    for (Eigen::Index d = 0; d < latents.cols(); ++d)
      row.push_back(csv::format_g17(latents(i, d)));
    out << csv::join_row(row) << "\n";
  }
}

std::pair<Matd, std::vector<int>> read_latents_csv(const std::string& path) {
  const auto& rows = csv::read_file(path).rows;
  if (rows.size() < 2 || rows[0].empty() || rows[0][0] != "pair_id")
    throw ParseError(path + ": not a latents file");
  const size_t dim = rows[0].size() - 1;
  Matd latents(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(dim));
  std::vector<int> pair_ids;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw ParseError(path + ": record " + std::to_string(i) + " has " +
                       std::to_string(rows[i].size()) + " fields, expected " +
                       std::to_string(rows[0].size()));
    pair_ids.push_back(std::stoi(rows[i][0]));
    for (size_t d = 0; d < dim; ++d)
      latents(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(d)) =
          std::stod(rows[i][d + 1]);
  }
  return {std::move(latents), std::move(pair_ids)};
}

void write_clusters_csv(const std::string& path, const std::vector<int>& pair_ids,
                        const std::vector<int>& assignments,
                        const std::vector<std::string>& comments) {
  if (pair_ids.size() != assignments.size())
    throw ContractViolation("pair_ids/assignments length mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot write " + path);
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "pair_id,cluster\n";
  for (size_t i = 0; i < pair_ids.size(); ++i)
    out << pair_ids[i] << "," << assignments[i] << "\n";
}

std::pair<std::vector<int>, std::vector<int>> read_clusters_csv(const std::string& path) {
  const auto& rows = csv::read_file(path).rows;
  if (rows.empty() || rows[0] != std::vector<std::string>{"pair_id", "cluster"})
    throw ParseError(path + ": not a clusters file");
  std::vector<int> pair_ids, assignments;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2)
      throw ParseError(path + ": record " + std::to_string(i) + " has " +
                       std::to_string(rows[i].size()) + " fields, expected 2");
    pair_ids.push_back(std::stoi(rows[i][0]));
    assignments.push_back(std::stoi(rows[i][1]));
  }
  return {std::move(pair_ids), std::move(assignments)};
}

}  // namespace crvae
