#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "crvae/cluster.hpp"
#include "crvae/compare.hpp"
#include "crvae/ingest.hpp"
#include "crvae/interpret.hpp"
#include "crvae/pipeline.hpp"
#include "crvae/runconfig.hpp"
#include "crvae/synth.hpp"
#include "crvae/tsne.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace crvae;
namespace fs = std::filesystem;

namespace {

// Relative path -> bytes for every regular file under root.
std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out[fs::relative(e.path(), root).generic_string()] = testutil::slurp(e.path().string());
  return out;
}

}  // namespace

TEST_CASE("run directory layout is fixed") {
  RunPaths p("/data/run7");
  CHECK(p.lock() == fs::path("/data/run7/.lock"));
  CHECK(p.manifest() == fs::path("/data/run7/manifest.csv"));
  CHECK(p.checkpoint() == fs::path("/data/run7/checkpoints/model.ckpt"));
  CHECK(p.latents() == fs::path("/data/run7/latents.csv"));
  CHECK(p.clusters() == fs::path("/data/run7/clusters.csv"));
  CHECK(p.tags() == fs::path("/data/run7/tags.json"));
  CHECK(p.heatmap_image("svg") == fs::path("/data/run7/heatmap.svg"));
  CHECK(p.heatmap_image("ppm") == fs::path("/data/run7/heatmap.ppm"));
  CHECK(p.logs_dir() == fs::path("/data/run7/logs"));
}

TEST_CASE("config loading: defaults, relative paths, round-trip") {
  testutil::TempDir tmp("cfg");
  fs::create_directories(tmp.path() / "sub");

  // defaults survive an empty object
  testutil::spit(tmp.str("empty.json"), "{}");
  RunConfig def = load_run_config(tmp.str("empty.json"));
  CHECK(def.seed == 0);
  CHECK(def.rate_s == 2.0);
  CHECK(def.alignment_mode == "timestamp");
  CHECK(def.k_min == 2);
  CHECK(def.k_max == 10);
  CHECK(def.plot_format == "svg");
  CHECK(def.llm_backend.kind == "mock");
  CHECK(def.model.lr == 1e-4);

  // relative paths resolve against the config file's own directory
  testutil::spit(tmp.str("sub/run.json"), R"({
    "run_dir": "out",
    "seed": 9,
    "frames": {"source": "clips"},
    "transcript": {"path": "t.json"},
    "embeddings": [{"path": "vocab.txt", "dim": 300}],
    "compare": {"other_run": "../other"}
  })");
  RunConfig cfg = load_run_config(tmp.str("sub/run.json"));
  CHECK(cfg.run_dir == (tmp.path() / "sub" / "out").string());
  CHECK(cfg.frames_source == (tmp.path() / "sub" / "clips").string());
  CHECK(cfg.transcript_path == (tmp.path() / "sub" / "t.json").string());
  CHECK(cfg.embeddings.at(0).path == (tmp.path() / "sub" / "vocab.txt").string());
  CHECK(cfg.other_run == (tmp.path() / "other").string());  // normalized
  CHECK(cfg.model.seed == 9);  // top-level seed mirrored into the model

  // serialize -> reload -> identical fields
  cfg.chosen_k = 4;
  cfg.cluster_names = {{0, "court"}, {2, "flood"}};
  cfg.llm_backend.model_id = "m-1";
  testutil::spit(tmp.str("sub/round.json"), run_config_to_json(cfg));
  RunConfig back = load_run_config(tmp.str("sub/round.json"));
  CHECK(back.run_dir == cfg.run_dir);
  CHECK(back.seed == cfg.seed);
  CHECK(back.frames_source == cfg.frames_source);
  CHECK(back.embeddings.at(0).path == cfg.embeddings.at(0).path);
  CHECK(back.chosen_k == 4);
  CHECK(back.cluster_names == cfg.cluster_names);
  CHECK(back.llm_backend.model_id == "m-1");
  CHECK(back.model.lr == cfg.model.lr);
}

TEST_CASE("config loading: rejection paths") {
  testutil::TempDir tmp("cfgbad");
  CHECK_THROWS_AS(load_run_config(tmp.str("missing.json")), ConfigError);

  testutil::spit(tmp.str("broken.json"), "{nope");
  CHECK_THROWS_AS(load_run_config(tmp.str("broken.json")), ParseError);

  testutil::spit(tmp.str("list.json"), "[1,2]");
  CHECK_THROWS_AS(load_run_config(tmp.str("list.json")), ParseError);

  // first embedding table must match the model's embedding width
  testutil::spit(tmp.str("dim.json"),
                 R"({"embeddings":[{"path":"v.txt","dim":8}], "model":{"embed_dim":300}})");
  CHECK_THROWS_AS(load_run_config(tmp.str("dim.json")), ConfigError);

  testutil::spit(tmp.str("names.json"),
                 R"({"compare":{"cluster_names":{"abc":"x"}}})");
  CHECK_THROWS_AS(load_run_config(tmp.str("names.json")), ConfigError);

  testutil::spit(tmp.str("mode.json"), R"({"alignment":{"mode":"fuzzy"}})");
  CHECK_THROWS_AS(load_run_config(tmp.str("mode.json")), ConfigError);

  testutil::spit(tmp.str("plot.json"), R"({"compare":{"plot_format":"png"}})");
  CHECK_THROWS_AS(load_run_config(tmp.str("plot.json")), ConfigError);
}

TEST_CASE("environment overrides beat the file") {
  testutil::TempDir tmp("env");
  testutil::spit(tmp.str("c.json"),
                 R"({"llm_backend":{"kind":"mock","endpoint":"http://file:1"}})");
  setenv("CRVAE_LLM_ENDPOINT", "http://env:2", 1);
  setenv("CRVAE_LLM_API_KEY", "k-env", 1);
  setenv("CRVAE_PHRASE_ENDPOINT", "http://env:3", 1);
  setenv("CRVAE_PHRASE_API_KEY", "p-env", 1);
  RunConfig cfg = load_run_config(tmp.str("c.json"));
  unsetenv("CRVAE_LLM_ENDPOINT");
  unsetenv("CRVAE_LLM_API_KEY");
  unsetenv("CRVAE_PHRASE_ENDPOINT");
  unsetenv("CRVAE_PHRASE_API_KEY");
  CHECK(cfg.llm_backend.endpoint == "http://env:2");
  CHECK(cfg.llm_backend.api_key == "k-env");
  CHECK(cfg.phrase_backend.endpoint == "http://env:3");
  CHECK(cfg.phrase_backend.api_key == "p-env");

  // without the variables set, the file value stands
  RunConfig plain = load_run_config(tmp.str("c.json"));
  CHECK(plain.llm_backend.endpoint == "http://file:1");
}

TEST_CASE("synthetic dataset generation is seed-deterministic") {
  testutil::TempDir tmp("synth");
  const std::string cfg_a = write_synthetic_dataset(tmp.str("a"), 11);
  write_synthetic_dataset(tmp.str("b"), 11);
  write_synthetic_dataset(tmp.str("c"), 12);

  auto a = tree_bytes(tmp.path() / "a"), b = tree_bytes(tmp.path() / "b"),
       c = tree_bytes(tmp.path() / "c");
  CHECK(a.size() > 30);  // 32 frames + transcript + vocab + config
  CHECK(a == b);
  CHECK(a != c);  // the seed reaches frames and vocab alike

  RunConfig cfg = load_run_config(cfg_a);
  CHECK(cfg.seed == 11);
  CHECK(cfg.chosen_k == 4);
  CHECK(fs::exists(cfg.frames_source));
  CHECK(fs::exists(cfg.transcript_path));
}

TEST_CASE("stage lock guards the run directory") {
  testutil::TempDir tmp("lock");
  RunPaths p(tmp.str("run"));
  {
    StageLock lock(p);
    CHECK(fs::exists(p.lock()));
    CHECK_THROWS_AS(StageLock{p}, StageError);  // second holder refused
  }
  CHECK_FALSE(fs::exists(p.lock()));  // released on scope exit
  StageLock again(p);                 // and then re-acquirable
}

TEST_CASE("stages chain over a synthetic run") {
  testutil::TempDir tmp("pipe");
  const std::string cfg_path = write_synthetic_dataset(tmp.str("data"), 11);
  RunConfig cfg = load_run_config(cfg_path);
  cfg.run_dir = tmp.str("run");
  cfg.model.epochs = 30;  // enough to exercise the chain; quality is not asserted here
  RunPaths p(cfg.run_dir);

  // artifacts must be demanded in stage order, with the producer named
  try {
    cmd_encode(cfg);
    FAIL("encode must not run before train");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("not found; run `crvae train` first") != std::string::npos);
  }

  cmd_ingest(cfg);
  REQUIRE(fs::exists(p.manifest()));
  CHECK(testutil::slurp(p.manifest().string()).rfind("# crvae v1 seed=11\n", 0) == 0);
  auto manifest = read_manifest(p.manifest().string());
  CHECK(manifest.size() == 16);  // 16 transcript segments, each matched to a frame
  const std::string manifest_bytes = testutil::slurp(p.manifest().string());
  cmd_ingest(cfg);  // same seed, same inputs -> byte-identical artifact
  CHECK(testutil::slurp(p.manifest().string()) == manifest_bytes);

  try {
    cmd_sweep(cfg);
    FAIL("sweep must not run before encode");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("run `crvae encode` first") != std::string::npos);
  }

  cmd_train(cfg);
  REQUIRE(fs::exists(p.checkpoint()));
  REQUIRE(fs::exists(p.loss_curve_csv()));
  CHECK(fs::exists(p.loss_curve_svg()));
  {
    const std::string curve = testutil::slurp(p.loss_curve_csv().string());
    CHECK(curve.find("epoch,image_loss,text_loss,total") != std::string::npos);
  }

  cmd_encode(cfg);
  REQUIRE(fs::exists(p.latents()));
  auto [latents, pair_ids] = read_latents_csv(p.latents().string());
  CHECK(latents.rows() == 16);
  CHECK(latents.cols() == 32);
  CHECK(latents.allFinite());
  CHECK(pair_ids.size() == 16);
  const std::string latent_bytes = testutil::slurp(p.latents().string());
  cmd_encode(cfg);  // encoding is eval-mode and seed-free: byte-stable
  CHECK(testutil::slurp(p.latents().string()) == latent_bytes);

  cmd_sweep(cfg);
  REQUIRE(fs::exists(p.sweep_csv()));
  KSweepReport sweep = read_sweep_csv(p.sweep_csv().string());
  CHECK(sweep.rows.size() == 4);  // K in [2,5]
  CHECK(sweep.rows.front().K == 2);
  CHECK(sweep.rows.back().K == 5);

  cmd_cluster(cfg);  // k=0 defers to cluster.chosen_k = 4
  REQUIRE(fs::exists(p.clusters()));
  REQUIRE(fs::exists(p.centroids()));
  auto [cpair_ids, assignments] = read_clusters_csv(p.clusters().string());
  CHECK(cpair_ids == pair_ids);
  std::set<int> labels(assignments.begin(), assignments.end());
  CHECK(labels.size() == 4);  // kmeans never returns an empty cluster
  for (int a : assignments) CHECK((a >= 0 && a < 4));
  if (tsne_backend_available()) {
    CHECK(fs::exists(p.tsne_csv()));
    CHECK(fs::exists(p.tsne_svg()));
  }
  const std::string cluster_bytes = testutil::slurp(p.clusters().string());
  cmd_cluster(cfg);
  CHECK(testutil::slurp(p.clusters().string()) == cluster_bytes);

  // an explicit K beats the config
  cmd_cluster(cfg, 3);
  auto [ids3, asg3] = read_clusters_csv(p.clusters().string());
  CHECK(std::set<int>(asg3.begin(), asg3.end()).size() == 3);
  cmd_cluster(cfg);  // restore the K=4 artifacts for the stages below

  cmd_interpret(cfg);
  REQUIRE(fs::exists(p.descriptions()));
  REQUIRE(fs::exists(p.tags()));
  auto descriptions = read_descriptions_csv(p.descriptions().string());
  CHECK(descriptions.size() == 16);
  for (const auto& d : descriptions) {
    CHECK(d.conditional);  // synth config asks for conditional captions
    CHECK(!d.caption.empty());
  }
  auto tagsets = read_tagsets_json(p.tags().string());
  CHECK(tagsets.size() == 4);
  for (const auto& s : tagsets) {
    CHECK_FALSE(s.uninterpreted);
    CHECK(s.tags.size() == 10);
    CHECK(fs::exists(p.raw_dir() / ("cluster_" + std::to_string(s.cluster_id) + ".txt")));
  }

  cmd_compare(cfg, cfg.run_dir);  // explicit other side: the same run
  REQUIRE(fs::exists(p.heatmap_csv()));
  CHECK(fs::exists(p.heatmap_image("svg")));
  PairSimilarityMatrix m = read_heatmap_csv(p.heatmap_csv().string());
  CHECK(m.values.rows() == 4);
  CHECK(m.values.cols() == 4);
  for (Eigen::Index i = 0; i < m.values.rows(); ++i)
    for (Eigen::Index j = 0; j < m.values.cols(); ++j)
      CHECK((m.values(i, j) >= -1.0001 && m.values(i, j) <= 1.0001));

  // every stage appended a timing line to its own log
  for (const char* stage : {"ingest", "train", "encode", "sweep", "cluster", "interpret",
                            "compare"}) {
    const std::string log =
        testutil::slurp((p.logs_dir() / (std::string(stage) + ".log")).string());
    CHECK(log.find(std::string("stage=") + stage + " ok") != std::string::npos);
  }

  // a stale lock blocks every stage with a pointed message
  testutil::spit(p.lock().string(), "held\n");
  try {
    cmd_cluster(cfg);
    FAIL("lock must refuse a second invocation");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("locked") != std::string::npos);
  }
  fs::remove(p.lock());
}

TEST_CASE("latents CSV round-trips exactly") {
  testutil::TempDir tmp("lat");
  Rng rng(33);
  Matd latents = rng.randn<double>(5, 7);
  std::vector<int> ids{3, 1, 4, 15, 9};
  const std::string path = tmp.str("latents.csv");
  write_latents_csv(path, latents, ids, {"crvae v1 seed=33"});

  CHECK(testutil::slurp(path).rfind("# crvae v1 seed=33\n", 0) == 0);
  auto [back, back_ids] = read_latents_csv(path);
  CHECK(back_ids == ids);
  REQUIRE(back.rows() == 5);
  REQUIRE(back.cols() == 7);
  CHECK((back - latents).cwiseAbs().maxCoeff() == 0.0);  // g17 is lossless for doubles

  CHECK_THROWS_AS(write_latents_csv(tmp.str("x.csv"), latents, {1, 2}, {}), ContractViolation);
  testutil::spit(tmp.str("junk.csv"), "# only a comment\n");
  CHECK_THROWS_AS(read_latents_csv(tmp.str("junk.csv")), ParseError);
  testutil::spit(tmp.str("ragged.csv"), "pair_id,z0,z1\n1,0.5\n");
  CHECK_THROWS_AS(read_latents_csv(tmp.str("ragged.csv")), ParseError);
}

TEST_CASE("clusters CSV round-trips exactly") {
  testutil::TempDir tmp("clu");
  std::vector<int> ids{10, 11, 12, 13}, asg{1, 0, 1, 2};
  const std::string path = tmp.str("clusters.csv");
  write_clusters_csv(path, ids, asg, {"crvae v1 seed=0"});
  auto [back_ids, back_asg] = read_clusters_csv(path);
  CHECK(back_ids == ids);
  CHECK(back_asg == asg);

  CHECK_THROWS_AS(write_clusters_csv(tmp.str("x.csv"), ids, {0}, {}), ContractViolation);
  testutil::spit(tmp.str("junk.csv"), "pair_id,z0\n1,2\n");
  CHECK_THROWS_AS(read_clusters_csv(tmp.str("junk.csv")), ParseError);
}
