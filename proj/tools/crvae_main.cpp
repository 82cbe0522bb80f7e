#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "crvae/pipeline.hpp"
#include "crvae/synth.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string run_dir;
  long long seed = -1;  // >= 0 overrides
  std::string backend;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "run config JSON")->required();
  cmd->add_option("--run-dir", o.run_dir, "override the config's run_dir");
  cmd->add_option("--seed", o.seed, "override the config's seed");
  cmd->add_option("--backend", o.backend,
                  "override both backend kinds (mock, http, or command)");
}

crvae::RunConfig load_with_overrides(const CommonOpts& o) {
  crvae::RunConfig cfg = crvae::load_run_config(o.config_path);
  if (!o.run_dir.empty()) cfg.run_dir = o.run_dir;
  if (o.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(o.seed);
    cfg.model.seed = cfg.seed;
  }
  if (!o.backend.empty()) {
    cfg.llm_backend.kind = o.backend;
    cfg.phrase_backend.kind = o.backend;
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"encode, cluster, and compare <video frame, caption> pairs"};
  app.require_subcommand(1);

  CommonOpts o;
  int k = 0;
  std::string other_config;
  std::string synth_out;
  long long synth_seed = 0;

  CLI::App* c_ingest = app.add_subcommand("ingest", "sample frames and align the transcript");
  CLI::App* c_train = app.add_subcommand("train", "train the encoder/decoder");
  CLI::App* c_encode = app.add_subcommand("encode", "extract latent means");
  CLI::App* c_sweep = app.add_subcommand("sweep", "cluster-count sweep with metrics");
  CLI::App* c_cluster = app.add_subcommand("cluster", "cluster latents at a chosen K");
  CLI::App* c_interpret = app.add_subcommand("interpret", "caption frames and tag clusters");
  CLI::App* c_compare = app.add_subcommand("compare", "cross-run cluster similarity heatmap");
  CLI::App* c_all = app.add_subcommand("all", "run every stage in order");
  CLI::App* c_synth = app.add_subcommand("synth", "write the bundled demo dataset");

  for (CLI::App* c : {c_ingest, c_train, c_encode, c_sweep, c_cluster, c_interpret, c_compare,
                      c_all})
    add_common(c, o);
  c_cluster->add_option("--k", k, "cluster count (defaults to the config's chosen_k)");
  c_compare->add_option("other_config", other_config,
                        "config of the run to compare against (defaults to compare.other_run)");
  c_synth->add_option("--out", synth_out, "output directory")->required();
  c_synth->add_option("--seed", synth_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (c_synth->parsed()) {
      const std::string cfg_path = crvae::write_synthetic_dataset(
          synth_out, static_cast<std::uint64_t>(synth_seed < 0 ? 0 : synth_seed));
      std::printf("wrote %s\n", cfg_path.c_str());
      return 0;
    }
    crvae::RunConfig cfg = load_with_overrides(o);
    if (c_ingest->parsed()) crvae::cmd_ingest(cfg);
    else if (c_train->parsed()) crvae::cmd_train(cfg);
    else if (c_encode->parsed()) crvae::cmd_encode(cfg);
    else if (c_sweep->parsed()) crvae::cmd_sweep(cfg);
    else if (c_cluster->parsed()) crvae::cmd_cluster(cfg, k);
    else if (c_interpret->parsed()) crvae::cmd_interpret(cfg);
    else if (c_compare->parsed()) {
      std::string other_dir;
      if (!other_config.empty()) {
        crvae::RunConfig other = crvae::load_run_config(other_config);
        other_dir = other.run_dir;
        if (cfg.other_cluster_names.empty()) cfg.other_cluster_names = other.cluster_names;
      }
      crvae::cmd_compare(cfg, other_dir);
    } else if (c_all->parsed()) {
      crvae::cmd_all(cfg);
    }
    return 0;
  } catch (const crvae::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const crvae::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
