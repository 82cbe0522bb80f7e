#include "crvae/tsne.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "crvae/csv.hpp"

namespace fs = std::filesystem;

namespace crvae {
namespace {

// The projection contract pinned here: exact (non-approximate) gradient, PCA
// init, fixed random_state — same seed, same output.
constexpr const char* kScript = R"PY(
import sys
import numpy as np
from sklearn.manifold import TSNE
inp, outp, perp, seed = sys.argv[1], sys.argv[2], float(sys.argv[3]), int(sys.argv[4])
X = np.loadtxt(inp, delimiter=",", ndmin=2)
Y = TSNE(n_components=2, perplexity=perp, random_state=seed, init="pca",
         method="exact").fit_transform(X)
np.savetxt(outp, Y, delimiter=",", fmt="%.17g")
)PY";

std::string run_capture(const std::string& cmd, int& rc) {
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    rc = -1;
    return "popen failed";
  }
  std::string out;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  rc = pclose(pipe);
  return out;
}

fs::path temp_file(const std::string& tag) {
  static int counter = 0;
  std::ostringstream name;
  name << "crvae_tsne_" << ::getpid() << "_" << counter++ << "_" << tag;
  return fs::temp_directory_path() / name.str();
}

}  // namespace

bool tsne_backend_available() {
  int rc = 0;
  run_capture("python3 -c 'import sklearn.manifold' 2>&1", rc);
  return rc == 0;
}

Matd project_2d(const Matd& latents, double perplexity, std::uint64_t seed) {
  const Eigen::Index N = latents.rows();
  if (N == 0) throw ContractViolation("project_2d: no points");
  if (perplexity <= 0) throw ConfigError("project_2d: perplexity must be positive");
  if (perplexity >= static_cast<double>(N))
    throw ConfigError("project_2d: perplexity " + std::to_string(perplexity) +
                      " must be < point count " + std::to_string(N));

  fs::path in_path = temp_file("in.csv");
  fs::path out_path = temp_file("out.csv");
  fs::path script_path = temp_file("run.py");
  {
    std::ofstream in_file(in_path);
    for (Eigen::Index i = 0; i < N; ++i) {
      for (Eigen::Index j = 0; j < latents.cols(); ++j) {
        if (j) in_file << ",";
        in_file << csv::format_g17(latents(i, j));
      }
      in_file << "\n";
    }
    std::ofstream script(script_path);
    script << kScript;
  }

  std::ostringstream cmd;
  cmd << "python3 " << script_path << " " << in_path << " " << out_path << " " << perplexity
      << " " << seed << " 2>&1";
  int rc = 0;
  std::string output = run_capture(cmd.str(), rc);
  std::error_code ec;
  fs::remove(in_path, ec);
  fs::remove(script_path, ec);
  if (rc != 0) {
    fs::remove(out_path, ec);
    throw StageError("t-SNE backend failed (python3 + scikit-learn required): " + output);
  }

  Matd result(N, 2);
  {
    std::ifstream out_file(out_path);
    std::string line;
    Eigen::Index row = 0;
    while (std::getline(out_file, line) && row < N) {
      std::istringstream ss(line);
      std::string cell;
      for (int j = 0; j < 2; ++j) {
        if (!std::getline(ss, cell, ','))
          throw StageError("t-SNE backend produced malformed output");
        result(row, j) = std::stod(cell);
      }
      ++row;
    }
    if (row != N) throw StageError("t-SNE backend produced too few rows");
  }
  fs::remove(out_path, ec);
  return result;
}

}  // namespace crvae
