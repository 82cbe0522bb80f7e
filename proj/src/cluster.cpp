#include "crvae/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "crvae/csv.hpp"

namespace crvae {
namespace {

// squared distances from every point to one center
Vecd sq_dists(const Matd& pts, const Vecd& center) {
  return (pts.rowwise() - center.transpose()).rowwise().squaredNorm();
}

Matd seed_centroids_pp(const Matd& pts, int K, Rng& rng) {
  const Eigen::Index N = pts.rows();
  Matd centroids(K, pts.cols());
  centroids.row(0) = pts.row(static_cast<Eigen::Index>(rng.index(N)));
  Vecd d2 = sq_dists(pts, centroids.row(0).transpose());
  for (int k = 1; k < K; ++k) {
    const double total = d2.sum();
    Eigen::Index pick;
    if (total <= 0) {
      pick = static_cast<Eigen::Index>(rng.index(N));  // all mass on chosen points
    } else {
      // CDF-inverse sampling keeps the draw reproducible across platforms
      double u = rng.uniform() * total;
      double acc = 0;
      pick = N - 1;
      for (Eigen::Index i = 0; i < N; ++i) {
        acc += d2(i);
        if (u <= acc) {
          pick = i;
          break;
        }
      }
    }
    centroids.row(k) = pts.row(pick);
    d2 = d2.cwiseMin(sq_dists(pts, centroids.row(k).transpose()));
  }
  return centroids;
}

struct FitResult {
  std::vector<int> assign;
  Matd centroids;
  double inertia = 0;
};

// nearest centroid per point; ties go to the lowest cluster index
void assign_points(const Matd& pts, const Matd& centroids, std::vector<int>& assign) {
  const Eigen::Index N = pts.rows();
  const int K = static_cast<int>(centroids.rows());
  for (Eigen::Index i = 0; i < N; ++i) {
    int best = 0;
    double bd = (pts.row(i) - centroids.row(0)).squaredNorm();
    for (int k = 1; k < K; ++k) {
      double d = (pts.row(i) - centroids.row(k)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    assign[static_cast<size_t>(i)] = best;
  }
}

FitResult lloyd(const Matd& pts, int K, Rng& rng) {
  const Eigen::Index N = pts.rows();
  FitResult res;
  res.centroids = seed_centroids_pp(pts, K, rng);
  res.assign.assign(static_cast<size_t>(N), 0);
  std::vector<int> prev;
  const int max_iter = 300;
  for (int it = 0; it < max_iter; ++it) {
    assign_points(pts, res.centroids, res.assign);
    if (res.assign == prev) break;
    prev = res.assign;

    std::vector<int> counts(K, 0);
    Matd sums = Matd::Zero(K, pts.cols());
    for (Eigen::Index i = 0; i < N; ++i) {
      sums.row(res.assign[static_cast<size_t>(i)]) += pts.row(i);
      ++counts[static_cast<size_t>(res.assign[static_cast<size_t>(i)])];
    }
    for (int k = 0; k < K; ++k)
      if (counts[static_cast<size_t>(k)] > 0)
        res.centroids.row(k) = sums.row(k) / counts[static_cast<size_t>(k)];

    // empty-cluster repair: promote the point farthest from its centroid,
    // taken from a cluster that keeps at least one member
    for (int k = 0; k < K; ++k) {
      if (counts[static_cast<size_t>(k)] > 0) continue;
      Eigen::Index worst = -1;
      double worst_d = -1;
      for (Eigen::Index i = 0; i < N; ++i) {
        const int a = res.assign[static_cast<size_t>(i)];
        if (counts[static_cast<size_t>(a)] < 2) continue;
        double d = (pts.row(i) - res.centroids.row(a)).squaredNorm();
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      if (worst < 0) break;  // nothing to spare (mass duplicate data)
      const int from = res.assign[static_cast<size_t>(worst)];
      --counts[static_cast<size_t>(from)];
      ++counts[static_cast<size_t>(k)];
      res.assign[static_cast<size_t>(worst)] = k;
      res.centroids.row(k) = pts.row(worst);
      prev.clear();  // force another sweep
    }
  }
  // final consistency pass: assignments must map to nearest centroids
  assign_points(pts, res.centroids, res.assign);
  res.inertia = 0;
  for (Eigen::Index i = 0; i < N; ++i)
    res.inertia += (pts.row(i) - res.centroids.row(res.assign[static_cast<size_t>(i)]))
                       .squaredNorm();
  return res;
}

}  // namespace

Clustering kmeans(const Matd& latents, int K, std::uint64_t seed, int restarts) {
  const Eigen::Index N = latents.rows();
  if (K < 1) throw ConfigError("kmeans: K must be >= 1");
  if (K > N)
    throw ConfigError("kmeans: K=" + std::to_string(K) + " exceeds point count " +
                      std::to_string(N));
  if (restarts < 1) throw ConfigError("kmeans: restarts must be >= 1");

  FitResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(seed ^ splitmix64(static_cast<std::uint64_t>(r) + 1));
    FitResult fit = lloyd(latents, K, rng);
    if (fit.inertia < best.inertia) best = std::move(fit);
  }
  Clustering c;
  c.K = K;
  c.assignments = std::move(best.assign);
  c.centroids = std::move(best.centroids);
  c.inertia = best.inertia;
  c.seed = seed;
  return c;
}

double avg_intra_distance(const Clustering& c, const Matd& latents) {
  if (latents.rows() == 0) throw ContractViolation("avg_intra_distance: no points");
  double acc = 0;
  for (Eigen::Index i = 0; i < latents.rows(); ++i)
    acc += (latents.row(i) - c.centroids.row(c.assignments[static_cast<size_t>(i)])).norm();
  return acc / static_cast<double>(latents.rows());
}

std::optional<double> avg_cross_distance(const Clustering& c) {
  if (c.K < 2) return std::nullopt;
  double acc = 0;
  int pairs = 0;
  for (int a = 0; a < c.K; ++a)
    for (int b = a + 1; b < c.K; ++b) {
      acc += (c.centroids.row(a) - c.centroids.row(b)).norm();
      ++pairs;
    }
  return acc / pairs;
}

double partition_agreement(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ContractViolation("partition_agreement: size mismatch");
  const size_t n = a.size();
  if (n < 2) return 1.0;
  long long agree = 0, total = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      ++total;
      if ((a[i] == a[j]) == (b[i] == b[j])) ++agree;
    }
  return static_cast<double>(agree) / static_cast<double>(total);
}

double robustness(const Matd& latents, int K, std::uint64_t seed, int restarts) {
  if (K + 1 > latents.rows())
    throw ConfigError("robustness: K+1 exceeds point count");
  Clustering ck = kmeans(latents, K, seed, restarts);
  Clustering ck1 = kmeans(latents, K + 1, seed, restarts);
  return partition_agreement(ck.assignments, ck1.assignments);
}

KSweepReport sweep_k(const Matd& latents, int k_min, int k_max, std::uint64_t seed,
                     int restarts) {
  if (k_min < 1) throw ConfigError("sweep_k: k_min must be >= 1");
  if (k_max < k_min) throw ConfigError("sweep_k: k_max must be >= k_min");
  if (k_max > latents.rows()) throw ConfigError("sweep_k: k_max exceeds point count");
  KSweepReport report;
  for (int K = k_min; K <= k_max; ++K) {
    Clustering c = kmeans(latents, K, seed, restarts);
    KSweepRow row;
    row.K = K;
    row.avg_intra = avg_intra_distance(c, latents);
    row.avg_cross = avg_cross_distance(c);
    if (K + 1 <= latents.rows()) row.robustness = robustness(latents, K, seed, restarts);
    row.sizes.assign(static_cast<size_t>(K), 0);
    for (int a : c.assignments) ++row.sizes[static_cast<size_t>(a)];
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_sweep_csv(const std::string& path, const KSweepReport& report,
                     const std::vector<std::string>& comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("sweep: cannot write " + path);
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "K,avg_intra,avg_cross,robustness,sizes\n";
  for (const auto& r : report.rows) {
    std::string sizes;
    for (size_t i = 0; i < r.sizes.size(); ++i) {
      if (i) sizes += ";";
      sizes += std::to_string(r.sizes[i]);
    }
    out << r.K << "," << csv::format_g17(r.avg_intra) << ","
        << (r.avg_cross ? csv::format_g17(*r.avg_cross) : "") << ","
        << (r.robustness ? csv::format_g17(*r.robustness) : "") << "," << sizes << "\n";
  }
}

KSweepReport read_sweep_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  if (t.rows.empty() || t.rows[0] != std::vector<std::string>{"K", "avg_intra", "avg_cross",
                                                              "robustness", "sizes"})
    throw ParseError("sweep: unexpected header in " + path);
  KSweepReport report;
  for (size_t i = 1; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (r.size() != 5) throw ParseError("sweep: malformed row in " + path);
    KSweepRow row;
    row.K = std::stoi(r[0]);
    row.avg_intra = std::stod(r[1]);
    if (!r[2].empty()) row.avg_cross = std::stod(r[2]);
    if (!r[3].empty()) row.robustness = std::stod(r[3]);
    std::istringstream ss(r[4]);
    std::string part;
    while (std::getline(ss, part, ';'))
      if (!part.empty()) row.sizes.push_back(std::stoi(part));
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace crvae
