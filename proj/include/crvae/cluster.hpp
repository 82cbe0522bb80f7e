#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crvae/types.hpp"

namespace crvae {

struct Clustering {
  int K = 0;
  std::vector<int> assignments;  // per point, in [0, K)
  Matd centroids;                // (K x dim)
  double inertia = 0;            // sum of squared point-to-centroid distances
  std::uint64_t seed = 0;
};

// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs by
// inertia. Empty clusters are repaired by promoting the point farthest from
// its centroid (among clusters that can spare one). latents: one point per
// row. K > N is a config error.
Clustering kmeans(const Matd& latents, int K, std::uint64_t seed, int restarts = 10);

// Mean Euclidean distance from each point to its own centroid.
double avg_intra_distance(const Clustering& c, const Matd& latents);

// Mean pairwise distance between distinct centroids; absent when K < 2.
std::optional<double> avg_cross_distance(const Clustering& c);

// Fraction of point pairs whose co-membership agrees between two partitions.
double partition_agreement(const std::vector<int>& a, const std::vector<int>& b);

// Pair-counting agreement between the K and K+1 fits of the same data.
double robustness(const Matd& latents, int K, std::uint64_t seed, int restarts = 10);

struct KSweepRow {
  int K = 0;
  double avg_intra = 0;
  std::optional<double> avg_cross;
  std::optional<double> robustness;  // absent when K+1 > N
  std::vector<int> sizes;
};

struct KSweepReport {
  std::vector<KSweepRow> rows;
};

KSweepReport sweep_k(const Matd& latents, int k_min, int k_max, std::uint64_t seed,
                     int restarts = 10);

// CSV columns: K, avg_intra, avg_cross, robustness, sizes (semicolon-joined);
// absent metrics are empty cells.
void write_sweep_csv(const std::string& path, const KSweepReport& report,
                     const std::vector<std::string>& comments);
KSweepReport read_sweep_csv(const std::string& path);

}  // namespace crvae
