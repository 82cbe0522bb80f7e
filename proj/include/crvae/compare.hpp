#pragma once

// Cross-video cluster comparison: embed each cluster's tags, score cluster
// pairs by the mean of the top-10 cosine similarities of the full tag-pair
// matrix, and export a heatmap sorted by descending best-pair similarity.

#include <map>
#include <string>
#include <vector>

#include "crvae/backends.hpp"
#include "crvae/interpret.hpp"
#include "crvae/types.hpp"

namespace crvae {

struct PairSimilarityMatrix {
  std::vector<int> row_ids, col_ids;                // cluster ids, sorted order
  std::vector<std::string> row_names, col_names;    // display names, same order
  Matd values;                                      // row_ids.size() x col_ids.size()
};

// One embedding row per tag, order preserved. Transport failures are fatal
// for the comparison stage (every similarity needs every vector).
Matd embed_tags(const TagSet& set, PhraseBackend& backend);

// Mean of the 10 largest cosines of the |A|x|B| similarity matrix (all of
// them if fewer). Rows are embeddings. Zero-norm rows score 0 with a warning.
double pair_similarity(const Matd& a, const Matd& b);

// Full cross matrix over the interpreted clusters of both runs; rows and
// columns are reordered by each cluster's best pair similarity, descending.
// Uninterpreted clusters are excluded with a warning. `names_*` supply
// operator display names by cluster id; absent ids fall back to "A<id>" /
// "B<id>".
PairSimilarityMatrix similarity_matrix(const std::vector<TagSet>& clusters_a,
                                       const std::vector<TagSet>& clusters_b,
                                       PhraseBackend& backend,
                                       const std::map<int, std::string>& names_a = {},
                                       const std::map<int, std::string>& names_b = {});

// CSV (4-decimal cells, named header row/column) plus a rendered heatmap.
// `image_format` is "svg" or "ppm".
void export_heatmap(const PairSimilarityMatrix& m, const std::string& csv_path,
                    const std::string& image_path, const std::string& image_format,
                    const std::vector<std::string>& comments);

PairSimilarityMatrix read_heatmap_csv(const std::string& path);

}  // namespace crvae
