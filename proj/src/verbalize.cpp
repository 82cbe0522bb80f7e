#include "crvae/verbalize.hpp"

#include <cmath>
#include <limits>

namespace crvae {

std::pair<std::string, double> nearest_word(const Vecd& vector, const EmbeddingTable& table,
                                            VerbalizeMetric metric) {
  if (table.size() == 0) throw ContractViolation("nearest_word: empty table");
  const Matd& V = table.vectors();
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  if (metric == VerbalizeMetric::Euclidean) {
    Vecd d2 = (V.rowwise() - vector.transpose()).rowwise().squaredNorm();
    best_d = d2.minCoeff(&best);  // first minimum = insertion order
    best_d = std::sqrt(best_d);
  } else {
    const double qn = vector.norm();
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
      const double rn = V.row(i).norm();
      double cos = (qn == 0 || rn == 0) ? 0 : V.row(i).dot(vector.transpose()) / (rn * qn);
      double d = 1.0 - cos;
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
  }
  return {table.tokens()[static_cast<size_t>(best)], best_d};
}

VerbalizedText verbalize_sequence(const Matd& recon, const std::vector<char>& mask,
                                  const EmbeddingTable& table, VerbalizeMetric metric) {
  VerbalizedText out;
  for (Eigen::Index r = 0; r < recon.rows(); ++r) {
    if (r < static_cast<Eigen::Index>(mask.size()) && !mask[static_cast<size_t>(r)]) continue;
    auto [tok, dist] = nearest_word(recon.row(r).transpose(), table, metric);
    out.tokens.push_back(std::move(tok));
    out.distances.push_back(dist);
  }
  return out;
}

}  // namespace crvae
