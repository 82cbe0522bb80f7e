#pragma once

#include <string>
#include <vector>

#include "crvae/textprep.hpp"
#include "crvae/types.hpp"

namespace crvae {

struct VerbalizedText {
  int source_pair_id = 0;
  std::vector<std::string> tokens;
  std::vector<double> distances;  // nearest-neighbor distance per token
};

enum class VerbalizeMetric { Euclidean, Cosine };

// Exhaustive nearest-neighbor scan over the table; ties resolve to the
// earliest inserted token.
std::pair<std::string, double> nearest_word(const Vecd& vector, const EmbeddingTable& table,
                                            VerbalizeMetric metric = VerbalizeMetric::Euclidean);

// recon: (L x dim), one decoded step per row; rows with mask 0 are dropped.
VerbalizedText verbalize_sequence(const Matd& recon, const std::vector<char>& mask,
                                  const EmbeddingTable& table,
                                  VerbalizeMetric metric = VerbalizeMetric::Euclidean);

}  // namespace crvae
