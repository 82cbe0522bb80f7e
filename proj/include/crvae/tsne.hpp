#pragma once

#include <string>

#include "crvae/types.hpp"

namespace crvae {

// 2-D t-SNE projection, delegated to an external implementation (python3 +
// scikit-learn, exact method, PCA init) so results are deterministic for a
// given seed. Throws ConfigError when perplexity >= N and StageError when the
// external backend is unavailable or fails.
Matd project_2d(const Matd& latents, double perplexity, std::uint64_t seed);

// True when the external t-SNE backend responds; lets the pipeline degrade to
// a warning instead of failing the run.
bool tsne_backend_available();

}  // namespace crvae
