#pragma once

// Self-contained demo dataset: 32 rendered frames across four visually and
// textually distinct scenes, a timed transcript, a small embedding table
// covering the caption vocabulary, and a ready-to-run config. Everything is
// deterministic in the seed.

#include <string>

#include "crvae/types.hpp"

namespace crvae {

// Writes frames/, transcript.json, vocab.txt, and config.json under out_dir;
// returns the config path.
std::string write_synthetic_dataset(const std::string& out_dir, std::uint64_t seed);

}  // namespace crvae
