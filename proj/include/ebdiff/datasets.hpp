#pragma once

#include <string>

#include "ebdiff/diffusion.hpp"

namespace ebdiff {

// 2-D toy datasets, deterministic per seed.
//   gauss8:       8 equal-weight Gaussians (sigma 0.05) centered on the unit
//                 circle; already zero-mean, left unscaled.
//   two_moons:    interleaved half circles with Gaussian jitter.
//   swiss_roll:   2-D spiral with Gaussian jitter.
//   checkerboard: uniform over the 8 dark cells of a 4x4 board.
// The latter three are standardized to zero mean and unit per-coordinate
// scale over the generated points.
SampleBatch generate_dataset(const std::string& name, int n, uint64_t seed);

}  // namespace ebdiff
