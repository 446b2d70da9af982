#pragma once

#include <random>

namespace aceseg {

/// The one generator used for initialisation, data synthesis and
/// augmentation, so every seeded path is reproducible.
using Rng = std::mt19937_64;

}  // namespace aceseg
