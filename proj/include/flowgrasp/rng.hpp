#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "flowgrasp/types.hpp"

namespace flowgrasp {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from a base seed, a stream name and an index.
// All randomness in the project is routed through named streams so that each
// component can be re-run on its own and still reproduce.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t base, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(base, stream, index));
}

VecX standard_normal(Rng& rng, Eigen::Index n);
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);

}  // namespace flowgrasp
