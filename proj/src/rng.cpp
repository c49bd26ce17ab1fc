#include "flowgrasp/rng.hpp"

namespace flowgrasp {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t index) {
  // FNV-1a over the stream name, then mixed with base and index.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(base ^ h) + splitmix64(index + 0x632be59bd9b4e019ULL));
}

VecX standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VecX out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal(rng);
  return out;
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace flowgrasp
