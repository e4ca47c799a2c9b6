#include "relspar/rng.hpp"

#include <stdexcept>

#include "relspar/math.hpp"

namespace relspar {

namespace {

std::uint64_t splitmix_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t state = master ^ (0x632BE59BD9B4E019ULL * (stream + 1));
  std::uint64_t z = splitmix_next(state);
  z ^= splitmix_next(state);
  return z;
}

double Rng::normal(double mean, double sd) {
  return mean + sd * norm_quantile(uniform());
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
  std::uint64_t reject = (~bound + 1) % bound;  // 2^64 mod bound
  for (;;) {
    std::uint64_t r = gen_();
    if (r >= reject) return r % bound;
  }
}

}  // namespace relspar
