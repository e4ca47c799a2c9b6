#pragma once

#include <cstdint>
#include <random>

namespace relspar {

// Derives an independent seed for (master, stream).  Used to give each
// simulated trajectory / Monte-Carlo replication its own generator so results
// do not depend on evaluation order and replications can run in parallel.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream);

// Deterministic random source.  mt19937_64 is bit-exact across platforms and
// the normal sampler goes through the inverse CDF, so every draw is
// reproducible from the seed alone (no library-dependent distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng stream(std::uint64_t master, std::uint64_t index) {
    return Rng(mix_seed(master, index));
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal(double mean = 0.0, double sd = 1.0);

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  // Unbiased integer in [0, bound) via rejection sampling.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::mt19937_64 gen_;
};

}  // namespace relspar
