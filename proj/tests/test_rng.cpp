#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "relspar/math.hpp"
#include "relspar/rng.hpp"

using namespace relspar;

TEST_CASE("identical seeds give identical draws") {
  Rng a(123456789), b(123456789);
  for (int i = 0; i < 200; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
  }
}

TEST_CASE("different streams of one master differ") {
  Rng a = Rng::stream(7, 0);
  Rng b = Rng::stream(7, 1);
  int equal = 0;
  for (int i = 0; i < 100; ++i) {
    if (a.uniform() == b.uniform()) ++equal;
  }
  CHECK(equal == 0);
}

TEST_CASE("mix_seed separates masters and streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t master = 0; master < 20; ++master) {
    for (std::uint64_t stream = 0; stream < 50; ++stream) {
      seen.insert(mix_seed(master, stream));
    }
  }
  CHECK(seen.size() == 20u * 50u);
}

TEST_CASE("uniform lies strictly inside (0,1) with the right moments") {
  Rng r(99);
  const int N = 100000;
  double lo = 1.0, hi = 0.0, sum = 0.0, sq = 0.0;
  for (int i = 0; i < N; ++i) {
    double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
    sq += u * u;
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  const double mean = sum / N;
  const double var = sq / N - mean * mean;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.03));
}

TEST_CASE("normal equals the inverse-CDF transform of uniform") {
  Rng a(5150), b(5150);
  for (int i = 0; i < 500; ++i) {
    const double u = a.uniform();
    CHECK(b.normal() == norm_quantile(u));
  }
}

TEST_CASE("normal mean and sd scaling") {
  Rng r(2024);
  const int N = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < N; ++i) {
    double x = r.normal(3.0, 2.0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / N;
  const double sd = std::sqrt(sq / N - mean * mean);
  CHECK(mean == doctest::Approx(3.0).epsilon(0.01));
  CHECK(sd == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("bernoulli respects the probability") {
  Rng r(31);
  int ones = 0;
  const int N = 50000;
  for (int i = 0; i < N; ++i) ones += r.bernoulli(0.3);
  CHECK(double(ones) / N == doctest::Approx(0.3).epsilon(0.05));
  Rng z(31);
  for (int i = 0; i < 100; ++i) {
    CHECK(z.bernoulli(0.0) == 0);
    CHECK(z.bernoulli(1.0) == 1);
  }
}

TEST_CASE("below covers its range uniformly and deterministically") {
  Rng r(8);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    std::uint64_t v = r.below(7);
    REQUIRE(v < 7);
    ++counts[size_t(v)];
  }
  for (int c : counts) CHECK(c > 700);
  Rng s(8);
  Rng t(8);
  for (int i = 0; i < 50; ++i) CHECK(s.below(1000) == t.below(1000));
  CHECK(Rng(4).below(1) == 0);
}
