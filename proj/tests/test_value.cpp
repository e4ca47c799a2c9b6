#include <cmath>

#include "doctest.h"
#include "relspar/math.hpp"
#include "relspar/rng.hpp"
#include "relspar/value.hpp"

using namespace relspar;

namespace {

Dataset random_dataset(int n, int T, int K, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    Trajectory tr;
    tr.states.resize(T + 2, K);
    tr.actions.resize(T + 1);
    tr.rewards.resize(T + 1);
    for (int t = 0; t < T + 2; ++t)
      for (int k = 0; k < K; ++k) tr.states(t, k) = rng.normal();
    for (int t = 0; t <= T; ++t) {
      tr.actions(t) = rng.bernoulli(0.5);
      tr.rewards(t) = rng.normal();
    }
    d.trajectories.push_back(std::move(tr));
  }
  return d;
}

}  // namespace

TEST_CASE("worked example: ratios (1,3), returns (10,2)") {
  ISRatios r;
  r.log_ratios.resize(2);
  r.log_ratios << 0.0, std::log(3.0);
  r.returns.resize(2);
  r.returns << 10.0, 2.0;
  r.mean_ratio = 2.0;

  ValueEstimate v = value_weighted(r);
  CHECK(v.n == 2);
  CHECK(v.v_weighted == doctest::Approx(4.0).epsilon(1e-14));    // (10 + 6) / (1 + 3)
  CHECK(v.v_unweighted == doctest::Approx(8.0).epsilon(1e-14));  // (10 + 6) / 2
  // sigma^2 = mean((rG - V)^2) / (E r)^2 = ((36 + 4)/2) / 4 = 5
  CHECK(value_variance(r) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(v.sd_weighted == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
}

TEST_CASE("identical policies give unit ratios and the plain mean return") {
  Dataset d = random_dataset(17, 2, 3, 3);
  Eigen::VectorXd b(3);
  b << 0.3, -0.2, 0.5;
  PolicyParams bp{b};
  MaskedPolicy p = full_policy(b);
  ISRatios r = is_ratios(p, bp, d);
  CHECK(r.log_ratios.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(r.mean_ratio == doctest::Approx(1.0).epsilon(1e-15));
  double g = 0.0;
  for (const auto& tr : d.trajectories) g += tr.rewards.sum();
  g /= d.n();
  ValueEstimate v = value_weighted(r);
  CHECK(v.v_weighted == doctest::Approx(g).epsilon(1e-14));
  CHECK(v.v_unweighted == doctest::Approx(g).epsilon(1e-14));

  // Masked policy with beta = b is the same policy regardless of mask.
  Eigen::ArrayXd mask(3);
  mask << 0, 1, 0;
  ISRatios rm = is_ratios(masked_policy(b, b, mask), bp, d);
  CHECK(rm.log_ratios.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("ratios and values match a direct product-space computation") {
  Dataset d = random_dataset(25, 1, 2, 8);
  Eigen::VectorXd beta(2), b(2);
  beta << 0.9, -1.1;
  b << -0.2, 0.4;
  MaskedPolicy p = full_policy(beta);
  PolicyParams bp{b};
  ISRatios r = is_ratios(p, bp, d);

  double sum_r = 0.0, sum_rg = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    const Trajectory& tr = d.trajectories[size_t(i)];
    double num = 1.0, den = 1.0;
    for (int t = 0; t < d.horizon(); ++t) {
      const Eigen::VectorXd s = tr.states.row(t).transpose();
      const double pp = expit(beta.dot(s)), pb = expit(b.dot(s));
      num *= tr.actions(t) == 1 ? pp : 1.0 - pp;
      den *= tr.actions(t) == 1 ? pb : 1.0 - pb;
    }
    const double ratio = num / den;
    CHECK(std::exp(r.log_ratios(i)) == doctest::Approx(ratio).epsilon(1e-12));
    CHECK(r.returns(i) == doctest::Approx(tr.rewards.sum()).epsilon(1e-14));
    sum_r += ratio;
    sum_rg += ratio * tr.rewards.sum();
  }
  CHECK(r.mean_ratio == doctest::Approx(sum_r / d.n()).epsilon(1e-12));
  ValueEstimate v = value_weighted(r);
  CHECK(v.v_weighted == doctest::Approx(sum_rg / sum_r).epsilon(1e-12));
  CHECK(v.v_unweighted == doctest::Approx(sum_rg / d.n()).epsilon(1e-12));

  // Variance oracle.
  double acc = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    const double rg = std::exp(r.log_ratios(i)) * r.returns(i);
    acc += (rg - v.v_weighted) * (rg - v.v_weighted);
  }
  acc /= d.n();
  const double er = sum_r / d.n();
  CHECK(value_variance(r) == doctest::Approx(acc / (er * er)).epsilon(1e-10));
}

TEST_CASE("degenerate log-ratio spreads are rejected") {
  ISRatios r;
  r.log_ratios.resize(2);
  r.log_ratios << 0.0, -701.0;
  r.returns.resize(2);
  r.returns << 1.0, 1.0;
  r.mean_ratio = 0.5;
  CHECK_THROWS(value_weighted(r));
  CHECK_THROWS(value_variance(r));

  ISRatios ok;
  ok.log_ratios.resize(2);
  ok.log_ratios << 0.0, -600.0;
  ok.returns.resize(2);
  ok.returns << 1.0, 1.0;
  ok.mean_ratio = 0.5;
  CHECK_NOTHROW(value_weighted(ok));
}

TEST_CASE("average treatment probability pools all action steps") {
  Dataset d = random_dataset(6, 1, 2, 12);
  Eigen::VectorXd beta(2);
  beta << 0.7, 0.1;
  MaskedPolicy p = full_policy(beta);
  double acc = 0.0;
  for (const auto& tr : d.trajectories)
    for (int t = 0; t < d.horizon(); ++t)
      acc += p.prob_treat(tr.states.row(t).transpose());
  acc /= d.n() * d.horizon();
  CHECK(avg_treat_prob(p, d) == doctest::Approx(acc).epsilon(1e-14));
}
