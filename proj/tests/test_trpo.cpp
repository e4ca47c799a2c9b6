#include <cmath>
#include <limits>

#include "doctest.h"
#include "relspar/behavioral.hpp"
#include "relspar/rng.hpp"
#include "relspar/simulate.hpp"
#include "relspar/trpo.hpp"
#include "relspar/value.hpp"

using namespace relspar;

namespace {

Dataset sim(int n, std::uint64_t seed, int K = 2) {
  SimConfig cfg;
  cfg.n = n;
  cfg.T = 2;
  cfg.K = K;
  cfg.seed = seed;
  return gen_dataset(cfg);
}

}  // namespace

TEST_CASE("kl_n vanishes at the behavioral policy and matches the ratio identity") {
  Dataset d = sim(40, 3);
  BehavioralFit b = fit_mle(d);
  MaskedPolicy beh = full_policy(b.b.coefficients);
  CHECK(kl_n(beh, b.b, d) == 0.0);

  Eigen::VectorXd beta(2);
  beta << 0.5, -0.9;
  MaskedPolicy p = full_policy(beta);
  ISRatios r = is_ratios(p, b.b, d);
  CHECK(kl_n(p, b.b, d) == doctest::Approx(-r.log_ratios.mean()).epsilon(1e-13));

  // Direct trajectory-product definition.
  double acc = 0.0;
  for (const auto& tr : d.trajectories)
    for (int t = 0; t < d.horizon(); ++t) {
      const Eigen::VectorXd s = tr.states.row(t).transpose();
      acc += beh.log_prob(tr.actions(t), s) - p.log_prob(tr.actions(t), s);
    }
  acc /= d.n();
  CHECK(kl_n(p, b.b, d) == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("m_n equals the weighted value minus gamma KL") {
  Dataset d = sim(40, 5);
  BehavioralFit b = fit_mle(d);
  Eigen::VectorXd beta(2);
  beta << -0.1, 0.8;
  MaskedPolicy p = full_policy(beta);
  const double gamma = 2.5;
  ValueEstimate v = value_weighted(is_ratios(p, b.b, d));
  CHECK(m_n(p, b.b, d, gamma) ==
        doctest::Approx(v.v_weighted - gamma * kl_n(p, b.b, d)).epsilon(1e-12));
}

TEST_CASE("MnEvaluator reproduces m_n and its finite-difference gradient") {
  Dataset d = sim(30, 7);
  BehavioralFit bf = fit_mle(d);
  const Eigen::VectorXd& bn = bf.b.coefficients;
  const double gamma = 3.0;

  for (int masked = 0; masked < 2; ++masked) {
    Eigen::ArrayXd mask(2);
    if (masked) {
      mask << 0, 1;
    } else {
      mask << 1, 1;
    }
    MnEvaluator ev(d, bn, bn, mask, gamma);
    Rng rng(100 + masked);
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::VectorXd beta = bn;
      for (int k = 0; k < 2; ++k) beta(k) += 0.6 * rng.normal();
      MaskedPolicy p = masked_policy(beta, bn, mask);
      const double direct = m_n(p, bf.b, d, gamma);
      CHECK(ev.objective(beta) == doctest::Approx(direct).epsilon(1e-11));

      MnEvaluator::Eval e = ev.eval(beta);
      REQUIRE(e.valid);
      CHECK(e.m == doctest::Approx(direct).epsilon(1e-11));
      CHECK(e.v_weighted == doctest::Approx(value_weighted(is_ratios(p, bf.b, d)).v_weighted)
                                .epsilon(1e-11));
      CHECK(e.kl == doctest::Approx(kl_n(p, bf.b, d)).epsilon(1e-11));
      const double h = 1e-6;
      for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd up = beta, dn = beta;
        up(k) += h;
        dn(k) -= h;
        const double g = (ev.objective(up) - ev.objective(dn)) / (2.0 * h);
        if (mask(k) == 0.0) {
          CHECK(e.grad(k) == 0.0);
          CHECK(g == doctest::Approx(0.0));
        } else {
          CHECK(e.grad(k) == doctest::Approx(g).epsilon(1e-5));
        }
      }
    }
  }
}

TEST_CASE("MnEvaluator returns -inf instead of throwing at degenerate points") {
  Dataset d = sim(20, 9);
  BehavioralFit bf = fit_mle(d);
  MnEvaluator ev(d, bf.b.coefficients, bf.b.coefficients, Eigen::ArrayXd::Ones(2), 3.0);
  Eigen::VectorXd far(2);
  far << 0.0, 400.0;
  CHECK(ev.objective(far) == -std::numeric_limits<double>::infinity());
  CHECK_FALSE(ev.eval(far).valid);
}

TEST_CASE("derivative bundle: z rows average exactly to J") {
  Dataset d = sim(35, 11);
  BehavioralFit bf = fit_mle(d);
  Eigen::VectorXd beta = bf.b.coefficients;
  beta(1) -= 0.4;
  Eigen::ArrayXd mask(2);
  mask << 0, 1;
  MaskedPolicy p = masked_policy(beta, bf.b.coefficients, mask);
  DerivativeBundle db = derivative_bundle(p, bf.b, d, 3.0);
  Eigen::VectorXd zbar = db.per_trajectory_z.colwise().mean().transpose();
  CHECK((zbar - db.J).lpNorm<Eigen::Infinity>() < 1e-13);
}

TEST_CASE("derivative bundle matches finite differences of the objective") {
  Dataset d = sim(30, 13);
  BehavioralFit bf = fit_mle(d);
  const Eigen::VectorXd bn = bf.b.coefficients;
  const double gamma = 2.0;
  const double h = 1e-5;

  for (int masked = 0; masked < 2; ++masked) {
    Eigen::ArrayXd mask(2);
    if (masked) {
      mask << 0, 1;
    } else {
      mask << 1, 1;
    }
    Eigen::VectorXd beta = bn;
    beta(1) += 0.5;
    if (!masked) beta(0) -= 0.3;
    MaskedPolicy p = masked_policy(beta, bn, mask);
    DerivativeBundle db = derivative_bundle(p, bf.b, d, gamma);

    MnEvaluator ev(d, bn, bn, mask, gamma);
    // J vs FD of m_n in beta.
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd up = beta, dn = beta;
      up(k) += h;
      dn(k) -= h;
      const double g = (ev.objective(up) - ev.objective(dn)) / (2.0 * h);
      CHECK(db.J(k) == doctest::Approx(g).epsilon(2e-5));
    }
    // H vs FD of J in beta.
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd up = beta, dn = beta;
      up(j) += h;
      dn(j) -= h;
      Eigen::VectorXd gu = ev.eval(up).grad, gd = ev.eval(dn).grad;
      for (int k = 0; k < 2; ++k) {
        CHECK(db.H(k, j) == doctest::Approx((gu(k) - gd(k)) / (2.0 * h)).epsilon(2e-4));
      }
    }
    // X vs FD of J in the shared behavioral coefficients.
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd bu = bn, bd = bn;
      bu(j) += h;
      bd(j) -= h;
      Eigen::VectorXd gu = MnEvaluator(d, bu, bu, mask, gamma).eval(beta).grad;
      Eigen::VectorXd gd = MnEvaluator(d, bd, bd, mask, gamma).eval(beta).grad;
      for (int k = 0; k < 2; ++k) {
        CHECK(db.X(k, j) == doctest::Approx((gu(k) - gd(k)) / (2.0 * h)).epsilon(2e-4));
      }
    }
  }
}

TEST_CASE("derivative bundle rejects masked fits with mismatched nuisance") {
  Dataset d = sim(20, 15);
  BehavioralFit bf = fit_mle(d);
  Eigen::VectorXd beta = bf.b.coefficients, other = bf.b.coefficients;
  other(0) += 0.2;
  Eigen::ArrayXd mask(2);
  mask << 0, 1;
  MaskedPolicy p = masked_policy(beta, other, mask);  // pinned to `other`, not b
  CHECK_THROWS(derivative_bundle(p, bf.b, d, 3.0));
}

TEST_CASE("fit_trpo finds the grid-search maximum") {
  Dataset d = sim(80, 17);
  BehavioralFit bf = fit_mle(d);
  FitConfig cfg;
  cfg.gamma = 3.0;

  SUBCASE("full mask: no nearby grid point beats the fit") {
    TrpoFit fit = fit_trpo(bf, d, cfg, Eigen::ArrayXd::Ones(2));
    CHECK(fit.converged);
    CHECK(fit.grad_norm < 1e-6);
    MnEvaluator ev(d, bf.b.coefficients, bf.b.coefficients, Eigen::ArrayXd::Ones(2), cfg.gamma);
    const double at_fit = ev.objective(fit.beta.coefficients);
    CHECK(fit.m_value == doctest::Approx(at_fit).epsilon(1e-10));
    double best = -1e300;
    for (double d0 = -0.2; d0 <= 0.2; d0 += 0.008) {
      for (double d1 = -0.2; d1 <= 0.2; d1 += 0.008) {
        Eigen::VectorXd beta = fit.beta.coefficients;
        beta(0) += d0;
        beta(1) += d1;
        best = std::max(best, ev.objective(beta));
      }
    }
    CHECK(at_fit >= best - 1e-9);
  }

  SUBCASE("masked fit pins the inactive coordinate bit-for-bit") {
    Eigen::ArrayXd mask(2);
    mask << 0, 1;
    TrpoFit fit = fit_trpo(bf, d, cfg, mask);
    CHECK(fit.converged);
    CHECK(fit.beta.coefficients(0) == bf.b.coefficients(0));
    MnEvaluator ev(d, bf.b.coefficients, bf.b.coefficients, mask, cfg.gamma);
    const double at_fit = ev.objective(fit.beta.coefficients);
    double best = -1e300;
    for (double d1 = -0.3; d1 <= 0.3; d1 += 0.003) {
      Eigen::VectorXd beta = fit.beta.coefficients;
      beta(1) += d1;
      best = std::max(best, ev.objective(beta));
    }
    CHECK(at_fit >= best - 1e-9);
  }
}

TEST_CASE("zero rewards send the fit back to the behavioral coefficients") {
  Dataset d = sim(50, 19);
  for (auto& tr : d.trajectories) tr.rewards.setZero();
  BehavioralFit bf = fit_mle(d);
  FitConfig cfg;
  cfg.gamma = 3.0;
  TrpoFit fit = fit_trpo(bf, d, cfg, Eigen::ArrayXd::Ones(2));
  CHECK(fit.converged);
  CHECK((fit.beta.coefficients - bf.b.coefficients).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("fit_trpo requires a positive gamma") {
  Dataset d = sim(20, 21);
  BehavioralFit bf = fit_mle(d);
  FitConfig cfg;
  cfg.gamma = 0.0;
  CHECK_THROWS(fit_trpo(bf, d, cfg, Eigen::ArrayXd::Ones(2)));
}
