#include <cmath>
#include <limits>

#include "doctest.h"
#include "relspar/optim.hpp"
#include "relspar/rng.hpp"

using namespace relspar;

namespace {

// Soft-threshold of v toward zero at level t.
double soft(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

TEST_CASE("bfgs_maximize solves concave quadratics") {
  SUBCASE("one dimension") {
    SmoothObjective f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      if (g) {
        g->resize(1);
        (*g)(0) = -2.0 * (x(0) - 2.0);
      }
      return -(x(0) - 2.0) * (x(0) - 2.0);
    };
    Eigen::VectorXd x0(1);
    x0 << 10.0;
    OptimResult r = bfgs_maximize(f, x0, {});
    CHECK(r.converged);
    CHECK(r.x(0) == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(r.f == doctest::Approx(0.0));
  }

  SUBCASE("five dimensions with a random SPD curvature") {
    Rng rng(42);
    Eigen::MatrixXd B(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) B(i, j) = rng.normal();
    Eigen::MatrixXd A = B * B.transpose() + 0.5 * Eigen::MatrixXd::Identity(5, 5);
    Eigen::VectorXd c(5);
    for (int i = 0; i < 5; ++i) c(i) = rng.normal();

    SmoothObjective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      Eigen::VectorXd d = x - c;
      if (g) *g = -2.0 * (A * d);
      return -d.dot(A * d);
    };
    OptimResult r = bfgs_maximize(f, Eigen::VectorXd::Zero(5), {});
    CHECK(r.converged);
    CHECK((r.x - c).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("bfgs_maximize rejects a non-finite start") {
  SmoothObjective f = [](const Eigen::VectorXd&, Eigen::VectorXd* g) {
    if (g) g->setZero(1);
    return -std::numeric_limits<double>::infinity();
  };
  Eigen::VectorXd x0(1);
  x0 << 0.0;
  CHECK_THROWS(bfgs_maximize(f, x0, {}));
}

TEST_CASE("bfgs_maximize caps per-coordinate movement") {
  // Steep linear start far from the optimum; max_coord_step keeps steps sane.
  SmoothObjective f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) {
      g->resize(1);
      (*g)(0) = -2.0 * x(0) * 1e6;
    }
    return -x(0) * x(0) * 1e6;
  };
  Eigen::VectorXd x0(1);
  x0 << 100.0;
  OptimOptions o;
  o.max_iters = 2000;
  OptimResult r = bfgs_maximize(f, x0, o);
  CHECK(r.converged);
  CHECK(r.x(0) == doctest::Approx(0.0));
}

TEST_CASE("prox_maximize reproduces the soft-threshold closed form") {
  // f(x) = -0.5 |x - c|^2 has prox solution x_k = center_k + soft(c_k - center_k, lambda w_k).
  Rng rng(7);
  Eigen::VectorXd c(6), center(6), w(6);
  for (int k = 0; k < 6; ++k) {
    c(k) = 2.0 * rng.normal();
    center(k) = rng.normal();
    w(k) = 0.5 + rng.uniform();
  }
  w(3) = std::numeric_limits<double>::infinity();  // pinned
  w(4) = 0.0;                                      // unpenalized
  const double lambda = 0.7;

  SmoothObjective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = -(x - c);
    return -0.5 * (x - c).squaredNorm();
  };
  OptimResult r = prox_maximize(f, center, center, lambda, w, {});
  CHECK(r.converged);
  for (int k = 0; k < 6; ++k) {
    double expect;
    if (std::isinf(w(k))) {
      expect = center(k);
    } else {
      expect = center(k) + soft(c(k) - center(k), lambda * w(k));
    }
    CHECK(r.x(k) == doctest::Approx(expect).epsilon(1e-7));
  }
  // Pinned coordinate is exact, not merely close.
  CHECK(r.x(3) == center(3));
}

TEST_CASE("prox_maximize with lambda 0 agrees with bfgs_maximize") {
  Rng rng(11);
  Eigen::MatrixXd B(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) B(i, j) = rng.normal();
  Eigen::MatrixXd A = B * B.transpose() + Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd c(3);
  c << 0.4, -1.2, 0.9;
  SmoothObjective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    Eigen::VectorXd d = x - c;
    if (g) *g = -2.0 * (A * d);
    return -d.dot(A * d);
  };
  Eigen::VectorXd start = Eigen::VectorXd::Zero(3);
  OptimResult pb = bfgs_maximize(f, start, {});
  OptimResult pp = prox_maximize(f, start, start, 0.0, Eigen::VectorXd::Ones(3), {});
  CHECK(pb.converged);
  CHECK(pp.converged);
  CHECK((pb.x - pp.x).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("prox_maximize validates its inputs") {
  SmoothObjective f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = -x;
    return -0.5 * x.squaredNorm();
  };
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
  CHECK_THROWS(prox_maximize(f, x0, Eigen::VectorXd::Zero(3), 1.0, Eigen::VectorXd::Ones(2), {}));
  CHECK_THROWS(prox_maximize(f, x0, x0, -0.5, Eigen::VectorXd::Ones(2), {}));
}
