#pragma once

#include <Eigen/Dense>
#include <vector>

#include "relspar/policy.hpp"
#include "relspar/trajectories.hpp"

namespace relspar {

// Maximum-likelihood fit of the behavioral policy pi_b(1|s) = expit(b's) on
// the pooled (state, action) pairs of a dataset.
struct BehavioralFit {
  PolicyParams b;
  // Per-trajectory score l'_i(b_n) = sum_t (A_it - expit(b' S_it)) S_it, rows i.
  Eigen::MatrixXd per_trajectory_scores;  // n x K
  // (-E_n l''(b_n))^{-1}: inverse of the average per-trajectory information.
  Eigen::MatrixXd neg_hessian_inv;  // K x K
  bool converged = false;
  int iterations = 0;
};

// Newton-Raphson with step-halving on the pooled log-likelihood.  Converges
// when the mean-score sup-norm falls below 1e-10 (or its norm stops changing
// in relative terms by more than 1e-12).  Throws if coefficients diverge past
// 50 in absolute value (separable data) or the Hessian is singular.
BehavioralFit fit_mle(const Dataset& d, int max_iters = 100);

// Influence of the behavioral nuisance: rows q_i = (-E_n l'')^{-1} l'_i(b_n),
// so that sqrt(n) * mean(q_i) tracks sqrt(n)(b_n - b_0).
Eigen::MatrixXd influence_q(const BehavioralFit& fit);

struct CalibrationRow {
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  double mean_predicted = 0.0;     // NaN when the bin is empty
  double observed_frequency = 0.0; // NaN when the bin is empty
  long count = 0;
};

// Bins the pooled predicted treatment probabilities into equal-width bins over
// [0,1] and reports mean prediction vs. observed action frequency per bin.
std::vector<CalibrationRow> calibration_table(const BehavioralFit& fit, const Dataset& d,
                                              int bins = 10);

}  // namespace relspar
