#pragma once

#include <Eigen/Dense>
#include <vector>

#include "relspar/behavioral.hpp"
#include "relspar/trpo.hpp"
#include "relspar/value.hpp"

namespace relspar {

// Sandwich variance of sqrt(n)(beta_A - beta_0,A) on the active block:
//   H_A^{-1} * [ (1/n) sum_i (z_i + X q_i)(z_i + X q_i)' ]_A * H_A^{-T},
// where q_i are the behavioral-nuisance influence rows.  Returns a K x K
// matrix that is zero outside the active block.  Throws if the active block
// of H is singular.
Eigen::MatrixXd sandwich_variance(const DerivativeBundle& bundle, const Eigen::MatrixXd& q,
                                  int n);

struct ConfidenceIntervals {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double level = 0.95;
};

// Two-sided normal intervals estimate +- z_{1-alpha/2} * se (NaN se propagates).
ConfidenceIntervals confidence_intervals(const Eigen::VectorXd& estimate,
                                         const Eigen::VectorXd& se, double level);

// Post-selection fit on an inference split: refit the behavioral MLE, run the
// masked TRPO fit over the selected coordinates, and attach sandwich CIs for
// the active coordinates plus Wald MLE CIs for the behavioral coefficients.
struct InferenceResult {
  Eigen::VectorXd beta;      // K; pinned coordinates equal b_n
  Eigen::MatrixXd variance;  // K x K sandwich, zero outside the active block
  Eigen::VectorXd ci_lower;  // NaN on pinned coordinates
  Eigen::VectorXd ci_upper;
  std::vector<int> active_set;  // 1-based
  BehavioralFit behavioral;
  Eigen::VectorXd b_ci_lower;
  Eigen::VectorXd b_ci_upper;
  double gamma = 0.0;
  double lambda = 0.0;
  double delta = 0.0;
  double level = 0.95;
  int n_inference = 0;
  ValueEstimate value;  // value of the fitted policy on the inference split
  bool trpo_converged = true;
};

InferenceResult post_select_fit(const Dataset& d, const std::vector<int>& active_set,
                                const FitConfig& cfg, double level = 0.95);

}  // namespace relspar
