#pragma once

#include <Eigen/Dense>
#include <vector>

#include "relspar/behavioral.hpp"
#include "relspar/trpo.hpp"
#include "relspar/value.hpp"

namespace relspar {

// Adaptive penalty weights w_k = |pilot_beta_k - b_k|^{-delta}.  A pilot
// coordinate that already equals its behavioral counterpart (within 1e-10)
// gets weight +inf: it is pinned for the whole path.
struct AdaptiveWeights {
  Eigen::VectorXd w;  // +inf marks pinned coordinates
  Eigen::VectorXd pilot_beta;
  double delta = 1.0;
};

AdaptiveWeights adaptive_weights(const TrpoFit& pilot, const PolicyParams& b, double delta);

// Non-adaptive variant: all weights 1 (exposed for comparison, not tuned).
AdaptiveWeights unit_weights(const TrpoFit& pilot, int K);

struct RelsparFit {
  PolicyParams beta;
  bool converged = false;
  int iterations = 0;
  double w_value = 0.0;  // penalized objective W_n at the fit
  double m_value = 0.0;
  std::vector<int> active_set;  // 1-based coordinates with |beta_k - b_k| > 1e-6
};

// Maximizes W_n = m_n(beta) - lambda * sum_k w_k |beta_k - b_k| by proximal
// gradient ascent (soft-thresholding toward b_n).
RelsparFit fit_relspar(const BehavioralFit& b, const Dataset& d, const FitConfig& cfg,
                       const AdaptiveWeights& w, const Eigen::VectorXd& warm_start);

// Data-driven default grid: count log-spaced values from lambda_max/1000 up to
// 1.1 * lambda_max, where lambda_max = max_k |J_k(b_n)| / w_k is the smallest
// penalty that pins every non-pinned coordinate at b_n.
std::vector<double> default_lambda_grid(const BehavioralFit& b, const Dataset& d, double gamma,
                                        const AdaptiveWeights& w, int count = 10);

// One row of the selection diagram.
struct PathPoint {
  double lambda = 0.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd sd_band;  // sqrt(sandwich diag / n_train); NaN where unavailable
  ValueEstimate value_train;
  ValueEstimate value_test;
  double kl_train = 0.0;
  double prob_suggested = 0.0;
  double prob_behavioral = 0.0;
  std::vector<int> active_set;  // 1-based
  bool converged = false;
};

struct LambdaPath {
  double gamma = 0.0;
  double delta = 0.0;
  AdaptiveWeights weights;
  Eigen::VectorXd pilot_beta;
  Eigen::VectorXd b;                  // behavioral coefficients used throughout
  std::vector<PathPoint> points;      // ascending lambda
  ValueEstimate value_behavioral;     // behavioral policy on the train split
  int n_train = 0;
  int n_test = 0;
};

// Warm-started ascending sweep over lambdas (empty: data-driven default grid).
// Train values, KL, treatment probabilities and sandwich sd bands come from
// d_train; d_test only supplies the held-out value column.
LambdaPath lambda_path(const BehavioralFit& b, const Dataset& d_train, const Dataset& d_test,
                       const FitConfig& cfg, double delta, std::vector<double> lambdas,
                       const TrpoFit* pilot = nullptr);

struct LambdaChoice {
  int index = 0;
  double lambda = 0.0;
  std::vector<int> active_set;
  bool no_qualifying = false;  // no point reached v_min; smallest lambda returned
  double v_min = 0.0;
};

// Picks the largest lambda whose train value is at least
// v_behavioral + se (or + sd when use_sd_not_se).  Falls back to the smallest
// lambda, flagged, when no point qualifies.
LambdaChoice select_lambda(const LambdaPath& path, bool use_sd_not_se = false);

}  // namespace relspar
