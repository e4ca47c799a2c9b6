#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "relspar/pipeline.hpp"
#include "relspar/trajectories.hpp"

namespace relspar {

// Constant-variance MDP generator.  T counts decision epochs: a trajectory
// carries actions A_0..A_{T-1}, states S_0..S_T, and rewards R_0..R_{T-1}.
// Empty vector fields expand to their defaults at generation time:
// b0 -> (-0.3, 0.2) padded with zeros, tau -> 0.1, sigma_eps -> 1, mu0 -> 1
// (all componentwise).
struct SimConfig {
  int n = 1000;
  int T = 2;
  int K = 2;
  Eigen::VectorXd b0;
  Eigen::VectorXd tau;
  Eigen::VectorXd sigma_eps;
  Eigen::VectorXd mu0;
  int reward_component = 2;  // 1-based state coordinate; reward is -s_k * a
  std::uint64_t seed = 1;
};

// Expands empty defaults and validates; returned config has all vectors sized K.
SimConfig resolve_sim_config(const SimConfig& cfg);

// Draws n trajectories: S_0 ~ N(0, I); A_t ~ Bern(expit(b0'S_t));
// eps_k ~ N(0, sigma_eps_k^2); S_{t,k} = (S_{t-1,k} - mu_{t-1,k} + eps_k) /
// sqrt(1 + sigma_eps_k^2) + mu_{t,k} with mu_{t+1,k} = mu_{t,k} (1 + tau_k A_t);
// R_t = -S_{t,rc} A_t.  Each trajectory draws from its own seed stream, so the
// result is independent of evaluation order and identical for identical seeds.
Dataset gen_dataset(const SimConfig& cfg);

// Deterministic mean-shift path mu_0..mu_T induced by a fixed action
// sequence (length T); row t is mu_t.
Eigen::MatrixXd mu_path(const SimConfig& cfg, const Eigen::VectorXi& actions);

// Importance-sampling-free reference solution: maximizes
//   V_ref(beta) - gamma * KL_n(beta, b_ref)  with
//   V_ref(beta) = -(1/n) sum_i sum_t S_{it,rc} expit(beta'S_it)
// on a fresh dataset of n_ref trajectories.  V_ref uses the known analytic
// reward, so it carries no importance-sampling noise and converges much faster
// than the weighted estimator; it serves as the "truth" in coverage studies.
struct ReferenceEstimand {
  Eigen::VectorXd beta;
  Eigen::VectorXd b_ref;  // behavioral MLE of the reference dataset
  double m_value = 0.0;
  bool converged = false;
  int n_ref = 0;
};

ReferenceEstimand reference_estimand(const SimConfig& cfg, double gamma, int n_ref = 100000);

// One row of the coverage table for a single coordinate.  Sandwich sds are on
// the sqrt(n) scale (the sd of sqrt(n) * beta), matching true_sd; confidence
// intervals divide by sqrt(n).
struct CoverageReport {
  double gamma = 0.0;
  int coordinate = 2;  // 1-based
  Eigen::VectorXd reference_beta;
  double true_beta = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double true_sd = 0.0;            // sd of sqrt(n)*beta over replications
  double mean_estimated_sd = 0.0;  // sqrt of the averaged sandwich variances
  double coverage = 0.0;
  double mean_ci_length = 0.0;
  int replications = 0;  // successful replications entering the aggregates
  int failures = 0;
  int n = 0;
  double level = 0.95;
};

// Per replication: fresh dataset, behavioral MLE, policy fit masked to the
// given active set, sandwich CI; aggregates against reference_estimand.
// Failed replications are counted and excluded.  Deterministic given the
// config seed and replication count.
CoverageReport coverage_study(const SimConfig& cfg, double gamma, const std::vector<int>& active,
                              int replications, double level = 0.95, int coordinate = 2,
                              int n_ref = 100000, int threads = 1);

// Monte-Carlo average of the selection stage: per replication a fresh dataset
// is split, the behavioral model fit on split-1-train, and a lambda path swept
// per (gamma, delta) cell on a common lambda grid (fixed on the first
// replication so points line up across replications).
struct SelectionCellSummary {
  double gamma = 0.0;
  double delta = 0.0;
  std::vector<double> lambdas;
  Eigen::MatrixXd mean_beta;        // L x K
  Eigen::MatrixXd sd_beta;          // L x K, empirical across replications
  Eigen::MatrixXd mean_band;        // L x K, mean theoretical sd band (NaN-aware)
  Eigen::MatrixXd active_frequency; // L x K
  Eigen::VectorXd mean_b;           // K, averaged behavioral coefficients
  Eigen::VectorXd mean_v_train;     // L
  Eigen::VectorXd mean_v_train_se;  // L
  Eigen::VectorXd mean_v_test;      // L
  Eigen::VectorXd mean_kl;          // L
  Eigen::VectorXd mean_prob_sugg;   // L
  Eigen::VectorXd mean_prob_beh;    // L
  // Frequency of each lambda-rule active set, most frequent first.
  std::vector<std::pair<std::vector<int>, int>> selected_sets;
  int selected_no_qualifying = 0;
  int replications = 0;  // successful
  int failures = 0;
};

struct SelectionStudy {
  std::vector<SelectionCellSummary> cells;
  int replications = 0;  // requested
};

SelectionStudy selection_study(const SimConfig& cfg, const PipelineGrids& grids, int replications,
                               const PipelineOptions& opt = {});

}  // namespace relspar
