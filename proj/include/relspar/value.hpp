#pragma once

#include <Eigen/Dense>

#include "relspar/policy.hpp"
#include "relspar/trajectories.hpp"

namespace relspar {

// Per-trajectory importance-sampling building blocks for a suggested policy p
// against behavioral denominator coefficients b.
struct ISRatios {
  Eigen::VectorXd log_ratios;  // log r_i = sum_t [log pi_p(A|S) - log pi_b(A|S)]
  Eigen::VectorXd returns;     // G_i = sum_t R_it
  double mean_ratio = 0.0;     // E_n r (computed through log-sum-exp; may overflow to inf)
};

ISRatios is_ratios(const MaskedPolicy& p, const PolicyParams& b, const Dataset& d);

struct ValueEstimate {
  double v_weighted = 0.0;    // self-normalized: sum(r G) / sum(r)
  double v_unweighted = 0.0;  // plain mean of r G
  double sd_weighted = 0.0;   // sqrt of the self-normalized value variance
  int n = 0;
};

// Both value estimators plus the weighted-value sd.  The ratios are
// exponentiated only after subtracting the max log-ratio; if the log-ratio
// spread still exceeds 700 the weights are degenerate and an error is thrown.
ValueEstimate value_weighted(const ISRatios& r);

// sigma^2_{n,V,w} = [ (1/n) sum_i (r_i G_i - V_n)^2 ] / (E_n r)^2.
double value_variance(const ISRatios& r);

// Mean suggested treatment probability over all action steps (i, t <= T).
double avg_treat_prob(const MaskedPolicy& p, const Dataset& d);

}  // namespace relspar
