#pragma once

#include <Eigen/Dense>

namespace relspar {

struct PolicyParams {
  Eigen::VectorXd coefficients;
};

// Two-block logistic treatment policy.  Coordinates in the active set take
// their coefficient from beta; the rest are pinned to the behavioral
// coefficients b:
//   pi(1|s) = expit( beta'(s .* mask) + b'(s .* (1-mask)) ).
// With an all-ones mask this is the plain policy expit(beta's).
struct MaskedPolicy {
  Eigen::VectorXd beta;
  Eigen::VectorXd b;
  Eigen::ArrayXd active_mask;  // entries exactly 0 or 1

  double linear(const Eigen::VectorXd& s) const;
  double prob_treat(const Eigen::VectorXd& s) const;       // pi(1|s)
  double log_prob(int a, const Eigen::VectorXd& s) const;  // log pi(a|s)
  void validate() const;
};

// Convenience constructors.
MaskedPolicy full_policy(const Eigen::VectorXd& beta);  // mask all ones, b unused
MaskedPolicy masked_policy(const Eigen::VectorXd& beta, const Eigen::VectorXd& b,
                           const Eigen::ArrayXd& active_mask);

// Derivative blocks of log pi(a|s) at one step, plus the score/Hessian of a
// plain behavioral policy with coefficients p.b at the same step.  Writing
// dpi = pi(1-pi), sm = s.*mask, sc = s.*(1-mask):
//   d log pi / d beta       = (a - pi) sm
//   d log pi / d b          = (a - pi) sc
//   d^2 log pi / d beta^2   = -dpi sm sm'
//   d^2 log pi / d beta d b = -dpi sm sc'
struct StepDerivs {
  Eigen::VectorXd dlog_dbeta;
  Eigen::VectorXd dlog_db;
  Eigen::MatrixXd d2log_dbeta2;
  Eigen::MatrixXd d2log_dbeta_db;
  Eigen::VectorXd behavioral_score;    // (a - expit(b's)) s
  Eigen::MatrixXd behavioral_hessian;  // -pb(1-pb) s s'
};

StepDerivs log_prob_derivs(const MaskedPolicy& p, int a, const Eigen::VectorXd& s);

}  // namespace relspar
