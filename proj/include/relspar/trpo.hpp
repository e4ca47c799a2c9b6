#pragma once

#include <Eigen/Dense>

#include "relspar/behavioral.hpp"
#include "relspar/optim.hpp"
#include "relspar/policy.hpp"
#include "relspar/trajectories.hpp"
#include "relspar/value.hpp"

namespace relspar {

// Knobs for the penalized policy fits.
struct FitConfig {
  double gamma = 3.0;   // KL penalty; must be > 0 for fitting
  double lambda = 0.0;  // relative-sparsity penalty (fit_relspar)
  double delta = 1.0;   // adaptive-weight exponent
  int max_iters = 500;
  int prox_max_iters = 5000;
  double grad_tol = 1e-8;
  double step_init = 1.0;
  double max_coord_step = 5.0;
  int multi_start = 0;  // extra deterministic perturbed starts (0 = off)
  double multi_start_spread = 1.0;
};

// Sampled KL penalty: KL_n = (1/n) sum_i sum_t [log pi_b - log pi_p] at the
// observed actions; equals -mean(log_ratios).
double kl_n(const MaskedPolicy& p, const PolicyParams& b, const Dataset& d);

// Behavior-constrained objective m_n = V_n(weighted) - gamma * KL_n.
double m_n(const MaskedPolicy& p, const PolicyParams& b, const Dataset& d, double gamma);

// Shared evaluation core.  The dataset is flattened once and the behavioral
// log-probabilities precomputed, so repeated calls during optimization only
// price the beta-dependent parts.  Degenerate points (log-ratio spread > 700
// or non-finite values) return -inf instead of throwing, letting line
// searches reject the step.
class MnEvaluator {
 public:
  // pinned_b supplies the masked-out coordinates of the suggested policy;
  // denom_b is the importance-sampling denominator.  The pipeline uses the
  // same behavioral fit for both.
  MnEvaluator(const Dataset& d, Eigen::VectorXd pinned_b, Eigen::VectorXd denom_b,
              Eigen::ArrayXd active_mask, double gamma);

  struct Eval {
    double m = 0.0;
    double v_weighted = 0.0;
    double kl = 0.0;
    Eigen::VectorXd grad;  // d m_n / d beta, full length K
    bool valid = false;
  };

  double objective(const Eigen::VectorXd& beta) const;  // m only
  Eval eval(const Eigen::VectorXd& beta) const;         // m and gradient

  // Adapter for the generic optimizers.
  SmoothObjective as_objective() const;

  int dim() const { return static_cast<int>(mask_.size()); }
  const Eigen::ArrayXd& mask() const { return mask_; }
  double gamma() const { return gamma_; }

 private:
  void core(const Eigen::VectorXd& beta, bool want_grad, Eval& out) const;

  Eigen::MatrixXd sm_;          // P x K, action-step states with masked columns zeroed
  Eigen::VectorXd pinned_lin_;  // P, contribution of the pinned block
  Eigen::VectorXd a_;           // P, actions as doubles
  Eigen::VectorXd logp_b_;      // P, log pi_b(A|S)
  Eigen::VectorXd G_;           // n, returns
  Eigen::ArrayXd mask_;
  double gamma_ = 0.0;
  int n_ = 0;
  int steps_ = 0;  // decision epochs T
};

// All derivative pieces of m_n needed for sandwich inference, evaluated at
// (p.beta, b): gradient J, Hessian H, nuisance cross-derivative X, and the
// per-trajectory influence rows z_i (whose mean is exactly J).
struct DerivativeBundle {
  Eigen::VectorXd J;                 // K
  Eigen::MatrixXd H;                 // K x K
  Eigen::MatrixXd X;                 // K x K, rows index beta, columns index b
  Eigen::MatrixXd per_trajectory_z;  // n x K
  Eigen::ArrayXd active_mask;
  double mean_ratio = 0.0;  // E_n r (diagnostic)
};

// Requires p.b == b whenever any coordinate is masked out, since the nuisance
// must be one shared parameter for the cross-derivative to be well defined.
DerivativeBundle derivative_bundle(const MaskedPolicy& p, const PolicyParams& b,
                                   const Dataset& d, double gamma);

struct TrpoFit {
  PolicyParams beta;  // full K; masked-out coordinates equal b
  bool converged = false;
  int iterations = 0;
  double m_value = 0.0;
  double grad_norm = 0.0;   // sup-norm over active coordinates at the fit
  bool hessian_nsd = true;  // local-maximum certificate (flag, not an assertion)
};

// Maximizes m_n over the active coordinates from a b_n start (quasi-Newton
// with backtracking); masked-out coordinates stay pinned at b_n.
TrpoFit fit_trpo(const BehavioralFit& b, const Dataset& d, const FitConfig& cfg,
                 const Eigen::ArrayXd& active_mask);

}  // namespace relspar
