#pragma once

#include <Eigen/Dense>
#include <functional>

namespace relspar {

// Generic smooth objective: returns the value at x; when grad is non-null it
// must also be filled.  A return of -inf marks an infeasible/degenerate point
// (the optimizers treat it as a rejected step).
using SmoothObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimOptions {
  int max_iters = 500;
  double grad_tol = 1e-8;        // sup-norm of the gradient
  double step_init = 1.0;
  double max_coord_step = 5.0;   // cap on per-coordinate movement per iteration
  double iterate_tol = 1e-9;     // proximal: sup-norm change that counts as converged
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double grad_norm = 0.0;  // sup-norm at x (smooth part only)
  bool converged = false;
  int iterations = 0;
};

// Quasi-Newton (BFGS) ascent with backtracking line search.  Maximizes f.
// Steps are scaled so no coordinate moves more than max_coord_step per
// iteration.  Returns the converged iterate, or the best iterate seen when the
// gradient tolerance is not reached.
OptimResult bfgs_maximize(const SmoothObjective& f, const Eigen::VectorXd& x0,
                          const OptimOptions& opts = {});

// Accelerated proximal-gradient ascent for
//   f(x) - lambda * sum_k w_k |x_k - center_k|.
// Coordinates with w_k = +inf are held exactly at center_k.  Each iteration
// takes a gradient step from a momentum point followed by soft-thresholding of
// (x - center), with backtracking on the step size and a monotone safeguard
// (momentum candidates that lower the penalized objective are discarded).
// Converged when the iterate moves at most iterate_tol in sup-norm, the
// prox-gradient mapping falls below grad_tol, or the objective saturates.
OptimResult prox_maximize(const SmoothObjective& f, const Eigen::VectorXd& x0,
                          const Eigen::VectorXd& center, double lambda,
                          const Eigen::VectorXd& weights, const OptimOptions& opts = {});

// Soft-threshold helper: sign(v) * max(|v| - t, 0).
inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace relspar
