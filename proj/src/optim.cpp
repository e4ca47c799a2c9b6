#include "relspar/optim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace relspar {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

OptimResult bfgs_maximize(const SmoothObjective& f, const Eigen::VectorXd& x0,
                          const OptimOptions& opts) {
  const Eigen::Index dim = x0.size();
  OptimResult res;
  res.x = x0;
  if (dim == 0) {
    res.f = f(x0, nullptr);
    res.converged = true;
    return res;
  }

  Eigen::VectorXd x = x0, grad(dim);
  double fx = f(x, &grad);
  if (!std::isfinite(fx)) {
    throw std::runtime_error("bfgs_maximize: objective is not finite at the starting point");
  }
  Eigen::MatrixXd Binv = Eigen::MatrixXd::Identity(dim, dim);  // inverse-Hessian approx of -f
  Eigen::VectorXd best_x = x;
  double best_f = fx;
  double best_gnorm = grad.lpNorm<Eigen::Infinity>();
  bool first_update = true;

  int it = 0;
  for (; it < opts.max_iters; ++it) {
    double gnorm = grad.lpNorm<Eigen::Infinity>();
    if (fx >= best_f) {
      best_f = fx;
      best_x = x;
      best_gnorm = gnorm;
    }
    if (gnorm <= opts.grad_tol) {
      res.converged = true;
      best_f = fx;
      best_x = x;
      best_gnorm = gnorm;
      break;
    }

    Eigen::VectorXd p = Binv * grad;  // ascent direction for a maximizer
    double slope = grad.dot(p);
    if (!(slope > 0.0) || !p.allFinite()) {
      Binv.setIdentity();
      first_update = true;
      p = grad;
      slope = grad.squaredNorm();
    }

    double pmax = p.lpNorm<Eigen::Infinity>();
    double alpha = std::min(opts.step_init, opts.max_coord_step / std::max(pmax, 1e-300));
    double f_new = -kInf;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + alpha * p;
      f_new = f(x_new, nullptr);
      if (std::isfinite(f_new) && f_new >= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;  // line search exhausted; return best iterate

    Eigen::VectorXd grad_new(dim);
    f_new = f(x_new, &grad_new);
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = grad - grad_new;  // gradient change of -f
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (first_update) {
        Binv = (sy / y.squaredNorm()) * Eigen::MatrixXd::Identity(dim, dim);
        first_update = false;
      }
      Eigen::VectorXd By = Binv * y;
      double yBy = y.dot(By);
      // Standard inverse-BFGS update.
      Binv += ((sy + yBy) / (sy * sy)) * (s * s.transpose()) -
              (By * s.transpose() + s * By.transpose()) / sy;
    }
    x = x_new;
    fx = f_new;
    grad = grad_new;
  }
  // Not converged: hand back the best point seen (which may be the last one).
  if (!res.converged && fx >= best_f) {
    best_f = fx;
    best_x = x;
    best_gnorm = grad.lpNorm<Eigen::Infinity>();
  }
  res.iterations = it;
  res.x = best_x;
  res.f = best_f;
  res.grad_norm = best_gnorm;
  return res;
}

OptimResult prox_maximize(const SmoothObjective& f, const Eigen::VectorXd& x0,
                          const Eigen::VectorXd& center, double lambda,
                          const Eigen::VectorXd& weights, const OptimOptions& opts) {
  const Eigen::Index dim = x0.size();
  if (center.size() != dim || weights.size() != dim) {
    throw std::invalid_argument("prox_maximize: dimension mismatch");
  }
  if (lambda < 0.0) throw std::invalid_argument("prox_maximize: lambda must be nonnegative");

  auto penalty = [&](const Eigen::VectorXd& x) -> double {
    double pen = 0.0;
    for (Eigen::Index k = 0; k < dim; ++k) {
      if (std::isinf(weights(k))) continue;  // pinned coordinate contributes 0
      pen += weights(k) * std::abs(x(k) - center(k));
    }
    return lambda * pen;
  };

  // One soft-threshold step of length `step` from y with gradient gy.
  auto prox_step = [&](const Eigen::VectorXd& y, const Eigen::VectorXd& gy, double step,
                       Eigen::VectorXd& out) {
    for (Eigen::Index k = 0; k < dim; ++k) {
      if (std::isinf(weights(k))) {
        out(k) = center(k);
      } else {
        const double cand = y(k) + step * gy(k) - center(k);
        out(k) = center(k) + soft_threshold(cand, step * lambda * weights(k));
      }
    }
  };

  // Pin infinite-weight coordinates exactly at the center from the start.
  Eigen::VectorXd x = x0;
  for (Eigen::Index k = 0; k < dim; ++k) {
    if (std::isinf(weights(k))) x(k) = center(k);
  }

  Eigen::VectorXd grad(dim);
  double fx = f(x, &grad);
  if (!std::isfinite(fx)) {
    throw std::runtime_error("prox_maximize: objective is not finite at the starting point");
  }
  double Wx = fx - penalty(x);
  double step = opts.step_init;

  // Accelerated ascent with a monotone safeguard: a momentum candidate that
  // lowers the penalized objective (beyond float slack) is discarded and the
  // momentum restarted, so W is effectively non-decreasing.
  Eigen::VectorXd x_prev = x;
  Eigen::VectorXd y(dim), gy(dim), z(dim), gz(dim);
  double t = 1.0;
  int stalled = 0;

  OptimResult res;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double omega = (t - 1.0) / t_next;
    double fy;
    if (omega > 0.0) {
      y = x + omega * (x - x_prev);
      for (Eigen::Index k = 0; k < dim; ++k) {
        if (std::isinf(weights(k))) y(k) = center(k);
      }
      fy = f(y, &gy);
      if (!std::isfinite(fy)) {  // momentum left the feasible region
        y = x;
        fy = fx;
        gy = grad;
        t = 1.0;
      }
    } else {
      y = x;
      fy = fx;
      gy = grad;
    }

    // Backtrack until the step-length quadratic model at y majorizes f.
    bool ok = false;
    double fz = 0.0;
    for (int ls = 0; ls < 80; ++ls) {
      prox_step(y, gy, step, z);
      fz = f(z, &gz);
      if (std::isfinite(fz)) {
        const double model = fy + gy.dot(z - y) - (z - y).squaredNorm() / (2.0 * step);
        if (fz >= model - 1e-12 * (1.0 + std::abs(fy))) {
          ok = true;
          break;
        }
      }
      step *= 0.5;
      if (step < 1e-18) break;
    }
    if (!ok) break;  // no admissible step size left

    const double mapping = (z - y).lpNorm<Eigen::Infinity>() / step;
    const double Wz = fz - penalty(z);
    const double slack = 1e-12 * (1.0 + std::abs(Wx));
    if (Wz >= Wx - slack) {
      const double move = (z - x).lpNorm<Eigen::Infinity>();
      stalled = Wz - Wx <= 1e-14 * (1.0 + std::abs(Wx)) ? stalled + 1 : 0;
      x_prev = x;
      x = z;
      grad = gz;
      fx = fz;
      Wx = Wz;
      t = t_next;
      // Converged on a tiny move, a tiny prox-gradient mapping, or a long
      // objective stall (double-precision saturation).
      if (move <= opts.iterate_tol || mapping <= opts.grad_tol || stalled >= 20) {
        res.converged = true;
        ++it;
        break;
      }
    } else if (omega > 0.0) {
      t = 1.0;  // reject the momentum candidate, restart from x
    } else {
      // Even a plain step from x cannot improve W: x is a fixed point of the
      // prox mapping to working precision.
      res.converged = mapping <= opts.grad_tol || (z - x).lpNorm<Eigen::Infinity>() <= opts.iterate_tol;
      ++it;
      break;
    }
    step = std::min(step * 1.25, opts.step_init * 1e3);
  }

  res.x = x;
  res.f = fx;  // smooth part only; callers recompute the penalized value as needed
  res.grad_norm = grad.lpNorm<Eigen::Infinity>();
  res.iterations = it;
  return res;
}

}  // namespace relspar
