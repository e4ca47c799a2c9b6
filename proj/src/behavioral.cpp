#include "relspar/behavioral.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "relspar/math.hpp"

namespace relspar {

namespace {

// Mean per-trajectory log-likelihood at b.
double pooled_loglik(const Dataset& d, const Eigen::VectorXd& b) {
  double ll = 0.0;
  for (const Trajectory& tr : d.trajectories) {
    const int steps = static_cast<int>(tr.actions.size());
    for (int t = 0; t < steps; ++t) {
      double lin = b.dot(tr.states.row(t));
      ll += tr.actions(t) == 1 ? log_expit(lin) : log_expit(-lin);
    }
  }
  return ll / d.n();
}

// Mean score g = E_n l'_i and mean Hessian Hm = E_n l''_i at b.
void score_and_hessian(const Dataset& d, const Eigen::VectorXd& b, Eigen::VectorXd& g,
                       Eigen::MatrixXd& Hm) {
  const int K = static_cast<int>(b.size());
  g.setZero(K);
  Hm.setZero(K, K);
  for (const Trajectory& tr : d.trajectories) {
    const int steps = static_cast<int>(tr.actions.size());
    for (int t = 0; t < steps; ++t) {
      Eigen::VectorXd s = tr.states.row(t).transpose();
      double pi = expit(b.dot(s));
      g += (tr.actions(t) - pi) * s;
      Hm -= pi * (1.0 - pi) * s * s.transpose();
    }
  }
  g /= d.n();
  Hm /= d.n();
}

// Solves (-Hm) x = rhs, throwing if -Hm is numerically singular.
Eigen::MatrixXd invert_information(const Eigen::MatrixXd& Hm) {
  Eigen::MatrixXd info = -Hm;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
  double max_ev = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(max_ev > 0.0) || es.eigenvalues().minCoeff() <= 1e-12 * max_ev) {
    throw std::runtime_error("fit_mle: singular information matrix (collinear states?)");
  }
  return info.inverse();
}

}  // namespace

BehavioralFit fit_mle(const Dataset& d, int max_iters) {
  d.validate();
  const int K = d.state_dim();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd g;
  Eigen::MatrixXd Hm;

  BehavioralFit fit;
  double prev_gnorm = std::numeric_limits<double>::infinity();
  double ll = pooled_loglik(d, b);
  int it = 0;
  for (; it < max_iters; ++it) {
    score_and_hessian(d, b, g, Hm);
    double gnorm = g.lpNorm<Eigen::Infinity>();
    if (gnorm <= 1e-10) {
      fit.converged = true;
      break;
    }
    if (std::isfinite(prev_gnorm) &&
        std::abs(gnorm - prev_gnorm) <= 1e-12 * std::max(prev_gnorm, 1e-300)) {
      fit.converged = true;
      break;
    }
    prev_gnorm = gnorm;

    Eigen::MatrixXd info_inv = invert_information(Hm);
    Eigen::VectorXd step = info_inv * g;
    // Step-halving: the pooled log-likelihood must not decrease.
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h) {
      Eigen::VectorXd cand = b + alpha * step;
      double cand_ll = pooled_loglik(d, cand);
      if (cand_ll >= ll - 1e-14 * std::abs(ll)) {
        b = cand;
        ll = cand_ll;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;  // no improving step; treat current point as final
    if (b.cwiseAbs().maxCoeff() > 50.0) {
      throw std::runtime_error(
          "fit_mle: coefficients diverging (|b| > 50); data may be separable");
    }
  }
  fit.iterations = it;

  // Quasi-separation: when every observed action is predicted almost
  // perfectly the likelihood has no interior maximum and the "converged"
  // point is an artifact of the gradient tolerance.
  double min_obs_prob = 1.0;
  for (const Trajectory& tr : d.trajectories) {
    const int steps = static_cast<int>(tr.actions.size());
    for (int t = 0; t < steps; ++t) {
      double lin = b.dot(tr.states.row(t));
      double p = tr.actions(t) == 1 ? expit(lin) : expit(-lin);
      min_obs_prob = std::min(min_obs_prob, p);
    }
  }
  if (min_obs_prob >= 1.0 - 1e-8) {
    throw std::runtime_error("fit_mle: data are (quasi-)separable; the MLE diverges");
  }

  // Final score/curvature at the fitted coefficients.
  score_and_hessian(d, b, g, Hm);
  if (!fit.converged && g.lpNorm<Eigen::Infinity>() <= 1e-10) fit.converged = true;
  fit.b.coefficients = b;
  fit.neg_hessian_inv = invert_information(Hm);
  fit.per_trajectory_scores.resize(d.n(), K);
  for (int i = 0; i < d.n(); ++i) {
    const Trajectory& tr = d.trajectories[i];
    Eigen::VectorXd score = Eigen::VectorXd::Zero(K);
    const int steps = static_cast<int>(tr.actions.size());
    for (int t = 0; t < steps; ++t) {
      Eigen::VectorXd s = tr.states.row(t).transpose();
      score += (tr.actions(t) - expit(b.dot(s))) * s;
    }
    fit.per_trajectory_scores.row(i) = score.transpose();
  }
  return fit;
}

Eigen::MatrixXd influence_q(const BehavioralFit& fit) {
  // q_i' = l'_i' * [(-E_n l'')^{-1}]'; the information inverse is symmetric.
  return fit.per_trajectory_scores * fit.neg_hessian_inv;
}

std::vector<CalibrationRow> calibration_table(const BehavioralFit& fit, const Dataset& d,
                                              int bins) {
  if (bins < 2) throw std::invalid_argument("calibration_table: need at least two bins");
  d.validate();
  if (d.state_dim() != fit.b.coefficients.size()) {
    throw std::invalid_argument("calibration_table: fit and dataset dimensions differ");
  }
  std::vector<double> sum_p(bins, 0.0), sum_a(bins, 0.0);
  std::vector<long> count(bins, 0);
  for (const Trajectory& tr : d.trajectories) {
    const int steps = static_cast<int>(tr.actions.size());
    for (int t = 0; t < steps; ++t) {
      double p = expit(fit.b.coefficients.dot(tr.states.row(t)));
      int bin = std::min(static_cast<int>(p * bins), bins - 1);
      sum_p[bin] += p;
      sum_a[bin] += tr.actions(t);
      ++count[bin];
    }
  }
  std::vector<CalibrationRow> table(bins);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int j = 0; j < bins; ++j) {
    table[j].bin_lo = static_cast<double>(j) / bins;
    table[j].bin_hi = static_cast<double>(j + 1) / bins;
    table[j].count = count[j];
    table[j].mean_predicted = count[j] > 0 ? sum_p[j] / count[j] : nan;
    table[j].observed_frequency = count[j] > 0 ? sum_a[j] / count[j] : nan;
  }
  return table;
}

}  // namespace relspar
