#include "relspar/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "relspar/math.hpp"

namespace relspar {

Eigen::MatrixXd sandwich_variance(const DerivativeBundle& bundle, const Eigen::MatrixXd& q,
                                  int n) {
  const int K = static_cast<int>(bundle.J.size());
  if (q.rows() != bundle.per_trajectory_z.rows() || q.cols() != K) {
    throw std::invalid_argument("sandwich_variance: influence matrix has wrong shape");
  }
  if (n != static_cast<int>(q.rows())) {
    throw std::invalid_argument("sandwich_variance: n must match the influence rows");
  }
  std::vector<int> active;
  for (int k = 0; k < K; ++k) {
    if (bundle.active_mask(k) == 1.0) active.push_back(k);
  }
  if (active.empty()) {
    throw std::invalid_argument("sandwich_variance: no active coordinates");
  }
  const int ka = static_cast<int>(active.size());

  Eigen::MatrixXd Ha(ka, ka), Xa(ka, K), Za(n, ka);
  for (int r = 0; r < ka; ++r) {
    for (int c = 0; c < ka; ++c) Ha(r, c) = bundle.H(active[r], active[c]);
    Xa.row(r) = bundle.X.row(active[r]);
    Za.col(r) = bundle.per_trajectory_z.col(active[r]);
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(Ha);
  if (!lu.isInvertible()) {
    throw std::runtime_error("sandwich_variance: singular Hessian on the active block");
  }
  Eigen::MatrixXd Hinv = lu.inverse();

  // u_i = z_{i,A} + X_A q_i, stacked as rows.
  Eigen::MatrixXd U = Za + q * Xa.transpose();
  Eigen::MatrixXd meat = U.transpose() * U / n;
  Eigen::MatrixXd var_a = Hinv * meat * Hinv.transpose();

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(K, K);
  for (int r = 0; r < ka; ++r) {
    for (int c = 0; c < ka; ++c) out(active[r], active[c]) = var_a(r, c);
  }
  return out;
}

ConfidenceIntervals confidence_intervals(const Eigen::VectorXd& estimate,
                                         const Eigen::VectorXd& se, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("confidence_intervals: level must lie in (0,1)");
  }
  if (estimate.size() != se.size()) {
    throw std::invalid_argument("confidence_intervals: estimate and se lengths differ");
  }
  double z = norm_quantile(1.0 - (1.0 - level) / 2.0);
  ConfidenceIntervals ci;
  ci.level = level;
  ci.lower = estimate - z * se;
  ci.upper = estimate + z * se;
  return ci;
}

InferenceResult post_select_fit(const Dataset& d, const std::vector<int>& active_set,
                                const FitConfig& cfg, double level) {
  d.validate();
  const int K = d.state_dim();
  Eigen::ArrayXd mask = Eigen::ArrayXd::Zero(K);
  for (int k : active_set) {
    if (k < 1 || k > K) {
      throw std::invalid_argument("post_select_fit: active coordinate " + std::to_string(k) +
                                  " out of range");
    }
    if (mask(k - 1) == 1.0) {
      throw std::invalid_argument("post_select_fit: duplicate active coordinate");
    }
    mask(k - 1) = 1.0;
  }

  InferenceResult res;
  res.active_set = active_set;
  std::sort(res.active_set.begin(), res.active_set.end());
  res.gamma = cfg.gamma;
  res.lambda = cfg.lambda;
  res.delta = cfg.delta;
  res.level = level;
  res.n_inference = d.n();

  res.behavioral = fit_mle(d);
  const Eigen::VectorXd& bn = res.behavioral.b.coefficients;
  const int n = d.n();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  res.variance = Eigen::MatrixXd::Zero(K, K);
  res.ci_lower = Eigen::VectorXd::Constant(K, nan);
  res.ci_upper = Eigen::VectorXd::Constant(K, nan);

  if (active_set.empty()) {
    res.beta = bn;
    res.trpo_converged = true;
    MaskedPolicy pol = full_policy(bn);
    res.value = value_weighted(is_ratios(pol, res.behavioral.b, d));
  } else {
    TrpoFit fit = fit_trpo(res.behavioral, d, cfg, mask);
    res.beta = fit.beta.coefficients;
    res.trpo_converged = fit.converged;

    MaskedPolicy pol = masked_policy(fit.beta.coefficients, bn, mask);
    DerivativeBundle bundle = derivative_bundle(pol, res.behavioral.b, d, cfg.gamma);
    Eigen::MatrixXd q = influence_q(res.behavioral);
    res.variance = sandwich_variance(bundle, q, n);

    Eigen::VectorXd se = Eigen::VectorXd::Constant(K, nan);
    for (int k = 0; k < K; ++k) {
      if (mask(k) == 1.0) se(k) = std::sqrt(res.variance(k, k) / n);
    }
    ConfidenceIntervals ci = confidence_intervals(res.beta, se, level);
    res.ci_lower = ci.lower;
    res.ci_upper = ci.upper;
    res.value = value_weighted(is_ratios(pol, res.behavioral.b, d));
  }

  // Wald intervals for the behavioral coefficients.
  Eigen::VectorXd b_se(K);
  for (int k = 0; k < K; ++k) {
    b_se(k) = std::sqrt(res.behavioral.neg_hessian_inv(k, k) / n);
  }
  ConfidenceIntervals bci = confidence_intervals(bn, b_se, level);
  res.b_ci_lower = bci.lower;
  res.b_ci_upper = bci.upper;
  return res;
}

}  // namespace relspar
