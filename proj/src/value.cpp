#include "relspar/value.hpp"

#include <cmath>
#include <stdexcept>

#include "relspar/math.hpp"

namespace relspar {

namespace {

// Shared core: centered weights and both value forms.  `sd` receives the
// self-normalized value sd.
void weighted_core(const ISRatios& r, double& v_weighted, double& v_unweighted, double& sd) {
  const Eigen::Index n = r.log_ratios.size();
  if (n < 1) throw std::invalid_argument("value_weighted: empty ratio set");
  double c = r.log_ratios.maxCoeff();
  if (c - r.log_ratios.minCoeff() > 700.0) {
    throw std::runtime_error(
        "degenerate importance weights: log-ratio spread exceeds 700 (policy too far from "
        "behavioral)");
  }
  Eigen::ArrayXd w = (r.log_ratios.array() - c).exp();  // r_i scaled by exp(-c)
  double wsum = w.sum();
  Eigen::ArrayXd wg = w * r.returns.array();
  v_weighted = wg.sum() / wsum;
  v_unweighted = (r.log_ratios.array().exp() * r.returns.array()).mean();

  // sigma^2 = E_n[(r G - V)^2] / (E_n r)^2, computed with the same centered
  // weights: factor exp(c) out of both numerator and denominator.
  double dr = wsum / n;
  double v_shift = std::exp(-c) * v_weighted;
  double num = (wg - v_shift).square().mean();
  sd = std::sqrt(num / (dr * dr));
}

}  // namespace

ISRatios is_ratios(const MaskedPolicy& p, const PolicyParams& b, const Dataset& d) {
  p.validate();
  d.validate();
  if (p.beta.size() != d.state_dim() || b.coefficients.size() != d.state_dim()) {
    throw std::invalid_argument("is_ratios: policy and dataset dimensions differ");
  }
  const int n = d.n();
  ISRatios out;
  out.log_ratios.resize(n);
  out.returns.resize(n);
  for (int i = 0; i < n; ++i) {
    const Trajectory& tr = d.trajectories[i];
    const int steps = static_cast<int>(tr.actions.size());
    double lr = 0.0;
    for (int t = 0; t < steps; ++t) {
      Eigen::VectorXd s = tr.states.row(t).transpose();
      double lin_b = b.coefficients.dot(s);
      double lp_b = tr.actions(t) == 1 ? log_expit(lin_b) : log_expit(-lin_b);
      lr += p.log_prob(tr.actions(t), s) - lp_b;
    }
    out.log_ratios(i) = lr;
    out.returns(i) = tr.rewards.sum();
  }
  // E_n r via log-sum-exp.
  double c = out.log_ratios.maxCoeff();
  double lse = c + std::log((out.log_ratios.array() - c).exp().sum());
  out.mean_ratio = std::exp(lse - std::log(static_cast<double>(n)));
  return out;
}

ValueEstimate value_weighted(const ISRatios& r) {
  ValueEstimate est;
  est.n = static_cast<int>(r.log_ratios.size());
  weighted_core(r, est.v_weighted, est.v_unweighted, est.sd_weighted);
  return est;
}

double value_variance(const ISRatios& r) {
  double vw, vu, sd;
  weighted_core(r, vw, vu, sd);
  return sd * sd;
}

double avg_treat_prob(const MaskedPolicy& p, const Dataset& d) {
  p.validate();
  d.validate();
  double sum = 0.0;
  long count = 0;
  for (const Trajectory& tr : d.trajectories) {
    const int steps = static_cast<int>(tr.actions.size());
    for (int t = 0; t < steps; ++t) {
      sum += p.prob_treat(tr.states.row(t).transpose());
      ++count;
    }
  }
  return sum / count;
}

}  // namespace relspar
