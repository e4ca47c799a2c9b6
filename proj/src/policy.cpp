#include "relspar/policy.hpp"

#include <stdexcept>

#include "relspar/math.hpp"

namespace relspar {

void MaskedPolicy::validate() const {
  const Eigen::Index k = beta.size();
  if (b.size() != k || active_mask.size() != k) {
    throw std::invalid_argument("MaskedPolicy: beta, b and active_mask must share length");
  }
  if (!beta.allFinite() || !b.allFinite()) {
    throw std::invalid_argument("MaskedPolicy: coefficients must be finite");
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    if (active_mask(i) != 0.0 && active_mask(i) != 1.0) {
      throw std::invalid_argument("MaskedPolicy: active_mask entries must be exactly 0 or 1");
    }
  }
}

double MaskedPolicy::linear(const Eigen::VectorXd& s) const {
  Eigen::ArrayXd eff = beta.array() * active_mask + b.array() * (1.0 - active_mask);
  return (eff * s.array()).sum();
}

double MaskedPolicy::prob_treat(const Eigen::VectorXd& s) const { return expit(linear(s)); }

double MaskedPolicy::log_prob(int a, const Eigen::VectorXd& s) const {
  if (a != 0 && a != 1) throw std::invalid_argument("MaskedPolicy::log_prob: action must be 0 or 1");
  double lin = linear(s);
  return a == 1 ? log_expit(lin) : log_expit(-lin);
}

MaskedPolicy full_policy(const Eigen::VectorXd& beta) {
  MaskedPolicy p{beta, Eigen::VectorXd::Zero(beta.size()), Eigen::ArrayXd::Ones(beta.size())};
  p.validate();
  return p;
}

MaskedPolicy masked_policy(const Eigen::VectorXd& beta, const Eigen::VectorXd& b,
                           const Eigen::ArrayXd& active_mask) {
  MaskedPolicy p{beta, b, active_mask};
  p.validate();
  return p;
}

StepDerivs log_prob_derivs(const MaskedPolicy& p, int a, const Eigen::VectorXd& s) {
  if (a != 0 && a != 1) throw std::invalid_argument("log_prob_derivs: action must be 0 or 1");
  double pi = p.prob_treat(s);
  double dpi = pi * (1.0 - pi);
  Eigen::VectorXd sm = (s.array() * p.active_mask).matrix();
  Eigen::VectorXd sc = (s.array() * (1.0 - p.active_mask)).matrix();
  double resid = static_cast<double>(a) - pi;

  StepDerivs out;
  out.dlog_dbeta = resid * sm;
  out.dlog_db = resid * sc;
  out.d2log_dbeta2 = -dpi * sm * sm.transpose();
  out.d2log_dbeta_db = -dpi * sm * sc.transpose();

  double pb = expit(p.b.dot(s));
  out.behavioral_score = (static_cast<double>(a) - pb) * s;
  out.behavioral_hessian = -pb * (1.0 - pb) * s * s.transpose();
  return out;
}

}  // namespace relspar
