#include "relspar/trpo.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "relspar/math.hpp"
#include "relspar/rng.hpp"

namespace relspar {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double kl_n(const MaskedPolicy& p, const PolicyParams& b, const Dataset& d) {
  return -is_ratios(p, b, d).log_ratios.mean();
}

double m_n(const MaskedPolicy& p, const PolicyParams& b, const Dataset& d, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("m_n: gamma must be nonnegative");
  ISRatios r = is_ratios(p, b, d);
  return value_weighted(r).v_weighted - gamma * (-r.log_ratios.mean());
}

MnEvaluator::MnEvaluator(const Dataset& d, Eigen::VectorXd pinned_b, Eigen::VectorXd denom_b,
                         Eigen::ArrayXd active_mask, double gamma)
    : mask_(std::move(active_mask)), gamma_(gamma) {
  d.validate();
  const int K = d.state_dim();
  if (pinned_b.size() != K || denom_b.size() != K || mask_.size() != K) {
    throw std::invalid_argument("MnEvaluator: coefficient/mask dimensions must match the dataset");
  }
  n_ = d.n();
  steps_ = d.horizon();
  const int P = n_ * steps_;

  Eigen::MatrixXd S(P, K);
  a_.resize(P);
  G_.resize(n_);
  for (int i = 0; i < n_; ++i) {
    const Trajectory& tr = d.trajectories[i];
    for (int t = 0; t < steps_; ++t) {
      S.row(i * steps_ + t) = tr.states.row(t);
      a_(i * steps_ + t) = tr.actions(t);
    }
    G_(i) = tr.rewards.sum();
  }
  // Behavioral log-probabilities (fixed across evaluations).
  Eigen::VectorXd lin_b = S * denom_b;
  logp_b_.resize(P);
  for (int p = 0; p < P; ++p) {
    logp_b_(p) = a_(p) == 1.0 ? log_expit(lin_b(p)) : log_expit(-lin_b(p));
  }
  // Masked columns and the pinned linear contribution.
  sm_ = S * mask_.matrix().asDiagonal();
  pinned_lin_ = S * (pinned_b.array() * (1.0 - mask_)).matrix();
}

void MnEvaluator::core(const Eigen::VectorXd& beta, bool want_grad, Eval& out) const {
  out.valid = false;
  const int K = dim();
  if (beta.size() != K) throw std::invalid_argument("MnEvaluator: beta has wrong length");
  if (!beta.allFinite()) return;

  Eigen::VectorXd lin = sm_ * beta + pinned_lin_;
  Eigen::VectorXd lr(n_);
  Eigen::MatrixXd gbeta;
  if (want_grad) gbeta.setZero(n_, K);
  for (int i = 0; i < n_; ++i) {
    double acc = 0.0;
    for (int t = 0; t < steps_; ++t) {
      const int p = i * steps_ + t;
      double lp = a_(p) == 1.0 ? log_expit(lin(p)) : log_expit(-lin(p));
      acc += lp - logp_b_(p);
      if (want_grad) {
        double resid = a_(p) - expit(lin(p));
        gbeta.row(i) += resid * sm_.row(p);
      }
    }
    lr(i) = acc;
  }
  double c = lr.maxCoeff();
  if (!std::isfinite(c) || c - lr.minCoeff() > 700.0) return;

  Eigen::ArrayXd w = (lr.array() - c).exp();
  double Dr = w.mean();
  double W = (w * G_.array()).mean();
  double V = W / Dr;
  double kl = -lr.mean();
  out.v_weighted = V;
  out.kl = kl;
  out.m = V - gamma_ * kl;
  if (!std::isfinite(out.m)) return;

  if (want_grad) {
    Eigen::VectorXd N = (gbeta.array().colwise() * (w * G_.array())).colwise().mean();
    Eigen::VectorXd Gv = (gbeta.array().colwise() * w).colwise().mean();
    Eigen::VectorXd meanG = gbeta.colwise().mean();
    out.grad = N / Dr - (V / Dr) * Gv + gamma_ * meanG;
    if (!out.grad.allFinite()) return;
  }
  out.valid = true;
}

double MnEvaluator::objective(const Eigen::VectorXd& beta) const {
  Eval e;
  core(beta, false, e);
  return e.valid ? e.m : -kInf;
}

MnEvaluator::Eval MnEvaluator::eval(const Eigen::VectorXd& beta) const {
  Eval e;
  core(beta, true, e);
  if (!e.valid) e.m = -kInf;
  return e;
}

SmoothObjective MnEvaluator::as_objective() const {
  return [this](const Eigen::VectorXd& x, Eigen::VectorXd* grad) -> double {
    if (grad == nullptr) return objective(x);
    Eval e = eval(x);
    if (!e.valid) return -kInf;
    *grad = e.grad;
    return e.m;
  };
}

DerivativeBundle derivative_bundle(const MaskedPolicy& p, const PolicyParams& b,
                                   const Dataset& d, double gamma) {
  p.validate();
  d.validate();
  const int K = d.state_dim();
  if (p.beta.size() != K || b.coefficients.size() != K) {
    throw std::invalid_argument("derivative_bundle: dimensions must match the dataset");
  }
  if (gamma < 0.0) throw std::invalid_argument("derivative_bundle: gamma must be nonnegative");
  // The nuisance must be one shared parameter when any coordinate is pinned.
  if ((p.active_mask < 1.0).any() && (p.b - b.coefficients).cwiseAbs().maxCoeff() > 0.0) {
    throw std::invalid_argument(
        "derivative_bundle: pinned coordinates require p.b == b (shared nuisance)");
  }

  const int n = d.n();
  const int steps = d.horizon();
  Eigen::VectorXd lr(n), G(n);
  Eigen::MatrixXd gbeta(n, K), gb(n, K);
  std::vector<Eigen::MatrixXd> hbb(n), hbB(n);

  for (int i = 0; i < n; ++i) {
    const Trajectory& tr = d.trajectories[i];
    double acc = 0.0;
    Eigen::VectorXd gB = Eigen::VectorXd::Zero(K), gN = Eigen::VectorXd::Zero(K);
    Eigen::MatrixXd h1 = Eigen::MatrixXd::Zero(K, K), h2 = Eigen::MatrixXd::Zero(K, K);
    for (int t = 0; t < steps; ++t) {
      Eigen::VectorXd s = tr.states.row(t).transpose();
      const int a = tr.actions(t);
      double lin = p.linear(s);
      double pi = expit(lin);
      double dpi = pi * (1.0 - pi);
      Eigen::VectorXd sm = (s.array() * p.active_mask).matrix();
      Eigen::VectorXd sc = (s.array() * (1.0 - p.active_mask)).matrix();
      double lin_b = b.coefficients.dot(s);
      double pb = expit(lin_b);
      double lp = a == 1 ? log_expit(lin) : log_expit(-lin);
      double lpb = a == 1 ? log_expit(lin_b) : log_expit(-lin_b);
      acc += lp - lpb;
      gB += (a - pi) * sm;
      gN += (a - pi) * sc - (a - pb) * s;
      h1 -= dpi * sm * sm.transpose();
      h2 -= dpi * sm * sc.transpose();
    }
    lr(i) = acc;
    G(i) = tr.rewards.sum();
    gbeta.row(i) = gB.transpose();
    gb.row(i) = gN.transpose();
    hbb[i] = std::move(h1);
    hbB[i] = std::move(h2);
  }

  double c = lr.maxCoeff();
  if (c - lr.minCoeff() > 700.0) {
    throw std::runtime_error(
        "derivative_bundle: degenerate importance weights (log-ratio spread exceeds 700)");
  }
  Eigen::ArrayXd w = (lr.array() - c).exp();
  Eigen::ArrayXd v = w * G.array();
  const double Dr = w.mean();
  const double W = v.mean();

  Eigen::VectorXd N = (gbeta.array().colwise() * v).colwise().mean();
  Eigen::VectorXd Gv = (gbeta.array().colwise() * w).colwise().mean();
  Eigen::VectorXd Nb = (gb.array().colwise() * v).colwise().mean();
  Eigen::VectorXd Gb = (gb.array().colwise() * w).colwise().mean();

  Eigen::MatrixXd Sbbv = Eigen::MatrixXd::Zero(K, K), Sbbr = Eigen::MatrixXd::Zero(K, K);
  Eigen::MatrixXd SbBv = Eigen::MatrixXd::Zero(K, K), SbBr = Eigen::MatrixXd::Zero(K, K);
  Eigen::MatrixXd Hbb_mean = Eigen::MatrixXd::Zero(K, K), HbB_mean = Eigen::MatrixXd::Zero(K, K);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd gB = gbeta.row(i).transpose(), gN = gb.row(i).transpose();
    Eigen::MatrixXd outer_bb = gB * gB.transpose() + hbb[i];
    Eigen::MatrixXd outer_bB = gB * gN.transpose() + hbB[i];
    Sbbv += v(i) * outer_bb;
    Sbbr += w(i) * outer_bb;
    SbBv += v(i) * outer_bB;
    SbBr += w(i) * outer_bB;
    Hbb_mean += hbb[i];
    HbB_mean += hbB[i];
  }
  Sbbv /= n;
  Sbbr /= n;
  SbBv /= n;
  SbBr /= n;
  Hbb_mean /= n;
  HbB_mean /= n;

  DerivativeBundle out;
  out.active_mask = p.active_mask;
  out.per_trajectory_z.resize(n, K);
  for (int i = 0; i < n; ++i) {
    out.per_trajectory_z.row(i) = (v(i) / Dr) * gbeta.row(i) -
                                  (v(i) / (Dr * Dr)) * Gv.transpose() +
                                  gamma * gbeta.row(i);
  }
  out.J = out.per_trajectory_z.colwise().mean();
  out.H = Sbbv / Dr - (N * Gv.transpose() + Gv * N.transpose()) / (Dr * Dr) -
          (W / (Dr * Dr)) * Sbbr + (2.0 * W / (Dr * Dr * Dr)) * Gv * Gv.transpose() +
          gamma * Hbb_mean;
  out.X = SbBv / Dr - (N * Gb.transpose() + Gv * Nb.transpose()) / (Dr * Dr) -
          (W / (Dr * Dr)) * SbBr + (2.0 * W / (Dr * Dr * Dr)) * Gv * Gb.transpose() +
          gamma * HbB_mean;
  double lse = c + std::log(w.sum());
  out.mean_ratio = std::exp(lse - std::log(static_cast<double>(n)));
  return out;
}

namespace {

// Expands the reduced active-coordinate vector into a full coefficient vector.
Eigen::VectorXd expand_active(const Eigen::VectorXd& x, const Eigen::VectorXd& base,
                              const std::vector<int>& active_ix) {
  Eigen::VectorXd beta = base;
  for (size_t j = 0; j < active_ix.size(); ++j) beta(active_ix[j]) = x(j);
  return beta;
}

}  // namespace

TrpoFit fit_trpo(const BehavioralFit& b, const Dataset& d, const FitConfig& cfg,
                 const Eigen::ArrayXd& active_mask) {
  if (!(cfg.gamma > 0.0)) {
    throw std::invalid_argument("fit_trpo: gamma must be strictly positive");
  }
  const int K = d.state_dim();
  if (active_mask.size() != K) throw std::invalid_argument("fit_trpo: mask has wrong length");
  std::vector<int> active_ix;
  for (int k = 0; k < K; ++k) {
    if (active_mask(k) != 0.0 && active_mask(k) != 1.0) {
      throw std::invalid_argument("fit_trpo: mask entries must be exactly 0 or 1");
    }
    if (active_mask(k) == 1.0) active_ix.push_back(k);
  }
  const Eigen::VectorXd& bn = b.b.coefficients;
  MnEvaluator ev(d, bn, bn, active_mask, cfg.gamma);

  TrpoFit fit;
  if (active_ix.empty()) {
    fit.beta.coefficients = bn;
    fit.converged = true;
    fit.m_value = ev.objective(bn);
    fit.grad_norm = 0.0;
    return fit;
  }

  SmoothObjective reduced = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) -> double {
    Eigen::VectorXd beta = expand_active(x, bn, active_ix);
    if (grad == nullptr) return ev.objective(beta);
    MnEvaluator::Eval e = ev.eval(beta);
    if (!e.valid) return -kInf;
    grad->resize(active_ix.size());
    for (size_t j = 0; j < active_ix.size(); ++j) (*grad)(j) = e.grad(active_ix[j]);
    return e.m;
  };

  OptimOptions opts;
  opts.max_iters = cfg.max_iters;
  opts.grad_tol = cfg.grad_tol;
  opts.step_init = cfg.step_init;
  opts.max_coord_step = cfg.max_coord_step;

  Eigen::VectorXd x0(active_ix.size());
  for (size_t j = 0; j < active_ix.size(); ++j) x0(j) = bn(active_ix[j]);
  OptimResult best = bfgs_maximize(reduced, x0, opts);
  for (int k = 1; k <= cfg.multi_start; ++k) {
    Rng rng = Rng::stream(0x6D73746172745ULL, static_cast<std::uint64_t>(k));
    Eigen::VectorXd xk = x0;
    for (Eigen::Index j = 0; j < xk.size(); ++j) {
      xk(j) += rng.normal(0.0, cfg.multi_start_spread);
    }
    if (!std::isfinite(reduced(xk, nullptr))) continue;
    OptimResult r = bfgs_maximize(reduced, xk, opts);
    if (r.f > best.f) best = r;
  }

  fit.beta.coefficients = expand_active(best.x, bn, active_ix);
  fit.converged = best.converged;
  fit.iterations = best.iterations;
  fit.m_value = best.f;
  fit.grad_norm = best.grad_norm;

  // Local-maximum certificate: active block of the Hessian should be NSD.
  try {
    MaskedPolicy pol = masked_policy(fit.beta.coefficients, bn, active_mask);
    DerivativeBundle bundle = derivative_bundle(pol, b.b, d, cfg.gamma);
    Eigen::MatrixXd Ha(active_ix.size(), active_ix.size());
    for (size_t r = 0; r < active_ix.size(); ++r) {
      for (size_t c = 0; c < active_ix.size(); ++c) {
        Ha(r, c) = bundle.H(active_ix[r], active_ix[c]);
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ha);
    double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    fit.hessian_nsd = es.eigenvalues().maxCoeff() <= 1e-6 * scale;
  } catch (const std::exception&) {
    fit.hessian_nsd = false;  // certificate unavailable
  }
  return fit;
}

}  // namespace relspar
