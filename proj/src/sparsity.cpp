#include "relspar/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "relspar/inference.hpp"

namespace relspar {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kActivationTol = 1e-6;  // |beta_k - b_k| above this counts as active

std::vector<int> active_from(const Eigen::VectorXd& beta, const Eigen::VectorXd& b) {
  std::vector<int> act;
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    if (std::abs(beta(k) - b(k)) > kActivationTol) act.push_back(static_cast<int>(k) + 1);
  }
  return act;
}

}  // namespace

AdaptiveWeights adaptive_weights(const TrpoFit& pilot, const PolicyParams& b, double delta) {
  // delta = 0 gives the non-adaptive penalty (unit weights, pins preserved).
  if (!(delta >= 0.0)) throw std::invalid_argument("adaptive_weights: delta must be nonnegative");
  const Eigen::VectorXd& pb = pilot.beta.coefficients;
  if (pb.size() != b.coefficients.size()) {
    throw std::invalid_argument("adaptive_weights: pilot and behavioral dimensions differ");
  }
  AdaptiveWeights out;
  out.pilot_beta = pb;
  out.delta = delta;
  out.w.resize(pb.size());
  for (Eigen::Index k = 0; k < pb.size(); ++k) {
    double diff = std::abs(pb(k) - b.coefficients(k));
    out.w(k) = diff < 1e-10 ? kInf : std::pow(diff, -delta);
  }
  return out;
}

AdaptiveWeights unit_weights(const TrpoFit& pilot, int K) {
  AdaptiveWeights out;
  out.pilot_beta = pilot.beta.coefficients;
  out.delta = 0.0;
  out.w = Eigen::VectorXd::Ones(K);
  return out;
}

RelsparFit fit_relspar(const BehavioralFit& b, const Dataset& d, const FitConfig& cfg,
                       const AdaptiveWeights& w, const Eigen::VectorXd& warm_start) {
  if (!(cfg.gamma > 0.0)) {
    throw std::invalid_argument("fit_relspar: gamma must be strictly positive");
  }
  if (cfg.lambda < 0.0) throw std::invalid_argument("fit_relspar: lambda must be nonnegative");
  const int K = d.state_dim();
  const Eigen::VectorXd& bn = b.b.coefficients;
  if (w.w.size() != K || warm_start.size() != K) {
    throw std::invalid_argument("fit_relspar: weight/start dimensions must match the dataset");
  }

  // The path-stage policy is the plain expit(beta's): all coordinates live in
  // beta, and pinning happens through infinite weights.
  MnEvaluator ev(d, bn, bn, Eigen::ArrayXd::Ones(K), cfg.gamma);

  OptimOptions opts;
  opts.max_iters = cfg.prox_max_iters;
  opts.step_init = cfg.step_init;
  opts.grad_tol = cfg.grad_tol;
  opts.iterate_tol = 1e-9;
  OptimResult res = prox_maximize(ev.as_objective(), warm_start, bn, cfg.lambda, w.w, opts);

  RelsparFit fit;
  fit.beta.coefficients = res.x;
  fit.converged = res.converged;
  fit.iterations = res.iterations;
  fit.m_value = res.f;
  double pen = 0.0;
  for (int k = 0; k < K; ++k) {
    if (!std::isinf(w.w(k))) pen += w.w(k) * std::abs(res.x(k) - bn(k));
  }
  fit.w_value = res.f - cfg.lambda * pen;
  fit.active_set = active_from(res.x, bn);
  return fit;
}

std::vector<double> default_lambda_grid(const BehavioralFit& b, const Dataset& d, double gamma,
                                        const AdaptiveWeights& w, int count) {
  if (count < 1) throw std::invalid_argument("default_lambda_grid: count must be positive");
  const Eigen::VectorXd& bn = b.b.coefficients;
  MnEvaluator ev(d, bn, bn, Eigen::ArrayXd::Ones(bn.size()), gamma);
  MnEvaluator::Eval e = ev.eval(bn);
  if (!e.valid) throw std::runtime_error("default_lambda_grid: objective degenerate at b_n");
  double lambda_max = 0.0;
  for (Eigen::Index k = 0; k < bn.size(); ++k) {
    if (std::isinf(w.w(k))) continue;
    lambda_max = std::max(lambda_max, std::abs(e.grad(k)) / w.w(k));
  }
  // At 1.1 * lambda_max the subgradient condition pins every coordinate at
  // b_n with margin; a flat objective (e.g. zero rewards) gets a token grid.
  lambda_max = lambda_max > 0.0 ? 1.1 * lambda_max : 1.0;
  if (count == 1) return {lambda_max};
  double lambda_min = 1e-3 * lambda_max;
  std::vector<double> grid(count);
  double ratio = std::log(lambda_max / lambda_min);
  for (int j = 0; j < count; ++j) {
    grid[j] = lambda_min * std::exp(ratio * j / (count - 1));
  }
  return grid;
}

LambdaPath lambda_path(const BehavioralFit& b, const Dataset& d_train, const Dataset& d_test,
                       const FitConfig& cfg, double delta, std::vector<double> lambdas,
                       const TrpoFit* pilot) {
  const int K = d_train.state_dim();
  const Eigen::VectorXd& bn = b.b.coefficients;

  TrpoFit local_pilot;
  if (pilot == nullptr) {
    local_pilot = fit_trpo(b, d_train, cfg, Eigen::ArrayXd::Ones(K));
    pilot = &local_pilot;
  }
  AdaptiveWeights w = adaptive_weights(*pilot, b.b, delta);

  if (lambdas.empty()) {
    lambdas = default_lambda_grid(b, d_train, cfg.gamma, w, 10);
  }
  std::sort(lambdas.begin(), lambdas.end());
  if (!lambdas.empty() && lambdas.front() < 0.0) {
    throw std::invalid_argument("lambda_path: lambdas must be nonnegative");
  }

  LambdaPath path;
  path.gamma = cfg.gamma;
  path.delta = delta;
  path.weights = w;
  path.pilot_beta = pilot->beta.coefficients;
  path.b = bn;
  path.n_train = d_train.n();
  path.n_test = d_test.n();

  MaskedPolicy behavioral_pol = full_policy(bn);
  path.value_behavioral = value_weighted(is_ratios(behavioral_pol, b.b, d_train));
  double prob_behavioral = avg_treat_prob(behavioral_pol, d_train);

  Eigen::MatrixXd q = influence_q(b);
  Eigen::VectorXd warm = pilot->beta.coefficients;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (double lambda : lambdas) {
    FitConfig point_cfg = cfg;
    point_cfg.lambda = lambda;
    RelsparFit fit = fit_relspar(b, d_train, point_cfg, w, warm);
    warm = fit.beta.coefficients;

    PathPoint pt;
    pt.lambda = lambda;
    pt.beta = fit.beta.coefficients;
    pt.converged = fit.converged;
    pt.active_set = fit.active_set;

    MaskedPolicy pol = full_policy(fit.beta.coefficients);
    pt.value_train = value_weighted(is_ratios(pol, b.b, d_train));
    pt.value_test = value_weighted(is_ratios(pol, b.b, d_test));
    pt.kl_train = kl_n(pol, b.b, d_train);
    pt.prob_suggested = avg_treat_prob(pol, d_train);
    pt.prob_behavioral = prob_behavioral;

    pt.sd_band = Eigen::VectorXd::Constant(K, nan);
    try {
      MaskedPolicy band_pol = masked_policy(fit.beta.coefficients, bn, Eigen::ArrayXd::Ones(K));
      DerivativeBundle bundle = derivative_bundle(band_pol, b.b, d_train, cfg.gamma);
      Eigen::MatrixXd var = sandwich_variance(bundle, q, d_train.n());
      for (int k = 0; k < K; ++k) pt.sd_band(k) = std::sqrt(var(k, k) / d_train.n());
    } catch (const std::exception&) {
      // Band unavailable at this point (singular Hessian or degenerate
      // weights); the path continues with NaN bands.
    }
    path.points.push_back(std::move(pt));
  }
  return path;
}

LambdaChoice select_lambda(const LambdaPath& path, bool use_sd_not_se) {
  if (path.points.empty()) throw std::invalid_argument("select_lambda: empty path");
  double se = path.value_behavioral.sd_weighted;
  if (!use_sd_not_se) se /= std::sqrt(static_cast<double>(path.value_behavioral.n));
  LambdaChoice choice;
  choice.v_min = path.value_behavioral.v_weighted + se;
  for (int j = static_cast<int>(path.points.size()) - 1; j >= 0; --j) {
    if (path.points[j].value_train.v_weighted >= choice.v_min) {
      choice.index = j;
      choice.lambda = path.points[j].lambda;
      choice.active_set = path.points[j].active_set;
      return choice;
    }
  }
  choice.no_qualifying = true;
  choice.index = 0;
  choice.lambda = path.points.front().lambda;
  choice.active_set = path.points.front().active_set;
  return choice;
}

}  // namespace relspar
