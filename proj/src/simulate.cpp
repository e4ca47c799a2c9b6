#include "relspar/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "relspar/behavioral.hpp"
#include "relspar/math.hpp"
#include "relspar/optim.hpp"
#include "relspar/rng.hpp"
#include "relspar/sparsity.hpp"
#include "relspar/threading.hpp"
#include "relspar/trpo.hpp"

namespace relspar {

namespace {

Eigen::VectorXd expand(const Eigen::VectorXd& v, int K, double fill, const char* name) {
  if (v.size() == 0) return Eigen::VectorXd::Constant(K, fill);
  if (v.size() != K) {
    throw std::invalid_argument(std::string("sim config: ") + name + " must have length K");
  }
  if (!v.allFinite()) {
    throw std::invalid_argument(std::string("sim config: ") + name + " must be finite");
  }
  return v;
}

}  // namespace

SimConfig resolve_sim_config(const SimConfig& cfg) {
  if (cfg.n < 1) throw std::invalid_argument("sim config: n must be at least 1");
  if (cfg.T < 1) throw std::invalid_argument("sim config: T must be at least 1");
  if (cfg.K < 1) throw std::invalid_argument("sim config: K must be at least 1");
  SimConfig out = cfg;
  if (out.b0.size() == 0) {
    out.b0 = Eigen::VectorXd::Zero(cfg.K);
    out.b0(0) = -0.3;
    if (cfg.K >= 2) out.b0(1) = 0.2;
  } else {
    out.b0 = expand(out.b0, cfg.K, 0.0, "b0");
  }
  out.tau = expand(cfg.tau, cfg.K, 0.1, "tau");
  out.sigma_eps = expand(cfg.sigma_eps, cfg.K, 1.0, "sigma_eps");
  out.mu0 = expand(cfg.mu0, cfg.K, 1.0, "mu0");
  if ((out.sigma_eps.array() <= 0.0).any()) {
    throw std::invalid_argument("sim config: sigma_eps must be strictly positive");
  }
  if (cfg.reward_component < 1 || cfg.reward_component > cfg.K) {
    throw std::invalid_argument(
        "sim config: reward component out of range (the default reward -s_2*a needs K >= 2)");
  }
  return out;
}

Dataset gen_dataset(const SimConfig& raw) {
  const SimConfig cfg = resolve_sim_config(raw);
  const int K = cfg.K;
  const int T = cfg.T;
  const int rc = cfg.reward_component - 1;
  const Eigen::VectorXd denom = (1.0 + cfg.sigma_eps.array().square()).sqrt();

  Dataset d;
  d.trajectories.resize(static_cast<std::size_t>(cfg.n));
  d.seed_tag = "sim:seed=" + std::to_string(cfg.seed);
  for (int i = 0; i < cfg.n; ++i) {
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(i));
    Trajectory& tr = d.trajectories[static_cast<std::size_t>(i)];
    tr.states.resize(T + 1, K);
    tr.actions.resize(T);
    tr.rewards.resize(T);
    for (int k = 0; k < K; ++k) tr.states(0, k) = rng.normal();
    Eigen::VectorXd mu = cfg.mu0;
    for (int t = 0; t < T; ++t) {
      const double lin = cfg.b0.dot(tr.states.row(t));
      const int a = rng.bernoulli(expit(lin));
      tr.actions(t) = a;
      tr.rewards(t) = -tr.states(t, rc) * a;
      const Eigen::VectorXd mu_next =
          (mu.array() * (1.0 + cfg.tau.array() * static_cast<double>(a))).matrix();
      for (int k = 0; k < K; ++k) {
        // Zero-mean innovations keep the state mean tracking mu_t (the gap
        // decays by 1/sqrt(1+sigma^2) each step) while the denominator keeps
        // the variance at exactly 1 for all t.
        const double eps = rng.normal(0.0, cfg.sigma_eps(k));
        tr.states(t + 1, k) = (tr.states(t, k) - mu(k) + eps) / denom(k) + mu_next(k);
      }
      mu = mu_next;
    }
  }
  return d;
}

Eigen::MatrixXd mu_path(const SimConfig& raw, const Eigen::VectorXi& actions) {
  const SimConfig cfg = resolve_sim_config(raw);
  if (actions.size() != cfg.T) {
    throw std::invalid_argument("mu_path: actions must have length T");
  }
  Eigen::MatrixXd path(cfg.T + 1, cfg.K);
  path.row(0) = cfg.mu0.transpose();
  for (int t = 0; t < cfg.T; ++t) {
    const double a = static_cast<double>(actions(t));
    path.row(t + 1) =
        (path.row(t).transpose().array() * (1.0 + cfg.tau.array() * a)).matrix().transpose();
  }
  return path;
}

namespace {

struct RefSolve {
  Eigen::VectorXd beta;
  Eigen::VectorXd b;
  double m_value = 0.0;
  bool converged = false;
};

// Maximize the model-based objective (expected reward under the candidate
// policy minus gamma times the KL toward the fitted behavioral policy) on one
// dataset, starting from that dataset's behavioral MLE.
RefSolve reference_solve(const Dataset& d, double gamma, int reward_component) {
  const BehavioralFit b = fit_mle(d);

  const int n = d.n();
  const int steps = d.horizon();
  const int K = d.state_dim();
  const int P = n * steps;
  Eigen::MatrixXd S(P, K);
  Eigen::VectorXd A(P);
  Eigen::VectorXd srev(P);  // reward-component state at each action step
  int row = 0;
  for (const Trajectory& tr : d.trajectories) {
    for (int t = 0; t < steps; ++t, ++row) {
      S.row(row) = tr.states.row(t);
      A(row) = static_cast<double>(tr.actions(t));
      srev(row) = tr.states(t, reward_component - 1);
    }
  }
  // log pi_b at the data; constant in beta, kept so m_value is the actual M.
  double logp_b = 0.0;
  {
    const Eigen::VectorXd lin_b = S * b.b.coefficients;
    for (int r = 0; r < P; ++r) {
      logp_b += A(r) > 0.5 ? log_expit(lin_b(r)) : log_expit(-lin_b(r));
    }
  }

  // The objective (and its gradient) scales with gamma once the KL term
  // dominates, so optimize f / max(1, gamma) to keep the tolerance scale-free.
  const double inv_n = 1.0 / static_cast<double>(n);
  const double scale = std::max(1.0, gamma);
  SmoothObjective f = [&](const Eigen::VectorXd& beta, Eigen::VectorXd* grad) -> double {
    const Eigen::VectorXd lin = S * beta;
    const Eigen::ArrayXd p = lin.array().unaryExpr([](double x) { return expit(x); });
    double logp = 0.0;
    for (int r = 0; r < P; ++r) {
      logp += A(r) > 0.5 ? log_expit(lin(r)) : log_expit(-lin(r));
    }
    const double v = -inv_n * (srev.array() * p).sum();
    const double kl = inv_n * (logp_b - logp);
    if (grad) {
      const Eigen::ArrayXd dp = p * (1.0 - p);
      *grad = inv_n / scale *
              (S.transpose() * (gamma * (A.array() - p) - srev.array() * dp).matrix());
    }
    return (v - gamma * kl) / scale;
  };

  OptimOptions opts;
  opts.max_iters = 3000;
  opts.grad_tol = 1e-7;  // 1e-8 sits at the rounding floor of the summed objective
  const OptimResult r = bfgs_maximize(f, b.b.coefficients, opts);

  RefSolve out;
  out.beta = r.x;
  out.b = b.b.coefficients;
  out.m_value = r.f * scale;
  out.converged = r.converged;
  return out;
}

}  // namespace

ReferenceEstimand reference_estimand(const SimConfig& raw, double gamma, int n_ref) {
  const SimConfig base = resolve_sim_config(raw);
  if (!(gamma > 0.0)) throw std::invalid_argument("reference_estimand: gamma must be positive");
  if (n_ref < 2) throw std::invalid_argument("reference_estimand: n_ref must be at least 2");
  // The reference is the mean of per-dataset maximizers computed at the same
  // sample size as the study, so it carries the estimator's finite-sample
  // geometry; n_ref is the total trajectory budget across those datasets.
  const int reps = std::max(1, n_ref / base.n);
  const std::uint64_t master = mix_seed(base.seed, 2);

  Eigen::VectorXd beta_sum;
  Eigen::VectorXd b_sum;
  double m_sum = 0.0;
  bool all_converged = true;
  for (int m = 0; m < reps; ++m) {
    SimConfig c = base;
    c.seed = mix_seed(master, static_cast<std::uint64_t>(m));
    const Dataset d = gen_dataset(c);
    const RefSolve s = reference_solve(d, gamma, base.reward_component);
    if (m == 0) {
      beta_sum = s.beta;
      b_sum = s.b;
    } else {
      beta_sum += s.beta;
      b_sum += s.b;
    }
    m_sum += s.m_value;
    all_converged = all_converged && s.converged;
  }

  ReferenceEstimand out;
  out.beta = beta_sum / static_cast<double>(reps);
  out.b_ref = b_sum / static_cast<double>(reps);
  out.m_value = m_sum / static_cast<double>(reps);
  out.converged = all_converged;
  out.n_ref = reps * base.n;
  return out;
}

CoverageReport coverage_study(const SimConfig& raw, double gamma, const std::vector<int>& active,
                              int replications, double level, int coordinate, int n_ref,
                              int threads) {
  const SimConfig cfg = resolve_sim_config(raw);
  if (replications < 2) {
    throw std::invalid_argument("coverage_study: need at least 2 replications");
  }
  if (coordinate < 1 || coordinate > cfg.K) {
    throw std::invalid_argument("coverage_study: coordinate out of range");
  }
  if (threads < 1) throw std::invalid_argument("coverage_study: threads must be positive");
  const ReferenceEstimand ref = reference_estimand(cfg, gamma, n_ref);
  const int c = coordinate - 1;
  const bool coord_active =
      std::find(active.begin(), active.end(), coordinate) != active.end();

  FitConfig fit_cfg;
  fit_cfg.gamma = gamma;

  struct Rep {
    double beta = 0.0, var = 0.0, lo = 0.0, hi = 0.0;
    bool ok = false;
  };
  std::vector<Rep> reps(static_cast<std::size_t>(replications));
  const std::uint64_t master = mix_seed(cfg.seed, 1);
  parallel_for(replications, threads, [&](int m) {
    SimConfig cm = cfg;
    cm.seed = mix_seed(master, static_cast<std::uint64_t>(m));
    Rep& out = reps[static_cast<std::size_t>(m)];
    try {
      const Dataset d = gen_dataset(cm);
      const InferenceResult inf = post_select_fit(d, active, fit_cfg, level);
      if (coord_active) {
        out = {inf.beta(c), inf.variance(c, c), inf.ci_lower(c), inf.ci_upper(c), true};
      } else {
        // Pinned coordinate: the estimate is b_n with its Wald interval.
        const double var = inf.behavioral.neg_hessian_inv(c, c);
        out = {inf.behavioral.b.coefficients(c), var, inf.b_ci_lower(c), inf.b_ci_upper(c), true};
      }
    } catch (const std::exception&) {
      out.ok = false;
    }
  });

  CoverageReport rep;
  rep.gamma = gamma;
  rep.coordinate = coordinate;
  rep.reference_beta = ref.beta;
  rep.true_beta = ref.beta(c);
  rep.n = cfg.n;
  rep.level = level;
  const double sqn = std::sqrt(static_cast<double>(cfg.n));
  double sum_beta = 0.0, sum_var = 0.0, sum_len = 0.0;
  int ok = 0, covered = 0;
  for (const Rep& r : reps) {
    if (!r.ok) continue;
    ++ok;
    sum_beta += r.beta;
    sum_var += r.var;
    sum_len += r.hi - r.lo;
    if (r.lo <= rep.true_beta && rep.true_beta <= r.hi) ++covered;
  }
  rep.replications = ok;
  rep.failures = replications - ok;
  if (ok < 2) throw std::runtime_error("coverage_study: fewer than 2 replications succeeded");
  rep.mean_estimate = sum_beta / ok;
  rep.bias = rep.mean_estimate - rep.true_beta;
  rep.mean_estimated_sd = std::sqrt(sum_var / ok);
  rep.coverage = static_cast<double>(covered) / ok;
  rep.mean_ci_length = sum_len / ok;
  double ss = 0.0;
  for (const Rep& r : reps) {
    if (!r.ok) continue;
    const double dev = sqn * r.beta - sqn * rep.mean_estimate;
    ss += dev * dev;
  }
  rep.true_sd = std::sqrt(ss / (ok - 1));
  return rep;
}

namespace {

struct RepCell {
  std::vector<PathPoint> points;
  Eigen::VectorXd b;
  std::vector<int> selected;
  bool no_qualifying = false;
};

struct RepResult {
  std::vector<RepCell> cells;
  bool ok = false;
};

}  // namespace

SelectionStudy selection_study(const SimConfig& raw, const PipelineGrids& grids, int replications,
                               const PipelineOptions& opt) {
  const SimConfig cfg = resolve_sim_config(raw);
  if (replications < 1) throw std::invalid_argument("selection_study: need at least 1 replication");
  const std::vector<double> gammas =
      opt.fixed_gamma ? std::vector<double>{*opt.fixed_gamma} : grids.gammas;
  const std::vector<double> deltas =
      opt.fixed_delta ? std::vector<double>{*opt.fixed_delta} : grids.deltas;
  if (gammas.empty() || deltas.empty()) {
    throw std::invalid_argument("selection_study: empty gamma or delta grid");
  }
  const int n_gamma = static_cast<int>(gammas.size());
  const int n_delta = static_cast<int>(deltas.size());
  const int n_cells = n_gamma * n_delta;
  const int K = cfg.K;
  const std::uint64_t master = mix_seed(cfg.seed, 1);

  std::vector<std::vector<double>> common_grids(static_cast<std::size_t>(n_cells));
  auto run_rep = [&](int m, bool fix_grids) -> RepResult {
    SimConfig cm = cfg;
    cm.seed = mix_seed(master, 2 * static_cast<std::uint64_t>(m));
    const Dataset d = gen_dataset(cm);
    const SplitSpec sp =
        split_dataset(d, mix_seed(master, 2 * static_cast<std::uint64_t>(m) + 1), opt.fractions);
    const Dataset d_train = subset(d, sp.split1_train);
    const Dataset d_test = subset(d, sp.split1_test);
    const BehavioralFit b = fit_mle(d_train);

    std::vector<TrpoFit> pilots(static_cast<std::size_t>(n_gamma));
    for (int gi = 0; gi < n_gamma; ++gi) {
      FitConfig c = opt.fit;
      c.gamma = gammas[static_cast<std::size_t>(gi)];
      c.lambda = 0.0;
      pilots[static_cast<std::size_t>(gi)] = fit_trpo(b, d_train, c, Eigen::ArrayXd::Ones(K));
    }

    RepResult res;
    res.cells.resize(static_cast<std::size_t>(n_cells));
    for (int gi = 0; gi < n_gamma; ++gi) {
      for (int di = 0; di < n_delta; ++di) {
        const int idx = gi * n_delta + di;
        FitConfig c = opt.fit;
        c.gamma = gammas[static_cast<std::size_t>(gi)];
        c.delta = deltas[static_cast<std::size_t>(di)];
        std::vector<double> lams;
        if (!grids.lambdas.empty()) {
          lams = grids.lambdas;
        } else if (fix_grids) {
          const AdaptiveWeights w =
              adaptive_weights(pilots[static_cast<std::size_t>(gi)], b.b, c.delta);
          lams = default_lambda_grid(b, d_train, c.gamma, w, grids.n_lambda);
          common_grids[static_cast<std::size_t>(idx)] = lams;
        } else {
          lams = common_grids[static_cast<std::size_t>(idx)];
        }
        const LambdaPath path = lambda_path(b, d_train, d_test, c, c.delta, lams,
                                            &pilots[static_cast<std::size_t>(gi)]);
        const LambdaChoice choice = select_lambda(path, opt.vmin_use_sd);
        RepCell& cell = res.cells[static_cast<std::size_t>(idx)];
        cell.points = path.points;
        cell.b = b.b.coefficients;
        cell.selected = choice.active_set;
        cell.no_qualifying = choice.no_qualifying;
      }
    }
    res.ok = true;
    return res;
  };

  std::vector<RepResult> all(static_cast<std::size_t>(replications));
  // The first replication runs alone to freeze the common lambda grids.
  all[0] = run_rep(0, true);
  parallel_for(replications - 1, opt.threads, [&](int j) {
    const int m = j + 1;
    try {
      all[static_cast<std::size_t>(m)] = run_rep(m, false);
    } catch (const std::exception&) {
      all[static_cast<std::size_t>(m)].ok = false;
    }
  });

  SelectionStudy study;
  study.replications = replications;
  study.cells.resize(static_cast<std::size_t>(n_cells));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int idx = 0; idx < n_cells; ++idx) {
    SelectionCellSummary& cell = study.cells[static_cast<std::size_t>(idx)];
    cell.gamma = gammas[static_cast<std::size_t>(idx / n_delta)];
    cell.delta = deltas[static_cast<std::size_t>(idx % n_delta)];
    cell.lambdas =
        grids.lambdas.empty() ? common_grids[static_cast<std::size_t>(idx)] : grids.lambdas;
    std::sort(cell.lambdas.begin(), cell.lambdas.end());
    const int L = static_cast<int>(cell.lambdas.size());
    cell.mean_beta = Eigen::MatrixXd::Zero(L, K);
    cell.sd_beta = Eigen::MatrixXd::Zero(L, K);
    cell.mean_band = Eigen::MatrixXd::Zero(L, K);
    cell.active_frequency = Eigen::MatrixXd::Zero(L, K);
    cell.mean_b = Eigen::VectorXd::Zero(K);
    cell.mean_v_train = Eigen::VectorXd::Zero(L);
    cell.mean_v_train_se = Eigen::VectorXd::Zero(L);
    cell.mean_v_test = Eigen::VectorXd::Zero(L);
    cell.mean_kl = Eigen::VectorXd::Zero(L);
    cell.mean_prob_sugg = Eigen::VectorXd::Zero(L);
    cell.mean_prob_beh = Eigen::VectorXd::Zero(L);
    Eigen::MatrixXd band_count = Eigen::MatrixXd::Zero(L, K);
    std::map<std::vector<int>, int> set_counts;

    int ok = 0;
    for (const RepResult& rr : all) {
      if (!rr.ok) continue;
      ++ok;
      const RepCell& rc = rr.cells[static_cast<std::size_t>(idx)];
      cell.mean_b += rc.b;
      for (int l = 0; l < L; ++l) {
        const PathPoint& pt = rc.points[static_cast<std::size_t>(l)];
        cell.mean_beta.row(l) += pt.beta.transpose();
        for (int k = 0; k < K; ++k) {
          if (std::isfinite(pt.sd_band(k))) {
            cell.mean_band(l, k) += pt.sd_band(k);
            band_count(l, k) += 1.0;
          }
        }
        for (int a : pt.active_set) cell.active_frequency(l, a - 1) += 1.0;
        cell.mean_v_train(l) += pt.value_train.v_weighted;
        cell.mean_v_train_se(l) +=
            pt.value_train.sd_weighted / std::sqrt(static_cast<double>(pt.value_train.n));
        cell.mean_v_test(l) += pt.value_test.v_weighted;
        cell.mean_kl(l) += pt.kl_train;
        cell.mean_prob_sugg(l) += pt.prob_suggested;
        cell.mean_prob_beh(l) += pt.prob_behavioral;
      }
      ++set_counts[rc.selected];
      if (rc.no_qualifying) ++cell.selected_no_qualifying;
    }
    cell.replications = ok;
    cell.failures = replications - ok;
    if (ok == 0) continue;
    const double inv = 1.0 / ok;
    cell.mean_beta *= inv;
    cell.mean_b *= inv;
    cell.active_frequency *= inv;
    cell.mean_v_train *= inv;
    cell.mean_v_train_se *= inv;
    cell.mean_v_test *= inv;
    cell.mean_kl *= inv;
    cell.mean_prob_sugg *= inv;
    cell.mean_prob_beh *= inv;
    for (int l = 0; l < L; ++l) {
      for (int k = 0; k < K; ++k) {
        cell.mean_band(l, k) = band_count(l, k) > 0 ? cell.mean_band(l, k) / band_count(l, k) : nan;
      }
    }
    if (ok >= 2) {
      for (const RepResult& rr : all) {
        if (!rr.ok) continue;
        const RepCell& rc = rr.cells[static_cast<std::size_t>(idx)];
        for (int l = 0; l < L; ++l) {
          const Eigen::VectorXd dev =
              rc.points[static_cast<std::size_t>(l)].beta - cell.mean_beta.row(l).transpose();
          cell.sd_beta.row(l) += dev.array().square().matrix().transpose();
        }
      }
      cell.sd_beta = (cell.sd_beta / (ok - 1)).array().sqrt().matrix();
    } else {
      cell.sd_beta.setConstant(nan);
    }
    cell.selected_sets.assign(set_counts.begin(), set_counts.end());
    std::stable_sort(cell.selected_sets.begin(), cell.selected_sets.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
  }
  return study;
}

}  // namespace relspar
