#include "relspar/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "relspar/threading.hpp"

namespace relspar {

namespace {

void check_axis(const std::vector<double>& values, const char* name) {
  if (values.empty()) throw std::invalid_argument(std::string("run_pipeline: empty ") + name + " grid");
  for (double v : values) {
    if (!std::isfinite(v) || v <= 0.0) {
      throw std::invalid_argument(std::string("run_pipeline: ") + name +
                                  " values must be finite and strictly positive");
    }
  }
}

}  // namespace

PipelineReport run_pipeline(const Dataset& d, const PipelineGrids& grids, std::uint64_t seed,
                            const PipelineOptions& opt) {
  d.validate();
  const std::vector<double> gammas =
      opt.fixed_gamma ? std::vector<double>{*opt.fixed_gamma} : grids.gammas;
  const std::vector<double> deltas =
      opt.fixed_delta ? std::vector<double>{*opt.fixed_delta} : grids.deltas;
  check_axis(gammas, "gamma");
  check_axis(deltas, "delta");
  if (grids.lambdas.empty() && grids.n_lambda < 1) {
    throw std::invalid_argument("run_pipeline: n_lambda must be positive");
  }
  if (!(opt.band_threshold > 0.0)) {
    throw std::invalid_argument("run_pipeline: band threshold must be positive");
  }
  if (opt.threads < 1) throw std::invalid_argument("run_pipeline: threads must be positive");

  PipelineReport rep;
  rep.selection_mode = (opt.fixed_gamma && opt.fixed_delta)     ? "user-fixed"
                       : (!opt.fixed_gamma && !opt.fixed_delta) ? "auto"
                                                                : "partially-fixed";
  rep.split = split_dataset(d, seed, opt.fractions);
  rep.selection_indices = rep.split.split1_train;
  rep.selection_indices.insert(rep.selection_indices.end(), rep.split.split1_test.begin(),
                               rep.split.split1_test.end());
  std::sort(rep.selection_indices.begin(), rep.selection_indices.end());
  rep.inference_indices = rep.split.split2;

  const Dataset d_train = subset(d, rep.split.split1_train);
  const Dataset d_test = subset(d, rep.split.split1_test);
  const Dataset d_inf = subset(d, rep.split.split2);
  const int K = d.state_dim();

  const BehavioralFit b_train = fit_mle(d_train);

  // One pilot fit per gamma, shared by every delta in that row.
  const int n_gamma = static_cast<int>(gammas.size());
  const int n_delta = static_cast<int>(deltas.size());
  std::vector<TrpoFit> pilots(static_cast<std::size_t>(n_gamma));
  parallel_for(n_gamma, opt.threads, [&](int gi) {
    FitConfig cfg = opt.fit;
    cfg.gamma = gammas[static_cast<std::size_t>(gi)];
    cfg.lambda = 0.0;
    pilots[static_cast<std::size_t>(gi)] = fit_trpo(b_train, d_train, cfg, Eigen::ArrayXd::Ones(K));
  });

  rep.cells.resize(static_cast<std::size_t>(n_gamma) * static_cast<std::size_t>(n_delta));
  parallel_for(n_gamma * n_delta, opt.threads, [&](int idx) {
    const int gi = idx / n_delta;
    const int di = idx % n_delta;
    FitConfig cfg = opt.fit;
    cfg.gamma = gammas[static_cast<std::size_t>(gi)];
    cfg.delta = deltas[static_cast<std::size_t>(di)];
    std::vector<double> lams = grids.lambdas;
    if (lams.empty()) {
      const AdaptiveWeights w =
          adaptive_weights(pilots[static_cast<std::size_t>(gi)], b_train.b, cfg.delta);
      lams = default_lambda_grid(b_train, d_train, cfg.gamma, w, grids.n_lambda);
    }
    PipelineCell cell;
    cell.gamma = cfg.gamma;
    cell.delta = cfg.delta;
    cell.path = lambda_path(b_train, d_train, d_test, cfg, cfg.delta, std::move(lams),
                            &pilots[static_cast<std::size_t>(gi)]);
    cell.max_band = 0.0;
    for (const PathPoint& pt : cell.path.points) {
      for (int k = 0; k < K; ++k) {
        const double band = pt.sd_band(k);
        if (std::isnan(band)) {
          cell.max_band = std::numeric_limits<double>::infinity();
        } else {
          cell.max_band = std::max(cell.max_band, band);
        }
      }
    }
    rep.cells[static_cast<std::size_t>(idx)] = std::move(cell);
  });

  // Cell choice: smallest gamma owning a cell whose bands stay below the
  // threshold; among that gamma's qualifying deltas, the steadiest cell
  // (smallest max band).  When nothing qualifies, fall back to the steadiest
  // cell overall and flag the report.
  std::vector<int> gamma_order(static_cast<std::size_t>(n_gamma));
  for (int gi = 0; gi < n_gamma; ++gi) gamma_order[static_cast<std::size_t>(gi)] = gi;
  std::stable_sort(gamma_order.begin(), gamma_order.end(), [&](int a, int b) {
    return gammas[static_cast<std::size_t>(a)] < gammas[static_cast<std::size_t>(b)];
  });
  int chosen = -1;
  for (int gi : gamma_order) {
    int best_in_row = -1;
    for (int di = 0; di < n_delta; ++di) {
      const int idx = gi * n_delta + di;
      const PipelineCell& cell = rep.cells[static_cast<std::size_t>(idx)];
      if (cell.max_band > opt.band_threshold) continue;
      if (best_in_row < 0 ||
          cell.max_band < rep.cells[static_cast<std::size_t>(best_in_row)].max_band) {
        best_in_row = idx;
      }
    }
    if (best_in_row >= 0) {
      chosen = best_in_row;
      break;
    }
  }
  if (chosen < 0) {
    rep.no_qualifying_cell = true;
    chosen = 0;
    for (int idx = 1; idx < n_gamma * n_delta; ++idx) {
      if (rep.cells[static_cast<std::size_t>(idx)].max_band <
          rep.cells[static_cast<std::size_t>(chosen)].max_band) {
        chosen = idx;
      }
    }
  }

  const PipelineCell& cell = rep.cells[static_cast<std::size_t>(chosen)];
  rep.chosen_gamma = cell.gamma;
  rep.chosen_delta = cell.delta;
  const LambdaChoice lam = select_lambda(cell.path, opt.vmin_use_sd);
  rep.chosen_lambda = lam.lambda;
  rep.no_qualifying_lambda = lam.no_qualifying;
  rep.selected_active_set = lam.active_set;

  FitConfig post_cfg = opt.fit;
  post_cfg.gamma = opt.post_gamma ? *opt.post_gamma : cell.gamma;
  post_cfg.delta = cell.delta;
  post_cfg.lambda = lam.lambda;
  rep.inference = post_select_fit(d_inf, rep.selected_active_set, post_cfg, opt.level);
  return rep;
}

}  // namespace relspar
