#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relspar/inference.hpp"
#include "relspar/sparsity.hpp"
#include "relspar/trajectories.hpp"

namespace relspar {

struct PipelineGrids {
  std::vector<double> gammas{0.01, 3.0, 6.0};
  std::vector<double> deltas{0.5, 1.0, 2.0};
  std::vector<double> lambdas;  // empty: data-driven default per cell
  int n_lambda = 10;
};

struct PipelineOptions {
  std::array<double, 3> fractions{0.25, 0.25, 0.5};
  // Fixing gamma/delta bypasses the stability heuristic on that axis.
  std::optional<double> fixed_gamma;
  std::optional<double> fixed_delta;
  // Auto mode: smallest gamma whose path keeps all sd bands below this.
  double band_threshold = 0.5;
  bool vmin_use_sd = false;  // lambda rule threshold: +sd instead of +sd/sqrt(n)
  std::optional<double> post_gamma;  // override for the inference-stage gamma
  double level = 0.95;
  FitConfig fit;  // gamma is overridden per grid cell
  int threads = 1;
};

struct PipelineCell {
  double gamma = 0.0;
  double delta = 0.0;
  LambdaPath path;
  double max_band = 0.0;  // sup over points/coordinates; inf when any band is NaN
};

struct PipelineReport {
  SplitSpec split;
  std::vector<PipelineCell> cells;
  double chosen_gamma = 0.0;
  double chosen_delta = 0.0;
  double chosen_lambda = 0.0;
  std::string selection_mode;  // "user-fixed", "auto", or "partially-fixed"
  bool no_qualifying_cell = false;
  bool no_qualifying_lambda = false;
  std::vector<int> selected_active_set;  // 1-based
  InferenceResult inference;
  // Bookkeeping proving split hygiene: which trajectory indices fed selection
  // (split 1) and inference (split 2).
  std::vector<int> selection_indices;
  std::vector<int> inference_indices;
};

// Full selection-then-inference pipeline: split the data, sweep the
// (gamma, delta) grid of lambda paths on split 1, choose a cell and a lambda,
// then refit and build CIs on split 2.
PipelineReport run_pipeline(const Dataset& d, const PipelineGrids& grids, std::uint64_t seed,
                            const PipelineOptions& opt = {});

}  // namespace relspar
