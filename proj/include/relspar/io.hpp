#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relspar/behavioral.hpp"
#include "relspar/inference.hpp"
#include "relspar/pipeline.hpp"
#include "relspar/simulate.hpp"
#include "relspar/sparsity.hpp"

namespace relspar::io {

// 17-significant-digit rendering so CSV round trips reproduce doubles exactly.
std::string fmt(double x);

// Lambda-path table: lambda, beta_1..K, b_1..K, sd_band_1..K, v_train,
// v_train_se, v_test, kl, prob_sugg, prob_beh, active_flags (one 0/1 char per
// coordinate).  The companion meta JSON carries everything not per-row
// (gamma, delta, weights, pilot, behavioral value) so the pair round-trips.
void write_path_csv(const LambdaPath& path, const std::string& file);
void write_path_meta(const LambdaPath& path, const std::string& file);
LambdaPath read_path_csv(const std::string& csv_file, const std::string& meta_file);

void write_selection_json(const LambdaChoice& choice, double gamma, double delta, bool used_sd,
                          const std::string& file);

// Post-selection table layout: one row per covariate with the suggested-policy
// estimate and CI (empty on pinned rows) next to the behavioral estimate and
// its Wald CI.
void write_inference_csv(const InferenceResult& r, const std::string& file);

void write_behavioral_json(const BehavioralFit& fit, double level, int n,
                           const std::string& file);
void write_calibration_csv(const std::vector<CalibrationRow>& rows, const std::string& file);

// One row per gamma, mirroring the coverage table.
void write_coverage_csv(const std::vector<CoverageReport>& rows, const std::string& file);

// Monte-Carlo-averaged path table plus the empirical sd columns.
void write_selection_cell_csv(const SelectionCellSummary& cell, const std::string& file);

// Artifact tree for one pipeline run: diagrams/<gamma>_<delta>.csv per grid
// cell, selection.json (chosen cell, lambda rule outcome, split bookkeeping),
// inference.csv.  Returns the relative paths written.
std::vector<std::string> write_pipeline_outputs(const PipelineReport& rep, const std::string& dir);

// Every output directory gets exactly one manifest recording how it was made.
// Wall time is informational; all data artifacts are deterministic.
void write_manifest(const std::string& dir, const std::string& command,
                    const std::vector<std::string>& args, std::uint64_t seed,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    const std::string& version, double wall_seconds);

}  // namespace relspar::io
