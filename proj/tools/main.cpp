#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "relspar/behavioral.hpp"
#include "relspar/inference.hpp"
#include "relspar/io.hpp"
#include "relspar/pipeline.hpp"
#include "relspar/simulate.hpp"
#include "relspar/sparsity.hpp"
#include "relspar/trajectories.hpp"
#include "relspar/trpo.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using namespace relspar;
namespace fs = std::filesystem;

// Expands "--config file.json" into explicit long flags before CLI11 parses,
// so JSON keys mirror the flag names one-to-one, e.g. {"n": 500,
// "b0": [-0.3, 0.2], "scale": true}.  Flags given on the command line win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> out;
  std::string file;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config") {
      if (i + 1 >= argc) throw std::runtime_error("--config needs a file argument");
      file = argv[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      file = a.substr(9);
    } else {
      out.push_back(a);
    }
  }
  if (file.empty()) return out;

  std::ifstream in(file);
  if (!in) throw std::runtime_error("config: cannot open " + file);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("config parse: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config must be a JSON object");

  auto given = [&out](const std::string& flag) {
    for (const std::string& a : out) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  auto scalar = [](const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  for (const auto& [key, val] : j.items()) {
    const std::string flag = "--" + key;
    if (given(flag)) continue;
    if (val.is_boolean()) {
      out.push_back(flag + (val.get<bool>() ? "=true" : "=false"));
    } else if (val.is_array()) {
      std::string joined;
      for (const auto& e : val) {
        if (!joined.empty()) joined += ",";
        joined += scalar(e);
      }
      out.push_back(flag);
      out.push_back(joined);
    } else {
      out.push_back(flag);
      out.push_back(scalar(val));
    }
  }
  return out;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<int>(i)) = v[i];
  return out;
}

struct InputFlags {
  std::string path;
  std::string reward_rule = "column";
  bool scale = false;
};

void add_input_flags(CLI::App* cmd, InputFlags& f) {
  cmd->add_option("--input", f.path, "Trajectory CSV (id,t,s1..sK,a,r)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--reward-rule", f.reward_rule,
                  "column | next_state_component(j) | neg_current_component_times_action(j)");
  cmd->add_flag("--scale", f.scale, "Divide each state dimension by its pooled sample sd");
}

Dataset load_input(const InputFlags& f) {
  CsvSchema schema;
  schema.reward_rule = f.reward_rule;
  Dataset d = load_dataset(f.path, schema);
  if (f.scale) d = scale_states(d);
  return d;
}

struct SimFlags {
  SimConfig cfg;
  std::vector<double> b0, tau, sigma_eps, mu0;
};

void add_sim_flags(CLI::App* cmd, SimFlags& f) {
  cmd->add_option("--n", f.cfg.n, "Number of trajectories")->check(CLI::PositiveNumber);
  cmd->add_option("--T", f.cfg.T, "Decision epochs (actions per trajectory)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--K", f.cfg.K, "State dimension")->check(CLI::PositiveNumber);
  cmd->add_option("--b0", f.b0, "True behavioral coefficients")->delimiter(',');
  cmd->add_option("--tau", f.tau, "Treatment effects (default 0.1)")->delimiter(',');
  cmd->add_option("--sigma-eps", f.sigma_eps, "Innovation sds (default 1)")->delimiter(',');
  cmd->add_option("--mu0", f.mu0, "Initial mean shift (default 1)")->delimiter(',');
  cmd->add_option("--reward-component", f.cfg.reward_component,
                  "1-based state coordinate in the reward -s_k*a");
  cmd->add_option("--seed", f.cfg.seed, "Master seed");
}

SimConfig sim_config(const SimFlags& f) {
  SimConfig cfg = f.cfg;
  if (!f.b0.empty()) cfg.b0 = to_eigen(f.b0);
  if (!f.tau.empty()) cfg.tau = to_eigen(f.tau);
  if (!f.sigma_eps.empty()) cfg.sigma_eps = to_eigen(f.sigma_eps);
  if (!f.mu0.empty()) cfg.mu0 = to_eigen(f.mu0);
  return cfg;
}

double elapsed_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::array<double, 3> to_fractions(const std::vector<double>& v) {
  if (v.size() != 3) {
    throw std::invalid_argument("--fractions needs exactly 3 values (train,test,inference)");
  }
  return {v[0], v[1], v[2]};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> argv_copy(argv, argv + argc);
  CLI::App app{"Relative-sparsity policy toolkit: estimates treatment policies that deviate "
               "from behavior in few covariates and attaches post-selection inference"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // --- simulate ---------------------------------------------------------
  auto* c_sim = app.add_subcommand("simulate", "Generate constant-variance MDP trajectories");
  SimFlags simf;
  bool sim_scale = false;
  std::string sim_out;
  add_sim_flags(c_sim, simf);
  c_sim->add_flag("--scale", sim_scale, "Scale states by pooled sd after generation");
  c_sim->add_option("--out", sim_out, "Output directory")->required();

  // --- fit-behavioral ---------------------------------------------------
  auto* c_fitb = app.add_subcommand("fit-behavioral",
                                    "Logistic MLE of the behavioral policy + calibration table");
  InputFlags fitb_in;
  int fitb_bins = 10;
  double fitb_level = 0.95;
  std::string fitb_out;
  add_input_flags(c_fitb, fitb_in);
  c_fitb->add_option("--bins", fitb_bins, "Calibration bins");
  c_fitb->add_option("--level", fitb_level, "Wald CI level");
  c_fitb->add_option("--out", fitb_out, "Output directory")->required();

  // --- path -------------------------------------------------------------
  auto* c_path = app.add_subcommand("path", "Sweep the relative-sparsity penalty path");
  InputFlags path_in;
  std::string path_test, path_out;
  double path_gamma = 3.0, path_delta = 1.0;
  std::vector<double> path_lambdas;
  int path_nlambda = 10;
  add_input_flags(c_path, path_in);
  c_path->add_option("--test", path_test, "Held-out CSV for the test value column (default: train)")
      ->check(CLI::ExistingFile);
  c_path->add_option("--gamma", path_gamma, "KL penalty (> 0)");
  c_path->add_option("--delta", path_delta, "Adaptive-weight exponent");
  c_path->add_option("--lambda-grid", path_lambdas, "Explicit lambda values")->delimiter(',');
  c_path->add_option("--n-lambda", path_nlambda, "Points in the default log-spaced grid");
  c_path->add_option("--out", path_out, "Output directory")->required();

  // --- select-lambda ----------------------------------------------------
  auto* c_sel = app.add_subcommand("select-lambda",
                                   "Apply the value rule to a previously written path");
  std::string sel_path, sel_meta, sel_out;
  bool sel_use_sd = false;
  c_sel->add_option("--path", sel_path, "path.csv from the path command")
      ->required()
      ->check(CLI::ExistingFile);
  c_sel->add_option("--meta", sel_meta, "path_meta.json from the path command")
      ->required()
      ->check(CLI::ExistingFile);
  c_sel->add_flag("--use-sd", sel_use_sd,
                  "Threshold with the value sd instead of the standard error");
  c_sel->add_option("--out", sel_out, "Output directory")->required();

  // --- pipeline ---------------------------------------------------------
  auto* c_pipe = app.add_subcommand(
      "pipeline", "Split, sweep the (gamma, delta, lambda) grid, select, and infer");
  InputFlags pipe_in;
  std::string pipe_out;
  std::uint64_t pipe_seed = 1;
  std::vector<double> pipe_gammas{0.01, 3.0, 6.0};
  std::vector<double> pipe_deltas{0.5, 1.0, 2.0};
  std::vector<double> pipe_lambdas;
  std::vector<double> pipe_fracs{0.25, 0.25, 0.5};
  int pipe_nlambda = 10;
  std::optional<double> pipe_fixed_gamma, pipe_fixed_delta, pipe_post_gamma;
  double pipe_band = 0.5, pipe_level = 0.95;
  bool pipe_use_sd = false;
  int pipe_threads = 1;
  add_input_flags(c_pipe, pipe_in);
  c_pipe->add_option("--seed", pipe_seed, "Split seed");
  c_pipe->add_option("--gammas", pipe_gammas, "Gamma grid")->delimiter(',');
  c_pipe->add_option("--deltas", pipe_deltas, "Delta grid")->delimiter(',');
  c_pipe->add_option("--lambda-grid", pipe_lambdas, "Explicit lambda values")->delimiter(',');
  c_pipe->add_option("--n-lambda", pipe_nlambda, "Points in the default log-spaced grid");
  c_pipe->add_option("--fractions", pipe_fracs, "Split fractions train,test,inference")
      ->delimiter(',');
  c_pipe->add_option("--fixed-gamma", pipe_fixed_gamma, "Bypass the gamma heuristic");
  c_pipe->add_option("--fixed-delta", pipe_fixed_delta, "Bypass the delta heuristic");
  c_pipe->add_option("--band-threshold", pipe_band,
                     "Auto mode keeps the smallest gamma with all sd bands below this");
  c_pipe->add_flag("--use-sd", pipe_use_sd,
                   "Lambda rule thresholds with the value sd instead of the standard error");
  c_pipe->add_option("--post-gamma", pipe_post_gamma, "Override gamma for the inference stage");
  c_pipe->add_option("--level", pipe_level, "CI level");
  c_pipe->add_option("--threads", pipe_threads, "Worker threads for grid cells");
  c_pipe->add_option("--out", pipe_out, "Output directory")->required();

  // --- infer ------------------------------------------------------------
  auto* c_inf = app.add_subcommand("infer", "Post-selection fit and CIs on a held-out dataset");
  InputFlags inf_in;
  std::string inf_out;
  std::vector<int> inf_active;
  double inf_gamma = 3.0, inf_level = 0.95;
  add_input_flags(c_inf, inf_in);
  c_inf->add_option("--active", inf_active, "1-based active coordinates (omit for none)")
      ->delimiter(',');
  c_inf->add_option("--gamma", inf_gamma, "KL penalty (> 0)");
  c_inf->add_option("--level", inf_level, "CI level");
  c_inf->add_option("--out", inf_out, "Output directory")->required();

  // --- coverage ---------------------------------------------------------
  auto* c_cov = app.add_subcommand("coverage", "Monte-Carlo coverage table for simulated data");
  SimFlags covf;
  std::string cov_out;
  std::vector<double> cov_gammas{0.01, 3.0, 6.0};
  std::vector<int> cov_active{2};
  int cov_reps = 0, cov_coord = 2, cov_nref = 100000, cov_threads = 1;
  double cov_level = 0.95;
  add_sim_flags(c_cov, covf);
  c_cov->add_option("--gammas", cov_gammas, "Gamma values, one table row each")->delimiter(',');
  c_cov->add_option("--replications", cov_reps, "Monte-Carlo replications")->required();
  c_cov->add_option("--active", cov_active, "Active set for the masked fit")->delimiter(',');
  c_cov->add_option("--coordinate", cov_coord, "1-based coordinate under study");
  c_cov->add_option("--level", cov_level, "CI level");
  c_cov->add_option("--n-ref", cov_nref, "Reference-estimand sample size");
  c_cov->add_option("--threads", cov_threads, "Worker threads for replications");
  c_cov->add_option("--out", cov_out, "Output directory")->required();

  std::string config_doc;  // consumed before parsing; registered for --help only
  for (CLI::App* sub : {c_sim, c_fitb, c_path, c_sel, c_pipe, c_inf, c_cov}) {
    sub->add_option("--config", config_doc,
                    "JSON file whose keys mirror the long flags (explicit flags win)");
  }

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::reverse(args.begin(), args.end());  // CLI11 parses vectors back to front
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const auto t0 = std::chrono::steady_clock::now();

  try {
    if (c_sim->parsed()) {
      SimConfig cfg = sim_config(simf);
      Dataset d = gen_dataset(cfg);
      if (sim_scale) d = scale_states(d);
      fs::create_directories(sim_out);
      write_dataset_csv(d, (fs::path(sim_out) / "trajectories.csv").string());
      io::write_manifest(sim_out, "simulate", argv_copy, cfg.seed, {}, {"trajectories.csv"},
                         kVersion, elapsed_seconds(t0));
    } else if (c_fitb->parsed()) {
      const Dataset d = load_input(fitb_in);
      const BehavioralFit fit = fit_mle(d);
      const auto calibration = calibration_table(fit, d, fitb_bins);
      fs::create_directories(fitb_out);
      io::write_behavioral_json(fit, fitb_level, d.n(),
                                (fs::path(fitb_out) / "behavioral.json").string());
      io::write_calibration_csv(calibration, (fs::path(fitb_out) / "calibration.csv").string());
      io::write_manifest(fitb_out, "fit-behavioral", argv_copy, 0, {fitb_in.path},
                         {"behavioral.json", "calibration.csv"}, kVersion, elapsed_seconds(t0));
    } else if (c_path->parsed()) {
      const Dataset train = load_input(path_in);
      InputFlags test_in = path_in;
      test_in.path = path_test;
      const Dataset test = path_test.empty() ? train : load_input(test_in);
      const BehavioralFit b = fit_mle(train);
      FitConfig cfg;
      cfg.gamma = path_gamma;
      cfg.delta = path_delta;
      const TrpoFit pilot =
          fit_trpo(b, train, cfg, Eigen::ArrayXd::Ones(train.state_dim()));
      std::vector<double> lams = path_lambdas;
      if (lams.empty()) {
        const AdaptiveWeights w = adaptive_weights(pilot, b.b, path_delta);
        lams = default_lambda_grid(b, train, path_gamma, w, path_nlambda);
      }
      const LambdaPath path = lambda_path(b, train, test, cfg, path_delta, lams, &pilot);
      fs::create_directories(path_out);
      io::write_path_csv(path, (fs::path(path_out) / "path.csv").string());
      io::write_path_meta(path, (fs::path(path_out) / "path_meta.json").string());
      io::write_manifest(path_out, "path", argv_copy, 0,
                         path_test.empty() ? std::vector<std::string>{path_in.path}
                                           : std::vector<std::string>{path_in.path, path_test},
                         {"path.csv", "path_meta.json"}, kVersion, elapsed_seconds(t0));
    } else if (c_sel->parsed()) {
      const LambdaPath path = io::read_path_csv(sel_path, sel_meta);
      const LambdaChoice choice = select_lambda(path, sel_use_sd);
      fs::create_directories(sel_out);
      io::write_selection_json(choice, path.gamma, path.delta, sel_use_sd,
                               (fs::path(sel_out) / "selection.json").string());
      io::write_manifest(sel_out, "select-lambda", argv_copy, 0, {sel_path, sel_meta},
                         {"selection.json"}, kVersion, elapsed_seconds(t0));
    } else if (c_pipe->parsed()) {
      const Dataset d = load_input(pipe_in);
      PipelineGrids grids;
      grids.gammas = pipe_gammas;
      grids.deltas = pipe_deltas;
      grids.lambdas = pipe_lambdas;
      grids.n_lambda = pipe_nlambda;
      PipelineOptions popt;
      popt.fractions = to_fractions(pipe_fracs);
      popt.fixed_gamma = pipe_fixed_gamma;
      popt.fixed_delta = pipe_fixed_delta;
      popt.band_threshold = pipe_band;
      popt.vmin_use_sd = pipe_use_sd;
      popt.post_gamma = pipe_post_gamma;
      popt.level = pipe_level;
      popt.threads = pipe_threads;
      const PipelineReport rep = run_pipeline(d, grids, pipe_seed, popt);
      fs::create_directories(pipe_out);
      std::vector<std::string> written = io::write_pipeline_outputs(rep, pipe_out);
      io::write_manifest(pipe_out, "pipeline", argv_copy, pipe_seed, {pipe_in.path}, written,
                         kVersion, elapsed_seconds(t0));
    } else if (c_inf->parsed()) {
      const Dataset d = load_input(inf_in);
      FitConfig cfg;
      cfg.gamma = inf_gamma;
      const InferenceResult r = post_select_fit(d, inf_active, cfg, inf_level);
      fs::create_directories(inf_out);
      io::write_inference_csv(r, (fs::path(inf_out) / "inference.csv").string());
      io::write_manifest(inf_out, "infer", argv_copy, 0, {inf_in.path}, {"inference.csv"},
                         kVersion, elapsed_seconds(t0));
    } else if (c_cov->parsed()) {
      for (double g : cov_gammas) {
        if (!(g > 0.0)) {
          throw std::invalid_argument(
              "coverage: gamma must be strictly positive (the KL-regularized objective is "
              "undefined at 0)");
        }
      }
      if (cov_reps < 50) {
        std::cerr << "warning: coverage aggregates are unstable below ~50 replications\n";
      }
      const SimConfig cfg = sim_config(covf);
      std::vector<CoverageReport> rows;
      for (double g : cov_gammas) {
        rows.push_back(coverage_study(cfg, g, cov_active, cov_reps, cov_level, cov_coord,
                                      cov_nref, cov_threads));
      }
      fs::create_directories(cov_out);
      io::write_coverage_csv(rows, (fs::path(cov_out) / "coverage.csv").string());
      io::write_manifest(cov_out, "coverage", argv_copy, cfg.seed, {}, {"coverage.csv"},
                         kVersion, elapsed_seconds(t0));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
