#include "relspar/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace relspar::io {

namespace {

using nlohmann::json;

void require_open(const std::ofstream& out, const std::string& file) {
  if (!out) throw std::runtime_error("cannot open for writing: " + file);
}

std::ifstream open_in(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open: " + file);
  return in;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_num(const std::string& s, const std::string& file) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin) throw std::runtime_error(file + ": cannot parse number '" + s + "'");
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) {
      arr.push_back(v(i));
    } else {
      arr.push_back(nullptr);  // +-inf / NaN have no JSON literal
    }
  }
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr, double non_finite) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    v(static_cast<int>(i)) = arr[i].is_null() ? non_finite : arr[i].get<double>();
  }
  return v;
}

void dump_json(const json& j, const std::string& file) {
  std::ofstream out(file, std::ios::binary);
  require_open(out, file);
  out << j.dump(2) << "\n";
}

std::string grid_tag(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

}  // namespace

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_path_csv(const LambdaPath& path, const std::string& file) {
  const int K = static_cast<int>(path.b.size());
  std::ofstream out(file, std::ios::binary);
  require_open(out, file);
  out << "lambda";
  for (int k = 1; k <= K; ++k) out << ",beta_" << k;
  for (int k = 1; k <= K; ++k) out << ",b_" << k;
  for (int k = 1; k <= K; ++k) out << ",sd_band_" << k;
  out << ",v_train,v_train_se,v_test,kl,prob_sugg,prob_beh,active_flags\n";
  for (const PathPoint& pt : path.points) {
    out << fmt(pt.lambda);
    for (int k = 0; k < K; ++k) out << ',' << fmt(pt.beta(k));
    for (int k = 0; k < K; ++k) out << ',' << fmt(path.b(k));
    for (int k = 0; k < K; ++k) out << ',' << fmt(pt.sd_band(k));
    const double se =
        pt.value_train.sd_weighted / std::sqrt(static_cast<double>(pt.value_train.n));
    out << ',' << fmt(pt.value_train.v_weighted) << ',' << fmt(se) << ','
        << fmt(pt.value_test.v_weighted) << ',' << fmt(pt.kl_train) << ','
        << fmt(pt.prob_suggested) << ',' << fmt(pt.prob_behavioral) << ',';
    std::string flags(static_cast<std::size_t>(K), '0');
    for (int a : pt.active_set) flags[static_cast<std::size_t>(a - 1)] = '1';
    out << flags << "\n";
  }
}

void write_path_meta(const LambdaPath& path, const std::string& file) {
  json j;
  j["gamma"] = path.gamma;
  j["delta"] = path.delta;
  j["n_train"] = path.n_train;
  j["n_test"] = path.n_test;
  j["b"] = vector_to_json(path.b);
  j["pilot_beta"] = vector_to_json(path.pilot_beta);
  j["weights"] = vector_to_json(path.weights.w);  // null = pinned (+inf)
  j["value_behavioral"] = {{"v_weighted", path.value_behavioral.v_weighted},
                           {"v_unweighted", path.value_behavioral.v_unweighted},
                           {"sd_weighted", path.value_behavioral.sd_weighted},
                           {"n", path.value_behavioral.n}};
  dump_json(j, file);
}

LambdaPath read_path_csv(const std::string& csv_file, const std::string& meta_file) {
  LambdaPath path;
  {
    std::ifstream meta_in = open_in(meta_file);
    json j = json::parse(meta_in);
    path.gamma = j.at("gamma").get<double>();
    path.delta = j.at("delta").get<double>();
    path.n_train = j.at("n_train").get<int>();
    path.n_test = j.at("n_test").get<int>();
    path.b = vector_from_json(j.at("b"), std::numeric_limits<double>::quiet_NaN());
    path.pilot_beta =
        vector_from_json(j.at("pilot_beta"), std::numeric_limits<double>::quiet_NaN());
    path.weights.w =
        vector_from_json(j.at("weights"), std::numeric_limits<double>::infinity());
    path.weights.pilot_beta = path.pilot_beta;
    path.weights.delta = path.delta;
    const json& vb = j.at("value_behavioral");
    path.value_behavioral.v_weighted = vb.at("v_weighted").get<double>();
    path.value_behavioral.v_unweighted = vb.at("v_unweighted").get<double>();
    path.value_behavioral.sd_weighted = vb.at("sd_weighted").get<double>();
    path.value_behavioral.n = vb.at("n").get<int>();
  }
  const int K = static_cast<int>(path.b.size());

  std::ifstream in = open_in(csv_file);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(csv_file + ": empty file");
  const std::vector<std::string> header = split_line(line);
  const std::size_t expected_cols = static_cast<std::size_t>(3 * K + 8);
  if (header.size() != expected_cols || header.front() != "lambda" ||
      header.back() != "active_flags") {
    throw std::runtime_error(csv_file + ": unexpected path table header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_line(line);
    if (f.size() != expected_cols) {
      throw std::runtime_error(csv_file + ": wrong field count in row");
    }
    PathPoint pt;
    pt.lambda = parse_num(f[0], csv_file);
    pt.beta.resize(K);
    pt.sd_band.resize(K);
    for (int k = 0; k < K; ++k) pt.beta(k) = parse_num(f[static_cast<std::size_t>(1 + k)], csv_file);
    for (int k = 0; k < K; ++k) {
      pt.sd_band(k) = parse_num(f[static_cast<std::size_t>(1 + 2 * K + k)], csv_file);
    }
    const std::size_t base = static_cast<std::size_t>(1 + 3 * K);
    pt.value_train.v_weighted = parse_num(f[base], csv_file);
    pt.value_train.n = path.n_train;
    pt.value_train.sd_weighted =
        parse_num(f[base + 1], csv_file) * std::sqrt(static_cast<double>(path.n_train));
    pt.value_test.v_weighted = parse_num(f[base + 2], csv_file);
    pt.value_test.n = path.n_test;
    pt.kl_train = parse_num(f[base + 3], csv_file);
    pt.prob_suggested = parse_num(f[base + 4], csv_file);
    pt.prob_behavioral = parse_num(f[base + 5], csv_file);
    const std::string& flags = f[base + 6];
    if (static_cast<int>(flags.size()) != K) {
      throw std::runtime_error(csv_file + ": active_flags width mismatch");
    }
    for (int k = 0; k < K; ++k) {
      if (flags[static_cast<std::size_t>(k)] == '1') pt.active_set.push_back(k + 1);
    }
    pt.converged = true;
    path.points.push_back(std::move(pt));
  }
  if (path.points.empty()) throw std::runtime_error(csv_file + ": no path rows");
  return path;
}

void write_selection_json(const LambdaChoice& choice, double gamma, double delta, bool used_sd,
                          const std::string& file) {
  json j;
  j["gamma"] = gamma;
  j["delta"] = delta;
  j["lambda"] = choice.lambda;
  j["index"] = choice.index;
  j["active_set"] = choice.active_set;
  j["no_qualifying"] = choice.no_qualifying;
  j["v_min"] = choice.v_min;
  j["threshold_used_sd"] = used_sd;
  dump_json(j, file);
}

void write_inference_csv(const InferenceResult& r, const std::string& file) {
  const int K = static_cast<int>(r.beta.size());
  std::ofstream out(file, std::ios::binary);
  require_open(out, file);
  out << "covariate,pinned,estimate,ci_lower,ci_upper,b_estimate,b_ci_lower,b_ci_upper\n";
  std::vector<bool> active(static_cast<std::size_t>(K), false);
  for (int a : r.active_set) active[static_cast<std::size_t>(a - 1)] = true;
  for (int k = 0; k < K; ++k) {
    const bool pin = !active[static_cast<std::size_t>(k)];
    out << (k + 1) << ',' << (pin ? 1 : 0) << ',';
    if (pin) {
      out << ",,";  // pinned rows carry no suggested-policy interval
    } else {
      out << fmt(r.beta(k)) << ',' << fmt(r.ci_lower(k)) << ',' << fmt(r.ci_upper(k));
    }
    out << ',' << fmt(r.behavioral.b.coefficients(k)) << ',' << fmt(r.b_ci_lower(k)) << ','
        << fmt(r.b_ci_upper(k)) << "\n";
  }
}

void write_behavioral_json(const BehavioralFit& fit, double level, int n,
                           const std::string& file) {
  const int K = static_cast<int>(fit.b.coefficients.size());
  Eigen::VectorXd se(K);
  for (int k = 0; k < K; ++k) {
    se(k) = std::sqrt(fit.neg_hessian_inv(k, k) / static_cast<double>(n));
  }
  const ConfidenceIntervals ci = confidence_intervals(fit.b.coefficients, se, level);
  json j;
  j["b"] = vector_to_json(fit.b.coefficients);
  j["se"] = vector_to_json(se);
  j["ci_lower"] = vector_to_json(ci.lower);
  j["ci_upper"] = vector_to_json(ci.upper);
  j["level"] = level;
  j["n"] = n;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  dump_json(j, file);
}

void write_calibration_csv(const std::vector<CalibrationRow>& rows, const std::string& file) {
  std::ofstream out(file, std::ios::binary);
  require_open(out, file);
  out << "bin_lo,bin_hi,mean_predicted,observed_frequency,count\n";
  for (const CalibrationRow& r : rows) {
    out << fmt(r.bin_lo) << ',' << fmt(r.bin_hi) << ',' << fmt(r.mean_predicted) << ','
        << fmt(r.observed_frequency) << ',' << r.count << "\n";
  }
}

void write_coverage_csv(const std::vector<CoverageReport>& rows, const std::string& file) {
  std::ofstream out(file, std::ios::binary);
  require_open(out, file);
  out << "gamma,coordinate,true_beta,mean_estimate,bias,true_sd,mean_estimated_sd,coverage,"
         "mean_ci_length,replications,failures,n,level\n";
  for (const CoverageReport& r : rows) {
    out << fmt(r.gamma) << ',' << r.coordinate << ',' << fmt(r.true_beta) << ','
        << fmt(r.mean_estimate) << ',' << fmt(r.bias) << ',' << fmt(r.true_sd) << ','
        << fmt(r.mean_estimated_sd) << ',' << fmt(r.coverage) << ',' << fmt(r.mean_ci_length)
        << ',' << r.replications << ',' << r.failures << ',' << r.n << ',' << fmt(r.level)
        << "\n";
  }
}

void write_selection_cell_csv(const SelectionCellSummary& cell, const std::string& file) {
  const int K = static_cast<int>(cell.mean_b.size());
  std::ofstream out(file, std::ios::binary);
  require_open(out, file);
  out << "lambda";
  for (int k = 1; k <= K; ++k) out << ",mean_beta_" << k;
  for (int k = 1; k <= K; ++k) out << ",empirical_sd_" << k;
  for (int k = 1; k <= K; ++k) out << ",mean_band_" << k;
  for (int k = 1; k <= K; ++k) out << ",active_freq_" << k;
  for (int k = 1; k <= K; ++k) out << ",mean_b_" << k;
  out << ",v_train,v_train_se,v_test,kl,prob_sugg,prob_beh\n";
  for (std::size_t l = 0; l < cell.lambdas.size(); ++l) {
    const int li = static_cast<int>(l);
    out << fmt(cell.lambdas[l]);
    for (int k = 0; k < K; ++k) out << ',' << fmt(cell.mean_beta(li, k));
    for (int k = 0; k < K; ++k) out << ',' << fmt(cell.sd_beta(li, k));
    for (int k = 0; k < K; ++k) out << ',' << fmt(cell.mean_band(li, k));
    for (int k = 0; k < K; ++k) out << ',' << fmt(cell.active_frequency(li, k));
    for (int k = 0; k < K; ++k) out << ',' << fmt(cell.mean_b(k));
    out << ',' << fmt(cell.mean_v_train(li)) << ',' << fmt(cell.mean_v_train_se(li)) << ','
        << fmt(cell.mean_v_test(li)) << ',' << fmt(cell.mean_kl(li)) << ','
        << fmt(cell.mean_prob_sugg(li)) << ',' << fmt(cell.mean_prob_beh(li)) << "\n";
  }
}

std::vector<std::string> write_pipeline_outputs(const PipelineReport& rep,
                                                const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "diagrams");
  std::vector<std::string> written;

  json cells = json::array();
  for (const PipelineCell& cell : rep.cells) {
    const std::string stem = grid_tag(cell.gamma) + "_" + grid_tag(cell.delta);
    const std::string csv_rel = "diagrams/" + stem + ".csv";
    const std::string meta_rel = "diagrams/" + stem + ".meta.json";
    write_path_csv(cell.path, (fs::path(dir) / csv_rel).string());
    write_path_meta(cell.path, (fs::path(dir) / meta_rel).string());
    written.push_back(csv_rel);
    written.push_back(meta_rel);
    json c;
    c["gamma"] = cell.gamma;
    c["delta"] = cell.delta;
    c["max_band"] = std::isfinite(cell.max_band) ? json(cell.max_band) : json(nullptr);
    c["csv"] = csv_rel;
    cells.push_back(c);
  }

  json sel;
  sel["mode"] = rep.selection_mode;
  sel["chosen"] = {{"gamma", rep.chosen_gamma},
                   {"delta", rep.chosen_delta},
                   {"lambda", rep.chosen_lambda}};
  sel["no_qualifying_cell"] = rep.no_qualifying_cell;
  sel["no_qualifying_lambda"] = rep.no_qualifying_lambda;
  sel["active_set"] = rep.selected_active_set;
  sel["cells"] = cells;
  sel["split"] = {{"seed", rep.split.seed},
                  {"split1_train", rep.split.split1_train},
                  {"split1_test", rep.split.split1_test},
                  {"split2", rep.split.split2}};
  sel["selection_indices"] = rep.selection_indices;
  sel["inference_indices"] = rep.inference_indices;
  dump_json(sel, (fs::path(dir) / "selection.json").string());
  written.push_back("selection.json");

  write_inference_csv(rep.inference, (fs::path(dir) / "inference.csv").string());
  written.push_back("inference.csv");
  return written;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const std::vector<std::string>& args, std::uint64_t seed,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    const std::string& version, double wall_seconds) {
  json j;
  j["command"] = command;
  j["args"] = args;
  j["seed"] = seed;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["version"] = version;
  j["wall_time_seconds"] = wall_seconds;  // informational; data files are seed-deterministic
  dump_json(j, (std::filesystem::path(dir) / "manifest.json").string());
}

}  // namespace relspar::io
