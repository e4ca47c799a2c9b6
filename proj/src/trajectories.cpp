#include "relspar/trajectories.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "relspar/rng.hpp"

namespace relspar {

int Dataset::horizon() const {
  if (trajectories.empty()) throw std::logic_error("Dataset: empty dataset has no horizon");
  return static_cast<int>(trajectories.front().actions.size());
}

int Dataset::state_dim() const {
  if (trajectories.empty()) throw std::logic_error("Dataset: empty dataset has no state dimension");
  return static_cast<int>(trajectories.front().states.cols());
}

void Dataset::validate() const {
  if (trajectories.empty()) throw std::invalid_argument("Dataset: no trajectories");
  const Eigen::Index steps = trajectories.front().actions.size();
  const Eigen::Index dim = trajectories.front().states.cols();
  for (size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& tr = trajectories[i];
    if (tr.actions.size() != steps || tr.rewards.size() != steps ||
        tr.states.rows() != steps + 1 || tr.states.cols() != dim) {
      throw std::invalid_argument("Dataset: trajectory " + std::to_string(i + 1) +
                                  " has a ragged horizon or state dimension");
    }
    for (Eigen::Index t = 0; t < steps; ++t) {
      if (tr.actions(t) != 0 && tr.actions(t) != 1) {
        throw std::invalid_argument("Dataset: trajectory " + std::to_string(i + 1) +
                                    " has non-binary action at t=" + std::to_string(t));
      }
    }
    if (!tr.states.allFinite() || !tr.rewards.allFinite()) {
      throw std::invalid_argument("Dataset: trajectory " + std::to_string(i + 1) +
                                  " contains a non-finite state or reward");
    }
  }
}

namespace {

struct RewardRule {
  enum Kind { kColumn, kNextState, kNegCurrentTimesAction } kind = kColumn;
  int component = 0;  // 1-based state coordinate for the non-column rules
};

RewardRule parse_reward_rule(const std::string& rule) {
  RewardRule r;
  if (rule == "column") {
    r.kind = RewardRule::kColumn;
    return r;
  }
  auto match = [&](const std::string& name, RewardRule::Kind kind) -> bool {
    if (rule.rfind(name + "(", 0) != 0 || rule.back() != ')') return false;
    std::string arg = rule.substr(name.size() + 1, rule.size() - name.size() - 2);
    size_t pos = 0;
    int j = std::stoi(arg, &pos);
    if (pos != arg.size() || j < 1) {
      throw std::invalid_argument("reward rule '" + rule + "': component must be a positive integer");
    }
    r.kind = kind;
    r.component = j;
    return true;
  };
  if (match("next_state_component", RewardRule::kNextState)) return r;
  if (match("neg_current_component_times_action", RewardRule::kNegCurrentTimesAction)) return r;
  throw std::invalid_argument("unknown reward rule '" + rule + "'");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    size_t b = field.find_first_not_of(" \t");
    size_t e = field.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool field_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "nan" || s == "NaN";
}

double parse_double(const std::string& s, const std::string& what, size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": cannot parse " +
                                what + " value '" + s + "'");
  }
  return v;
}

struct RawRow {
  double t = 0.0;
  Eigen::VectorXd s;
  double a = 0.0;
  bool has_a = false;
  double r = 0.0;
  bool has_r = false;
  size_t line_no = 0;
};

}  // namespace

Dataset load_dataset(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset file '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv_line(line);

  auto col_index = [&](const std::string& name) -> int {
    for (size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return static_cast<int>(j);
    }
    return -1;
  };

  RewardRule rule = parse_reward_rule(schema.reward_rule);

  int id_ix = col_index(schema.id_col);
  int t_ix = col_index(schema.time_col);
  int a_ix = col_index(schema.action_col);
  if (id_ix < 0 || t_ix < 0 || a_ix < 0) {
    throw std::invalid_argument("dataset '" + path + "': missing required column '" +
                                (id_ix < 0 ? schema.id_col : t_ix < 0 ? schema.time_col
                                                                      : schema.action_col) +
                                "'");
  }
  int r_ix = col_index(schema.reward_col);
  if (rule.kind == RewardRule::kColumn && r_ix < 0) {
    throw std::invalid_argument("dataset '" + path + "': reward rule 'column' needs a '" +
                                schema.reward_col + "' column");
  }

  // Resolve state columns: either the explicit list or headers s<digits>
  // ordered by their number.
  std::vector<int> s_ix;
  if (!schema.state_cols.empty()) {
    for (const std::string& name : schema.state_cols) {
      int ix = col_index(name);
      if (ix < 0) {
        throw std::invalid_argument("dataset '" + path + "': missing state column '" + name + "'");
      }
      s_ix.push_back(ix);
    }
  } else {
    std::vector<std::pair<int, int>> found;  // (number, column index)
    for (size_t j = 0; j < header.size(); ++j) {
      const std::string& h = header[j];
      if (h.size() < 2 || h[0] != 's') continue;
      bool digits = std::all_of(h.begin() + 1, h.end(), [](char c) { return c >= '0' && c <= '9'; });
      if (digits) found.emplace_back(std::stoi(h.substr(1)), static_cast<int>(j));
    }
    std::sort(found.begin(), found.end());
    for (auto& [num, ix] : found) s_ix.push_back(ix);
    if (s_ix.empty()) {
      throw std::invalid_argument("dataset '" + path + "': no state columns (s1, s2, ...) found");
    }
  }
  const int K = static_cast<int>(s_ix.size());
  if (rule.kind != RewardRule::kColumn && rule.component > K) {
    throw std::invalid_argument("reward rule '" + schema.reward_rule + "' needs state coordinate " +
                                std::to_string(rule.component) + " but the dataset has K=" +
                                std::to_string(K));
  }

  // Read rows, grouping by id in first-appearance order.
  std::vector<std::string> id_order;
  std::map<std::string, std::vector<RawRow>> groups;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(f.size()));
    }
    RawRow row;
    row.line_no = line_no;
    row.t = parse_double(f[t_ix], "time", line_no);
    row.s.resize(K);
    for (int k = 0; k < K; ++k) {
      if (field_missing(f[s_ix[k]])) {
        throw std::invalid_argument("CSV line " + std::to_string(line_no) +
                                    ": missing state value (no imputation is performed)");
      }
      row.s(k) = parse_double(f[s_ix[k]], "state", line_no);
    }
    if (!field_missing(f[a_ix])) {
      row.a = parse_double(f[a_ix], "action", line_no);
      row.has_a = true;
    }
    if (r_ix >= 0 && !field_missing(f[r_ix])) {
      row.r = parse_double(f[r_ix], "reward", line_no);
      row.has_r = true;
    }
    const std::string& id = f[id_ix];
    if (groups.find(id) == groups.end()) id_order.push_back(id);
    groups[id].push_back(row);
  }
  if (id_order.empty()) throw std::runtime_error("dataset '" + path + "' has a header but no rows");

  Dataset d;
  int expected_rows = -1;
  for (const std::string& id : id_order) {
    std::vector<RawRow>& rows = groups[id];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRow& x, const RawRow& y) { return x.t < y.t; });
    for (size_t j = 1; j < rows.size(); ++j) {
      if (rows[j].t == rows[j - 1].t) {
        throw std::invalid_argument("trajectory '" + id + "': duplicate time " +
                                    std::to_string(rows[j].t));
      }
    }
    const int L = static_cast<int>(rows.size());
    if (L < 2) {
      throw std::invalid_argument("trajectory '" + id +
                                  "': needs at least an action row and a terminal state row");
    }
    if (expected_rows < 0) expected_rows = L;
    if (L != expected_rows) {
      throw std::invalid_argument("trajectory '" + id + "': ragged horizon (" + std::to_string(L) +
                                  " rows, expected " + std::to_string(expected_rows) + ")");
    }
    Trajectory tr;
    tr.states.resize(L, K);
    tr.actions.resize(L - 1);
    tr.rewards.resize(L - 1);
    for (int t = 0; t < L; ++t) tr.states.row(t) = rows[t].s.transpose();
    for (int t = 0; t < L - 1; ++t) {
      if (!rows[t].has_a) {
        throw std::invalid_argument("trajectory '" + id + "': missing action at time index " +
                                    std::to_string(t));
      }
      if (rows[t].a != 0.0 && rows[t].a != 1.0) {
        throw std::invalid_argument("trajectory '" + id + "': non-binary action at time index " +
                                    std::to_string(t));
      }
      tr.actions(t) = static_cast<int>(rows[t].a);
      switch (rule.kind) {
        case RewardRule::kColumn:
          if (!rows[t].has_r) {
            throw std::invalid_argument("trajectory '" + id + "': missing reward at time index " +
                                        std::to_string(t));
          }
          tr.rewards(t) = rows[t].r;
          break;
        case RewardRule::kNextState:
          tr.rewards(t) = tr.states(t + 1, rule.component - 1);
          break;
        case RewardRule::kNegCurrentTimesAction:
          tr.rewards(t) = -tr.states(t, rule.component - 1) * tr.actions(t);
          break;
      }
    }
    if (rows[L - 1].has_a) {
      throw std::invalid_argument("trajectory '" + id +
                                  "': final row must be the terminal state (empty action field)");
    }
    d.trajectories.push_back(std::move(tr));
  }
  d.validate();
  return d;
}

namespace {

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_dataset_csv(const Dataset& d, const std::string& path) {
  d.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  const int K = d.state_dim();
  out << "id,t";
  for (int k = 1; k <= K; ++k) out << ",s" << k;
  out << ",a,r\n";
  for (int i = 0; i < d.n(); ++i) {
    const Trajectory& tr = d.trajectories[i];
    const int rows = static_cast<int>(tr.states.rows());
    for (int t = 0; t < rows; ++t) {
      out << (i + 1) << ',' << t;
      for (int k = 0; k < K; ++k) out << ',' << fmt_full(tr.states(t, k));
      if (t < rows - 1) {
        out << ',' << tr.actions(t) << ',' << fmt_full(tr.rewards(t));
      } else {
        out << ",,";
      }
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

Dataset scale_states(const Dataset& d) {
  d.validate();
  if (d.scaling) throw std::logic_error("scale_states: dataset is already scaled");
  const int K = d.state_dim();
  const int rows_per = d.horizon() + 1;
  const double count = static_cast<double>(d.n()) * rows_per;

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(K);
  for (const Trajectory& tr : d.trajectories) mean += tr.states.colwise().sum().transpose();
  mean /= count;
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(K);
  for (const Trajectory& tr : d.trajectories) {
    ss += (tr.states.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  Eigen::VectorXd sd = (ss / (count - 1.0)).array().sqrt();
  for (int k = 0; k < K; ++k) {
    if (!(sd(k) > 0.0) || !std::isfinite(sd(k))) {
      throw std::runtime_error("scale_states: state dimension " + std::to_string(k + 1) +
                               " has zero sample sd");
    }
  }

  Dataset out = d;
  for (Trajectory& tr : out.trajectories) {
    tr.states = tr.states * sd.cwiseInverse().asDiagonal();
  }
  out.scaling = ScalingInfo{sd};
  return out;
}

SplitSpec split_dataset(const Dataset& d, std::uint64_t seed,
                        const std::array<double, 3>& fractions) {
  const int n = d.n();
  double fsum = fractions[0] + fractions[1] + fractions[2];
  if (fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0 || std::abs(fsum - 1.0) > 1e-9) {
    throw std::invalid_argument("split_dataset: fractions must be nonnegative and sum to 1");
  }
  int n1 = static_cast<int>(std::llround(n * fractions[0]));
  int n2 = static_cast<int>(std::llround(n * fractions[1]));
  int n3 = n - n1 - n2;
  if (n1 < 1 || n2 < 1 || n3 < 1) {
    throw std::invalid_argument("split_dataset: n=" + std::to_string(n) +
                                " is too small to populate all three splits");
  }

  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng = Rng::stream(seed, 0);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }

  SplitSpec s;
  s.seed = seed;
  s.split1_train.assign(idx.begin(), idx.begin() + n1);
  s.split1_test.assign(idx.begin() + n1, idx.begin() + n1 + n2);
  s.split2.assign(idx.begin() + n1 + n2, idx.end());
  std::sort(s.split1_train.begin(), s.split1_train.end());
  std::sort(s.split1_test.begin(), s.split1_test.end());
  std::sort(s.split2.begin(), s.split2.end());
  return s;
}

Dataset subset(const Dataset& d, const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("subset: empty index set");
  Dataset out;
  out.scaling = d.scaling;
  out.seed_tag = d.seed_tag;
  out.trajectories.reserve(indices.size());
  for (int ix : indices) {
    if (ix < 0 || ix >= d.n()) {
      throw std::out_of_range("subset: index " + std::to_string(ix) + " out of range");
    }
    out.trajectories.push_back(d.trajectories[ix]);
  }
  return out;
}

}  // namespace relspar
