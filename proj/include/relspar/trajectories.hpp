#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace relspar {

// One finite-horizon trajectory over T decision epochs: states S_0..S_T as
// rows, binary actions A_0..A_{T-1}, and per-step rewards R_0..R_{T-1}; the
// final state row is the terminal state reached after the last action.
struct Trajectory {
  Eigen::MatrixXd states;   // (T+1) x K
  Eigen::VectorXi actions;  // length T, entries 0/1
  Eigen::VectorXd rewards;  // length T
};

// Record of the state scaling applied to a dataset (divide by pooled sd).
struct ScalingInfo {
  Eigen::VectorXd per_dimension_sd;  // strictly positive
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  std::optional<ScalingInfo> scaling;
  std::string seed_tag;  // provenance, e.g. "sim:seed=7"; empty for loaded files

  int n() const { return static_cast<int>(trajectories.size()); }
  int horizon() const;    // T
  int state_dim() const;  // K
  // Throws if trajectories are ragged, actions are non-binary, or any value
  // is non-finite.
  void validate() const;
};

// Column layout and reward convention for trajectory CSVs.  Each id
// contributes T+1 rows sorted by time; rows 0..T-1 carry an action (and a
// reward when the rule is "column"), the final row carries only the terminal
// state.
struct CsvSchema {
  std::string id_col = "id";
  std::string time_col = "t";
  std::string action_col = "a";
  std::string reward_col = "r";
  std::vector<std::string> state_cols;  // empty: autodetect s1..sK by header
  // "column" | "next_state_component(j)" | "neg_current_component_times_action(j)"
  std::string reward_rule = "column";
};

// Index sets of a deterministic three-way split by trajectory.
struct SplitSpec {
  std::uint64_t seed = 0;
  std::vector<int> split1_train;
  std::vector<int> split1_test;
  std::vector<int> split2;
};

Dataset load_dataset(const std::string& path, const CsvSchema& schema = {});

// Writes the load_dataset schema: id,t,s1..sK,a,r with the terminal row's
// action/reward fields left empty.  Values use 17 significant digits so a
// round trip reproduces the doubles exactly.
void write_dataset_csv(const Dataset& d, const std::string& path);

// Divides every state dimension by its pooled-over-(i,t) sample sd
// (Bessel denominator n(T+1)-1).  Rewards are left untouched.  Errors if the
// dataset is already scaled or a dimension has zero sample sd.
Dataset scale_states(const Dataset& d);

// Shuffles trajectory indices with a seeded Fisher-Yates and cuts them into
// split1-train / split1-test / split2.  Fractions must sum to 1; each part
// must receive at least one trajectory.
SplitSpec split_dataset(const Dataset& d, std::uint64_t seed,
                        const std::array<double, 3>& fractions = {0.25, 0.25, 0.5});

Dataset subset(const Dataset& d, const std::vector<int>& indices);

}  // namespace relspar
