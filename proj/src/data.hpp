#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace miso::data {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Source : uint8_t { Unknown = 0, Expert = 1, Poor = 2 };

struct Step {
  std::vector<int> obs;   // per agent
  std::vector<int> acts;  // per agent
  bool terminal = false;  // environment termination, not horizon cutoff
};

// Reward, global state, and provenance are sealed: present in the container
// for the rule labeler, the oracle, and the evaluator, but off-limits to the
// learning stack. Access goes through SealedAccess so that a grep over the
// learner sources can prove they never touch it.
struct Trajectory {
  int64_t traj_id = -1;
  std::vector<Step> steps;

 private:
  std::vector<double> sealed_rewards_;  // per step
  std::vector<int> sealed_states_;      // per step, global state before action
  Source sealed_source_ = Source::Unknown;
  friend struct SealedAccess;
};

struct SealedAccess {
  static std::vector<double>& rewards(Trajectory& t) { return t.sealed_rewards_; }
  static const std::vector<double>& rewards(const Trajectory& t) { return t.sealed_rewards_; }
  static std::vector<int>& states(Trajectory& t) { return t.sealed_states_; }
  static const std::vector<int>& states(const Trajectory& t) { return t.sealed_states_; }
  static Source& source(Trajectory& t) { return t.sealed_source_; }
  static Source source(const Trajectory& t) { return t.sealed_source_; }
  // Discounted sum of sealed rewards, evaluation side only.
  static double discounted_return(const Trajectory& t, double gamma);
};

struct Dataset {
  int n_agents = 0;
  std::vector<int> n_obs;      // per agent, size of local obs space
  std::vector<int> n_actions;  // per agent
  std::string provenance;      // free-form note written at generation time
  std::vector<Trajectory> trajectories;

  void validate(bool require_nonempty = true) const;
  const Trajectory& by_id(int64_t id) const;
};

// Concatenate expert then poor trajectories and reassign dense ids 0..N-1.
// Sealed provenance marks survive; nothing else distinguishes the halves.
Dataset build_unlabeled(const Dataset& expert, const Dataset& poor);

// Union with dense id reassignment; dimension mismatch is an error.
Dataset dataset_union(const Dataset& a, const Dataset& b);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Phase-1 output: ids ranked by score, top k declared expert-like.
struct SplitResult {
  std::vector<int64_t> expert_ids;  // score-descending
  std::vector<int64_t> mix_ids;     // score-descending
  std::vector<double> scores_by_id; // indexed by dense traj_id
};

void save_manifest(const SplitResult& split, const std::string& path);
SplitResult load_manifest(const std::string& path);

// Flattened transition records over a dataset under a fixed discount. The
// final step of a truncated trajectory has no successor and is excluded;
// a terminal-flagged step stays usable with its successor value zeroed.
// Weights are gamma^t renormalized over the usable steps, and every
// empirical expectation and sampled batch in the pipeline uses them, so the
// learners and the closed-form targets integrate against the same measure.
struct TransitionView {
  int n_agents = 0;
  std::vector<int> n_obs;
  std::vector<int> n_actions;
  double gamma = 0.0;

  // per usable transition
  std::vector<std::vector<int>> obs;       // [row][agent]
  std::vector<std::vector<int>> acts;      // [row][agent]
  std::vector<std::vector<int>> next_obs;  // [row][agent]
  std::vector<uint8_t> terminal;           // successor value masked when set
  std::vector<double> weight;              // gamma^t, normalized to sum 1
  std::vector<int64_t> traj_id;
  std::vector<int> t;                      // step index within trajectory

  // initial joint observations, one per trajectory, weight 1/n_traj each
  std::vector<std::vector<int>> init_obs;

  std::vector<double> weight_cdf;  // cumulative, for weighted sampling

  static TransitionView build(const Dataset& ds, double gamma);
  int n_rows() const { return int(weight.size()); }
  int sample_row(Rng& rng) const;

  // joint obs tuple -> dense key (agent 0 most significant); total key count
  int joint_obs_key(const std::vector<int>& o) const;
  int n_joint_obs() const;
  int joint_act_key(const std::vector<int>& a) const;
  int n_joint_acts() const;
};

}  // namespace miso::data
