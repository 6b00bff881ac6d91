#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace miso::data {
struct Trajectory;
}

namespace miso::env {

struct EnvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnvConfig {
  std::string family = "team-grid";  // team-chain | team-grid | matrix-repeat
  int n_agents = 2;
  int length = 4;      // team-chain states
  int grid = 3;        // team-grid side length
  int n_actions = 2;   // matrix-repeat per-agent actions
  double slip = 0.05;  // team-grid chance an agent's move becomes "stay"
  double discount = 0.99;
};

// Cooperative team MDP, transitions stored sparsely per (state, joint action).
// team_reward is visible to this module and the oracle/evaluator only;
// learner modules consume Datasets and never see this struct.
struct TabularTeamMdp {
  int n_agents = 0;
  int n_states = 0;
  std::vector<int> n_actions;               // per agent
  std::vector<int> n_obs;                   // per agent
  std::vector<std::vector<int>> obs_map;    // [agent][state] -> local obs
  int n_joint = 0;                          // product of n_actions
  // transition[s * n_joint + ja] = sparse row over next states
  std::vector<std::vector<std::pair<int, double>>> transition;
  std::vector<double> init_dist;
  double discount = 0.99;
  std::vector<double> team_reward;          // [s * n_joint + ja]

  int joint_index(const std::vector<int>& acts) const;
  void decode_joint(int ja, std::vector<int>& acts) const;
  void validate() const;  // row sums, init dist, discount, obs_map totality
};

struct JointPolicy {
  int n_states = 0;
  int n_joint = 0;
  std::vector<double> table;  // [s * n_joint + ja]
  bool factorized = false;

  double prob(int s, int ja) const { return table[size_t(s) * n_joint + ja]; }
  void validate() const;
};

TabularTeamMdp build_benchmark(const EnvConfig& cfg);

// Joint value iteration then greedy with lowest-joint-index tie-break.
JointPolicy solve_expert(const TabularTeamMdp& mdp, double tol);

// Per-state mixture (1-eps)*policy + eps*uniform.
JointPolicy degrade(const JointPolicy& policy, double eps);

// Fixed-horizon episode. Steps carry per-agent observations and actions; env
// rewards and global states ride along in sealed fields for the rule-based
// labeler / oracle / evaluator. No step is marked terminal: these families
// never terminate, and horizon cutoff is truncation, not termination.
data::Trajectory rollout(const TabularTeamMdp& mdp, const JointPolicy& policy,
                         int horizon, uint64_t seed);

}  // namespace miso::env
