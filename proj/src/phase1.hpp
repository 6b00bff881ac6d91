#pragma once
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "approx.hpp"
#include "data.hpp"
#include "metrics.hpp"
#include "preference.hpp"

namespace miso::phase1 {

struct Phase1Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Phase1Config {
  int steps = 2000;
  int batch_pairs = 32;
  double lr = 3e-4;
  double lambda_v = 0.1;
  double gamma = 0.99;
  std::vector<int> hidden = {256};
  uint64_t seed = 0;
};

// Soft Q/V pair fit to preferences. Per-agent heads over local observations,
// linear mixers to the team level; Q and V mix independently.
struct PrefQVModel {
  std::vector<approx::Mlp> q_nets;  // logits over the agent's actions
  std::vector<approx::Mlp> v_nets;  // scalar per observation
  approx::Mixer q_mixer, v_mixer;
  std::vector<int> n_obs, n_actions;
  double gamma = 0.99;

  PrefQVModel(const std::vector<int>& n_obs,
              const std::vector<int>& n_actions, const Phase1Config& cfg);
  int n_agents() const { return int(q_nets.size()); }
  double q_tot(const std::vector<int>& obs, const std::vector<int>& acts) const;
  double v_tot(const std::vector<int>& obs) const;
  // local head values, used by the greedy baseline
  std::vector<double> q_local(int agent, int o) const;
};

// Trajectory score under the model: sum_t gamma^t [Q_tot(s_t,a_t) -
// gamma V_tot(s_{t+1})]. A truncated final step has no successor and is
// excluded; a terminal final step contributes with V_tot = 0.
double traj_score(const PrefQVModel& model, const data::Trajectory& t);

// Joint actions the dataset exhibits at each joint observation: the support
// of the soft-maximum consistency target. Sorted for determinism.
using ObsActionTable = std::map<std::vector<int>, std::vector<std::vector<int>>>;
ObsActionTable observed_joint_actions(const data::Dataset& ds);

// Bradley-Terry nll over the pair batch, mean -log sigmoid(score_pref -
// score_other), plus lambda_v times the mean squared gap between V_tot(s)
// and the log-sum-exp soft maximum of Q_tot(s, .) over the table's action
// set at s. with_grad accumulates into parameter grads (caller zeroes them).
double pref_batch_loss(PrefQVModel& model, const data::Dataset& ds,
                       const ObsActionTable& obs_actions,
                       const std::vector<const pref::PreferencePair*>& batch,
                       double lambda_v, bool with_grad,
                       double* nll_out = nullptr, double* vcons_out = nullptr);

PrefQVModel train_pref_model(const std::vector<pref::PreferencePair>& prefs,
                             const data::Dataset& ds, const Phase1Config& cfg,
                             metrics::Sink* sink = nullptr);

// fraction of preference pairs whose scores order the preferred side first
double pref_accuracy(const PrefQVModel& model,
                     const std::vector<pref::PreferencePair>& prefs,
                     const data::Dataset& ds);

struct RecoveredRewards {
  std::vector<int64_t> traj_ids;
  std::vector<std::vector<double>> r;  // per trajectory, per scored step
  std::vector<double> g;               // undiscounted per-trajectory totals
};

// R(s_t,a_t) = Q_tot(s_t,a_t) - gamma * V_tot(s_{t+1}); terminal steps use
// V_tot = 0; a truncated final step is skipped. G sums R undiscounted.
RecoveredRewards recover_rewards(const PrefQVModel& model,
                                 const data::Dataset& ds);

// Descending by G, ties to the lower traj_id; first k become expert ids.
data::SplitResult rank_and_split(const RecoveredRewards& rewards, int k);

}  // namespace miso::phase1
