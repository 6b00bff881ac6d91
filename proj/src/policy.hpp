#pragma once
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "approx.hpp"
#include "data.hpp"
#include "dice.hpp"
#include "metrics.hpp"

namespace miso::policy {

struct PolicyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PolicyConfig {
  int steps = 2000;
  int batch = 512;
  double lr = 3e-4;
  std::vector<int> hidden = {256};
  uint64_t seed = 0;
};

// Per-agent categorical policies over local observations. Softmax is taken
// over the available-action set only; masked actions carry exactly zero mass.
struct LocalPolicySet {
  std::vector<approx::Mlp> nets;
  std::vector<int> n_obs, n_actions;
  std::vector<std::vector<uint8_t>> avail;  // [agent][o * n_act + a]

  LocalPolicySet(const std::vector<int>& n_obs,
                 const std::vector<int>& n_actions,
                 const std::vector<int>& hidden, uint64_t seed);
  int n_agents() const { return int(nets.size()); }
  bool available(int agent, int o, int a) const {
    return avail[agent][size_t(o) * n_actions[agent] + a] != 0;
  }
  void set_available(int agent, int o, int a, bool on);
  std::vector<double> probs(int agent, int o) const;
  double log_prob(int agent, int o, int a) const;
};

// -mean_batch[ w * sum_i log pi_i(a_i|o_i) ]; the one global weight scales
// every agent's term. A taken action with zero probability (masked) is a
// contradiction between data and mask and throws.
double wbc_loss(LocalPolicySet& ps, const dice::WeightedBatch& batch,
                bool with_grad);

// w per view row, from a trained value model and its discriminator.
std::vector<double> row_weights(const data::TransitionView& view,
                                const ratio::DiscModel& disc,
                                const dice::ValueModel& model);

LocalPolicySet extract_policies(const data::TransitionView& view,
                                const std::vector<double>& weights,
                                const PolicyConfig& cfg,
                                metrics::Sink* sink = nullptr);

// Exact weighted-count maximizers on the view's measure (row gamma-weight
// times the supplied per-row weight). Unvisited rows fall back to uniform.
// Joint table is [joint_obs_key][joint_act_key].
std::vector<std::vector<double>> tabular_wbc_global(
    const data::TransitionView& view, const std::vector<double>& weights);
// Local table is [o_i][a_i] for one agent.
std::vector<std::vector<double>> tabular_wbc_local(
    const data::TransitionView& view, const std::vector<double>& weights,
    int agent);

struct ConsistencyReport {
  double max_dev = 0.0;        // max |prod_i pi*_i - factored-class optimum|
  double objective_gap = 0.0;  // closed-form objective minus ascent objective
  bool ok = false;             // max_dev < 1e-6
};

// Certifies that the product of per-agent closed forms attains the global
// weighted-BC optimum within the factorizable policy class: an entropic
// mirror-ascent maximization from several random starts must land on the
// same joint table. Requires an enumerable joint space.
ConsistencyReport consistency_check(const data::TransitionView& view,
                                    const std::vector<double>& weights,
                                    uint64_t seed = 7, int n_restarts = 8);

// Inputs for the softmax form of the optimal local policy.
struct ClosedFormInputs {
  std::vector<int> n_obs, n_actions;    // table layout per agent
  std::vector<std::vector<double>> q;   // [agent][o * n_act + a]
  std::vector<std::vector<double>> mu;  // [agent][o * n_act + a], rows sum to 1
  std::vector<double> phi;              // per-agent mixer weight
  double alpha = 0.0;
};

// pi*_i(a|o) proportional to mu_i(a|o) * exp(phi_i * q_i(o,a) / (1+alpha)).
std::vector<double> closed_form_local(const ClosedFormInputs& in, int agent,
                                      int o);

}  // namespace miso::policy
