#pragma once
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "data.hpp"
#include "dice.hpp"
#include "metrics.hpp"
#include "phase1.hpp"
#include "policy.hpp"
#include "ratio.hpp"

namespace miso::baselines {

struct BaselineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One stacked loss evaluation for behavior cloning: expert rows carry weight
// beta, union rows 1 - beta, each normalized within its half, so the total is
// -beta * mean_E[sum_i log pi_i] - (1-beta) * mean_U[sum_i log pi_i]. Linear
// in beta at fixed parameters by construction.
double bc_loss(policy::LocalPolicySet& ps, const data::TransitionView& view_e,
               const std::vector<int>& rows_e,
               const data::TransitionView& view_u,
               const std::vector<int>& rows_u, double beta, bool with_grad);

policy::LocalPolicySet train_bc(const data::TransitionView& view_e,
                                const data::TransitionView& view_u, double beta,
                                const policy::PolicyConfig& cfg,
                                metrics::Sink* sink = nullptr);

// Stage bundle for the discriminator -> values -> weighted-BC composition.
// The primary method and the forced-mixer variants all run through this.
struct StackConfig {
  ratio::DiscConfig disc;
  dice::ValueConfig value;
  policy::PolicyConfig pol;
};

policy::LocalPolicySet train_stack(const data::TransitionView& view_e,
                                   const data::TransitionView& view_u,
                                   const StackConfig& cfg,
                                   metrics::Sink* sink = nullptr);

// Same stack with both mixers forced to the additive variant.
policy::LocalPolicySet train_vdn_variant(const data::TransitionView& view_e,
                                         const data::TransitionView& view_u,
                                         StackConfig cfg,
                                         metrics::Sink* sink = nullptr);

// Per-agent single-agent pipeline on that agent's marginal transitions
// (o_i, a_i, o_i'); no cross-agent coupling anywhere. Mixers degenerate to
// the one-input additive variant.
policy::LocalPolicySet train_indd(const data::TransitionView& view_e,
                                  const data::TransitionView& view_u,
                                  StackConfig cfg,
                                  metrics::Sink* sink = nullptr);

// Marginal single-agent view for one agent; shared by train_indd and tests.
data::TransitionView marginal_view(const data::TransitionView& view, int agent);

// Deterministic greedy policy over each agent's local Q head; ties go to the
// lowest action index. Unavailable actions (optional mask, layout
// [agent][o * n_act + a]) are skipped. The result encodes the greedy choice
// through its availability mask: exactly one action per observation.
policy::LocalPolicySet phase1_greedy(
    const phase1::PrefQVModel& model,
    const std::vector<std::vector<uint8_t>>* avail = nullptr);

}  // namespace miso::baselines
