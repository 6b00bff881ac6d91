#include "baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rng.hpp"

namespace miso::baselines {

double bc_loss(policy::LocalPolicySet& ps, const data::TransitionView& view_e,
               const std::vector<int>& rows_e,
               const data::TransitionView& view_u,
               const std::vector<int>& rows_u, double beta, bool with_grad) {
  if (rows_e.empty() || rows_u.empty()) throw BaselineError("empty batch");
  if (!(beta >= 0.0 && beta <= 1.0))
    throw BaselineError("beta must lie in [0, 1]");
  // weighted-BC reuse: total batch mean of w * sum_i log pi equals the
  // two-term objective when each half's weight is its coefficient rescaled
  // by (total rows / half rows)
  dice::WeightedBatch batch;
  const int be = int(rows_e.size()), bu = int(rows_u.size());
  const int b = be + bu;
  batch.rows.resize(b);
  for (int r = 0; r < be; ++r) {
    auto& row = batch.rows[r];
    row.obs = view_e.obs[rows_e[r]];
    row.acts = view_e.acts[rows_e[r]];
    row.w = beta * double(b) / be;
  }
  for (int r = 0; r < bu; ++r) {
    auto& row = batch.rows[be + r];
    row.obs = view_u.obs[rows_u[r]];
    row.acts = view_u.acts[rows_u[r]];
    row.w = (1.0 - beta) * double(b) / bu;
  }
  return policy::wbc_loss(ps, batch, with_grad);
}

policy::LocalPolicySet train_bc(const data::TransitionView& view_e,
                                const data::TransitionView& view_u, double beta,
                                const policy::PolicyConfig& cfg,
                                metrics::Sink* sink) {
  if (view_e.n_obs != view_u.n_obs || view_e.n_actions != view_u.n_actions)
    throw BaselineError("views disagree on agent dims");
  policy::LocalPolicySet ps(view_u.n_obs, view_u.n_actions, cfg.hidden,
                            cfg.seed);
  approx::AdamConfig ac;
  ac.lr = cfg.lr;
  approx::Adam adam(ac);
  std::vector<approx::ParamView> params;
  for (auto& net : ps.nets)
    for (auto& pv : net.params()) params.push_back(pv);
  adam.attach(params);

  Rng batch_rng(mix_seed(cfg.seed, 0x6263ul));
  const int half = std::max(1, cfg.batch / 2);
  std::vector<int> rows_e(half), rows_u(half);
  for (int step = 0; step < cfg.steps; ++step) {
    for (int& r : rows_e) r = view_e.sample_row(batch_rng);
    for (int& r : rows_u) r = view_u.sample_row(batch_rng);
    for (auto& net : ps.nets) net.zero_grad();
    double loss = bc_loss(ps, view_e, rows_e, view_u, rows_u, beta, true);
    if (!std::isfinite(loss))
      throw BaselineError("bc loss diverged at step " + std::to_string(step));
    adam.step();
    if (sink && (step % 50 == 0 || step == cfg.steps - 1))
      sink->add("bc", step, "loss", loss);
  }
  return ps;
}

policy::LocalPolicySet train_stack(const data::TransitionView& view_e,
                                   const data::TransitionView& view_u,
                                   const StackConfig& cfg,
                                   metrics::Sink* sink) {
  ratio::DiscModel disc =
      ratio::train_discriminator(view_e, view_u, cfg.disc, sink);
  dice::ValueModel values =
      dice::train_values(view_e, view_u, disc, cfg.value, sink);
  std::vector<double> w = policy::row_weights(view_u, disc, values);
  return policy::extract_policies(view_u, w, cfg.pol, sink);
}

policy::LocalPolicySet train_vdn_variant(const data::TransitionView& view_e,
                                         const data::TransitionView& view_u,
                                         StackConfig cfg, metrics::Sink* sink) {
  cfg.disc.mixer = approx::MixerKind::Vdn;
  cfg.value.mixer = approx::MixerKind::Vdn;
  return train_stack(view_e, view_u, cfg, sink);
}

data::TransitionView marginal_view(const data::TransitionView& view,
                                   int agent) {
  if (agent < 0 || agent >= view.n_agents)
    throw BaselineError("agent index out of range for marginal view");
  data::TransitionView m;
  m.n_agents = 1;
  m.n_obs = {view.n_obs.at(agent)};
  m.n_actions = {view.n_actions.at(agent)};
  m.gamma = view.gamma;
  const int R = view.n_rows();
  m.obs.reserve(R);
  m.acts.reserve(R);
  m.next_obs.reserve(R);
  for (int r = 0; r < R; ++r) {
    m.obs.push_back({view.obs[r][agent]});
    m.acts.push_back({view.acts[r][agent]});
    m.next_obs.push_back({view.next_obs[r][agent]});
  }
  m.terminal = view.terminal;
  m.weight = view.weight;
  m.traj_id = view.traj_id;
  m.t = view.t;
  m.init_obs.reserve(view.init_obs.size());
  for (const auto& o : view.init_obs) m.init_obs.push_back({o[agent]});
  m.weight_cdf = view.weight_cdf;
  return m;
}

policy::LocalPolicySet train_indd(const data::TransitionView& view_e,
                                  const data::TransitionView& view_u,
                                  StackConfig cfg, metrics::Sink* sink) {
  if (view_e.n_obs != view_u.n_obs || view_e.n_actions != view_u.n_actions)
    throw BaselineError("views disagree on agent dims");
  const int n = view_u.n_agents;
  cfg.disc.mixer = approx::MixerKind::Vdn;
  cfg.value.mixer = approx::MixerKind::Vdn;
  policy::LocalPolicySet out(view_u.n_obs, view_u.n_actions, cfg.pol.hidden,
                             cfg.pol.seed);
  for (int i = 0; i < n; ++i) {
    data::TransitionView me = marginal_view(view_e, i);
    data::TransitionView mu = marginal_view(view_u, i);
    StackConfig agent_cfg = cfg;
    agent_cfg.disc.seed = mix_seed(cfg.disc.seed, 0x600 + i);
    agent_cfg.value.seed = mix_seed(cfg.value.seed, 0x600 + i);
    agent_cfg.pol.seed = mix_seed(cfg.pol.seed, 0x600 + i);
    try {
      policy::LocalPolicySet single = train_stack(me, mu, agent_cfg, sink);
      out.nets[i] = std::move(single.nets[0]);
    } catch (const std::exception& e) {
      throw BaselineError("agent " + std::to_string(i) +
                          " pipeline failed: " + e.what());
    }
  }
  return out;
}

policy::LocalPolicySet phase1_greedy(
    const phase1::PrefQVModel& model,
    const std::vector<std::vector<uint8_t>>* avail) {
  const int n = model.n_agents();
  policy::LocalPolicySet ps(model.n_obs, model.n_actions, {}, 0);
  for (int i = 0; i < n; ++i) {
    const int na = model.n_actions[i];
    for (int o = 0; o < model.n_obs[i]; ++o) {
      std::vector<double> q = model.q_local(i, o);
      int best = -1;
      for (int a = 0; a < na; ++a) {
        if (avail && !(*avail)[i][size_t(o) * na + a]) continue;
        if (best < 0 || q[a] > q[best]) best = a;
      }
      if (best < 0)
        throw BaselineError("no available action for agent " +
                            std::to_string(i));
      for (int a = 0; a < na; ++a)
        ps.set_available(i, o, a, a == best);
    }
  }
  return ps;
}

}  // namespace miso::baselines
