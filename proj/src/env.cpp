#include "env.hpp"

#include <algorithm>
#include <cmath>

#include "data.hpp"
#include "rng.hpp"

namespace miso::env {

int TabularTeamMdp::joint_index(const std::vector<int>& acts) const {
  int idx = 0;
  for (int i = 0; i < n_agents; ++i) idx = idx * n_actions[i] + acts[i];
  return idx;
}

void TabularTeamMdp::decode_joint(int ja, std::vector<int>& acts) const {
  acts.resize(n_agents);
  for (int i = n_agents - 1; i >= 0; --i) {
    acts[i] = ja % n_actions[i];
    ja /= n_actions[i];
  }
}

void TabularTeamMdp::validate() const {
  if (n_agents <= 0 || n_states <= 0) throw EnvError("empty mdp");
  if (int(n_actions.size()) != n_agents || int(n_obs.size()) != n_agents ||
      int(obs_map.size()) != n_agents)
    throw EnvError("per-agent arrays sized wrong");
  int j = 1;
  for (int i = 0; i < n_agents; ++i) {
    if (n_actions[i] <= 0) throw EnvError("agent with no actions");
    j *= n_actions[i];
    if (int(obs_map[i].size()) != n_states) throw EnvError("obs_map not total");
    for (int s = 0; s < n_states; ++s)
      if (obs_map[i][s] < 0 || obs_map[i][s] >= n_obs[i])
        throw EnvError("obs_map out of range");
  }
  if (j != n_joint) throw EnvError("joint action count mismatch");
  if (int(transition.size()) != n_states * n_joint ||
      int(team_reward.size()) != n_states * n_joint)
    throw EnvError("transition/reward table sized wrong");
  for (const auto& row : transition) {
    double sum = 0.0;
    for (auto [sp, p] : row) {
      if (sp < 0 || sp >= n_states || p < 0.0) throw EnvError("bad transition entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw EnvError("transition row does not sum to 1");
  }
  if (int(init_dist.size()) != n_states) throw EnvError("init dist sized wrong");
  double isum = 0.0;
  for (double p : init_dist) {
    if (p < 0.0) throw EnvError("negative init probability");
    isum += p;
  }
  if (std::abs(isum - 1.0) > 1e-12) throw EnvError("init dist does not sum to 1");
  if (!(discount >= 0.0 && discount < 1.0)) throw EnvError("discount outside [0,1)");
}

void JointPolicy::validate() const {
  if (int(table.size()) != n_states * n_joint) throw EnvError("policy table sized wrong");
  for (int s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_joint; ++a) {
      double p = table[size_t(s) * n_joint + a];
      if (p < 0.0) throw EnvError("negative action probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw EnvError("policy row does not sum to 1");
  }
}

namespace {

TabularTeamMdp build_matrix_repeat(const EnvConfig& cfg) {
  TabularTeamMdp m;
  m.n_agents = cfg.n_agents;
  m.n_states = 1;
  m.n_actions.assign(cfg.n_agents, cfg.n_actions);
  m.n_obs.assign(cfg.n_agents, 1);
  m.obs_map.assign(cfg.n_agents, std::vector<int>(1, 0));
  m.n_joint = 1;
  for (int i = 0; i < cfg.n_agents; ++i) m.n_joint *= cfg.n_actions;
  m.transition.assign(m.n_joint, {{0, 1.0}});
  m.init_dist = {1.0};
  m.discount = cfg.discount;
  // payoff only when every agent plays action 0
  m.team_reward.assign(m.n_joint, 0.0);
  m.team_reward[0] = 1.0;
  return m;
}

TabularTeamMdp build_team_chain(const EnvConfig& cfg) {
  // States 0..L-1, start at 0, reward while standing on L-1. The chain
  // advances only when all agents pick "right" (action 1); any defection
  // slides it back one. Fully observed: every agent sees the chain position.
  if (cfg.length < 2) throw EnvError("team-chain needs length >= 2");
  TabularTeamMdp m;
  m.n_agents = cfg.n_agents;
  m.n_states = cfg.length;
  m.n_actions.assign(cfg.n_agents, 2);
  m.n_obs.assign(cfg.n_agents, cfg.length);
  m.obs_map.assign(cfg.n_agents, std::vector<int>(cfg.length));
  for (int i = 0; i < cfg.n_agents; ++i)
    for (int s = 0; s < cfg.length; ++s) m.obs_map[i][s] = s;
  m.n_joint = 1 << cfg.n_agents;
  m.transition.resize(size_t(m.n_states) * m.n_joint);
  m.team_reward.assign(size_t(m.n_states) * m.n_joint, 0.0);
  int all_right = m.n_joint - 1;
  for (int s = 0; s < m.n_states; ++s) {
    for (int ja = 0; ja < m.n_joint; ++ja) {
      int next = (ja == all_right) ? std::min(s + 1, m.n_states - 1)
                                   : std::max(s - 1, 0);
      m.transition[size_t(s) * m.n_joint + ja] = {{next, 1.0}};
      if (s == m.n_states - 1) m.team_reward[size_t(s) * m.n_joint + ja] = 1.0;
    }
  }
  m.init_dist.assign(m.n_states, 0.0);
  m.init_dist[0] = 1.0;
  m.discount = cfg.discount;
  return m;
}

TabularTeamMdp build_team_grid(const EnvConfig& cfg) {
  // k x k grid per agent, global state is the tuple of agent cells. Each
  // agent only observes its own cell. Reward 1 exactly when every agent
  // stands on the far corner, so credit is genuinely joint. Moves slip to
  // "stay" independently per agent with probability cfg.slip.
  if (cfg.grid < 2) throw EnvError("team-grid needs grid >= 2");
  if (cfg.n_agents < 1 || cfg.n_agents > 3)
    throw EnvError("team-grid supports 1..3 agents at desk scale");
  const int k = cfg.grid;
  const int cells = k * k;
  TabularTeamMdp m;
  m.n_agents = cfg.n_agents;
  m.n_states = 1;
  for (int i = 0; i < cfg.n_agents; ++i) m.n_states *= cells;
  m.n_actions.assign(cfg.n_agents, 5);  // stay, up, down, left, right
  m.n_obs.assign(cfg.n_agents, cells);
  m.obs_map.assign(cfg.n_agents, std::vector<int>(m.n_states));
  m.n_joint = 1;
  for (int i = 0; i < cfg.n_agents; ++i) m.n_joint *= 5;

  auto cell_of = [&](int s, int agent) {
    for (int i = cfg.n_agents - 1; i > agent; --i) s /= cells;
    return s % cells;
  };
  for (int i = 0; i < cfg.n_agents; ++i)
    for (int s = 0; s < m.n_states; ++s) m.obs_map[i][s] = cell_of(s, i);

  auto move = [&](int cell, int act) {
    int r = cell / k, c = cell % k;
    switch (act) {
      case 1: r = std::max(r - 1, 0); break;
      case 2: r = std::min(r + 1, k - 1); break;
      case 3: c = std::max(c - 1, 0); break;
      case 4: c = std::min(c + 1, k - 1); break;
      default: break;
    }
    return r * k + c;
  };

  const int goal = cells - 1;
  m.transition.resize(size_t(m.n_states) * m.n_joint);
  m.team_reward.assign(size_t(m.n_states) * m.n_joint, 0.0);
  std::vector<int> acts(cfg.n_agents);
  std::vector<std::pair<int, double>> per_agent[3];
  for (int s = 0; s < m.n_states; ++s) {
    bool all_goal = true;
    for (int i = 0; i < cfg.n_agents; ++i)
      if (cell_of(s, i) != goal) all_goal = false;
    for (int ja = 0; ja < m.n_joint; ++ja) {
      m.decode_joint(ja, acts);
      for (int i = 0; i < cfg.n_agents; ++i) {
        int cur = cell_of(s, i);
        int tgt = move(cur, acts[i]);
        per_agent[i].clear();
        if (tgt == cur || cfg.slip <= 0.0) {
          per_agent[i].push_back({tgt, 1.0});
          if (cfg.slip > 0.0 && tgt != cur) {
            per_agent[i].back().second = 1.0 - cfg.slip;
            per_agent[i].push_back({cur, cfg.slip});
          }
        } else {
          per_agent[i].push_back({tgt, 1.0 - cfg.slip});
          per_agent[i].push_back({cur, cfg.slip});
        }
      }
      // product over agents; at most 2^n outcomes
      std::vector<std::pair<int, double>> row = {{0, 1.0}};
      std::vector<std::pair<int, double>> next;
      for (int i = 0; i < cfg.n_agents; ++i) {
        next.clear();
        for (auto [base, bp] : row)
          for (auto [c, cp] : per_agent[i])
            next.push_back({base * cells + c, bp * cp});
        row.swap(next);
      }
      // merge duplicates (slip target may coincide with stay)
      std::sort(row.begin(), row.end());
      auto& out = m.transition[size_t(s) * m.n_joint + ja];
      out.clear();
      for (auto [sp, p] : row) {
        if (!out.empty() && out.back().first == sp) out.back().second += p;
        else out.push_back({sp, p});
      }
      if (all_goal) m.team_reward[size_t(s) * m.n_joint + ja] = 1.0;
    }
  }
  m.init_dist.assign(m.n_states, 0.0);
  m.init_dist[0] = 1.0;  // every agent in the top-left cell
  m.discount = cfg.discount;
  return m;
}

}  // namespace

TabularTeamMdp build_benchmark(const EnvConfig& cfg) {
  TabularTeamMdp m;
  if (cfg.family == "matrix-repeat") m = build_matrix_repeat(cfg);
  else if (cfg.family == "team-chain") m = build_team_chain(cfg);
  else if (cfg.family == "team-grid") m = build_team_grid(cfg);
  else throw EnvError("unknown env family: " + cfg.family);
  m.validate();
  return m;
}

JointPolicy solve_expert(const TabularTeamMdp& mdp, double tol) {
  const int S = mdp.n_states, J = mdp.n_joint;
  std::vector<double> v(S, 0.0), vn(S);
  const int max_iters = 5'000'000;
  int it = 0;
  for (; it < max_iters; ++it) {
    double delta = 0.0;
    for (int s = 0; s < S; ++s) {
      double best = -1e300;
      for (int a = 0; a < J; ++a) {
        double q = mdp.team_reward[size_t(s) * J + a];
        for (auto [sp, p] : mdp.transition[size_t(s) * J + a])
          q += mdp.discount * p * v[sp];
        best = std::max(best, q);
      }
      vn[s] = best;
      delta = std::max(delta, std::abs(vn[s] - v[s]));
    }
    v.swap(vn);
    if (delta < tol) break;
  }
  if (it == max_iters) throw EnvError("value iteration failed to converge");

  JointPolicy pi;
  pi.n_states = S;
  pi.n_joint = J;
  pi.table.assign(size_t(S) * J, 0.0);
  std::vector<double> q(J);
  for (int s = 0; s < S; ++s) {
    double best = -1e300;
    for (int a = 0; a < J; ++a) {
      q[a] = mdp.team_reward[size_t(s) * J + a];
      for (auto [sp, p] : mdp.transition[size_t(s) * J + a])
        q[a] += mdp.discount * p * v[sp];
      best = std::max(best, q[a]);
    }
    // lowest joint index within a relative tolerance of the max, so that
    // exact ties (and affine reward rescaling) pick the same action
    double slack = 1e-9 * std::max(1.0, std::abs(best));
    for (int a = 0; a < J; ++a) {
      if (q[a] >= best - slack) {
        pi.table[size_t(s) * J + a] = 1.0;
        break;
      }
    }
  }
  pi.validate();
  return pi;
}

JointPolicy degrade(const JointPolicy& policy, double eps) {
  if (eps < 0.0 || eps > 1.0) throw EnvError("degrade eps outside [0,1]");
  JointPolicy out = policy;
  double u = eps / policy.n_joint;
  for (double& p : out.table) p = (1.0 - eps) * p + u;
  out.factorized = false;
  out.validate();
  return out;
}

data::Trajectory rollout(const TabularTeamMdp& mdp, const JointPolicy& policy,
                         int horizon, uint64_t seed) {
  if (horizon < 1) throw EnvError("horizon must be >= 1");
  if (policy.n_states != mdp.n_states || policy.n_joint != mdp.n_joint)
    throw EnvError("policy does not match mdp shape");
  Rng rng(seed);
  data::Trajectory traj;
  auto& rewards = data::SealedAccess::rewards(traj);
  auto& states = data::SealedAccess::states(traj);
  int s = rng.categorical(mdp.init_dist.data(), mdp.n_states);
  std::vector<int> acts;
  for (int t = 0; t < horizon; ++t) {
    int ja = rng.categorical(&policy.table[size_t(s) * mdp.n_joint], mdp.n_joint);
    mdp.decode_joint(ja, acts);
    data::Step step;
    step.obs.resize(mdp.n_agents);
    for (int i = 0; i < mdp.n_agents; ++i) step.obs[i] = mdp.obs_map[i][s];
    step.acts = acts;
    step.terminal = false;
    traj.steps.push_back(std::move(step));
    rewards.push_back(mdp.team_reward[size_t(s) * mdp.n_joint + ja]);
    states.push_back(s);
    const auto& row = mdp.transition[size_t(s) * mdp.n_joint + ja];
    double r = rng.uniform();
    double acc = 0.0;
    int nxt = row.back().first;
    for (auto [sp, p] : row) {
      acc += p;
      if (r < acc) { nxt = sp; break; }
    }
    s = nxt;
  }
  return traj;
}

}  // namespace miso::env
