#include "phase1.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "rng.hpp"

namespace miso::phase1 {

namespace {

approx::ApproxSpec head_spec(int n_in, int n_out, const Phase1Config& cfg) {
  approx::ApproxSpec s;
  s.input_dim = n_in;
  s.hidden = cfg.hidden;
  s.output_dim = n_out;
  return s;
}

// number of steps that carry a score: a truncated final step has no
// successor and drops out, a terminal final step stays (V of successor = 0)
int scored_steps(const data::Trajectory& t) {
  if (t.steps.empty()) return 0;
  return t.steps.back().terminal ? int(t.steps.size())
                                 : int(t.steps.size()) - 1;
}

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

PrefQVModel::PrefQVModel(const std::vector<int>& n_obs_in,
                         const std::vector<int>& n_actions_in,
                         const Phase1Config& cfg)
    : q_mixer(approx::MixerKind::Linear, int(n_obs_in.size()), 0,
              mix_seed(cfg.seed, 0x7131ul)),
      v_mixer(approx::MixerKind::Linear, int(n_obs_in.size()), 0,
              mix_seed(cfg.seed, 0x7132ul)),
      n_obs(n_obs_in),
      n_actions(n_actions_in),
      gamma(cfg.gamma) {
  if (n_obs.size() != n_actions.size() || n_obs.empty())
    throw Phase1Error("bad agent dims");
  for (size_t i = 0; i < n_obs.size(); ++i) {
    q_nets.emplace_back(head_spec(n_obs[i], n_actions[i], cfg),
                        mix_seed(cfg.seed, 0x400 + i));
    v_nets.emplace_back(head_spec(n_obs[i], 1, cfg),
                        mix_seed(cfg.seed, 0x500 + i));
  }
}

double PrefQVModel::q_tot(const std::vector<int>& obs,
                          const std::vector<int>& acts) const {
  std::vector<double> locals(q_nets.size());
  std::vector<double> x, logits;
  for (size_t i = 0; i < q_nets.size(); ++i) {
    x.assign(n_obs[i], 0.0);
    x[obs[i]] = 1.0;
    logits.resize(n_actions[i]);
    q_nets[i].predict(x.data(), 1, logits.data());
    locals[i] = logits[acts[i]];
  }
  return q_mixer.mix_one(locals.data());
}

double PrefQVModel::v_tot(const std::vector<int>& obs) const {
  std::vector<double> locals(v_nets.size());
  std::vector<double> x;
  for (size_t i = 0; i < v_nets.size(); ++i) {
    x.assign(n_obs[i], 0.0);
    x[obs[i]] = 1.0;
    locals[i] = v_nets[i].predict_one(x.data());
  }
  return v_mixer.mix_one(locals.data());
}

std::vector<double> PrefQVModel::q_local(int agent, int o) const {
  std::vector<double> x(n_obs[agent], 0.0), q(n_actions[agent]);
  x[o] = 1.0;
  q_nets[agent].predict(x.data(), 1, q.data());
  return q;
}

double traj_score(const PrefQVModel& model, const data::Trajectory& t) {
  double score = 0.0, disc = 1.0;
  const int T = scored_steps(t);
  for (int s = 0; s < T; ++s) {
    double v_next = t.steps[s].terminal ? 0.0 : model.v_tot(t.steps[s + 1].obs);
    score += disc * (model.q_tot(t.steps[s].obs, t.steps[s].acts) -
                     model.gamma * v_next);
    disc *= model.gamma;
  }
  return score;
}

ObsActionTable observed_joint_actions(const data::Dataset& ds) {
  ObsActionTable obs_actions;
  for (const auto& t : ds.trajectories)
    for (const auto& s : t.steps) {
      auto& list = obs_actions[s.obs];
      if (std::find(list.begin(), list.end(), s.acts) == list.end())
        list.push_back(s.acts);
    }
  for (auto& [o, list] : obs_actions) std::sort(list.begin(), list.end());
  return obs_actions;
}

double pref_batch_loss(PrefQVModel& model, const data::Dataset& ds,
                       const ObsActionTable& obs_actions,
                       const std::vector<const pref::PreferencePair*>& batch,
                       double lambda_v, bool with_grad, double* nll_out,
                       double* vcons_out) {
  if (batch.empty()) throw Phase1Error("empty preference batch");
  const int n = model.n_agents();
  const double gamma = model.gamma;

  // distinct trajectories in the batch share one set of step rows
  std::vector<int64_t> traj_ids;
  std::unordered_map<int64_t, int> local_of;
  for (auto* p : batch)
    for (int64_t id : {p->id_a, p->id_b})
      if (local_of.emplace(id, int(traj_ids.size())).second)
        traj_ids.push_back(id);
  const int n_traj = int(traj_ids.size());

  // step rows: one per (trajectory, step)
  struct StepRow {
    const data::Step* s = nullptr;
    int mix_base = 0;   // first q-mixer row for this step's action set
    int mix_count = 0;  // observed joint actions at this obs
    int taken = 0;      // index of the taken action within the set
  };
  std::vector<std::vector<StepRow>> rows(n_traj);
  int n_steps = 0, n_qmix = 0;
  for (int ti = 0; ti < n_traj; ++ti) {
    const auto& t = ds.by_id(traj_ids[ti]);
    rows[ti].resize(t.steps.size());
    for (size_t s = 0; s < t.steps.size(); ++s) {
      auto& r = rows[ti][s];
      r.s = &t.steps[s];
      auto it = obs_actions.find(t.steps[s].obs);
      if (it == obs_actions.end())
        throw Phase1Error("batch observation missing from the action table");
      const auto& list = it->second;
      r.mix_base = n_qmix;
      r.mix_count = int(list.size());
      r.taken = int(std::find(list.begin(), list.end(), t.steps[s].acts) -
                    list.begin());
      if (r.taken == r.mix_count)
        throw Phase1Error("taken action missing from the action table");
      n_qmix += r.mix_count;
      ++n_steps;
    }
  }

  // per-agent forward over all step rows
  std::vector<std::vector<double>> q_logits(n), v_vals(n);
  std::vector<double> x;
  for (int i = 0; i < n; ++i) {
    x.assign(size_t(n_steps) * model.n_obs[i], 0.0);
    int sr = 0;
    for (int ti = 0; ti < n_traj; ++ti)
      for (auto& r : rows[ti])
        x[size_t(sr++) * model.n_obs[i] + r.s->obs[i]] = 1.0;
    model.q_nets[i].forward(x, n_steps, q_logits[i]);
    model.v_nets[i].forward(x, n_steps, v_vals[i]);
  }

  // mixer rows: q over each observed joint action per step, v per step
  std::vector<double> q_mix_in(size_t(n_qmix) * n);
  std::vector<double> v_mix_in(size_t(n_steps) * n);
  {
    int sr = 0;
    for (int ti = 0; ti < n_traj; ++ti)
      for (auto& r : rows[ti]) {
        const auto& list = obs_actions.at(r.s->obs);
        for (int k = 0; k < r.mix_count; ++k)
          for (int i = 0; i < n; ++i)
            q_mix_in[size_t(r.mix_base + k) * n + i] =
                q_logits[i][size_t(sr) * model.n_actions[i] + list[k][i]];
        for (int i = 0; i < n; ++i) v_mix_in[size_t(sr) * n + i] = v_vals[i][sr];
        ++sr;
      }
  }
  std::vector<double> q_tot, v_tot;
  model.q_mixer.forward(q_mix_in, n_qmix, q_tot);
  model.v_mixer.forward(v_mix_in, n_steps, v_tot);

  // scores and Bradley-Terry loss
  std::vector<double> score(n_traj, 0.0);
  std::vector<int> step_row_base(n_traj);
  {
    int sr = 0;
    for (int ti = 0; ti < n_traj; ++ti) {
      step_row_base[ti] = sr;
      const auto& t = ds.by_id(traj_ids[ti]);
      const int T = scored_steps(t);
      double disc = 1.0;
      for (int s = 0; s < T; ++s) {
        double v_next = rows[ti][s].s->terminal ? 0.0 : v_tot[sr + s + 1];
        score[ti] += disc * (q_tot[rows[ti][s].mix_base + rows[ti][s].taken] -
                             gamma * v_next);
        disc *= gamma;
      }
      sr += int(rows[ti].size());
    }
  }
  double nll = 0.0;
  std::vector<double> dscore(n_traj, 0.0);
  for (auto* p : batch) {
    int a = local_of[p->id_a], b = local_of[p->id_b];
    int win = p->label == pref::Label::First ? a : b;
    int lose = p->label == pref::Label::First ? b : a;
    double z = score[win] - score[lose];
    nll += softplus(-z) / batch.size();
    double g = -1.0 / (1.0 + std::exp(z)) / batch.size();  // d nll / d z
    dscore[win] += g;
    dscore[lose] -= g;
  }

  // consistency: V_tot(s) should track logsumexp of Q_tot(s, .)
  std::vector<double> d_qtot(n_qmix, 0.0), d_vtot(n_steps, 0.0);
  double vcons = 0.0;
  {
    int sr = 0;
    for (int ti = 0; ti < n_traj; ++ti)
      for (auto& r : rows[ti]) {
        double hi = -1e300;
        for (int k = 0; k < r.mix_count; ++k)
          hi = std::max(hi, q_tot[r.mix_base + k]);
        double z = 0.0;
        for (int k = 0; k < r.mix_count; ++k)
          z += std::exp(q_tot[r.mix_base + k] - hi);
        double lse = hi + std::log(z);
        double gap = v_tot[sr] - lse;
        vcons += gap * gap / n_steps;
        double c = 2.0 * lambda_v * gap / n_steps;
        d_vtot[sr] += c;
        for (int k = 0; k < r.mix_count; ++k)
          d_qtot[r.mix_base + k] -= c * std::exp(q_tot[r.mix_base + k] - hi) / z;
        ++sr;
      }
  }
  const double loss = nll + lambda_v * vcons;
  if (nll_out) *nll_out = nll;
  if (vcons_out) *vcons_out = vcons;
  if (!with_grad) return loss;

  // score gradients land on the taken-action q rows and successor v rows
  for (int ti = 0; ti < n_traj; ++ti) {
    if (dscore[ti] == 0.0) continue;
    const auto& t = ds.by_id(traj_ids[ti]);
    const int T = scored_steps(t);
    double disc = 1.0;
    for (int s = 0; s < T; ++s) {
      d_qtot[rows[ti][s].mix_base + rows[ti][s].taken] += disc * dscore[ti];
      if (!rows[ti][s].s->terminal)
        d_vtot[step_row_base[ti] + s + 1] -= disc * gamma * dscore[ti];
      disc *= gamma;
    }
  }

  std::vector<double> d_qmix_in, d_vmix_in;
  model.q_mixer.backward(d_qtot, &d_qmix_in);
  model.v_mixer.backward(d_vtot, &d_vmix_in);
  for (int i = 0; i < n; ++i) {
    std::vector<double> d_logits(size_t(n_steps) * model.n_actions[i], 0.0);
    std::vector<double> d_v(n_steps);
    int sr = 0;
    for (int ti = 0; ti < n_traj; ++ti)
      for (auto& r : rows[ti]) {
        const auto& list = obs_actions.at(r.s->obs);
        for (int k = 0; k < r.mix_count; ++k)
          d_logits[size_t(sr) * model.n_actions[i] + list[k][i]] +=
              d_qmix_in[size_t(r.mix_base + k) * n + i];
        d_v[sr] = d_vmix_in[size_t(sr) * n + i];
        ++sr;
      }
    model.q_nets[i].backward(d_logits, nullptr);
    model.v_nets[i].backward(d_v, nullptr);
  }
  return loss;
}

PrefQVModel train_pref_model(const std::vector<pref::PreferencePair>& prefs,
                             const data::Dataset& ds, const Phase1Config& cfg,
                             metrics::Sink* sink) {
  if (prefs.empty()) throw Phase1Error("no preference pairs to fit");
  ds.validate();
  PrefQVModel model(ds.n_obs, ds.n_actions, cfg);
  const auto obs_actions = observed_joint_actions(ds);

  approx::AdamConfig ac;
  ac.lr = cfg.lr;
  approx::Adam adam(ac);
  std::vector<approx::ParamView> params;
  for (auto& net : model.q_nets)
    for (auto& pv : net.params()) params.push_back(pv);
  for (auto& net : model.v_nets)
    for (auto& pv : net.params()) params.push_back(pv);
  for (auto& pv : model.q_mixer.params()) params.push_back(pv);
  for (auto& pv : model.v_mixer.params()) params.push_back(pv);
  adam.attach(params);

  Rng batch_rng(mix_seed(cfg.seed, 0x7031ul));

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<const pref::PreferencePair*> batch(cfg.batch_pairs);
    for (auto& p : batch) p = &prefs[batch_rng.below(prefs.size())];

    for (auto& net : model.q_nets) net.zero_grad();
    for (auto& net : model.v_nets) net.zero_grad();
    model.q_mixer.zero_grad();
    model.v_mixer.zero_grad();
    double nll = 0.0, vcons = 0.0;
    const double loss = pref_batch_loss(model, ds, obs_actions, batch,
                                        cfg.lambda_v, true, &nll, &vcons);
    if (!std::isfinite(loss))
      throw Phase1Error("preference loss diverged at step " +
                        std::to_string(step));
    adam.step();

    if (sink && (step % 50 == 0 || step == cfg.steps - 1)) {
      sink->add("phase1", step, "loss", loss);
      sink->add("phase1", step, "nll", nll);
      sink->add("phase1", step, "vcons", vcons);
    }
  }
  return model;
}

double pref_accuracy(const PrefQVModel& model,
                     const std::vector<pref::PreferencePair>& prefs,
                     const data::Dataset& ds) {
  if (prefs.empty()) throw Phase1Error("no preference pairs");
  std::unordered_map<int64_t, double> score;
  int correct = 0;
  for (const auto& p : prefs) {
    for (int64_t id : {p.id_a, p.id_b})
      if (!score.count(id)) score[id] = traj_score(model, ds.by_id(id));
    double za = score[p.id_a], zb = score[p.id_b];
    bool first = za > zb;
    if ((p.label == pref::Label::First) == first && za != zb) ++correct;
  }
  return double(correct) / prefs.size();
}

RecoveredRewards recover_rewards(const PrefQVModel& model,
                                 const data::Dataset& ds) {
  RecoveredRewards out;
  out.traj_ids.reserve(ds.trajectories.size());
  out.r.reserve(ds.trajectories.size());
  out.g.reserve(ds.trajectories.size());
  for (const auto& t : ds.trajectories) {
    std::vector<double> r;
    const int T = scored_steps(t);
    r.reserve(T);
    for (int s = 0; s < T; ++s) {
      double v_next = t.steps[s].terminal ? 0.0 : model.v_tot(t.steps[s + 1].obs);
      r.push_back(model.q_tot(t.steps[s].obs, t.steps[s].acts) -
                  model.gamma * v_next);
    }
    double g = 0.0;
    for (double v : r) g += v;
    out.traj_ids.push_back(t.traj_id);
    out.r.push_back(std::move(r));
    out.g.push_back(g);
  }
  return out;
}

data::SplitResult rank_and_split(const RecoveredRewards& rewards, int k) {
  const int n = int(rewards.traj_ids.size());
  if (k < 1 || k > n) throw Phase1Error("k out of range");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (rewards.g[a] != rewards.g[b]) return rewards.g[a] > rewards.g[b];
    return rewards.traj_ids[a] < rewards.traj_ids[b];
  });
  data::SplitResult split;
  int64_t max_id = 0;
  for (int64_t id : rewards.traj_ids) max_id = std::max(max_id, id);
  split.scores_by_id.assign(size_t(max_id) + 1, 0.0);
  for (int i = 0; i < n; ++i)
    split.scores_by_id[rewards.traj_ids[i]] = rewards.g[i];
  for (int i = 0; i < n; ++i) {
    int64_t id = rewards.traj_ids[order[i]];
    (i < k ? split.expert_ids : split.mix_ids).push_back(id);
  }
  return split;
}

}  // namespace miso::phase1
