#include "policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rng.hpp"

namespace miso::policy {

namespace {

// masked softmax over one row of logits; masked slots get exactly zero
void masked_softmax(const double* logits, const uint8_t* mask, int n,
                    double* out) {
  double hi = -1e300;
  for (int a = 0; a < n; ++a)
    if (mask[a]) hi = std::max(hi, logits[a]);
  if (hi == -1e300) throw PolicyError("no available action at this observation");
  double z = 0.0;
  for (int a = 0; a < n; ++a) {
    out[a] = mask[a] ? std::exp(logits[a] - hi) : 0.0;
    z += out[a];
  }
  for (int a = 0; a < n; ++a) out[a] /= z;
}

void decode_key(int key, const std::vector<int>& radix, std::vector<int>& out) {
  out.assign(radix.size(), 0);
  for (int i = int(radix.size()) - 1; i >= 0; --i) {
    out[i] = key % radix[i];
    key /= radix[i];
  }
}

}  // namespace

LocalPolicySet::LocalPolicySet(const std::vector<int>& n_obs_in,
                               const std::vector<int>& n_actions_in,
                               const std::vector<int>& hidden, uint64_t seed)
    : n_obs(n_obs_in), n_actions(n_actions_in) {
  if (n_obs.size() != n_actions.size() || n_obs.empty())
    throw PolicyError("bad agent dims");
  for (size_t i = 0; i < n_obs.size(); ++i) {
    approx::ApproxSpec spec;
    spec.input_dim = n_obs[i];
    spec.hidden = hidden;
    spec.output_dim = n_actions[i];
    nets.emplace_back(spec, mix_seed(seed, 0x300 + i));
    avail.emplace_back(size_t(n_obs[i]) * n_actions[i], uint8_t(1));
  }
}

void LocalPolicySet::set_available(int agent, int o, int a, bool on) {
  avail[agent][size_t(o) * n_actions[agent] + a] = on ? 1 : 0;
}

std::vector<double> LocalPolicySet::probs(int agent, int o) const {
  const int na = n_actions[agent];
  std::vector<double> x(n_obs[agent], 0.0), logits(na), p(na);
  x[o] = 1.0;
  nets[agent].predict(x.data(), 1, logits.data());
  masked_softmax(logits.data(), &avail[agent][size_t(o) * na], na, p.data());
  return p;
}

double LocalPolicySet::log_prob(int agent, int o, int a) const {
  double p = probs(agent, o)[a];
  if (p <= 0.0) throw PolicyError("taken action has zero probability");
  return std::log(p);
}

double wbc_loss(LocalPolicySet& ps, const dice::WeightedBatch& batch,
                bool with_grad) {
  const int B = int(batch.rows.size());
  if (B == 0) throw PolicyError("empty batch");
  const int n = ps.n_agents();
  double loss = 0.0;
  std::vector<double> x, logits, p, dlogits;
  for (int i = 0; i < n; ++i) {
    const int d = ps.n_obs[i], na = ps.n_actions[i];
    x.assign(size_t(B) * d, 0.0);
    for (int b = 0; b < B; ++b) x[size_t(b) * d + batch.rows[b].obs[i]] = 1.0;
    ps.nets[i].forward(x, B, logits);
    p.resize(size_t(B) * na);
    for (int b = 0; b < B; ++b) {
      int o = batch.rows[b].obs[i];
      masked_softmax(&logits[size_t(b) * na], &ps.avail[i][size_t(o) * na], na,
                     &p[size_t(b) * na]);
    }
    if (with_grad) dlogits.assign(size_t(B) * na, 0.0);
    for (int b = 0; b < B; ++b) {
      int a = batch.rows[b].acts[i];
      double w = batch.rows[b].w;
      double pa = p[size_t(b) * na + a];
      if (pa <= 0.0)
        throw PolicyError("taken action has zero probability (masked in data)");
      loss -= w * std::log(pa) / B;
      if (with_grad) {
        int o = batch.rows[b].obs[i];
        for (int k = 0; k < na; ++k) {
          if (!ps.avail[i][size_t(o) * na + k]) continue;
          double ind = k == a ? 1.0 : 0.0;
          dlogits[size_t(b) * na + k] = w * (p[size_t(b) * na + k] - ind) / B;
        }
      }
    }
    if (with_grad) ps.nets[i].backward(dlogits, nullptr);
  }
  return loss;
}

std::vector<double> row_weights(const data::TransitionView& view,
                                const ratio::DiscModel& disc,
                                const dice::ValueModel& model) {
  std::vector<int> all(view.n_rows());
  for (int r = 0; r < view.n_rows(); ++r) all[r] = r;
  dice::WeightedBatch b = dice::make_batch(view, all, disc);
  dice::annotate(b, model);
  std::vector<double> w(view.n_rows());
  for (int r = 0; r < view.n_rows(); ++r) w[r] = b.rows[r].w;
  return w;
}

LocalPolicySet extract_policies(const data::TransitionView& view,
                                const std::vector<double>& weights,
                                const PolicyConfig& cfg, metrics::Sink* sink) {
  if (weights.size() != size_t(view.n_rows()))
    throw PolicyError("one weight per view row required");
  LocalPolicySet ps(view.n_obs, view.n_actions, cfg.hidden, cfg.seed);

  approx::AdamConfig ac;
  ac.lr = cfg.lr;
  approx::Adam adam(ac);
  std::vector<approx::ParamView> params;
  for (auto& net : ps.nets)
    for (auto& pv : net.params()) params.push_back(pv);
  adam.attach(params);

  Rng batch_rng(mix_seed(cfg.seed, 0x7763ul));
  dice::WeightedBatch batch;
  batch.rows.resize(cfg.batch);
  for (int step = 0; step < cfg.steps; ++step) {
    double mean_w = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      int r = view.sample_row(batch_rng);
      auto& row = batch.rows[b];
      row.obs = view.obs[r];
      row.acts = view.acts[r];
      row.w = weights[r];
      mean_w += row.w / cfg.batch;
    }
    for (auto& net : ps.nets) net.zero_grad();
    double loss = wbc_loss(ps, batch, true);
    if (!std::isfinite(loss))
      throw PolicyError("policy loss diverged at step " + std::to_string(step));
    adam.step();
    if (sink && (step % 50 == 0 || step == cfg.steps - 1)) {
      sink->add("policy", step, "loss", loss);
      sink->add("policy", step, "mean_w", mean_w);
    }
  }
  return ps;
}

std::vector<std::vector<double>> tabular_wbc_global(
    const data::TransitionView& view, const std::vector<double>& weights) {
  if (weights.size() != size_t(view.n_rows()))
    throw PolicyError("one weight per view row required");
  const int no = view.n_joint_obs(), na = view.n_joint_acts();
  std::vector<std::vector<double>> table(no, std::vector<double>(na, 0.0));
  for (int r = 0; r < view.n_rows(); ++r)
    table[view.joint_obs_key(view.obs[r])][view.joint_act_key(view.acts[r])] +=
        view.weight[r] * weights[r];
  for (auto& row : table) {
    double z = 0.0;
    for (double v : row) z += v;
    if (z > 0.0)
      for (double& v : row) v /= z;
    else
      for (double& v : row) v = 1.0 / na;
  }
  return table;
}

std::vector<std::vector<double>> tabular_wbc_local(
    const data::TransitionView& view, const std::vector<double>& weights,
    int agent) {
  if (weights.size() != size_t(view.n_rows()))
    throw PolicyError("one weight per view row required");
  const int no = view.n_obs[agent], na = view.n_actions[agent];
  std::vector<std::vector<double>> table(no, std::vector<double>(na, 0.0));
  for (int r = 0; r < view.n_rows(); ++r)
    table[view.obs[r][agent]][view.acts[r][agent]] +=
        view.weight[r] * weights[r];
  for (auto& row : table) {
    double z = 0.0;
    for (double v : row) z += v;
    if (z > 0.0)
      for (double& v : row) v /= z;
    else
      for (double& v : row) v = 1.0 / na;
  }
  return table;
}

ConsistencyReport consistency_check(const data::TransitionView& view,
                                    const std::vector<double>& weights,
                                    uint64_t seed, int n_restarts) {
  const int n = view.n_agents;
  const int no = view.n_joint_obs(), na = view.n_joint_acts();
  // weighted joint counts; only visited joint-obs rows constrain anything
  std::vector<std::vector<double>> counts(no, std::vector<double>(na, 0.0));
  for (int r = 0; r < view.n_rows(); ++r)
    counts[view.joint_obs_key(view.obs[r])][view.joint_act_key(view.acts[r])] +=
        view.weight[r] * weights[r];

  std::vector<std::vector<std::vector<double>>> closed(n);
  for (int i = 0; i < n; ++i) closed[i] = tabular_wbc_local(view, weights, i);

  auto objective = [&](const std::vector<std::vector<std::vector<double>>>& pi) {
    double j = 0.0;
    std::vector<int> o(n), a(n);
    for (int ok = 0; ok < no; ++ok) {
      decode_key(ok, view.n_obs, o);
      for (int ak = 0; ak < na; ++ak) {
        double c = counts[ok][ak];
        if (c == 0.0) continue;
        decode_key(ak, view.n_actions, a);
        for (int i = 0; i < n; ++i) j += c * std::log(pi[i][o[i]][a[i]]);
      }
    }
    return j;
  };

  // entropic mirror ascent over the product of per-(agent, obs) simplices
  auto ascend = [&](Rng& rng) {
    std::vector<std::vector<std::vector<double>>> pi(n);
    for (int i = 0; i < n; ++i) {
      pi[i].assign(view.n_obs[i], std::vector<double>(view.n_actions[i]));
      for (auto& row : pi[i]) {
        double z = 0.0;
        for (double& v : row) {
          v = std::exp(rng.normal());
          z += v;
        }
        for (double& v : row) v /= z;
      }
    }
    // marginal masses drive the gradient: dJ/dpi_i(a|o) = M_i(o,a)/pi_i(a|o)
    std::vector<std::vector<std::vector<double>>> marg(n);
    for (int i = 0; i < n; ++i)
      marg[i].assign(view.n_obs[i], std::vector<double>(view.n_actions[i], 0.0));
    {
      std::vector<int> o(n), a(n);
      for (int ok = 0; ok < no; ++ok) {
        decode_key(ok, view.n_obs, o);
        for (int ak = 0; ak < na; ++ak) {
          double c = counts[ok][ak];
          if (c == 0.0) continue;
          decode_key(ak, view.n_actions, a);
          for (int i = 0; i < n; ++i) marg[i][o[i]][a[i]] += c;
        }
      }
    }
    double eta = 0.5, j = objective(pi);
    auto cand = pi;
    for (int it = 0; it < 20000; ++it) {
      for (int i = 0; i < n; ++i)
        for (size_t o = 0; o < pi[i].size(); ++o) {
          double hi = -1e300;
          auto& row = pi[i][o];
          auto& crow = cand[i][o];
          for (size_t a = 0; a < row.size(); ++a) {
            double g = row[a] > 0 ? marg[i][o][a] / row[a] : 0.0;
            crow[a] = std::log(std::max(row[a], 1e-300)) + eta * g;
            hi = std::max(hi, crow[a]);
          }
          double z = 0.0;
          for (double& v : crow) {
            v = std::exp(v - hi);
            z += v;
          }
          for (double& v : crow) v /= z;
        }
      double jc = objective(cand);
      if (jc >= j) {
        std::swap(pi, cand);
        bool stalled = jc - j < 1e-14 * (1.0 + std::abs(j));
        j = jc;
        eta *= 1.2;
        if (stalled) break;
      } else {
        eta *= 0.5;
        if (eta < 1e-12) break;
      }
    }
    return std::make_pair(pi, j);
  };

  Rng rng(mix_seed(seed, 0x7034ul));
  std::vector<std::vector<std::vector<double>>> best;
  double best_j = -1e300;
  for (int rs = 0; rs < n_restarts; ++rs) {
    auto [pi, j] = ascend(rng);
    if (j > best_j) {
      best_j = j;
      best = std::move(pi);
    }
  }

  ConsistencyReport rep;
  rep.objective_gap = objective(closed) - best_j;
  std::vector<int> o(n), a(n);
  for (int ok = 0; ok < no; ++ok) {
    double mass = 0.0;
    for (int ak = 0; ak < na; ++ak) mass += counts[ok][ak];
    if (mass == 0.0) continue;  // unconstrained row, any policy is optimal
    decode_key(ok, view.n_obs, o);
    for (int ak = 0; ak < na; ++ak) {
      decode_key(ak, view.n_actions, a);
      double p_closed = 1.0, p_best = 1.0;
      for (int i = 0; i < n; ++i) {
        p_closed *= closed[i][o[i]][a[i]];
        p_best *= best[i][o[i]][a[i]];
      }
      rep.max_dev = std::max(rep.max_dev, std::abs(p_closed - p_best));
    }
  }
  rep.ok = rep.max_dev < 1e-6;
  return rep;
}

std::vector<double> closed_form_local(const ClosedFormInputs& in, int agent,
                                      int o) {
  const int na = in.n_actions.at(agent);
  const auto& q = in.q.at(agent);
  const auto& mu = in.mu.at(agent);
  if (q.size() != size_t(in.n_obs.at(agent)) * na || q.size() != mu.size())
    throw PolicyError("table layout mismatch");
  const double scale = in.phi.at(agent) / (1.0 + in.alpha);
  std::vector<double> p(na);
  double hi = -1e300;
  for (int a = 0; a < na; ++a) hi = std::max(hi, scale * q[size_t(o) * na + a]);
  double z = 0.0;
  for (int a = 0; a < na; ++a) {
    p[a] = mu[size_t(o) * na + a] * std::exp(scale * q[size_t(o) * na + a] - hi);
    z += p[a];
  }
  if (z <= 0.0) throw PolicyError("behavior policy row has no mass");
  for (double& v : p) v /= z;
  return p;
}

}  // namespace miso::policy
