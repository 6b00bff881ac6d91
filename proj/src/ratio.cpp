#include "ratio.hpp"

#include <algorithm>
#include <cmath>

#include "metrics.hpp"
#include "rng.hpp"

namespace miso::ratio {

namespace {

// one-hot (obs, act) features for one agent
void fill_features(std::vector<double>& x, size_t base, int n_obs, int n_act,
                   int obs, int act) {
  std::fill(x.begin() + base, x.begin() + base + n_obs + n_act, 0.0);
  x[base + obs] = 1.0;
  x[base + n_obs + act] = 1.0;
}

}  // namespace

DiscModel::DiscModel(const std::vector<int>& n_obs_in,
                     const std::vector<int>& n_actions_in, const DiscConfig& cfg)
    : mixer(cfg.mixer, int(n_obs_in.size()), cfg.mixer_hidden,
            mix_seed(cfg.seed, 0x6d69ul)),
      n_obs(n_obs_in),
      n_actions(n_actions_in),
      clip_eps(cfg.clip_eps),
      clip_L(cfg.clip_L) {
  if (n_obs.size() != n_actions.size() || n_obs.empty())
    throw RatioError("bad agent dims");
  for (size_t i = 0; i < n_obs.size(); ++i) {
    approx::ApproxSpec spec;
    spec.input_dim = n_obs[i] + n_actions[i];
    spec.hidden = cfg.hidden;
    spec.output_dim = 1;
    locals.emplace_back(spec, mix_seed(cfg.seed, 0x100 + i));
  }

  // The mixer output is read directly as a probability. The generic init is
  // zero centred with O(1) spread, which parks a fair share of cells inside
  // the clip where -log c blows the loss up and training spends thousands of
  // steps crawling back. Damp the output layers and recentre at the
  // uninformative half instead.
  const int n = int(locals.size());
  for (auto& net : locals) {
    auto p = net.get_params();
    const auto& sp = net.spec();
    size_t last = size_t(sp.hidden.empty() ? sp.input_dim : sp.hidden.back()) + 1;
    for (size_t k = p.size() - last; k < p.size(); ++k) p[k] *= 0.1;
    net.set_params(p);
  }
  std::vector<double> zeros(size_t(n), 0.0);
  const double base = mixer.mix_one(zeros.data());
  if (mixer.n_params() > 0) {
    auto mp = mixer.get_params();
    // both parametrized kinds keep an additive output bias: first slot for
    // the linear mixer, last slot for the two-layer one
    size_t slot = cfg.mixer == approx::MixerKind::Linear ? 0 : mp.size() - 1;
    mp[slot] += 0.5 - base;
    mixer.set_params(mp);
  } else {
    for (auto& net : locals) {
      auto p = net.get_params();
      p.back() += (0.5 - base) / n;
      net.set_params(p);
    }
  }
}

double DiscModel::c_value(const std::vector<int>& obs,
                          const std::vector<int>& acts) const {
  std::vector<double> outs(locals.size());
  std::vector<double> x;
  for (size_t i = 0; i < locals.size(); ++i) {
    x.assign(size_t(n_obs[i]) + n_actions[i], 0.0);
    fill_features(x, 0, n_obs[i], n_actions[i], obs[i], acts[i]);
    outs[i] = locals[i].predict_one(x.data());
  }
  double c = mixer.mix_one(outs.data());
  return std::clamp(c, clip_eps, 1.0 - clip_eps);
}

double log_ratio_of_c(double c, double eps, double L) {
  c = std::clamp(c, eps, 1.0 - eps);
  return std::clamp(std::log(c / (1.0 - c)), -L, L);
}

double log_ratio(const DiscModel& model, const std::vector<int>& obs,
                 const std::vector<int>& acts) {
  return log_ratio_of_c(model.c_value(obs, acts), model.clip_eps, model.clip_L);
}

double disc_loss(DiscModel& model, const data::TransitionView& view_e,
                 const std::vector<int>& rows_e, const data::TransitionView& view_u,
                 const std::vector<int>& rows_u, bool with_grad) {
  if (rows_e.empty() || rows_u.empty()) throw RatioError("empty batch");
  const int n = model.n_agents();
  const int be = int(rows_e.size()), bu = int(rows_u.size());
  const int b = be + bu;

  // stacked forward through each local net, then the mixer
  std::vector<double> mix_in(size_t(b) * n);
  std::vector<double> x, y;
  for (int i = 0; i < n; ++i) {
    int d = model.n_obs[i] + model.n_actions[i];
    x.assign(size_t(b) * d, 0.0);
    for (int r = 0; r < be; ++r)
      fill_features(x, size_t(r) * d, model.n_obs[i], model.n_actions[i],
                    view_e.obs[rows_e[r]][i], view_e.acts[rows_e[r]][i]);
    for (int r = 0; r < bu; ++r)
      fill_features(x, size_t(be + r) * d, model.n_obs[i], model.n_actions[i],
                    view_u.obs[rows_u[r]][i], view_u.acts[rows_u[r]][i]);
    model.locals[i].forward(x, b, y);
    for (int r = 0; r < b; ++r) mix_in[size_t(r) * n + i] = y[r];
  }
  std::vector<double> c;
  model.mixer.forward(mix_in, b, c);

  double loss = 0.0;
  std::vector<double> dc(b);
  const double eps = model.clip_eps;
  for (int r = 0; r < b; ++r) {
    double cc = std::clamp(c[r], eps, 1.0 - eps);
    if (r < be) {
      loss -= std::log(cc) / be;
      dc[r] = -1.0 / (cc * be);  // straight through the clip
    } else {
      loss -= std::log(1.0 - cc) / bu;
      dc[r] = 1.0 / ((1.0 - cc) * bu);
    }
  }
  if (with_grad) {
    std::vector<double> d_mix_in;
    model.mixer.backward(dc, &d_mix_in);
    std::vector<double> dy(b);
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < b; ++r) dy[r] = d_mix_in[size_t(r) * n + i];
      model.locals[i].backward(dy, nullptr);
    }
  }
  return loss;
}

DiscModel train_discriminator(const data::TransitionView& view_e,
                              const data::TransitionView& view_u,
                              const DiscConfig& cfg, metrics::Sink* sink) {
  if (view_e.n_obs != view_u.n_obs || view_e.n_actions != view_u.n_actions)
    throw RatioError("views disagree on agent dims");
  DiscModel model(view_e.n_obs, view_e.n_actions, cfg);
  approx::AdamConfig ac;
  ac.lr = cfg.lr;
  approx::Adam adam(ac);
  std::vector<approx::ParamView> params;
  for (auto& l : model.locals)
    for (auto& p : l.params()) params.push_back(p);
  for (auto& p : model.mixer.params()) params.push_back(p);
  adam.attach(params);

  Rng batch_rng(mix_seed(cfg.seed, 0x6261ul));
  std::vector<int> rows_e(cfg.batch), rows_u(cfg.batch);
  for (int step = 0; step < cfg.steps; ++step) {
    for (int& r : rows_e) r = view_e.sample_row(batch_rng);
    for (int& r : rows_u) r = view_u.sample_row(batch_rng);
    for (auto& l : model.locals) l.zero_grad();
    model.mixer.zero_grad();
    double loss = disc_loss(model, view_e, rows_e, view_u, rows_u, true);
    if (!std::isfinite(loss))
      throw RatioError("discriminator loss diverged at step " +
                       std::to_string(step));
    adam.step();
    if (sink && (step % 50 == 0 || step == cfg.steps - 1))
      sink->add("disc", step, "loss", loss);
  }
  return model;
}

std::vector<double> joint_counts(const data::TransitionView& view) {
  std::vector<double> counts(size_t(view.n_joint_obs()) * view.n_joint_acts(), 0.0);
  for (int r = 0; r < view.n_rows(); ++r) {
    int k = view.joint_obs_key(view.obs[r]) * view.n_joint_acts() +
            view.joint_act_key(view.acts[r]);
    counts[k] += view.weight[r];
  }
  return counts;
}

bool TabularC::defined(int idx) const { return !std::isnan(c.at(size_t(idx))); }

double TabularC::value(int idx) const {
  double v = c.at(size_t(idx));
  if (std::isnan(v)) throw RatioError("c* undefined: cell unseen in both datasets");
  return v;
}

TabularC tabular_optimal_c(const std::vector<double>& counts_e,
                           const std::vector<double>& counts_u, int n_obs_keys,
                           int n_act_keys) {
  if (counts_e.size() != counts_u.size() ||
      counts_e.size() != size_t(n_obs_keys) * n_act_keys)
    throw RatioError("count tables sized wrong");
  double tot_e = 0.0, tot_u = 0.0;
  for (double v : counts_e) {
    if (v < 0.0) throw RatioError("negative count");
    tot_e += v;
  }
  for (double v : counts_u) {
    if (v < 0.0) throw RatioError("negative count");
    tot_u += v;
  }
  if (tot_e <= 0.0 || tot_u <= 0.0) throw RatioError("empty count table");
  TabularC out;
  out.n_obs_keys = n_obs_keys;
  out.n_act_keys = n_act_keys;
  out.c.resize(counts_e.size());
  for (size_t i = 0; i < counts_e.size(); ++i) {
    double pe = counts_e[i] / tot_e, pu = counts_u[i] / tot_u;
    if (pe == 0.0 && pu == 0.0)
      out.c[i] = std::nan("");
    else
      out.c[i] = pe / (pe + pu);
  }
  return out;
}

double disc_objective_from_raws(const std::vector<std::vector<double>>& raws_e,
                                const std::vector<std::vector<double>>& raws_u,
                                const std::vector<double>& eta) {
  if (raws_e.empty() || raws_u.empty()) throw RatioError("empty batch");
  size_t n = raws_e.front().size();
  if (eta.size() != n + 1) throw RatioError("eta sized wrong");
  auto mix = [&](const std::vector<double>& raw) {
    double c = eta[0];
    for (size_t i = 0; i < n; ++i) c += eta[1 + i] * raw[i];
    return c;
  };
  double j = 0.0;
  for (const auto& raw : raws_e) j += std::log(mix(raw)) / double(raws_e.size());
  for (const auto& raw : raws_u)
    j += std::log(1.0 - mix(raw)) / double(raws_u.size());
  return j;  // NaN outside (0,1); probes must stay interior
}

}  // namespace miso::ratio
