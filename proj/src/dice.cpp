#include "dice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rng.hpp"

namespace miso::dice {

namespace {

approx::ApproxSpec local_spec(int n_obs, const ValueConfig& cfg) {
  approx::ApproxSpec s;
  s.input_dim = n_obs;
  s.hidden = cfg.hidden;
  s.output_dim = 1;
  return s;
}

}  // namespace

ValueModel::ValueModel(const std::vector<int>& n_obs_in, const ValueConfig& cfg)
    : mixer(cfg.mixer, int(n_obs_in.size()), cfg.mixer_hidden,
            mix_seed(cfg.seed, 0x7075ul)),
      n_obs(n_obs_in),
      alpha(cfg.alpha),
      gamma(cfg.gamma) {
  if (n_obs.empty()) throw DiceError("value model needs at least one agent");
  if (alpha < 0) throw DiceError("alpha must be nonnegative");
  locals.reserve(n_obs.size());
  for (size_t i = 0; i < n_obs.size(); ++i)
    locals.emplace_back(local_spec(n_obs[i], cfg), mix_seed(cfg.seed, 0x200 + i));
}

double ValueModel::nu_tot(const std::vector<int>& obs) const {
  std::vector<double> vals(locals.size());
  std::vector<double> x;
  for (size_t i = 0; i < locals.size(); ++i) {
    x.assign(size_t(n_obs[i]), 0.0);
    x[obs[i]] = 1.0;
    vals[i] = locals[i].predict_one(x.data());
  }
  return mixer.mix_one(vals.data());
}

double advantage(const ValueModel& model, double log_ratio,
                 const std::vector<int>& obs, const std::vector<int>& next_obs,
                 bool terminal) {
  double next = terminal ? 0.0 : model.nu_tot(next_obs);
  return log_ratio + model.gamma * next - model.nu_tot(obs);
}

double weight(double A, double alpha) {
  return std::exp(A / (1.0 + alpha) - 1.0);
}

WeightedBatch make_batch(const data::TransitionView& view,
                         const std::vector<int>& rows,
                         const ratio::DiscModel& disc) {
  WeightedBatch b;
  b.rows.reserve(rows.size());
  for (int r : rows) {
    WeightedRow row;
    row.obs = view.obs[r];
    row.acts = view.acts[r];
    row.next_obs = view.next_obs[r];
    row.terminal = view.terminal[r] != 0;
    row.log_ratio = ratio::log_ratio(disc, row.obs, row.acts);
    b.rows.push_back(std::move(row));
  }
  return b;
}

void annotate(WeightedBatch& batch, const ValueModel& model) {
  for (auto& r : batch.rows) {
    r.A = advantage(model, r.log_ratio, r.obs, r.next_obs, r.terminal);
    r.w = weight(r.A, model.alpha);
  }
}

double value_loss(ValueModel& model, const WeightedBatch& batch,
                  const std::vector<std::vector<int>>& init_obs, bool with_grad,
                  bool literal) {
  const int B = int(batch.rows.size());
  const int BI = int(init_obs.size());
  if (B == 0 || BI == 0)
    throw DiceError("value loss needs transition and initial rows");
  const int n = model.n_agents();
  const double ap1 = 1.0 + model.alpha;
  const double gamma = model.gamma;

  // one stacked forward: [obs rows | non-terminal next rows | init rows]
  std::vector<int> next_slot(B, -1);
  int n_next = 0;
  for (int b = 0; b < B; ++b)
    if (!batch.rows[b].terminal) next_slot[b] = B + n_next++;
  const int total = B + n_next + BI;

  std::vector<double> mix_in(size_t(total) * n);
  std::vector<double> x, y;
  for (int i = 0; i < n; ++i) {
    const int d = model.n_obs[i];
    x.assign(size_t(total) * d, 0.0);
    auto put = [&](int slot, int o) { x[size_t(slot) * d + o] = 1.0; };
    for (int b = 0; b < B; ++b) {
      put(b, batch.rows[b].obs[i]);
      if (next_slot[b] >= 0) put(next_slot[b], batch.rows[b].next_obs[i]);
    }
    for (int j = 0; j < BI; ++j) put(B + n_next + j, init_obs[j][i]);
    model.locals[i].forward(x, total, y);
    for (int t = 0; t < total; ++t) mix_in[size_t(t) * n + i] = y[t];
  }
  std::vector<double> nu;
  model.mixer.forward(mix_in, total, nu);

  std::vector<double> dA(B);
  double term = 0.0;
  int bad = -1;
  for (int b = 0; b < B; ++b) {
    const auto& r = batch.rows[b];
    double next = next_slot[b] >= 0 ? nu[next_slot[b]] : 0.0;
    double A = r.log_ratio + gamma * next - nu[b];
    double w = std::exp(A / ap1 - 1.0);
    // literal keeps the inner objective unsubstituted: w*(A - (1+alpha) log w*)
    term += literal ? w * (A - ap1 * std::log(w)) : ap1 * w;
    dA[b] = w / B;  // same derivative either way (w* is the inner stationary point)
    if (bad < 0 && !std::isfinite(term)) bad = b;
  }
  double init_term = 0.0;
  for (int j = 0; j < BI; ++j) init_term += nu[B + n_next + j];
  double loss = (1.0 - gamma) * init_term / BI + term / B;
  if (!std::isfinite(loss) && bad >= 0)
    throw DiceError("non-finite value loss at batch row " + std::to_string(bad));

  if (with_grad) {
    std::vector<double> dnu(total, 0.0);
    for (int b = 0; b < B; ++b) {
      dnu[b] -= dA[b];
      if (next_slot[b] >= 0) dnu[next_slot[b]] += gamma * dA[b];
    }
    for (int j = 0; j < BI; ++j) dnu[B + n_next + j] += (1.0 - gamma) / BI;
    std::vector<double> dmix;
    model.mixer.backward(dnu, &dmix);
    std::vector<double> dy(total);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < total; ++t) dy[t] = dmix[size_t(t) * n + i];
      model.locals[i].backward(dy, nullptr);
    }
  }
  return loss;
}

ValueModel train_values(const data::TransitionView& view_e,
                        const data::TransitionView& view_u,
                        const ratio::DiscModel& disc, const ValueConfig& cfg,
                        metrics::Sink* sink) {
  if (view_u.n_rows() == 0) throw DiceError("empty transition view");
  if (view_u.init_obs.empty()) throw DiceError("view has no initial rows");
  if (view_e.n_obs != view_u.n_obs)
    throw DiceError("views disagree on agent dims");
  ValueModel model(view_u.n_obs, cfg);

  approx::AdamConfig ac;
  ac.lr = cfg.lr;
  approx::Adam adam(ac);
  std::vector<approx::ParamView> params;
  for (auto& l : model.locals)
    for (auto& p : l.params()) params.push_back(p);
  for (auto& p : model.mixer.params()) params.push_back(p);
  adam.attach(params);

  Rng batch_rng(mix_seed(cfg.seed, 0x7661ul));
  std::vector<int> rows(cfg.batch);
  std::vector<std::vector<int>> inits(cfg.batch);
  for (int step = 0; step < cfg.steps; ++step) {
    for (int& r : rows) r = view_u.sample_row(batch_rng);
    for (auto& o : inits)
      o = view_u.init_obs[batch_rng.below(view_u.init_obs.size())];
    WeightedBatch batch = make_batch(view_u, rows, disc);
    for (auto& l : model.locals) l.zero_grad();
    model.mixer.zero_grad();
    double loss = value_loss(model, batch, inits, true);
    if (!std::isfinite(loss))
      throw DiceError("value loss diverged at step " + std::to_string(step));
    adam.step();
    if (sink && (step % 50 == 0 || step == cfg.steps - 1)) {
      annotate(batch, model);
      double mw = 0.0, ma = 0.0;
      for (auto& r : batch.rows) {
        mw += r.w;
        ma += r.A;
      }
      sink->add("value", step, "loss", loss);
      sink->add("value", step, "mean_w", mw / batch.rows.size());
      sink->add("value", step, "mean_A", ma / batch.rows.size());
    }
  }
  // where the mass lands: mean weight over the identified-expert rows vs all
  if (sink && view_e.n_rows() > 0) {
    std::vector<int> all_e(view_e.n_rows());
    for (int r = 0; r < view_e.n_rows(); ++r) all_e[r] = r;
    WeightedBatch be = make_batch(view_e, all_e, disc);
    annotate(be, model);
    double mw = 0.0;
    for (int r = 0; r < view_e.n_rows(); ++r) mw += view_e.weight[r] * be.rows[r].w;
    sink->add("value", cfg.steps, "expert_mean_w", mw);
  }
  return model;
}

InnerMaxReport inner_max_report(double A, double alpha) {
  InnerMaxReport rep;
  const double ap1 = 1.0 + alpha;
  auto g = [&](double w) { return w * (A - ap1 * std::log(w)); };
  // bracket the maximizer on a power-of-two grid, then golden-section refine
  const int kmin = -60, kmax = 40;
  int best_k = kmin;
  double best_g = g(std::exp2(kmin));
  for (int k = kmin + 1; k <= kmax; ++k) {
    double v = g(std::exp2(k));
    if (v > best_g) {
      best_g = v;
      best_k = k;
    }
  }
  double a = std::exp2(std::max(best_k - 1, kmin));
  double b = std::exp2(std::min(best_k + 1, kmax));
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double gc = g(c), gd = g(d);
  for (int it = 0; it < 300 && b - a > 1e-13 * std::max(1.0, b); ++it) {
    if (gc > gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - phi * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + phi * (b - a);
      gd = g(d);
    }
  }
  rep.w_numeric = 0.5 * (a + b);
  rep.w_closed = weight(A, alpha);
  rep.rel_err = std::abs(rep.w_numeric - rep.w_closed) /
                std::max(1e-300, std::abs(rep.w_closed));
  rep.identity_err = std::abs(g(rep.w_closed) - ap1 * rep.w_closed);
  rep.ok = rep.rel_err < 1e-6;
  return rep;
}

bool inner_max_check(double A, double alpha) {
  return inner_max_report(A, alpha).ok;
}

}  // namespace miso::dice
