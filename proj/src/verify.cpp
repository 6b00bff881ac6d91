#include "verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "approx.hpp"
#include "baselines.hpp"
#include "dice.hpp"
#include "env.hpp"
#include "oracle.hpp"
#include "phase1.hpp"
#include "policy.hpp"
#include "preference.hpp"
#include "ratio.hpp"
#include "rng.hpp"

namespace miso::verify {

namespace {

template <typename F>
CheckResult guarded(const std::string& name, F&& body) {
  CheckResult r;
  r.name = name;
  auto t0 = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.pass = false;
    r.note = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                  .count();
  return r;
}

std::vector<int> decode_joint(int ja, int n_agents, int n_actions) {
  std::vector<int> acts(n_agents);
  for (int i = n_agents - 1; i >= 0; --i) {
    acts[i] = ja % n_actions;
    ja /= n_actions;
  }
  return acts;
}

// concatenated parameter get/set across a list of views into probe vectors
struct ParamSlices {
  std::vector<std::function<std::vector<double>()>> get;
  std::vector<std::function<void(const std::vector<double>&)>> set;
  std::vector<size_t> size;
  size_t total = 0;

  template <typename T>
  void add(T& owner) {
    get.push_back([&owner]() { return owner.get_params(); });
    set.push_back([&owner](const std::vector<double>& v) { owner.set_params(v); });
    size.push_back(owner.get_params().size());
    total += size.back();
  }
  void apply(const std::vector<double>& x) const {
    size_t at = 0;
    for (size_t k = 0; k < set.size(); ++k) {
      set[k](std::vector<double>(x.begin() + at, x.begin() + at + size[k]));
      at += size[k];
    }
  }
};

dice::WeightedBatch synth_batch(const std::vector<int>& n_obs, int rows,
                                Rng& rng) {
  dice::WeightedBatch b;
  b.rows.resize(rows);
  const int n = int(n_obs.size());
  for (auto& r : b.rows) {
    r.obs.resize(n);
    r.next_obs.resize(n);
    r.acts.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      r.obs[i] = int(rng.below(uint64_t(n_obs[i])));
      r.next_obs[i] = int(rng.below(uint64_t(n_obs[i])));
    }
    r.terminal = rng.uniform() < 0.15;
    r.log_ratio = rng.uniform(-1.5, 1.5);
  }
  return b;
}

std::vector<std::vector<int>> synth_init(const std::vector<int>& n_obs,
                                         int rows, Rng& rng) {
  std::vector<std::vector<int>> init(rows);
  for (auto& o : init) {
    o.resize(n_obs.size());
    for (size_t i = 0; i < n_obs.size(); ++i)
      o[i] = int(rng.below(uint64_t(n_obs[i])));
  }
  return init;
}

// ------------------------------------------------------------------ checks

CheckResult check_closed_form_weight(uint64_t seed) {
  return guarded("closed-form-weight", [&](CheckResult& r) {
    Rng rng(mix_seed(seed, 0x01));
    double worst = 0.0, worst_id = 0.0;
    bool ok = true;
    const double fixed[][2] = {{0.0, 0.0}, {3.0, 0.0}, {-3.0, 8.0}, {5.0, 0.01}};
    for (int k = 0; k < 100; ++k) {
      double A, alpha;
      if (k < 4) {
        A = fixed[k][0];
        alpha = fixed[k][1];
      } else {
        A = rng.uniform(-4.0, 4.0);
        alpha = rng.uniform(0.0, 4.0);
      }
      auto rep = dice::inner_max_report(A, alpha);
      worst = std::max(worst, rep.rel_err);
      worst_id = std::max(worst_id, rep.identity_err);
      ok = ok && rep.ok;
    }
    r.stat = worst;
    r.pass = ok && worst < 1e-6 && worst_id < 1e-8;
    std::ostringstream n;
    n << "max rel err " << worst << ", max identity err " << worst_id
      << " over 100 draws";
    r.note = n.str();
  });
}

CheckResult check_disc_closed_form(uint64_t seed) {
  return guarded("discriminator-closed-form", [&](CheckResult& r) {
    const auto ds_e = counts_dataset(2, 2, {7, 9, 11, 13});
    const auto ds_u = counts_dataset(2, 2, {13, 11, 9, 7});
    const auto view_e = data::TransitionView::build(ds_e, 0.99);
    const auto view_u = data::TransitionView::build(ds_u, 0.99);

    // analytic optimum per joint action, additive by construction
    const double c_star[4] = {0.35, 0.45, 0.55, 0.65};
    const auto me = ratio::joint_counts(view_e);
    const auto mu = ratio::joint_counts(view_u);
    const auto tab = ratio::tabular_optimal_c(me, mu, view_e.n_joint_obs(),
                                              view_e.n_joint_acts());
    double tab_err = 0.0;
    for (int ja = 0; ja < 4; ++ja)
      tab_err = std::max(tab_err, std::abs(tab.value(ja) - c_star[ja]));

    ratio::DiscConfig cfg;
    cfg.steps = 6000;
    cfg.batch = 512;
    cfg.lr = 1e-3;
    cfg.mixer = approx::MixerKind::Linear;
    cfg.hidden = {16};
    cfg.seed = mix_seed(seed, 0x02);
    auto model = ratio::train_discriminator(view_e, view_u, cfg);
    double train_err = 0.0;
    for (int ja = 0; ja < 4; ++ja) {
      auto acts = decode_joint(ja, 2, 2);
      train_err = std::max(
          train_err, std::abs(model.c_value({0, 0}, acts) - c_star[ja]));
    }
    const bool zero_mid = ratio::log_ratio_of_c(0.5, 1e-5, 10.0) == 0.0;
    r.stat = train_err;
    r.pass = tab_err < 1e-9 && train_err < 1e-2 && zero_mid;
    std::ostringstream n;
    n << "trained max cell err " << train_err << ", tabular err " << tab_err
      << ", log ratio at one half " << (zero_mid ? "exact zero" : "nonzero");
    r.note = n.str();
  });
}

// shared scaffolding for the value-loss probes: tabular potentials over a
// fixed synthetic batch; x is the concatenation of every parameter block
struct ValueProbe {
  dice::ValueModel model;
  dice::WeightedBatch batch;
  std::vector<std::vector<int>> init;
  ParamSlices slices;
  size_t local_span = 0;  // params of all per-agent nets, then the mixer

  ValueProbe(approx::MixerKind kind, int mixer_hidden, uint64_t seed)
      : model({3, 2}, value_cfg(kind, mixer_hidden, seed)) {
    Rng rng(mix_seed(seed, 0x11));
    batch = synth_batch({3, 2}, 16, rng);
    init = synth_init({3, 2}, 5, rng);
    for (auto& net : model.locals) slices.add(net);
    local_span = slices.total;
    slices.add(model.mixer);
  }
  static dice::ValueConfig value_cfg(approx::MixerKind kind, int mixer_hidden,
                                     uint64_t seed) {
    dice::ValueConfig vc;
    vc.mixer = kind;
    vc.hidden = {};  // tabular: potentials affine in the parameters
    vc.mixer_hidden = mixer_hidden;
    vc.alpha = 0.7;
    vc.gamma = 0.9;
    vc.seed = seed;
    return vc;
  }
  double loss(const std::vector<double>& x) {
    slices.apply(x);
    return dice::value_loss(model, batch, init, false);
  }
};

CheckResult check_value_convexity(uint64_t seed) {
  return guarded("value-convexity-linear", [&](CheckResult& r) {
    ValueProbe probe(approx::MixerKind::Linear, 0, mix_seed(seed, 0x10));
    const size_t D = probe.slices.total;
    const size_t span = probe.local_span;
    std::function<double(const std::vector<double>&)> loss =
        [&probe](const std::vector<double>& x) { return probe.loss(x); };
    // one parameter block per segment: either every local net or the mixer
    auto sampler = [D, span](Rng& rng, std::vector<double>& x,
                             std::vector<double>& y) {
      x.resize(D);
      y.resize(D);
      for (size_t i = 0; i < D; ++i) x[i] = y[i] = rng.uniform(-1.0, 1.0);
      const bool mixer_block = rng.below(2) == 1;
      const size_t lo = mixer_block ? span : 0;
      const size_t hi = mixer_block ? D : span;
      for (size_t i = lo; i < hi; ++i) {
        x[i] = rng.uniform(-1.0, 1.0);
        y[i] = rng.uniform(-1.0, 1.0);
      }
    };
    auto rep = approx::convexity_probe(loss, sampler, 1000, 1e-8,
                                       mix_seed(seed, 0x12));
    r.stat = double(rep.n_violations);
    r.pass = rep.n_violations == 0;
    std::ostringstream n;
    n << rep.n_violations << " violations in " << rep.n_segments
      << " blockwise segments, worst gap " << rep.worst_gap;
    r.note = n.str();
  });
}

CheckResult check_mixer_nonconvexity(uint64_t seed) {
  return guarded("value-nonconvexity-two-layer", [&](CheckResult& r) {
    ValueProbe probe(approx::MixerKind::TwoLayer, 3, mix_seed(seed, 0x13));
    const size_t D = probe.slices.total;
    std::function<double(const std::vector<double>&)> loss =
        [&probe](const std::vector<double>& x) { return probe.loss(x); };
    auto sampler = [D](Rng& rng, std::vector<double>& x, std::vector<double>& y) {
      x.resize(D);
      y.resize(D);
      for (size_t i = 0; i < D; ++i) {
        x[i] = rng.uniform(-1.0, 1.0);
        y[i] = rng.uniform(-1.0, 1.0);
      }
    };
    auto rep = approx::convexity_probe(loss, sampler, 1000, 1e-6,
                                       mix_seed(seed, 0x14));
    r.stat = double(rep.n_violations);
    r.pass = rep.n_violations >= 1;
    std::ostringstream n;
    n << rep.n_violations << " violations in " << rep.n_segments
      << " segments, worst gap " << rep.worst_gap;
    r.note = n.str();
  });
}

CheckResult check_disc_concavity(uint64_t seed) {
  return guarded("disc-concavity-linear", [&](CheckResult& r) {
    const int n = 2, rows = 4;
    const size_t d_raws = size_t(2 * rows * n);  // expert rows then union rows
    const size_t D = d_raws + n + 1;
    auto unpack = [&](const std::vector<double>& x,
                      std::vector<std::vector<double>>& re,
                      std::vector<std::vector<double>>& ru,
                      std::vector<double>& eta) {
      re.assign(rows, std::vector<double>(n));
      ru.assign(rows, std::vector<double>(n));
      size_t at = 0;
      for (int b = 0; b < rows; ++b)
        for (int i = 0; i < n; ++i) re[b][i] = x[at++];
      for (int b = 0; b < rows; ++b)
        for (int i = 0; i < n; ++i) ru[b][i] = x[at++];
      eta.assign(x.begin() + at, x.end());
    };
    auto loss = [&](const std::vector<double>& x) {
      std::vector<std::vector<double>> re, ru;
      std::vector<double> eta;
      unpack(x, re, ru, eta);
      return -ratio::disc_objective_from_raws(re, ru, eta);
    };
    // offsets near one half and small weights keep every mixed output
    // strictly interior at both endpoints; midpoints are then interior for
    // free since the mix is affine in whichever block the segment varies
    auto fill = [&](Rng& rng, std::vector<double>& x, size_t lo, size_t hi) {
      for (size_t i = lo; i < hi; ++i) {
        if (i < d_raws) x[i] = rng.uniform(-1.0, 1.0);
        else if (i == d_raws) x[i] = rng.uniform(0.35, 0.65);
        else x[i] = rng.uniform(-0.1, 0.1);
      }
    };
    auto sampler = [&](Rng& rng, std::vector<double>& x, std::vector<double>& y) {
      x.resize(D);
      fill(rng, x, 0, D);
      y = x;
      const bool eta_block = rng.below(2) == 1;
      const size_t lo = eta_block ? d_raws : 0;
      const size_t hi = eta_block ? D : d_raws;
      fill(rng, x, lo, hi);
      fill(rng, y, lo, hi);
    };
    auto rep = approx::convexity_probe(loss, sampler, 1000, 1e-8,
                                       mix_seed(seed, 0x15));
    r.stat = double(rep.n_violations);
    r.pass = rep.n_violations == 0;
    std::ostringstream note;
    note << rep.n_violations << " violations in " << rep.n_segments
         << " interior blockwise segments, worst gap " << rep.worst_gap;
    r.note = note.str();
  });
}

CheckResult check_local_global(uint64_t seed) {
  return guarded("local-global-consistency", [&](CheckResult& r) {
    double worst = 0.0;
    bool ok = true;
    std::ostringstream note;

    {
      const auto ds = counts_dataset(2, 2, {3, 5, 2, 6});
      const auto view = data::TransitionView::build(ds, 0.99);
      Rng rng(mix_seed(seed, 0x21));
      std::vector<double> w(view.n_rows());
      for (auto& v : w) v = std::exp(rng.uniform(-1.0, 1.0));
      auto rep = policy::consistency_check(view, w, mix_seed(seed, 0x22), 8);
      worst = std::max(worst, rep.max_dev);
      ok = ok && rep.ok;
      note << "single-state dev " << rep.max_dev;
    }
    {
      env::EnvConfig ec;
      ec.family = "team-chain";
      ec.n_agents = 2;
      ec.length = 3;
      ec.discount = 0.9;
      const auto mdp = env::build_benchmark(ec);
      const auto pol = env::degrade(env::solve_expert(mdp, 1e-10), 0.5);
      data::Dataset ds;
      ds.n_agents = mdp.n_agents;
      ds.n_obs = mdp.n_obs;
      ds.n_actions = mdp.n_actions;
      ds.provenance = "consistency fixture";
      for (int i = 0; i < 30; ++i) {
        auto t = env::rollout(mdp, pol, 5, mix_seed(mix_seed(seed, 0x23), i));
        t.traj_id = i;
        ds.trajectories.push_back(std::move(t));
      }
      const auto view = data::TransitionView::build(ds, 0.9);
      Rng rng(mix_seed(seed, 0x24));
      std::vector<double> w(view.n_rows());
      for (auto& v : w) v = std::exp(rng.uniform(-1.0, 1.0));
      auto rep = policy::consistency_check(view, w, mix_seed(seed, 0x25), 8);
      worst = std::max(worst, rep.max_dev);
      ok = ok && rep.ok;
      note << ", chain dev " << rep.max_dev;
    }
    r.stat = worst;
    r.pass = ok && worst < 1e-6;
    r.note = note.str();
  });
}

CheckResult check_policy_closed_form(uint64_t) {
  return guarded("policy-closed-form", [&](CheckResult& r) {
    // product-measure counts with exact binary marginals
    const std::vector<double> mu1 = {0.25, 0.75}, mu2 = {0.5, 0.5};
    std::vector<int> counts(4);
    for (int a1 = 0; a1 < 2; ++a1)
      for (int a2 = 0; a2 < 2; ++a2)
        counts[a1 * 2 + a2] = int(16.0 * mu1[a1] * mu2[a2]);
    const auto ds = counts_dataset(2, 2, counts);
    const auto view = data::TransitionView::build(ds, 0.99);

    policy::ClosedFormInputs in;
    in.n_obs = {1, 1};
    in.n_actions = {2, 2};
    in.q = {{0.3, -0.8}, {-0.5, 1.1}};
    in.mu = {mu1, mu2};
    in.phi = {0.7, 1.3};
    in.alpha = 0.5;
    const double phi0 = 0.2;

    std::vector<double> w(view.n_rows());
    for (int rr = 0; rr < view.n_rows(); ++rr) {
      const auto& a = view.acts[rr];
      double A = phi0 + in.phi[0] * in.q[0][a[0]] + in.phi[1] * in.q[1][a[1]];
      w[rr] = std::exp(A / (1.0 + in.alpha) - 1.0);
    }
    double worst = 0.0;
    for (int i = 0; i < 2; ++i) {
      const auto closed = policy::closed_form_local(in, i, 0);
      const auto tab = policy::tabular_wbc_local(view, w, i);
      for (int a = 0; a < 2; ++a)
        worst = std::max(worst, std::abs(closed[a] - tab[0][a]));
    }
    // zero mixer weight hands back the behavior marginal bit for bit
    auto in0 = in;
    in0.phi[0] = 0.0;
    const auto back = policy::closed_form_local(in0, 0, 0);
    const bool exact = back[0] == mu1[0] && back[1] == mu1[1];

    r.stat = worst;
    r.pass = worst < 1e-6 && exact;
    std::ostringstream n;
    n << "max closed-vs-count dev " << worst << ", zero-weight marginal "
      << (exact ? "exact" : "off");
    r.note = n.str();
  });
}

CheckResult check_oracle_duality(uint64_t) {
  return guarded("oracle-duality", [&](CheckResult& r) {
    std::vector<env::EnvConfig> envs(3);
    envs[0].family = "matrix-repeat";
    envs[0].n_agents = 2;
    envs[0].n_actions = 2;
    envs[0].discount = 0.9;
    envs[1].family = "team-chain";
    envs[1].n_agents = 2;
    envs[1].length = 4;
    envs[1].discount = 0.9;
    envs[2].family = "team-grid";
    envs[2].n_agents = 2;
    envs[2].grid = 2;
    envs[2].slip = 0.1;
    envs[2].discount = 0.9;

    double worst = 0.0;
    int solves = 0;
    for (const auto& ec : envs) {
      const auto mdp = env::build_benchmark(ec);
      const auto expert = env::solve_expert(mdp, 1e-10);
      const auto rho_e = oracle::exact_occupancy(mdp, env::degrade(expert, 0.15));
      const auto rho_u = oracle::exact_occupancy(mdp, env::degrade(expert, 0.8));
      for (double alpha : {0.05, 2.0}) {
        auto res = oracle::solve_dice_exact(mdp, rho_e, rho_u, alpha);
        worst = std::max(worst, res.gap);
        ++solves;
      }
    }
    r.stat = worst;
    r.pass = worst < 1e-6;
    std::ostringstream n;
    n << "max duality gap " << worst << " over " << solves
      << " solves on three families";
    r.note = n.str();
  });
}

CheckResult check_trained_ratio(uint64_t seed) {
  return guarded("trained-ratio-vs-oracle", [&](CheckResult& r) {
    const double alpha = 0.5;
    const auto ds_e = counts_dataset(2, 2, {7, 9, 11, 13});
    const auto ds_u = counts_dataset(2, 2, {13, 11, 9, 7});

    env::EnvConfig ec;
    ec.family = "matrix-repeat";
    ec.n_agents = 2;
    ec.n_actions = 2;
    ec.discount = 0.99;
    const auto mdp = env::build_benchmark(ec);
    std::vector<double> rho_e(4), rho_u(4);
    for (int ja = 0; ja < 4; ++ja) {
      rho_e[ja] = std::vector<double>{7, 9, 11, 13}[ja] / 40.0;
      rho_u[ja] = std::vector<double>{13, 11, 9, 7}[ja] / 40.0;
    }
    const auto exact = oracle::solve_dice_exact(mdp, rho_e, rho_u, alpha);

    const auto view_e = data::TransitionView::build(ds_e, 0.99);
    const auto view_u = data::TransitionView::build(ds_u, 0.99);
    ratio::DiscConfig dc;
    dc.steps = 10000;
    dc.batch = 512;
    dc.lr = 1e-3;
    dc.mixer = approx::MixerKind::Linear;
    dc.hidden = {16};
    dc.seed = mix_seed(seed, 0x31);
    const auto disc = ratio::train_discriminator(view_e, view_u, dc);

    dice::ValueConfig vc;
    vc.steps = 10000;
    vc.batch = 512;
    vc.lr = 1e-3;
    vc.mixer = approx::MixerKind::Linear;
    vc.hidden = {};
    vc.alpha = alpha;
    vc.gamma = 0.99;
    vc.seed = mix_seed(seed, 0x32);
    const auto vm = dice::train_values(view_e, view_u, disc, vc);

    const double nu = vm.nu_tot({0, 0});
    std::vector<double> p(4), q(4);
    double ps = 0.0, qs = 0.0;
    for (int ja = 0; ja < 4; ++ja) {
      const auto acts = decode_joint(ja, 2, 2);
      const double A = ratio::log_ratio(disc, {0, 0}, acts) + vc.gamma * nu - nu;
      p[ja] = rho_u[ja] * dice::weight(A, alpha);
      q[ja] = rho_u[ja] * exact.w[ja];
      ps += p[ja];
      qs += q[ja];
    }
    double tv = 0.0;
    for (int ja = 0; ja < 4; ++ja) tv += std::abs(p[ja] / ps - q[ja] / qs);
    tv *= 0.5;
    r.stat = tv;
    r.pass = tv < 1e-2 && exact.gap < 1e-6;
    std::ostringstream n;
    n << "total variation to oracle ratio " << tv << ", oracle gap "
      << exact.gap;
    r.note = n.str();
  });
}

CheckResult check_gradients(uint64_t seed) {
  return guarded("gradient-checks", [&](CheckResult& r) {
    double worst = 0.0;
    std::ostringstream note;

    {  // classification loss, linear mixer pinned interior so the clip sleeps
      const auto ds_e = counts_dataset(2, 2, {3, 4, 5, 4});
      const auto ds_u = counts_dataset(2, 2, {5, 4, 3, 4});
      const auto view_e = data::TransitionView::build(ds_e, 0.9);
      const auto view_u = data::TransitionView::build(ds_u, 0.9);
      ratio::DiscConfig dc;
      dc.mixer = approx::MixerKind::Linear;
      dc.hidden = {5};
      dc.seed = mix_seed(seed, 0x41);
      ratio::DiscModel model(view_e.n_obs, view_e.n_actions, dc);
      for (auto& net : model.locals) {
        auto p = net.get_params();
        for (auto& v : p) v *= 0.4;
        net.set_params(p);
      }
      model.mixer.set_params({0.5, 0.15, 0.15});
      std::vector<int> rows_e, rows_u;
      for (int i = 0; i < std::min(8, view_e.n_rows()); ++i) rows_e.push_back(i);
      for (int i = 0; i < std::min(8, view_u.n_rows()); ++i) rows_u.push_back(i);
      for (int i : rows_e) {
        double c = model.c_value(view_e.obs[i], view_e.acts[i]);
        if (c < 0.05 || c > 0.95) throw std::runtime_error("clip region hit");
      }
      std::vector<approx::ParamView> views;
      for (auto& net : model.locals)
        for (auto& pv : net.params()) views.push_back(pv);
      for (auto& pv : model.mixer.params()) views.push_back(pv);
      auto eval = [&](bool g) {
        if (g) {
          for (auto& net : model.locals) net.zero_grad();
          model.mixer.zero_grad();
        }
        return ratio::disc_loss(model, view_e, rows_e, view_u, rows_u, g);
      };
      auto rep = approx::grad_check(eval, views);
      worst = std::max(worst, rep.max_rel_err);
      note << "disc " << rep.max_rel_err;
    }

    for (bool literal : {false, true}) {  // potential loss, two-layer mixer
      dice::ValueConfig vcfg;
      vcfg.mixer = approx::MixerKind::TwoLayer;
      vcfg.hidden = {4};
      vcfg.mixer_hidden = 3;
      vcfg.alpha = 0.6;
      vcfg.gamma = 0.9;
      vcfg.seed = mix_seed(seed, 0x42);
      dice::ValueModel model({3, 2}, vcfg);
      auto shrink = [](auto& owner) {
        auto p = owner.get_params();
        for (auto& v : p) v *= 0.5;
        owner.set_params(p);
      };
      for (auto& net : model.locals) shrink(net);
      shrink(model.mixer);
      Rng rng(mix_seed(seed, 0x43));
      auto batch = synth_batch({3, 2}, 10, rng);
      auto init = synth_init({3, 2}, 4, rng);
      std::vector<approx::ParamView> views;
      for (auto& net : model.locals)
        for (auto& pv : net.params()) views.push_back(pv);
      for (auto& pv : model.mixer.params()) views.push_back(pv);
      auto eval = [&](bool g) {
        if (g) {
          for (auto& net : model.locals) net.zero_grad();
          model.mixer.zero_grad();
        }
        return dice::value_loss(model, batch, init, g, literal);
      };
      auto rep = approx::grad_check(eval, views);
      worst = std::max(worst, rep.max_rel_err);
      note << (literal ? ", value-literal " : ", value ") << rep.max_rel_err;
    }

    {  // weighted behavior cloning
      policy::LocalPolicySet ps({3, 2}, {2, 3}, {4}, mix_seed(seed, 0x44));
      Rng rng(mix_seed(seed, 0x45));
      dice::WeightedBatch batch;
      batch.rows.resize(12);
      for (auto& row : batch.rows) {
        row.obs = {int(rng.below(3)), int(rng.below(2))};
        row.acts = {int(rng.below(2)), int(rng.below(3))};
        row.next_obs = row.obs;
        row.w = std::exp(rng.uniform(-1.0, 1.0));
      }
      std::vector<approx::ParamView> views;
      for (auto& net : ps.nets)
        for (auto& pv : net.params()) views.push_back(pv);
      auto eval = [&](bool g) {
        if (g)
          for (auto& net : ps.nets) net.zero_grad();
        return policy::wbc_loss(ps, batch, g);
      };
      auto rep = approx::grad_check(eval, views);
      worst = std::max(worst, rep.max_rel_err);
      note << ", wbc " << rep.max_rel_err;
    }

    {  // cloning mixture with beta
      const auto ds_e = counts_dataset(2, 2, {4, 2, 3, 5});
      const auto ds_u = counts_dataset(2, 2, {2, 5, 4, 3});
      const auto view_e = data::TransitionView::build(ds_e, 0.9);
      const auto view_u = data::TransitionView::build(ds_u, 0.9);
      policy::LocalPolicySet ps({1, 1}, {2, 2}, {4}, mix_seed(seed, 0x46));
      std::vector<int> rows_e = {0, 3, 6, 9}, rows_u = {1, 4, 7, 10};
      std::vector<approx::ParamView> views;
      for (auto& net : ps.nets)
        for (auto& pv : net.params()) views.push_back(pv);
      auto eval = [&](bool g) {
        if (g)
          for (auto& net : ps.nets) net.zero_grad();
        return baselines::bc_loss(ps, view_e, rows_e, view_u, rows_u, 0.3, g);
      };
      auto rep = approx::grad_check(eval, views);
      worst = std::max(worst, rep.max_rel_err);
      note << ", bc " << rep.max_rel_err;
    }

    {  // preference fit
      data::Dataset ds;
      ds.n_agents = 2;
      ds.n_obs = {2, 3};
      ds.n_actions = {2, 2};
      ds.provenance = "grad fixture";
      Rng rng(mix_seed(seed, 0x47));
      for (int id = 0; id < 4; ++id) {
        data::Trajectory t;
        t.traj_id = id;
        for (int s = 0; s < 3; ++s) {
          data::Step st;
          st.obs = {int(rng.below(2)), int(rng.below(3))};
          st.acts = {int(rng.below(2)), int(rng.below(2))};
          t.steps.push_back(st);
        }
        ds.trajectories.push_back(std::move(t));
      }
      std::vector<pref::PreferencePair> prefs;
      const int64_t ids[][2] = {{0, 1}, {2, 3}, {0, 2}, {1, 3}, {0, 3}};
      for (int k = 0; k < 5; ++k) {
        pref::PreferencePair p;
        p.id_a = ids[k][0];
        p.id_b = ids[k][1];
        p.label = k % 2 == 0 ? pref::Label::First : pref::Label::Second;
        prefs.push_back(p);
      }
      std::vector<const pref::PreferencePair*> batch;
      for (const auto& p : prefs) batch.push_back(&p);
      phase1::Phase1Config pc;
      pc.hidden = {4};
      pc.gamma = 0.9;
      pc.seed = mix_seed(seed, 0x48);
      phase1::PrefQVModel model(ds.n_obs, ds.n_actions, pc);
      const auto table = phase1::observed_joint_actions(ds);
      std::vector<approx::ParamView> views;
      for (auto& net : model.q_nets)
        for (auto& pv : net.params()) views.push_back(pv);
      for (auto& net : model.v_nets)
        for (auto& pv : net.params()) views.push_back(pv);
      for (auto& pv : model.q_mixer.params()) views.push_back(pv);
      for (auto& pv : model.v_mixer.params()) views.push_back(pv);
      auto eval = [&](bool g) {
        if (g) {
          for (auto& net : model.q_nets) net.zero_grad();
          for (auto& net : model.v_nets) net.zero_grad();
          model.q_mixer.zero_grad();
          model.v_mixer.zero_grad();
        }
        return phase1::pref_batch_loss(model, ds, table, batch, 0.25, g);
      };
      auto rep = approx::grad_check(eval, views);
      worst = std::max(worst, rep.max_rel_err);
      note << ", pref " << rep.max_rel_err;
    }

    r.stat = worst;
    r.pass = worst < 1e-4;
    r.note = "max rel err per loss: " + note.str();
  });
}

}  // namespace

data::Dataset counts_dataset(int n_agents, int n_actions,
                             const std::vector<int>& counts) {
  int cells = 1;
  for (int i = 0; i < n_agents; ++i) cells *= n_actions;
  if (int(counts.size()) != cells)
    throw std::invalid_argument("counts must cover every joint action");
  data::Dataset ds;
  ds.n_agents = n_agents;
  ds.n_obs.assign(n_agents, 1);
  ds.n_actions.assign(n_agents, n_actions);
  ds.provenance = "exact-count fixture";
  int64_t id = 0;
  for (int ja = 0; ja < cells; ++ja) {
    const auto acts = decode_joint(ja, n_agents, n_actions);
    for (int k = 0; k < counts[ja]; ++k) {
      data::Trajectory t;
      t.traj_id = id++;
      data::Step s0;
      s0.obs.assign(n_agents, 0);
      s0.acts = acts;
      data::Step s1;
      s1.obs.assign(n_agents, 0);
      s1.acts.assign(n_agents, 0);
      t.steps = {s0, s1};  // second step only closes the transition
      ds.trajectories.push_back(std::move(t));
    }
  }
  ds.validate();
  return ds;
}

std::vector<CheckResult> run_all(uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(check_closed_form_weight(seed));
  out.push_back(check_disc_closed_form(seed));
  out.push_back(check_value_convexity(seed));
  out.push_back(check_mixer_nonconvexity(seed));
  out.push_back(check_disc_concavity(seed));
  out.push_back(check_local_global(seed));
  out.push_back(check_policy_closed_form(seed));
  out.push_back(check_oracle_duality(seed));
  out.push_back(check_trained_ratio(seed));
  out.push_back(check_gradients(seed));
  return out;
}

bool all_pass(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return !results.empty();
}

std::string render(const std::vector<CheckResult>& results) {
  std::ostringstream out;
  size_t width = 0;
  for (const auto& r : results) width = std::max(width, r.name.size());
  for (const auto& r : results) {
    out << (r.pass ? "[PASS] " : "[FAIL] ") << r.name;
    for (size_t i = r.name.size(); i < width + 2; ++i) out << ' ';
    out << r.note << "\n";
  }
  int passed = 0;
  for (const auto& r : results) passed += r.pass ? 1 : 0;
  out << passed << "/" << results.size() << " checks passed";
  return out.str();
}

}  // namespace miso::verify
