#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "approx.hpp"
#include "metrics.hpp"
#include "phase1.hpp"
#include "preference.hpp"
#include "rng.hpp"

namespace miso::pipeline {

namespace fs = std::filesystem;

// Seed streams, one tag per pipeline stage so that commands can be rerun or
// reordered without disturbing each other.
namespace tag {
constexpr uint64_t kExpertTraj = 0x6764;
constexpr uint64_t kPoorTraj = 0x706f;
constexpr uint64_t kPairs = 0x7072;
constexpr uint64_t kNoisy = 0x6e6f;
constexpr uint64_t kPhase1 = 0x7031;
constexpr uint64_t kDisc = 0x64697363;
constexpr uint64_t kValue = 0x76616c;
constexpr uint64_t kPolicy = 0x706f6c;
constexpr uint64_t kEval = 0x6576;
}  // namespace tag

std::string dataset_file(const std::string& out_dir) {
  return out_dir + "/dataset.bin";
}
std::string manifest_file(const std::string& out_dir) {
  return out_dir + "/manifest.txt";
}
std::string checkpoint_file(const std::string& out_dir) {
  return out_dir + "/policy.ckpt";
}
std::string metrics_file(const std::string& out_dir) {
  return out_dir + "/metrics.csv";
}

static void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw PipelineError("cannot create directory " + dir + ": " + ec.message());
}

static std::string fmt(double v) { return metrics::format_double(v); }

// ---------------------------------------------------------------- building

data::Dataset generate_dataset(const config::RunConfig& cfg) {
  const auto mdp = env::build_benchmark(cfg.env);
  const auto expert_pol = env::solve_expert(mdp, 1e-10);
  const auto poor_pol = env::degrade(expert_pol, cfg.dataset.poor_eps);

  auto shell = [&](const char* note) {
    data::Dataset d;
    d.n_agents = mdp.n_agents;
    d.n_obs = mdp.n_obs;
    d.n_actions = mdp.n_actions;
    d.provenance = note;
    return d;
  };
  data::Dataset de = shell("expert"), dp = shell("poor");
  for (int i = 0; i < cfg.dataset.n_expert; ++i) {
    auto t = env::rollout(mdp, expert_pol, cfg.dataset.horizon,
                          mix_seed(mix_seed(cfg.seed, tag::kExpertTraj), uint64_t(i)));
    data::SealedAccess::source(t) = data::Source::Expert;
    de.trajectories.push_back(std::move(t));
  }
  for (int i = 0; i < cfg.dataset.n_poor; ++i) {
    auto t = env::rollout(mdp, poor_pol, cfg.dataset.horizon,
                          mix_seed(mix_seed(cfg.seed, tag::kPoorTraj), uint64_t(i)));
    data::SealedAccess::source(t) = data::Source::Poor;
    dp.trajectories.push_back(std::move(t));
  }
  auto ds = data::build_unlabeled(de, dp);
  std::ostringstream prov;
  prov << "family=" << cfg.env.family << " n_expert=" << cfg.dataset.n_expert
       << " n_poor=" << cfg.dataset.n_poor << " horizon=" << cfg.dataset.horizon
       << " poor_eps=" << fmt(cfg.dataset.poor_eps) << " seed=" << cfg.seed;
  ds.provenance = prov.str();
  return ds;
}

baselines::StackConfig make_stack_config(const config::RunConfig& cfg) {
  approx::MixerKind kind = approx::MixerKind::Linear;
  if (cfg.phase2.mixer == "vdn") kind = approx::MixerKind::Vdn;
  else if (cfg.phase2.mixer == "two-layer") kind = approx::MixerKind::TwoLayer;

  baselines::StackConfig sc;
  sc.disc.steps = cfg.phase2.disc_steps;
  sc.disc.batch = cfg.phase2.batch;
  sc.disc.lr = cfg.phase2.lr;
  sc.disc.mixer = kind;
  sc.disc.hidden = cfg.phase2.hidden;
  sc.disc.mixer_hidden = cfg.phase2.mixer_hidden;
  sc.disc.clip_eps = cfg.phase2.clip_eps;
  sc.disc.clip_L = cfg.phase2.clip_L;
  sc.disc.seed = mix_seed(cfg.seed, tag::kDisc);

  sc.value.steps = cfg.phase2.value_steps;
  sc.value.batch = cfg.phase2.batch;
  sc.value.lr = cfg.phase2.lr;
  sc.value.mixer = kind;
  sc.value.hidden = cfg.phase2.hidden;
  sc.value.mixer_hidden = cfg.phase2.mixer_hidden;
  sc.value.alpha = cfg.phase2.alpha;
  sc.value.gamma = cfg.phase2.gamma;
  sc.value.seed = mix_seed(cfg.seed, tag::kValue);

  sc.pol.steps = cfg.phase2.policy_steps;
  sc.pol.batch = cfg.phase2.batch;
  sc.pol.lr = cfg.phase2.lr;
  sc.pol.hidden = cfg.phase2.hidden;
  sc.pol.seed = mix_seed(cfg.seed, tag::kPolicy);
  return sc;
}

// -------------------------------------------------------------- checkpoint

void save_policies(const policy::LocalPolicySet& ps, const std::string& path) {
  std::vector<approx::NamedParams> blocks;
  approx::NamedParams meta;
  meta.name = "meta";
  meta.values.push_back(double(ps.n_agents()));
  for (int i = 0; i < ps.n_agents(); ++i) meta.values.push_back(double(ps.n_obs[i]));
  for (int i = 0; i < ps.n_agents(); ++i) meta.values.push_back(double(ps.n_actions[i]));
  // layer plan is shared across agents by construction
  const auto& spec_hidden = ps.nets[0].spec().hidden;
  meta.values.push_back(double(spec_hidden.size()));
  for (int h : spec_hidden) meta.values.push_back(double(h));
  blocks.push_back(std::move(meta));

  for (int i = 0; i < ps.n_agents(); ++i) {
    approx::NamedParams p;
    p.name = "pi" + std::to_string(i);
    p.values = ps.nets[i].get_params();
    blocks.push_back(std::move(p));
    approx::NamedParams a;
    a.name = "avail" + std::to_string(i);
    a.values.reserve(ps.avail[i].size());
    for (uint8_t b : ps.avail[i]) a.values.push_back(b ? 1.0 : 0.0);
    blocks.push_back(std::move(a));
  }
  approx::save_checkpoint(path, blocks);
}

policy::LocalPolicySet load_policies(const std::string& path) {
  const auto blocks = approx::load_checkpoint(path);
  auto find = [&](const std::string& name) -> const approx::NamedParams& {
    for (const auto& b : blocks)
      if (b.name == name) return b;
    throw PipelineError("checkpoint missing block " + name);
  };
  const auto& meta = find("meta").values;
  size_t at = 0;
  auto next_int = [&]() {
    if (at >= meta.size()) throw PipelineError("checkpoint meta truncated");
    return int(meta[at++]);
  };
  const int n = next_int();
  if (n <= 0) throw PipelineError("checkpoint has no agents");
  std::vector<int> n_obs(n), n_actions(n);
  for (int i = 0; i < n; ++i) n_obs[i] = next_int();
  for (int i = 0; i < n; ++i) n_actions[i] = next_int();
  const int nh = next_int();
  std::vector<int> hidden(nh);
  for (int i = 0; i < nh; ++i) hidden[i] = next_int();

  policy::LocalPolicySet ps(n_obs, n_actions, hidden, 0);
  for (int i = 0; i < n; ++i) {
    ps.nets[i].set_params(find("pi" + std::to_string(i)).values);
    const auto& av = find("avail" + std::to_string(i)).values;
    if (av.size() != ps.avail[i].size())
      throw PipelineError("availability block sized wrong");
    for (size_t k = 0; k < av.size(); ++k) ps.avail[i][k] = av[k] != 0.0 ? 1 : 0;
    for (int o = 0; o < n_obs[i]; ++o) {
      bool any = false;
      for (int a = 0; a < n_actions[i]; ++a) any = any || ps.available(i, o, a);
      if (!any) throw PipelineError("checkpoint masks out every action");
    }
  }
  return ps;
}

env::JointPolicy to_joint_policy(const policy::LocalPolicySet& ps,
                                 const env::TabularTeamMdp& mdp) {
  if (ps.n_agents() != mdp.n_agents)
    throw PipelineError("policy/environment agent count mismatch");
  for (int i = 0; i < mdp.n_agents; ++i) {
    if (ps.n_obs[i] != mdp.n_obs[i] || ps.n_actions[i] != mdp.n_actions[i])
      throw PipelineError("policy/environment dims mismatch at agent " +
                          std::to_string(i));
  }
  std::vector<std::vector<std::vector<double>>> cache(mdp.n_agents);
  for (int i = 0; i < mdp.n_agents; ++i) {
    cache[i].resize(mdp.n_obs[i]);
    for (int o = 0; o < mdp.n_obs[i]; ++o) cache[i][o] = ps.probs(i, o);
  }
  env::JointPolicy jp;
  jp.n_states = mdp.n_states;
  jp.n_joint = mdp.n_joint;
  jp.factorized = true;
  jp.table.assign(size_t(mdp.n_states) * mdp.n_joint, 0.0);
  std::vector<int> acts(mdp.n_agents);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int ja = 0; ja < mdp.n_joint; ++ja) {
      mdp.decode_joint(ja, acts);
      double p = 1.0;
      for (int i = 0; i < mdp.n_agents; ++i)
        p *= cache[i][mdp.obs_map[i][s]][acts[i]];
      jp.table[size_t(s) * mdp.n_joint + ja] = p;
    }
  }
  jp.validate();
  return jp;
}

// -------------------------------------------------------------- evaluation

EvalReport eval_joint(const env::TabularTeamMdp& mdp,
                      const env::JointPolicy& jp, int horizon, int episodes,
                      int n_seeds, uint64_t seed) {
  if (episodes < 1 || n_seeds < 1)
    throw PipelineError("evaluation needs at least one episode and one seed");
  EvalReport rep;
  rep.per_seed_mean.reserve(n_seeds);
  const uint64_t base = mix_seed(seed, tag::kEval);
  for (int k = 0; k < n_seeds; ++k) {
    double total = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
      auto traj = env::rollout(mdp, jp, horizon,
                               mix_seed(base, uint64_t(k) * 1000003ull + ep));
      for (double r : data::SealedAccess::rewards(traj)) total += r;
    }
    rep.per_seed_mean.push_back(total / episodes);
  }
  double m = 0.0;
  for (double v : rep.per_seed_mean) m += v;
  m /= n_seeds;
  double var = 0.0;
  for (double v : rep.per_seed_mean) var += (v - m) * (v - m);
  rep.mean = m;
  rep.stddev = std::sqrt(var / n_seeds);
  return rep;
}

EvalReport evaluate_policies(const config::RunConfig& cfg,
                             const policy::LocalPolicySet& ps) {
  const auto mdp = env::build_benchmark(cfg.env);
  const auto jp = to_joint_policy(ps, mdp);
  return eval_joint(mdp, jp, cfg.dataset.horizon, cfg.eval.episodes,
                    cfg.eval.seeds, cfg.seed);
}

// ---------------------------------------------------------------- commands

std::string run_gen_data(const config::RunConfig& cfg,
                         const std::string& out_dir) {
  config::validate(cfg);
  auto ds = generate_dataset(cfg);
  ensure_dir(out_dir);
  const auto path = dataset_file(out_dir);
  data::save_dataset(ds, path);

  // sealed returns are fair game here: generation owns the ground truth
  double ge = 0.0, gp = 0.0;
  int ne = 0, np = 0;
  for (const auto& t : ds.trajectories) {
    double g = 0.0;
    for (double r : data::SealedAccess::rewards(t)) g += r;
    if (data::SealedAccess::source(t) == data::Source::Expert) { ge += g; ++ne; }
    else { gp += g; ++np; }
  }
  std::ostringstream out;
  out << "dataset: " << ds.trajectories.size() << " trajectories (" << ne
      << " expert, " << np << " poor), horizon " << cfg.dataset.horizon
      << ", family " << cfg.env.family << "\n";
  out << "mean undiscounted return: expert " << fmt(ne ? ge / ne : 0.0)
      << ", poor " << fmt(np ? gp / np : 0.0) << "\n";
  out << "wrote " << path;
  return out.str();
}

std::string run_label(const config::RunConfig& cfg,
                      const std::string& dataset_path,
                      const std::string& out_dir) {
  config::validate(cfg);
  const auto ds = data::load_dataset(dataset_path);
  const auto pairs =
      pref::sample_pairs(ds, cfg.preference.n_pairs, mix_seed(cfg.seed, tag::kPairs));

  pref::ProviderConfig pc;
  pc.name = cfg.preference.provider;
  pc.flip_prob = cfg.preference.flip_prob;
  pc.seed = mix_seed(cfg.seed, tag::kNoisy);
  pc.http.endpoint = cfg.preference.endpoint;
  pc.http.timeout_ms = cfg.preference.timeout_ms;
  pc.http.max_inflight = cfg.preference.max_inflight;
  const auto prefs = pref::label_pairs(pairs, ds, pc);

  phase1::Phase1Config p1;
  p1.steps = cfg.phase1.steps;
  p1.batch_pairs = cfg.phase1.batch_pairs;
  p1.lr = cfg.phase1.lr;
  p1.lambda_v = cfg.phase1.lambda_v;
  p1.gamma = cfg.phase2.gamma;
  p1.hidden = cfg.phase1.hidden;
  p1.seed = mix_seed(cfg.seed, tag::kPhase1);

  metrics::Sink sink("label");
  const auto model = phase1::train_pref_model(prefs, ds, p1, &sink);
  const double acc = phase1::pref_accuracy(model, prefs, ds);
  const auto rewards = phase1::recover_rewards(model, ds);
  const auto split = phase1::rank_and_split(rewards, cfg.phase1.k);

  ensure_dir(out_dir);
  data::save_manifest(split, manifest_file(out_dir));
  pref::save_prefs(prefs, out_dir + "/prefs.txt");
  sink.write_csv(out_dir + "/label_metrics.csv");

  std::ostringstream out;
  out << "labeled " << prefs.size() << " pairs with provider "
      << cfg.preference.provider << "\n";
  out << "preference fit accuracy " << fmt(acc) << "\n";
  out << "split: " << split.expert_ids.size() << " expert-like, "
      << split.mix_ids.size() << " rest\n";
  out << "wrote " << manifest_file(out_dir);
  return out.str();
}

static data::Dataset expert_subset(const data::Dataset& ds,
                                   const std::vector<int64_t>& ids) {
  data::Dataset de;
  de.n_agents = ds.n_agents;
  de.n_obs = ds.n_obs;
  de.n_actions = ds.n_actions;
  de.provenance = "identified-expert";
  de.trajectories.reserve(ids.size());
  for (int64_t id : ids) de.trajectories.push_back(ds.by_id(id));
  return de;
}

std::string run_train(const config::RunConfig& cfg,
                      const std::string& dataset_path,
                      const std::string& manifest_path,
                      const std::string& out_dir) {
  config::validate(cfg);
  const auto ds = data::load_dataset(dataset_path);
  const auto split = data::load_manifest(manifest_path);
  if (split.expert_ids.empty())
    throw PipelineError("manifest has no expert-like trajectories");

  const auto de = expert_subset(ds, split.expert_ids);
  const auto view_e = data::TransitionView::build(de, cfg.phase2.gamma);
  const auto view_u = data::TransitionView::build(ds, cfg.phase2.gamma);

  metrics::Sink sink(cfg.method);
  policy::LocalPolicySet ps({1}, {1}, {}, 0);  // replaced below
  if (cfg.method == "misodice") {
    ps = baselines::train_stack(view_e, view_u, make_stack_config(cfg), &sink);
  } else if (cfg.method == "vdn") {
    ps = baselines::train_vdn_variant(view_e, view_u, make_stack_config(cfg), &sink);
  } else if (cfg.method == "indd") {
    ps = baselines::train_indd(view_e, view_u, make_stack_config(cfg), &sink);
  } else if (cfg.method == "bc") {
    auto sc = make_stack_config(cfg);
    ps = baselines::train_bc(view_e, view_u, cfg.beta.value(), sc.pol, &sink);
  } else if (cfg.method == "phase1-greedy") {
    // replay the labeling stage's randomness so this run stands alone
    const auto pairs = pref::sample_pairs(ds, cfg.preference.n_pairs,
                                          mix_seed(cfg.seed, tag::kPairs));
    pref::ProviderConfig pc;
    pc.name = cfg.preference.provider;
    pc.flip_prob = cfg.preference.flip_prob;
    pc.seed = mix_seed(cfg.seed, tag::kNoisy);
    pc.http.endpoint = cfg.preference.endpoint;
    pc.http.timeout_ms = cfg.preference.timeout_ms;
    pc.http.max_inflight = cfg.preference.max_inflight;
    const auto prefs = pref::label_pairs(pairs, ds, pc);
    phase1::Phase1Config p1;
    p1.steps = cfg.phase1.steps;
    p1.batch_pairs = cfg.phase1.batch_pairs;
    p1.lr = cfg.phase1.lr;
    p1.lambda_v = cfg.phase1.lambda_v;
    p1.gamma = cfg.phase2.gamma;
    p1.hidden = cfg.phase1.hidden;
    p1.seed = mix_seed(cfg.seed, tag::kPhase1);
    const auto model = phase1::train_pref_model(prefs, ds, p1, &sink);
    ps = baselines::phase1_greedy(model);
  } else {
    throw config::ConfigError("unknown method " + cfg.method);
  }

  ensure_dir(out_dir);
  save_policies(ps, checkpoint_file(out_dir));
  sink.write_csv(metrics_file(out_dir));
  {
    std::ofstream f(out_dir + "/config.json", std::ios::binary);
    if (!f) throw PipelineError("cannot write " + out_dir + "/config.json");
    f << config::dump_config(cfg);
  }

  std::ostringstream out;
  out << "trained method " << cfg.method << " on " << view_u.n_rows()
      << " transitions (" << view_e.n_rows() << " expert-like)\n";
  out << "wrote " << checkpoint_file(out_dir) << " and " << metrics_file(out_dir);
  return out.str();
}

std::string run_eval(const config::RunConfig& cfg,
                     const std::string& checkpoint_path) {
  config::validate(cfg);
  const auto ps = load_policies(checkpoint_path);
  const auto rep = evaluate_policies(cfg, ps);
  std::ostringstream out;
  out << "eval return " << fmt(rep.mean) << " +/- " << fmt(rep.stddev) << " over "
      << cfg.eval.episodes << " episodes x " << cfg.eval.seeds << " seeds\n";
  out << "per-seed means:";
  for (double v : rep.per_seed_mean) out << " " << fmt(v);
  return out.str();
}

std::string run_plot(const std::vector<std::string>& metrics_csvs,
                     const std::string& out_path) {
  if (metrics_csvs.empty()) throw PipelineError("no metrics files given");
  std::vector<std::vector<metrics::Sink::Row>> runs;
  runs.reserve(metrics_csvs.size());
  for (const auto& p : metrics_csvs) {
    std::string method;
    runs.push_back(metrics::read_csv_rows(p, &method));
  }
  metrics::write_plot_csv(out_path, runs);
  std::ostringstream out;
  out << "aggregated " << runs.size() << " runs into " << out_path;
  return out.str();
}

}  // namespace miso::pipeline
