#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <misodice.h>

#include "config.hpp"
#include "data.hpp"
#include "env.hpp"
#include "pipeline.hpp"
#include "policy.hpp"
#include "serial.hpp"

using namespace miso;
namespace fs = std::filesystem;

namespace {

const char* kTinyJson = R"({
  "seed": 5,
  "env": {"family": "matrix-repeat", "n_agents": 2, "n_actions": 2,
          "discount": 0.9},
  "dataset": {"n_expert": 6, "n_poor": 10, "horizon": 3, "poor_eps": 0.8},
  "preference": {"provider": "rule", "n_pairs": 30},
  "phase1": {"steps": 80, "batch_pairs": 8, "lr": 0.005, "lambda_v": 0.1,
             "k": 6, "hidden": []},
  "phase2": {"alpha": 0.1, "gamma": 0.9, "mixer": "linear", "batch": 32,
             "disc_steps": 50, "value_steps": 50, "policy_steps": 50,
             "lr": 0.005, "hidden": []},
  "eval": {"episodes": 3, "seeds": 2}
})";

config::RunConfig tiny_cfg() { return config::parse_config(kTinyJson); }

std::string fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("miso_pipe_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE_MESSAGE(f.good(), path);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

double mean_sealed_return(const data::Dataset& ds, data::Source want) {
  double sum = 0.0;
  int n = 0;
  for (const auto& t : ds.trajectories) {
    if (data::SealedAccess::source(t) != want) continue;
    sum += data::SealedAccess::discounted_return(t, 1.0);
    ++n;
  }
  REQUIRE(n > 0);
  return sum / n;
}

}  // namespace

TEST_CASE("dataset generation is deterministic and marks provenance") {
  config::RunConfig cfg = tiny_cfg();
  data::Dataset a = pipeline::generate_dataset(cfg);
  data::Dataset b = pipeline::generate_dataset(cfg);

  REQUIRE(a.trajectories.size() == 16);
  a.validate();
  CHECK(a.provenance.find("matrix-repeat") != std::string::npos);

  for (int i = 0; i < 6; ++i)
    CHECK(data::SealedAccess::source(a.trajectories[i]) == data::Source::Expert);
  for (int i = 6; i < 16; ++i)
    CHECK(data::SealedAccess::source(a.trajectories[i]) == data::Source::Poor);

  // bitwise repeatability of content
  for (size_t i = 0; i < a.trajectories.size(); ++i) {
    CHECK(a.trajectories[i].traj_id == b.trajectories[i].traj_id);
    for (size_t k = 0; k < a.trajectories[i].steps.size(); ++k) {
      CHECK(a.trajectories[i].steps[k].obs == b.trajectories[i].steps[k].obs);
      CHECK(a.trajectories[i].steps[k].acts == b.trajectories[i].steps[k].acts);
    }
  }

  CHECK(mean_sealed_return(a, data::Source::Expert) >=
        mean_sealed_return(a, data::Source::Poor));
}

TEST_CASE("policy checkpoints round trip through disk") {
  policy::LocalPolicySet ps({3, 2}, {2, 3}, {4}, 11);
  ps.set_available(1, 0, 2, false);
  std::string dir = fresh_dir("ckpt");
  std::string path = dir + "/policy.ckpt";

  pipeline::save_policies(ps, path);
  policy::LocalPolicySet back = pipeline::load_policies(path);

  REQUIRE(back.n_agents() == 2);
  CHECK(back.n_obs == ps.n_obs);
  CHECK(back.n_actions == ps.n_actions);
  CHECK_FALSE(back.available(1, 0, 2));
  for (int agent = 0; agent < 2; ++agent)
    for (int o = 0; o < ps.n_obs[agent]; ++o) {
      auto want = ps.probs(agent, o);
      auto got = back.probs(agent, o);
      REQUIRE(want.size() == got.size());
      for (size_t a = 0; a < want.size(); ++a)
        CHECK(got[a] == doctest::Approx(want[a]).epsilon(1e-15));
    }

  CHECK_THROWS_AS(pipeline::load_policies(dir + "/missing.ckpt"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("joint expansion multiplies local policies on the state space") {
  env::EnvConfig ecfg;
  ecfg.family = "team-chain";
  ecfg.n_agents = 2;
  ecfg.length = 4;
  env::TabularTeamMdp mdp = env::build_benchmark(ecfg);

  policy::LocalPolicySet ps(mdp.n_obs, mdp.n_actions, {}, 3);
  env::JointPolicy jp = pipeline::to_joint_policy(ps, mdp);
  jp.validate();
  CHECK(jp.factorized);

  std::vector<int> acts(2);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int ja = 0; ja < mdp.n_joint; ++ja) {
      mdp.decode_joint(ja, acts);
      double expect = 1.0;
      for (int agent = 0; agent < 2; ++agent)
        expect *= ps.probs(agent, mdp.obs_map[agent][s])[acts[agent]];
      CHECK(jp.prob(s, ja) == doctest::Approx(expect).epsilon(1e-12));
    }

  // dimension mismatch is refused
  policy::LocalPolicySet wrong({1, 1}, {2, 2}, {}, 3);
  CHECK_THROWS_AS(pipeline::to_joint_policy(wrong, mdp),
                  pipeline::PipelineError);
}

TEST_CASE("evaluation is seed stable and ranks expert above uniform") {
  config::RunConfig cfg = tiny_cfg();
  env::TabularTeamMdp mdp = env::build_benchmark(cfg.env);
  env::JointPolicy expert = env::solve_expert(mdp, 1e-10);
  env::JointPolicy unif = env::degrade(expert, 1.0);

  pipeline::EvalReport r1 = pipeline::eval_joint(mdp, expert, 3, 8, 2, 7);
  pipeline::EvalReport r2 = pipeline::eval_joint(mdp, expert, 3, 8, 2, 7);
  CHECK(r1.mean == r2.mean);
  CHECK(r1.per_seed_mean == r2.per_seed_mean);
  REQUIRE(r1.per_seed_mean.size() == 2);

  // the matrix expert collects the unit reward every step
  CHECK(r1.mean == doctest::Approx(3.0));
  pipeline::EvalReport ru = pipeline::eval_joint(mdp, unif, 3, 64, 2, 7);
  CHECK(ru.mean < 2.0);
  CHECK(ru.mean > 0.1);
}

TEST_CASE("pipeline commands chain and their artifacts line up") {
  config::RunConfig cfg = tiny_cfg();
  std::string dir = fresh_dir("chain");

  std::string gen_summary = pipeline::run_gen_data(cfg, dir);
  CHECK(!gen_summary.empty());
  std::string ds_path = pipeline::dataset_file(dir);
  CHECK(fs::exists(ds_path));
  data::Dataset ds = data::load_dataset(ds_path);
  CHECK(ds.trajectories.size() == 16);

  std::string label_summary = pipeline::run_label(cfg, ds_path, dir);
  CHECK(!label_summary.empty());
  std::string manifest_path = pipeline::manifest_file(dir);
  REQUIRE(fs::exists(manifest_path));
  data::SplitResult split = data::load_manifest(manifest_path);
  CHECK(split.expert_ids.size() == 6);
  CHECK(split.mix_ids.size() == 10);

  std::string train_summary = pipeline::run_train(cfg, ds_path, manifest_path, dir);
  CHECK(!train_summary.empty());
  REQUIRE(fs::exists(pipeline::checkpoint_file(dir)));
  CHECK(fs::exists(pipeline::metrics_file(dir)));

  std::string eval_summary = pipeline::run_eval(cfg, pipeline::checkpoint_file(dir));
  CHECK(eval_summary.find("return") != std::string::npos);

  std::string plot_path = dir + "/curves.csv";
  std::string plot_summary =
      pipeline::run_plot({pipeline::metrics_file(dir)}, plot_path);
  CHECK(!plot_summary.empty());
  CHECK(fs::exists(plot_path));
  CHECK(!slurp(plot_path).empty());

  fs::remove_all(dir);
}

TEST_CASE("same seed, same bytes") {
  config::RunConfig cfg = tiny_cfg();
  std::string d1 = fresh_dir("det1"), d2 = fresh_dir("det2");

  pipeline::run_gen_data(cfg, d1);
  pipeline::run_gen_data(cfg, d2);
  CHECK(slurp(pipeline::dataset_file(d1)) == slurp(pipeline::dataset_file(d2)));

  pipeline::run_label(cfg, pipeline::dataset_file(d1), d1);
  pipeline::run_label(cfg, pipeline::dataset_file(d2), d2);
  CHECK(slurp(pipeline::manifest_file(d1)) == slurp(pipeline::manifest_file(d2)));

  pipeline::run_train(cfg, pipeline::dataset_file(d1), pipeline::manifest_file(d1), d1);
  pipeline::run_train(cfg, pipeline::dataset_file(d2), pipeline::manifest_file(d2), d2);
  CHECK(slurp(pipeline::metrics_file(d1)) == slurp(pipeline::metrics_file(d2)));
  CHECK(slurp(pipeline::checkpoint_file(d1)) == slurp(pipeline::checkpoint_file(d2)));

  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("c surface drives the whole pipeline") {
  CHECK(std::string(miso_version()).find('.') != std::string::npos);

  miso_run* run = miso_run_create_from_string(kTinyJson);
  REQUIRE(run != nullptr);
  // the default method is the full stack; pin the mixer to the primary form
  CHECK(miso_set_override(run, "phase2.mixer", "linear") == MISO_OK);

  std::string dir = fresh_dir("capi");
  CHECK(miso_gen_data(run, dir.c_str()) == MISO_OK);
  CHECK(std::string(miso_last_output(run)).find("dataset") != std::string::npos);

  std::string ds_path = pipeline::dataset_file(dir);
  std::string manifest_path = pipeline::manifest_file(dir);
  CHECK(miso_label(run, ds_path.c_str(), dir.c_str()) == MISO_OK);
  CHECK(miso_train(run, ds_path.c_str(), manifest_path.c_str(), dir.c_str()) ==
        MISO_OK);
  CHECK(fs::exists(pipeline::checkpoint_file(dir)));

  CHECK(miso_eval(run, pipeline::checkpoint_file(dir).c_str()) == MISO_OK);
  CHECK(std::string(miso_last_output(run)).find("return") != std::string::npos);

  const char* csvs[1] = {nullptr};
  std::string metrics = pipeline::metrics_file(dir);
  csvs[0] = metrics.c_str();
  std::string plot_path = dir + "/curves.csv";
  CHECK(miso_plot(run, csvs, 1, plot_path.c_str()) == MISO_OK);
  CHECK(fs::exists(plot_path));

  miso_run_destroy(run);
  fs::remove_all(dir);
}

TEST_CASE("c surface reports precise error codes") {
  // creation failure leaves the explanation on the null-handle channel
  miso_run* bad = miso_run_create_from_string("{not json");
  CHECK(bad == nullptr);
  CHECK(std::string(miso_last_error(nullptr)).size() > 0);

  miso_run* run = miso_run_create_from_string(kTinyJson);
  REQUIRE(run != nullptr);

  SUBCASE("unknown override key") {
    CHECK(miso_set_override(run, "nope.key", "1") == MISO_ERR_CONFIG);
    CHECK(std::string(miso_last_error(run)).find("nope.key") != std::string::npos);
  }

  SUBCASE("invalid config combination caught before side effects") {
    // beta is a bc-only knob, so validation must reject the combination
    CHECK(miso_set_override(run, "beta", "0.5") == MISO_OK);
    std::string dir = fresh_dir("badcfg");
    CHECK(miso_gen_data(run, dir.c_str()) == MISO_ERR_CONFIG);
    CHECK_FALSE(fs::exists(pipeline::dataset_file(dir)));
    fs::remove_all(dir);
  }

  SUBCASE("missing artifacts are io errors") {
    std::string dir = fresh_dir("io");
    CHECK(miso_train(run, (dir + "/no.bin").c_str(),
                     (dir + "/no.txt").c_str(), dir.c_str()) == MISO_ERR_IO);

    // a corrupt dataset is also an io-class failure
    std::ofstream(dir + "/junk.bin") << "gibberish";
    CHECK(miso_label(run, (dir + "/junk.bin").c_str(), dir.c_str()) ==
          MISO_ERR_IO);
    fs::remove_all(dir);
  }

  SUBCASE("null arguments are invalid, not crashes") {
    CHECK(miso_gen_data(nullptr, "x") == MISO_ERR_INVALID);
    CHECK(miso_gen_data(run, nullptr) == MISO_ERR_INVALID);
    CHECK(miso_set_override(run, nullptr, "1") == MISO_ERR_INVALID);
    CHECK(miso_eval(run, nullptr) == MISO_ERR_INVALID);
    CHECK(miso_plot(run, nullptr, 1, "x") == MISO_ERR_INVALID);
  }

  miso_run_destroy(run);
  miso_run_destroy(nullptr);  // must be a no-op
}
