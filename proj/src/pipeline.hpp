#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "baselines.hpp"
#include "config.hpp"
#include "data.hpp"
#include "env.hpp"
#include "policy.hpp"

namespace miso::pipeline {

struct PipelineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- building
// Expert rollouts from the solved policy, poor rollouts from its degraded
// mixture, concatenated with dense ids. Sealed provenance marks the halves.
data::Dataset generate_dataset(const config::RunConfig& cfg);

// Stage configs assembled from the run config; per-stage seeds are derived
// from the global seed with fixed stream tags so commands stay independent.
baselines::StackConfig make_stack_config(const config::RunConfig& cfg);

// -------------------------------------------------------------- checkpoint
// Policy sets round-trip through the shared checkpoint container: a meta
// block with the layer plan, one params block and one availability block per
// agent.
void save_policies(const policy::LocalPolicySet& ps, const std::string& path);
policy::LocalPolicySet load_policies(const std::string& path);

// Product of the per-agent categoricals, expanded on the global state space.
env::JointPolicy to_joint_policy(const policy::LocalPolicySet& ps,
                                 const env::TabularTeamMdp& mdp);

// -------------------------------------------------------------- evaluation
struct EvalReport {
  std::vector<double> per_seed_mean;  // mean undiscounted return per eval seed
  double mean = 0.0;                  // mean of the per-seed means
  double stddev = 0.0;                // population std across seeds
};

EvalReport eval_joint(const env::TabularTeamMdp& mdp,
                      const env::JointPolicy& jp, int horizon, int episodes,
                      int n_seeds, uint64_t seed);
EvalReport evaluate_policies(const config::RunConfig& cfg,
                             const policy::LocalPolicySet& ps);

// ---------------------------------------------------------------- commands
// Each command validates the config before touching the filesystem, writes
// its artifacts under the given directory, and returns a printable summary.
std::string run_gen_data(const config::RunConfig& cfg,
                         const std::string& out_dir);
std::string run_label(const config::RunConfig& cfg,
                      const std::string& dataset_path,
                      const std::string& out_dir);
std::string run_train(const config::RunConfig& cfg,
                      const std::string& dataset_path,
                      const std::string& manifest_path,
                      const std::string& out_dir);
std::string run_eval(const config::RunConfig& cfg,
                     const std::string& checkpoint_path);
std::string run_plot(const std::vector<std::string>& metrics_csvs,
                     const std::string& out_path);

// Artifact names under an out directory.
std::string dataset_file(const std::string& out_dir);
std::string manifest_file(const std::string& out_dir);
std::string checkpoint_file(const std::string& out_dir);
std::string metrics_file(const std::string& out_dir);

}  // namespace miso::pipeline
