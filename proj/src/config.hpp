#pragma once
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "env.hpp"

namespace miso::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetBlock {
  int n_expert = 200;
  int n_poor = 1000;
  int horizon = 16;
  double poor_eps = 0.8;  // degradation mixed into the expert for poor data
};

struct PreferenceBlock {
  std::string provider = "rule";  // rule | noisy | http
  int n_pairs = 2000;
  double flip_prob = 0.1;
  std::string endpoint;
  int timeout_ms = 5000;
  int max_inflight = 4;
};

struct Phase1Block {
  int steps = 2000;
  int batch_pairs = 32;
  double lr = 3e-4;
  double lambda_v = 0.1;
  int k = 200;
  std::vector<int> hidden = {256};
};

struct Phase2Block {
  double alpha = 0.05;
  double gamma = 0.99;
  std::string mixer = "linear";  // linear | vdn | two-layer
  int batch = 512;
  int disc_steps = 2000;
  int value_steps = 2000;
  int policy_steps = 2000;
  double lr = 3e-4;
  std::vector<int> hidden = {256};
  int mixer_hidden = 64;
  double clip_eps = 1e-5;
  double clip_L = 10.0;
};

struct EvalBlock {
  int episodes = 32;
  int seeds = 4;
};

struct RunConfig {
  uint64_t seed = 0;
  std::string method = "misodice";  // misodice | bc | indd | vdn | phase1-greedy
  std::optional<double> beta;       // bc only
  env::EnvConfig env;
  DatasetBlock dataset;
  PreferenceBlock preference;
  Phase1Block phase1;
  Phase2Block phase2;
  EvalBlock eval;
};

// Strict parse: unknown keys at any level are errors, as are type mismatches.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// MISO_SEED and MISO_HTTP_ENDPOINT, when set, override the file values.
// Explicit flags are applied after this and win.
void apply_env_overrides(RunConfig& cfg);

// Dotted-path override, e.g. "phase2.alpha" = "0.1" or "env.family" =
// "team-chain". Hidden-layer lists take comma-separated integers.
void set_override(RunConfig& cfg, const std::string& key,
                  const std::string& value);

// Range and cross-field checks; throws ConfigError with the offending key.
void validate(const RunConfig& cfg);

// Canonical JSON for provenance stamping; stable key order.
std::string dump_config(const RunConfig& cfg);

}  // namespace miso::config
