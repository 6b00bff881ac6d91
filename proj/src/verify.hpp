#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"

namespace miso::verify {

// One certified property. stat carries the headline quantity (worst error,
// duality gap, violation count...) so failures are diagnosable from the
// table alone.
struct CheckResult {
  std::string name;
  bool pass = false;
  double stat = 0.0;
  std::string note;
  double seconds = 0.0;  // wall time of this check alone
};

// Single-state team dataset realizing exact per-joint-action counts: each
// count becomes that many two-step trajectories whose one usable transition
// carries that joint action, so the view's empirical measure equals
// counts / sum(counts) with no sampling noise. Joint index has agent 0 most
// significant, matching the view's key layout.
data::Dataset counts_dataset(int n_agents, int n_actions,
                             const std::vector<int>& counts);

// The full property suite: closed forms against numeric optimization,
// blockwise convexity / concavity probes, the mixer nonconvexity witness,
// local-global policy consistency, oracle duality on the benchmark
// families, a trained ratio against the oracle optimum, and gradient checks
// on every loss. A thrown exception inside a check fails that check only.
std::vector<CheckResult> run_all(uint64_t seed);

bool all_pass(const std::vector<CheckResult>& results);
std::string render(const std::vector<CheckResult>& results);

}  // namespace miso::verify
