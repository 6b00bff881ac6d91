#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"

namespace miso::pref {

struct PrefError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Label : uint8_t { First = 0, Second = 1 };

struct PreferencePair {
  int64_t id_a = -1;
  int64_t id_b = -1;
  Label label = Label::First;
  std::string provider_tag;
};

using PairList = std::vector<std::pair<int64_t, int64_t>>;

// Uniform unordered pairs of distinct trajectories. Draws are without
// replacement across the list until the pool of distinct pairs is exhausted,
// after which pairs may repeat.
PairList sample_pairs(const data::Dataset& ds, int n_pairs, uint64_t seed);

// First iff the first trajectory's undiscounted sealed return is strictly
// higher; ties go to First.
PreferencePair rule_label(const std::pair<int64_t, int64_t>& pair,
                          const data::Dataset& ds);

// rule_label with a seeded coin flip per pair; the coin depends on the seed
// and the pair ids only, so labeling order and concurrency cannot change it.
PreferencePair noisy_label(const std::pair<int64_t, int64_t>& pair,
                           const data::Dataset& ds, double flip_prob,
                           uint64_t seed);

struct HttpConfig {
  std::string endpoint;  // http://host:port
  int timeout_ms = 5000;
  int max_inflight = 4;
};

// POSTs the pair to <endpoint>/label as JSON and reads {"preferred":"a"|"b"}.
// Sealed rewards, states, and provenance are never serialized. Two retries on
// transport failure, then PrefError.
PreferencePair http_label(const std::pair<int64_t, int64_t>& pair,
                          const data::Dataset& ds, const HttpConfig& http);

std::string pair_key(int64_t id_a, int64_t id_b);
std::string pair_request_json(const std::pair<int64_t, int64_t>& pair,
                              const data::Dataset& ds);

struct ProviderConfig {
  std::string name = "rule";  // rule | noisy | http
  double flip_prob = 0.1;
  uint64_t seed = 0;
  HttpConfig http;
};

// Labels every pair with the configured provider. The http provider runs up
// to max_inflight worker threads; output order always matches input order.
std::vector<PreferencePair> label_pairs(const PairList& pairs,
                                        const data::Dataset& ds,
                                        const ProviderConfig& provider);

void save_prefs(const std::vector<PreferencePair>& prefs,
                const std::string& path);
std::vector<PreferencePair> load_prefs(const std::string& path);

}  // namespace miso::pref
