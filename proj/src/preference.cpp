#include "preference.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

#include "rng.hpp"

namespace miso::pref {

using nlohmann::json;

PairList sample_pairs(const data::Dataset& ds, int n_pairs, uint64_t seed) {
  const size_t n = ds.trajectories.size();
  if (n < 2) throw PrefError("need at least 2 trajectories to form pairs");
  if (n_pairs < 1) throw PrefError("n_pairs must be positive");
  const uint64_t pool = uint64_t(n) * (n - 1) / 2;

  Rng rng(mix_seed(seed, 0x7061ul));
  std::unordered_set<uint64_t> seen;
  PairList out;
  out.reserve(n_pairs);
  while (out.size() < size_t(n_pairs)) {
    size_t i = rng.below(n);
    size_t j = rng.below(n - 1);
    if (j >= i) ++j;
    size_t lo = std::min(i, j), hi = std::max(i, j);
    uint64_t key = uint64_t(lo) * n + hi;
    if (!seen.insert(key).second) continue;  // drawn already this epoch
    out.emplace_back(ds.trajectories[i].traj_id, ds.trajectories[j].traj_id);
    if (seen.size() == pool) seen.clear();  // pool exhausted, repeats allowed
  }
  return out;
}

namespace {

double undiscounted_return(const data::Trajectory& t) {
  const auto& r = data::SealedAccess::rewards(t);
  if (r.size() != t.steps.size())
    throw PrefError("trajectory has no sealed rewards; rule labeling needs them");
  double g = 0.0;
  for (double v : r) g += v;
  return g;
}

}  // namespace

PreferencePair rule_label(const std::pair<int64_t, int64_t>& pair,
                          const data::Dataset& ds) {
  PreferencePair p;
  p.id_a = pair.first;
  p.id_b = pair.second;
  p.provider_tag = "rule";
  double ga = undiscounted_return(ds.by_id(pair.first));
  double gb = undiscounted_return(ds.by_id(pair.second));
  p.label = ga >= gb ? Label::First : Label::Second;  // ties go First
  return p;
}

PreferencePair noisy_label(const std::pair<int64_t, int64_t>& pair,
                           const data::Dataset& ds, double flip_prob,
                           uint64_t seed) {
  if (!(flip_prob >= 0.0 && flip_prob <= 0.5))
    throw PrefError("flip_prob must lie in [0, 0.5]");
  PreferencePair p = rule_label(pair, ds);
  p.provider_tag = "noisy";
  Rng coin(mix_seed(mix_seed(seed, uint64_t(pair.first)), uint64_t(pair.second)));
  if (coin.uniform() < flip_prob)
    p.label = p.label == Label::First ? Label::Second : Label::First;
  return p;
}

std::string pair_key(int64_t id_a, int64_t id_b) {
  return std::to_string(id_a) + "-" + std::to_string(id_b);
}

namespace {

json trajectory_summary(const data::Trajectory& t) {
  // observations and actions only; sealed fields stay out of the wire format
  json steps = json::array();
  for (const auto& s : t.steps)
    steps.push_back(json{{"obs", s.obs}, {"act", s.acts}});
  return json{{"traj_id", t.traj_id}, {"steps", std::move(steps)}};
}

}  // namespace

std::string pair_request_json(const std::pair<int64_t, int64_t>& pair,
                              const data::Dataset& ds) {
  json body{{"pair_id", pair_key(pair.first, pair.second)},
            {"summary_a", trajectory_summary(ds.by_id(pair.first))},
            {"summary_b", trajectory_summary(ds.by_id(pair.second))}};
  return body.dump();
}

PreferencePair http_label(const std::pair<int64_t, int64_t>& pair,
                          const data::Dataset& ds, const HttpConfig& http) {
  if (http.endpoint.empty()) throw PrefError("http provider needs an endpoint");
  std::string body = pair_request_json(pair, ds);

  httplib::Client cli(http.endpoint);
  cli.set_connection_timeout(http.timeout_ms / 1000, (http.timeout_ms % 1000) * 1000);
  cli.set_read_timeout(http.timeout_ms / 1000, (http.timeout_ms % 1000) * 1000);

  httplib::Result res;
  for (int attempt = 0; attempt < 3; ++attempt) {  // 1 try + 2 retries
    res = cli.Post("/label", body, "application/json");
    if (res) break;
  }
  if (!res)
    throw PrefError("labeler unreachable after retries: " + http.endpoint);
  if (res->status != 200)
    throw PrefError("labeler answered status " + std::to_string(res->status));

  json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("preferred") ||
      !reply["preferred"].is_string())
    throw PrefError("malformed labeler response: " + res->body);
  std::string which = reply["preferred"].get<std::string>();
  if (which != "a" && which != "b")
    throw PrefError("labeler must answer \"a\" or \"b\", got \"" + which + "\"");

  PreferencePair p;
  p.id_a = pair.first;
  p.id_b = pair.second;
  p.label = which == "a" ? Label::First : Label::Second;
  p.provider_tag = "http";
  return p;
}

std::vector<PreferencePair> label_pairs(const PairList& pairs,
                                        const data::Dataset& ds,
                                        const ProviderConfig& provider) {
  std::vector<PreferencePair> out(pairs.size());
  if (provider.name == "rule") {
    for (size_t i = 0; i < pairs.size(); ++i) out[i] = rule_label(pairs[i], ds);
  } else if (provider.name == "noisy") {
    for (size_t i = 0; i < pairs.size(); ++i)
      out[i] = noisy_label(pairs[i], ds, provider.flip_prob, provider.seed);
  } else if (provider.name == "http") {
    if (pairs.empty()) return out;
    int n_workers = std::max(1, std::min(provider.http.max_inflight,
                                         int(pairs.size())));
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errs(pairs.size());
    auto work = [&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= pairs.size()) return;
        try {
          out[i] = http_label(pairs[i], ds, provider.http);
        } catch (...) {
          errs[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> workers;
    for (int w = 0; w < n_workers; ++w) workers.emplace_back(work);
    for (auto& t : workers) t.join();
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);
  } else {
    throw PrefError("unknown preference provider: " + provider.name);
  }
  return out;
}

void save_prefs(const std::vector<PreferencePair>& prefs,
                const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw PrefError("cannot write " + path);
  f << "misodice-prefs 1\n" << "n " << prefs.size() << "\n";
  for (const auto& p : prefs)
    f << p.id_a << " " << p.id_b << " "
      << (p.label == Label::First ? "first" : "second") << " "
      << (p.provider_tag.empty() ? "-" : p.provider_tag) << "\n";
  if (!f) throw PrefError("short write to " + path);
}

std::vector<PreferencePair> load_prefs(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PrefError("cannot read " + path);
  std::string magic;
  int version = 0;
  f >> magic >> version;
  if (magic != "misodice-prefs" || version != 1)
    throw PrefError("not a preference file: " + path);
  std::string tag;
  size_t n = 0;
  f >> tag >> n;
  if (tag != "n") throw PrefError("corrupt preference file: " + path);
  std::vector<PreferencePair> out(n);
  for (size_t i = 0; i < n; ++i) {
    std::string label;
    f >> out[i].id_a >> out[i].id_b >> label >> out[i].provider_tag;
    if (!f) throw PrefError("truncated preference file: " + path);
    if (label == "first")
      out[i].label = Label::First;
    else if (label == "second")
      out[i].label = Label::Second;
    else
      throw PrefError("bad label token: " + label);
    if (out[i].provider_tag == "-") out[i].provider_tag.clear();
  }
  return out;
}

}  // namespace miso::pref
