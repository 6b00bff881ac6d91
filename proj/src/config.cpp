#include "config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace miso::config {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw ConfigError(what); }

void expect_keys(const json& j, const std::string& block,
                 std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      bad("unknown config key: " + (block.empty() ? "" : block + ".") +
          it.key());
  }
}

template <typename T>
void take(const json& j, const std::string& block, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    bad("bad value for " + (block.empty() ? "" : block + ".") + key);
  }
}

int to_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    bad("bad integer for " + key + ": " + v);
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    bad("bad number for " + key + ": " + v);
  }
}

uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    bad("bad seed for " + key + ": " + v);
  }
}

std::vector<int> to_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(to_int(tok, key));
  return out;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) bad("config is not valid JSON");
  if (!j.is_object()) bad("config root must be an object");
  expect_keys(j, "",
              {"seed", "method", "beta", "env", "dataset", "preference",
               "phase1", "phase2", "eval"});
  RunConfig c;
  take(j, "", "seed", c.seed);
  take(j, "", "method", c.method);
  if (j.contains("beta")) {
    double b = 0;
    take(j, "", "beta", b);
    c.beta = b;
  }
  if (j.contains("env")) {
    const json& e = j.at("env");
    expect_keys(e, "env",
                {"family", "n_agents", "length", "grid", "n_actions", "slip",
                 "discount"});
    take(e, "env", "family", c.env.family);
    take(e, "env", "n_agents", c.env.n_agents);
    take(e, "env", "length", c.env.length);
    take(e, "env", "grid", c.env.grid);
    take(e, "env", "n_actions", c.env.n_actions);
    take(e, "env", "slip", c.env.slip);
    take(e, "env", "discount", c.env.discount);
  }
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    expect_keys(d, "dataset", {"n_expert", "n_poor", "horizon", "poor_eps"});
    take(d, "dataset", "n_expert", c.dataset.n_expert);
    take(d, "dataset", "n_poor", c.dataset.n_poor);
    take(d, "dataset", "horizon", c.dataset.horizon);
    take(d, "dataset", "poor_eps", c.dataset.poor_eps);
  }
  if (j.contains("preference")) {
    const json& p = j.at("preference");
    expect_keys(p, "preference",
                {"provider", "n_pairs", "flip_prob", "endpoint", "timeout_ms",
                 "max_inflight"});
    take(p, "preference", "provider", c.preference.provider);
    take(p, "preference", "n_pairs", c.preference.n_pairs);
    take(p, "preference", "flip_prob", c.preference.flip_prob);
    take(p, "preference", "endpoint", c.preference.endpoint);
    take(p, "preference", "timeout_ms", c.preference.timeout_ms);
    take(p, "preference", "max_inflight", c.preference.max_inflight);
  }
  if (j.contains("phase1")) {
    const json& p = j.at("phase1");
    expect_keys(p, "phase1",
                {"steps", "batch_pairs", "lr", "lambda_v", "k", "hidden"});
    take(p, "phase1", "steps", c.phase1.steps);
    take(p, "phase1", "batch_pairs", c.phase1.batch_pairs);
    take(p, "phase1", "lr", c.phase1.lr);
    take(p, "phase1", "lambda_v", c.phase1.lambda_v);
    take(p, "phase1", "k", c.phase1.k);
    take(p, "phase1", "hidden", c.phase1.hidden);
  }
  if (j.contains("phase2")) {
    const json& p = j.at("phase2");
    expect_keys(p, "phase2",
                {"alpha", "gamma", "mixer", "batch", "disc_steps",
                 "value_steps", "policy_steps", "lr", "hidden", "mixer_hidden",
                 "clip_eps", "clip_L"});
    take(p, "phase2", "alpha", c.phase2.alpha);
    take(p, "phase2", "gamma", c.phase2.gamma);
    take(p, "phase2", "mixer", c.phase2.mixer);
    take(p, "phase2", "batch", c.phase2.batch);
    take(p, "phase2", "disc_steps", c.phase2.disc_steps);
    take(p, "phase2", "value_steps", c.phase2.value_steps);
    take(p, "phase2", "policy_steps", c.phase2.policy_steps);
    take(p, "phase2", "lr", c.phase2.lr);
    take(p, "phase2", "hidden", c.phase2.hidden);
    take(p, "phase2", "mixer_hidden", c.phase2.mixer_hidden);
    take(p, "phase2", "clip_eps", c.phase2.clip_eps);
    take(p, "phase2", "clip_L", c.phase2.clip_L);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    expect_keys(e, "eval", {"episodes", "seeds"});
    take(e, "eval", "episodes", c.eval.episodes);
    take(e, "eval", "seeds", c.eval.seeds);
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) bad("cannot read config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void apply_env_overrides(RunConfig& cfg) {
  if (const char* s = std::getenv("MISO_SEED"))
    cfg.seed = to_u64(s, "MISO_SEED");
  if (const char* e = std::getenv("MISO_HTTP_ENDPOINT"))
    cfg.preference.endpoint = e;
}

void set_override(RunConfig& c, const std::string& key,
                  const std::string& v) {
  if (key == "seed") c.seed = to_u64(v, key);
  else if (key == "method") c.method = v;
  else if (key == "beta") c.beta = to_double(v, key);
  else if (key == "env.family") c.env.family = v;
  else if (key == "env.n_agents") c.env.n_agents = to_int(v, key);
  else if (key == "env.length") c.env.length = to_int(v, key);
  else if (key == "env.grid") c.env.grid = to_int(v, key);
  else if (key == "env.n_actions") c.env.n_actions = to_int(v, key);
  else if (key == "env.slip") c.env.slip = to_double(v, key);
  else if (key == "env.discount") c.env.discount = to_double(v, key);
  else if (key == "dataset.n_expert") c.dataset.n_expert = to_int(v, key);
  else if (key == "dataset.n_poor") c.dataset.n_poor = to_int(v, key);
  else if (key == "dataset.horizon") c.dataset.horizon = to_int(v, key);
  else if (key == "dataset.poor_eps") c.dataset.poor_eps = to_double(v, key);
  else if (key == "preference.provider") c.preference.provider = v;
  else if (key == "preference.n_pairs") c.preference.n_pairs = to_int(v, key);
  else if (key == "preference.flip_prob") c.preference.flip_prob = to_double(v, key);
  else if (key == "preference.endpoint") c.preference.endpoint = v;
  else if (key == "preference.timeout_ms") c.preference.timeout_ms = to_int(v, key);
  else if (key == "preference.max_inflight") c.preference.max_inflight = to_int(v, key);
  else if (key == "phase1.steps") c.phase1.steps = to_int(v, key);
  else if (key == "phase1.batch_pairs") c.phase1.batch_pairs = to_int(v, key);
  else if (key == "phase1.lr") c.phase1.lr = to_double(v, key);
  else if (key == "phase1.lambda_v") c.phase1.lambda_v = to_double(v, key);
  else if (key == "phase1.k") c.phase1.k = to_int(v, key);
  else if (key == "phase1.hidden") c.phase1.hidden = to_int_list(v, key);
  else if (key == "phase2.alpha") c.phase2.alpha = to_double(v, key);
  else if (key == "phase2.gamma") c.phase2.gamma = to_double(v, key);
  else if (key == "phase2.mixer") c.phase2.mixer = v;
  else if (key == "phase2.batch") c.phase2.batch = to_int(v, key);
  else if (key == "phase2.disc_steps") c.phase2.disc_steps = to_int(v, key);
  else if (key == "phase2.value_steps") c.phase2.value_steps = to_int(v, key);
  else if (key == "phase2.policy_steps") c.phase2.policy_steps = to_int(v, key);
  else if (key == "phase2.lr") c.phase2.lr = to_double(v, key);
  else if (key == "phase2.hidden") c.phase2.hidden = to_int_list(v, key);
  else if (key == "phase2.mixer_hidden") c.phase2.mixer_hidden = to_int(v, key);
  else if (key == "phase2.clip_eps") c.phase2.clip_eps = to_double(v, key);
  else if (key == "phase2.clip_L") c.phase2.clip_L = to_double(v, key);
  else if (key == "eval.episodes") c.eval.episodes = to_int(v, key);
  else if (key == "eval.seeds") c.eval.seeds = to_int(v, key);
  else bad("unknown config key: " + key);
}

void validate(const RunConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) bad(msg);
  };
  require(c.method == "misodice" || c.method == "bc" || c.method == "indd" ||
              c.method == "vdn" || c.method == "phase1-greedy",
          "method must be one of misodice|bc|indd|vdn|phase1-greedy");
  if (c.method == "bc")
    require(c.beta.has_value(), "method bc requires beta");
  else
    require(!c.beta.has_value(), "beta is only valid with method bc");
  if (c.beta) require(*c.beta >= 0.0 && *c.beta <= 1.0, "beta must lie in [0, 1]");

  require(c.env.family == "team-chain" || c.env.family == "team-grid" ||
              c.env.family == "matrix-repeat",
          "env.family must be team-chain|team-grid|matrix-repeat");
  require(c.env.n_agents >= 1 && c.env.n_agents <= 6, "env.n_agents must lie in 1..6");
  require(c.env.length >= 2, "env.length must be at least 2");
  require(c.env.grid >= 2, "env.grid must be at least 2");
  require(c.env.n_actions >= 2, "env.n_actions must be at least 2");
  require(c.env.slip >= 0.0 && c.env.slip < 1.0, "env.slip must lie in [0, 1)");
  require(c.env.discount > 0.0 && c.env.discount < 1.0,
          "env.discount must lie in (0, 1)");

  require(c.dataset.n_expert >= 1, "dataset.n_expert must be positive");
  require(c.dataset.n_poor >= 0, "dataset.n_poor must be nonnegative");
  require(c.dataset.horizon >= 2, "dataset.horizon must be at least 2");
  require(c.dataset.poor_eps >= 0.0 && c.dataset.poor_eps <= 1.0,
          "dataset.poor_eps must lie in [0, 1]");

  require(c.preference.provider == "rule" || c.preference.provider == "noisy" ||
              c.preference.provider == "http",
          "preference.provider must be rule|noisy|http");
  require(c.preference.n_pairs >= 1, "preference.n_pairs must be positive");
  require(c.preference.flip_prob >= 0.0 && c.preference.flip_prob <= 0.5,
          "preference.flip_prob must lie in [0, 0.5]");
  if (c.preference.provider == "http")
    require(!c.preference.endpoint.empty(),
            "preference.endpoint required for the http provider");
  require(c.preference.timeout_ms > 0, "preference.timeout_ms must be positive");
  require(c.preference.max_inflight >= 1,
          "preference.max_inflight must be positive");

  require(c.phase1.steps >= 0, "phase1.steps must be nonnegative");
  require(c.phase1.batch_pairs >= 1, "phase1.batch_pairs must be positive");
  require(c.phase1.lr > 0.0, "phase1.lr must be positive");
  require(c.phase1.lambda_v >= 0.0, "phase1.lambda_v must be nonnegative");
  require(c.phase1.k >= 1, "phase1.k must be positive");
  require(c.phase1.k <= c.dataset.n_expert + c.dataset.n_poor,
          "phase1.k exceeds the dataset size");
  for (int h : c.phase1.hidden)
    require(h >= 1, "phase1.hidden entries must be positive");

  require(c.phase2.alpha >= 0.0, "phase2.alpha must be nonnegative");
  require(c.phase2.gamma > 0.0 && c.phase2.gamma < 1.0,
          "phase2.gamma must lie in (0, 1)");
  require(c.phase2.mixer == "linear" || c.phase2.mixer == "vdn" ||
              c.phase2.mixer == "two-layer",
          "phase2.mixer must be linear|vdn|two-layer");
  require(c.phase2.batch >= 1, "phase2.batch must be positive");
  require(c.phase2.disc_steps >= 0 && c.phase2.value_steps >= 0 &&
              c.phase2.policy_steps >= 0,
          "phase2 step counts must be nonnegative");
  require(c.phase2.lr > 0.0, "phase2.lr must be positive");
  for (int h : c.phase2.hidden)
    require(h >= 1, "phase2.hidden entries must be positive");
  require(c.phase2.mixer_hidden >= 1, "phase2.mixer_hidden must be positive");
  require(c.phase2.clip_eps > 0.0 && c.phase2.clip_eps < 0.5,
          "phase2.clip_eps must lie in (0, 0.5)");
  require(c.phase2.clip_L > 0.0, "phase2.clip_L must be positive");

  require(c.eval.episodes >= 1, "eval.episodes must be positive");
  require(c.eval.seeds >= 1, "eval.seeds must be positive");
}

std::string dump_config(const RunConfig& c) {
  ordered j;
  j["seed"] = c.seed;
  j["method"] = c.method;
  if (c.beta) j["beta"] = *c.beta;
  j["env"] = {{"family", c.env.family},   {"n_agents", c.env.n_agents},
              {"length", c.env.length},   {"grid", c.env.grid},
              {"n_actions", c.env.n_actions}, {"slip", c.env.slip},
              {"discount", c.env.discount}};
  j["dataset"] = {{"n_expert", c.dataset.n_expert},
                  {"n_poor", c.dataset.n_poor},
                  {"horizon", c.dataset.horizon},
                  {"poor_eps", c.dataset.poor_eps}};
  j["preference"] = {{"provider", c.preference.provider},
                     {"n_pairs", c.preference.n_pairs},
                     {"flip_prob", c.preference.flip_prob},
                     {"endpoint", c.preference.endpoint},
                     {"timeout_ms", c.preference.timeout_ms},
                     {"max_inflight", c.preference.max_inflight}};
  j["phase1"] = {{"steps", c.phase1.steps},
                 {"batch_pairs", c.phase1.batch_pairs},
                 {"lr", c.phase1.lr},
                 {"lambda_v", c.phase1.lambda_v},
                 {"k", c.phase1.k},
                 {"hidden", c.phase1.hidden}};
  j["phase2"] = {{"alpha", c.phase2.alpha},
                 {"gamma", c.phase2.gamma},
                 {"mixer", c.phase2.mixer},
                 {"batch", c.phase2.batch},
                 {"disc_steps", c.phase2.disc_steps},
                 {"value_steps", c.phase2.value_steps},
                 {"policy_steps", c.phase2.policy_steps},
                 {"lr", c.phase2.lr},
                 {"hidden", c.phase2.hidden},
                 {"mixer_hidden", c.phase2.mixer_hidden},
                 {"clip_eps", c.phase2.clip_eps},
                 {"clip_L", c.phase2.clip_L}};
  j["eval"] = {{"episodes", c.eval.episodes}, {"seeds", c.eval.seeds}};
  return j.dump(2) + "\n";
}

}  // namespace miso::config
