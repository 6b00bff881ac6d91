#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "data.hpp"
#include "preference.hpp"

using namespace miso;
using namespace miso::pref;
using nlohmann::json;

namespace {

// trajectories whose sealed return equals `reward_per_step * len`
data::Dataset returns_dataset(const std::vector<double>& reward_per_step,
                              int len = 3) {
  data::Dataset ds;
  ds.n_agents = 2;
  ds.n_obs = {2, 2};
  ds.n_actions = {2, 2};
  ds.provenance = "pref fixture";
  for (size_t i = 0; i < reward_per_step.size(); ++i) {
    data::Trajectory t;
    t.traj_id = int64_t(i);
    for (int k = 0; k < len; ++k) {
      data::Step s;
      s.obs = {k % 2, (k + 1) % 2};
      s.acts = {int(i) % 2, k % 2};
      t.steps.push_back(s);
    }
    data::SealedAccess::rewards(t).assign(len, reward_per_step[i]);
    data::SealedAccess::states(t).assign(len, 0);
    ds.trajectories.push_back(std::move(t));
  }
  return ds;
}

struct TestServer {
  httplib::Server svr;
  std::thread th;
  int port = 0;

  explicit TestServer(
      std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    svr.Post("/label", std::move(handler));
    port = svr.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    th = std::thread([this] { svr.listen_after_bind(); });
    svr.wait_until_ready();
  }
  ~TestServer() {
    svr.stop();
    th.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("pair sampling avoids self pairs and early duplicates") {
  data::Dataset ds = returns_dataset({1, 2, 3, 4, 5, 6});
  // 6 trajectories give 15 distinct unordered pairs
  PairList pairs = sample_pairs(ds, 15, 77);
  REQUIRE(pairs.size() == 15);
  std::set<std::pair<int64_t, int64_t>> seen;
  for (auto [a, b] : pairs) {
    CHECK(a != b);
    auto key = std::minmax(a, b);
    CHECK(seen.insert({key.first, key.second}).second);  // no repeats yet
  }
  // beyond exhaustion the sampler recycles rather than failing
  PairList more = sample_pairs(ds, 20, 77);
  CHECK(more.size() == 20);

  // deterministic in the seed
  CHECK(sample_pairs(ds, 15, 77) == pairs);
  CHECK(sample_pairs(ds, 15, 78) != pairs);
}

TEST_CASE("rule labeler prefers the higher sealed return, ties to first") {
  data::Dataset ds = returns_dataset({0.2, 0.9, 0.9});
  CHECK(rule_label({0, 1}, ds).label == Label::Second);
  CHECK(rule_label({1, 0}, ds).label == Label::First);
  CHECK(rule_label({1, 2}, ds).label == Label::First);  // tie
  CHECK(rule_label({2, 1}, ds).label == Label::First);
}

TEST_CASE("noisy labeler is a seeded, order-independent corruption") {
  data::Dataset ds = returns_dataset({0.1, 0.5, 0.7, 0.9});
  CHECK(noisy_label({0, 1}, ds, 0.0, 5).label == rule_label({0, 1}, ds).label);
  CHECK_THROWS_AS(noisy_label({0, 1}, ds, 0.7, 5), PrefError);

  // same pair, same seed, same answer regardless of when it is asked
  auto first = noisy_label({2, 3}, ds, 0.4, 9).label;
  noisy_label({0, 1}, ds, 0.4, 9);
  CHECK(noisy_label({2, 3}, ds, 0.4, 9).label == first);

  // flips actually happen at high rates over many pairs
  int flipped = 0;
  for (int64_t a = 0; a < 4; ++a)
    for (int64_t b = 0; b < 4; ++b) {
      if (a == b) continue;
      for (uint64_t s = 0; s < 40; ++s)
        if (noisy_label({a, b}, ds, 0.5, s).label != rule_label({a, b}, ds).label)
          ++flipped;
    }
  CHECK(flipped > 100);
}

TEST_CASE("wire format exposes observations and actions only") {
  data::Dataset ds = returns_dataset({0.3, 0.8});
  std::string body = pair_request_json({0, 1}, ds);
  json j = json::parse(body);
  CHECK(j.contains("pair_id"));
  CHECK(j["summary_a"]["steps"].size() == 3);
  CHECK(j["summary_a"]["steps"][0].contains("obs"));
  CHECK(j["summary_a"]["steps"][0].contains("act"));
  // nothing sealed leaks into the request
  CHECK(body.find("reward") == std::string::npos);
  CHECK(body.find("state") == std::string::npos);
  CHECK(body.find("source") == std::string::npos);
  CHECK(body.find("Expert") == std::string::npos);
}

TEST_CASE("http labeler round trips against a live server") {
  data::Dataset ds = returns_dataset({0.1, 0.2, 0.3, 0.4});

  TestServer server([](const httplib::Request& req, httplib::Response& res) {
    json j = json::parse(req.body);
    // prefer the side whose trajectory id is larger
    int64_t a = j["summary_a"]["traj_id"].get<int64_t>();
    int64_t b = j["summary_b"]["traj_id"].get<int64_t>();
    res.set_content(json{{"preferred", a > b ? "a" : "b"}}.dump(),
                    "application/json");
  });

  HttpConfig http;
  http.endpoint = server.endpoint();
  PreferencePair p = http_label({2, 1}, ds, http);
  CHECK(p.label == Label::First);
  CHECK(p.provider_tag == "http");
  CHECK(http_label({1, 2}, ds, http).label == Label::Second);
}

TEST_CASE("http labeler surfaces bad responses as errors") {
  data::Dataset ds = returns_dataset({0.1, 0.2});

  SUBCASE("non-200 status") {
    TestServer server([](const httplib::Request&, httplib::Response& res) {
      res.status = 404;
    });
    HttpConfig http;
    http.endpoint = server.endpoint();
    CHECK_THROWS_WITH_AS(http_label({0, 1}, ds, http),
                         doctest::Contains("status"), PrefError);
  }

  SUBCASE("malformed body") {
    TestServer server([](const httplib::Request&, httplib::Response& res) {
      res.set_content("not json at all", "text/plain");
    });
    HttpConfig http;
    http.endpoint = server.endpoint();
    CHECK_THROWS_WITH_AS(http_label({0, 1}, ds, http),
                         doctest::Contains("malformed"), PrefError);
  }

  SUBCASE("answer outside the protocol") {
    TestServer server([](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"preferred", "c"}}.dump(), "application/json");
    });
    HttpConfig http;
    http.endpoint = server.endpoint();
    CHECK_THROWS_AS(http_label({0, 1}, ds, http), PrefError);
  }

  SUBCASE("unreachable endpoint") {
    HttpConfig http;
    http.endpoint = "http://127.0.0.1:1";  // nothing listens there
    http.timeout_ms = 200;
    CHECK_THROWS_WITH_AS(http_label({0, 1}, ds, http),
                         doctest::Contains("unreachable"), PrefError);
  }
}

TEST_CASE("batch labeling keeps input order across providers") {
  data::Dataset ds = returns_dataset({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
  PairList pairs = sample_pairs(ds, 24, 3);

  SUBCASE("rule provider") {
    ProviderConfig prov;
    prov.name = "rule";
    auto labels = label_pairs(pairs, ds, prov);
    REQUIRE(labels.size() == pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
      CHECK(labels[i].id_a == pairs[i].first);
      CHECK(labels[i].id_b == pairs[i].second);
      CHECK(labels[i].label == rule_label(pairs[i], ds).label);
    }
  }

  SUBCASE("http provider with concurrent workers") {
    std::atomic<int> hits{0};
    TestServer server([&](const httplib::Request& req, httplib::Response& res) {
      hits++;
      json j = json::parse(req.body);
      int64_t a = j["summary_a"]["traj_id"].get<int64_t>();
      int64_t b = j["summary_b"]["traj_id"].get<int64_t>();
      res.set_content(json{{"preferred", a > b ? "a" : "b"}}.dump(),
                      "application/json");
    });
    ProviderConfig prov;
    prov.name = "http";
    prov.http.endpoint = server.endpoint();
    prov.http.max_inflight = 4;
    auto labels = label_pairs(pairs, ds, prov);
    CHECK(hits.load() == int(pairs.size()));
    REQUIRE(labels.size() == pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
      CHECK(labels[i].id_a == pairs[i].first);
      Label expect = pairs[i].first > pairs[i].second ? Label::First : Label::Second;
      CHECK(labels[i].label == expect);
    }
  }

  SUBCASE("unknown provider name") {
    ProviderConfig prov;
    prov.name = "psychic";
    CHECK_THROWS_AS(label_pairs(pairs, ds, prov), PrefError);
  }
}

TEST_CASE("preference file round trip") {
  std::string path =
      (std::filesystem::temp_directory_path() / "miso_prefs_test.bin").string();
  std::vector<PreferencePair> prefs;
  PreferencePair p;
  p.id_a = 3;
  p.id_b = 9;
  p.label = Label::Second;
  p.provider_tag = "noisy";
  prefs.push_back(p);
  p.id_a = 1;
  p.id_b = 2;
  p.label = Label::First;
  p.provider_tag = "rule";
  prefs.push_back(p);

  save_prefs(prefs, path);
  auto back = load_prefs(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id_a == 3);
  CHECK(back[0].id_b == 9);
  CHECK(back[0].label == Label::Second);
  CHECK(back[0].provider_tag == "noisy");
  CHECK(back[1].provider_tag == "rule");
  std::filesystem::remove(path);
}
