#include <doctest.h>

#include <cmath>
#include <vector>

#include "data.hpp"
#include "dice.hpp"
#include "policy.hpp"
#include "ratio.hpp"
#include "verify.hpp"

using namespace miso;
using namespace miso::policy;

TEST_CASE("masked softmax puts exact zeros on unavailable actions") {
  LocalPolicySet ps({2}, {3}, {}, 5);
  auto p = ps.probs(0, 0);
  REQUIRE(p.size() == 3);
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : p) CHECK(v > 0.0);

  ps.set_available(0, 0, 1, false);
  p = ps.probs(0, 0);
  CHECK(p[1] == 0.0);
  CHECK(p[0] + p[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ps.log_prob(0, 0, 0) == doctest::Approx(std::log(p[0])).epsilon(1e-12));

  // other observation rows are untouched
  CHECK(ps.probs(0, 1)[1] > 0.0);

  ps.set_available(0, 0, 0, false);
  ps.set_available(0, 0, 2, false);
  CHECK_THROWS_AS(ps.probs(0, 0), PolicyError);
}

TEST_CASE("weighted cloning loss matches a hand computation") {
  LocalPolicySet ps({2, 3}, {2, 2}, {}, 9);
  dice::WeightedBatch batch;
  dice::WeightedRow r1;
  r1.obs = {0, 2};
  r1.acts = {1, 0};
  r1.w = 2.0;
  dice::WeightedRow r2;
  r2.obs = {1, 1};
  r2.acts = {0, 1};
  r2.w = 0.5;
  batch.rows = {r1, r2};

  double expect = -(2.0 * (ps.log_prob(0, 0, 1) + ps.log_prob(1, 2, 0)) +
                    0.5 * (ps.log_prob(0, 1, 0) + ps.log_prob(1, 1, 1))) /
                  2.0;
  CHECK(wbc_loss(ps, batch, false) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("cloning a masked action is a data/mask contradiction") {
  LocalPolicySet ps({2}, {2}, {}, 11);
  ps.set_available(0, 0, 1, false);
  dice::WeightedBatch batch;
  dice::WeightedRow r;
  r.obs = {0};
  r.acts = {1};
  r.w = 1.0;
  batch.rows = {r};
  CHECK_THROWS_AS(wbc_loss(ps, batch, false), PolicyError);
}

TEST_CASE("tabular maximizers are weighted count ratios with uniform fallback") {
  // single state, two agents, joint counts indexed agent-0-major
  data::Dataset ds = verify::counts_dataset(2, 2, {6, 2, 0, 0});
  auto view = data::TransitionView::build(ds, 0.9);
  std::vector<double> w(view.n_rows(), 1.0);

  auto joint = tabular_wbc_global(view, w);
  REQUIRE(joint.size() == 1);
  CHECK(joint[0][0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(joint[0][1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(joint[0][2] == doctest::Approx(0.0));
  CHECK(joint[0][3] == doctest::Approx(0.0));

  auto local0 = tabular_wbc_local(view, w, 0);
  auto local1 = tabular_wbc_local(view, w, 1);
  CHECK(local0[0][0] == doctest::Approx(1.0).epsilon(1e-12));  // agent 0 always acts 0
  CHECK(local1[0][0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(local1[0][1] == doctest::Approx(0.25).epsilon(1e-12));

  // upweighting the rare rows moves the ratio
  std::vector<double> w2(view.n_rows(), 1.0);
  for (int r = 0; r < view.n_rows(); ++r)
    if (view.acts[r][1] == 1) w2[r] = 3.0;
  auto local1b = tabular_wbc_local(view, w2, 1);
  CHECK(local1b[0][1] == doctest::Approx((3.0 * 2) / (6.0 + 3.0 * 2)).epsilon(1e-12));
}

TEST_CASE("product of local closed forms attains the factored optimum") {
  data::Dataset ds = verify::counts_dataset(2, 2, {3, 5, 4, 4});
  auto view = data::TransitionView::build(ds, 0.9);
  Rng rng(13);
  std::vector<double> w(view.n_rows());
  for (auto& v : w) v = rng.uniform(0.2, 2.0);

  ConsistencyReport rep = consistency_check(view, w, 7, 6);
  CHECK(rep.ok);
  CHECK(rep.max_dev < 1e-6);
}

TEST_CASE("closed-form local policy") {
  ClosedFormInputs in;
  in.n_obs = {1};
  in.n_actions = {2};
  in.q = {{0.5, -0.5}};
  in.mu = {{0.25, 0.75}};
  in.phi = {0.8};
  in.alpha = 0.6;

  SUBCASE("matches the softmax formula") {
    auto pi = closed_form_local(in, 0, 0);
    double u0 = 0.25 * std::exp(0.8 * 0.5 / 1.6);
    double u1 = 0.75 * std::exp(0.8 * -0.5 / 1.6);
    CHECK(pi[0] == doctest::Approx(u0 / (u0 + u1)).epsilon(1e-12));
    CHECK(pi[1] == doctest::Approx(u1 / (u0 + u1)).epsilon(1e-12));
  }

  SUBCASE("zero mixer weight returns the behavior row bit-exactly") {
    in.phi = {0.0};
    auto pi = closed_form_local(in, 0, 0);
    CHECK(pi[0] == 0.25);
    CHECK(pi[1] == 0.75);
  }

  SUBCASE("large scores stay finite through the max shift") {
    in.q = {{1000.0, -1000.0}};
    auto pi = closed_form_local(in, 0, 0);
    CHECK(std::isfinite(pi[0]));
    CHECK(pi[0] == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("a zero-mass behavior row is an error") {
    in.mu = {{0.0, 0.0}};
    CHECK_THROWS_AS(closed_form_local(in, 0, 0), PolicyError);
  }
}

TEST_CASE("gradient extraction approaches the tabular maximizer") {
  data::Dataset ds = verify::counts_dataset(2, 2, {7, 9, 11, 13});
  auto view = data::TransitionView::build(ds, 0.9);
  Rng rng(29);
  std::vector<double> w(view.n_rows());
  for (auto& v : w) v = rng.uniform(0.5, 1.5);

  PolicyConfig cfg;
  cfg.steps = 1800;
  cfg.batch = 128;
  cfg.lr = 5e-3;
  cfg.hidden = {};
  cfg.seed = 17;
  LocalPolicySet ps = extract_policies(view, w, cfg);

  for (int agent = 0; agent < 2; ++agent) {
    auto target = tabular_wbc_local(view, w, agent);
    auto got = ps.probs(agent, 0);
    double tv = 0.0;
    for (int a = 0; a < 2; ++a) tv += 0.5 * std::abs(got[a] - target[0][a]);
    INFO("agent " << agent);
    CHECK(tv < 5e-2);
  }
}

TEST_CASE("row weights compose discriminator and potentials") {
  data::Dataset ds = verify::counts_dataset(2, 2, {3, 5, 4, 4});
  auto view = data::TransitionView::build(ds, 0.9);

  ratio::DiscConfig dcfg;
  dcfg.hidden = {};
  dcfg.seed = 41;
  ratio::DiscModel disc({1, 1}, {2, 2}, dcfg);

  dice::ValueConfig vcfg;
  vcfg.hidden = {};
  vcfg.alpha = 0.3;
  vcfg.gamma = 0.9;
  vcfg.seed = 42;
  dice::ValueModel model({1, 1}, vcfg);

  auto w = row_weights(view, disc, model);
  REQUIRE(int(w.size()) == view.n_rows());
  for (int r = 0; r < view.n_rows(); ++r) {
    double lr = ratio::log_ratio(disc, view.obs[r], view.acts[r]);
    double A = dice::advantage(model, lr, view.obs[r], view.next_obs[r],
                               view.terminal[r] != 0);
    CHECK(w[r] == doctest::Approx(dice::weight(A, 0.3)).epsilon(1e-12));
  }
}
