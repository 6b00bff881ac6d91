#include <doctest.h>

#include <cmath>
#include <vector>

#include "data.hpp"
#include "dice.hpp"
#include "ratio.hpp"
#include "verify.hpp"

using namespace miso;
using namespace miso::dice;

namespace {

ValueConfig tab_cfg(double alpha = 0.7, double gamma = 0.9) {
  ValueConfig cfg;
  cfg.hidden = {};
  cfg.mixer = approx::MixerKind::Linear;
  cfg.alpha = alpha;
  cfg.gamma = gamma;
  cfg.seed = 3;
  return cfg;
}

WeightedBatch synth_batch(int n, uint64_t seed) {
  Rng rng(seed);
  WeightedBatch batch;
  for (int i = 0; i < n; ++i) {
    WeightedRow row;
    row.obs = {int(rng.below(3)), int(rng.below(2))};
    row.acts = {0, 0};
    row.next_obs = {int(rng.below(3)), int(rng.below(2))};
    row.terminal = rng.uniform() < 0.2;
    row.log_ratio = rng.uniform(-1.5, 1.5);
    batch.rows.push_back(row);
  }
  return batch;
}

std::vector<std::vector<int>> synth_init(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<int>> init;
  for (int i = 0; i < n; ++i)
    init.push_back({int(rng.below(3)), int(rng.below(2))});
  return init;
}

std::vector<double> all_params(ValueModel& m) {
  std::vector<double> out;
  for (auto& net : m.locals) {
    auto p = net.get_params();
    out.insert(out.end(), p.begin(), p.end());
  }
  auto p = m.mixer.get_params();
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

void set_all_params(ValueModel& m, const std::vector<double>& v) {
  size_t at = 0;
  for (auto& net : m.locals) {
    std::vector<double> p(v.begin() + at, v.begin() + at + net.n_params());
    net.set_params(p);
    at += net.n_params();
  }
  std::vector<double> p(v.begin() + at, v.begin() + at + m.mixer.n_params());
  m.mixer.set_params(p);
}

std::vector<double> all_grads(ValueModel& m) {
  std::vector<double> out;
  for (auto& net : m.locals)
    for (auto& view : net.params())
      out.insert(out.end(), view.grad, view.grad + view.count);
  for (auto& view : m.mixer.params())
    out.insert(out.end(), view.grad, view.grad + view.count);
  return out;
}

void zero_all(ValueModel& m) {
  for (auto& net : m.locals) net.zero_grad();
  m.mixer.zero_grad();
}

}  // namespace

TEST_CASE("closed-form inner weight and its certificate") {
  CHECK(weight(0.0, 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(weight(1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(weight(2.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));

  for (double A : {-3.0, -0.5, 0.0, 1.0, 4.0}) {
    for (double alpha : {0.0, 0.05, 1.0, 10.0}) {
      InnerMaxReport rep = inner_max_report(A, alpha);
      INFO("A=" << A << " alpha=" << alpha);
      CHECK(rep.ok);
      CHECK(rep.rel_err < 1e-6);
      CHECK(rep.identity_err < 1e-9);
    }
  }
}

TEST_CASE("advantage composes ratio, discount, and potentials") {
  ValueModel model({3, 2}, tab_cfg(0.5, 0.8));
  std::vector<int> o = {1, 0}, op = {2, 1};
  double nu_o = model.nu_tot(o), nu_op = model.nu_tot(op);
  CHECK(advantage(model, 0.3, o, op, false) ==
        doctest::Approx(0.3 + 0.8 * nu_op - nu_o).epsilon(1e-12));
  // terminal successor contributes nothing
  CHECK(advantage(model, 0.3, o, op, true) ==
        doctest::Approx(0.3 - nu_o).epsilon(1e-12));
}

TEST_CASE("annotate fills the closed-form weights") {
  ValueModel model({3, 2}, tab_cfg());
  WeightedBatch batch = synth_batch(32, 4);
  annotate(batch, model);
  for (const auto& row : batch.rows) {
    CHECK(row.A == doctest::Approx(advantage(model, row.log_ratio, row.obs,
                                             row.next_obs, row.terminal))
                       .epsilon(1e-12));
    CHECK(row.w == doctest::Approx(weight(row.A, model.alpha)).epsilon(1e-12));
  }
}

TEST_CASE("make_batch carries the discriminator's log ratio") {
  data::Dataset ds = verify::counts_dataset(2, 2, {3, 5, 4, 4});
  auto view = data::TransitionView::build(ds, 0.9);
  ratio::DiscConfig dcfg;
  dcfg.hidden = {};
  dcfg.seed = 9;
  ratio::DiscModel disc({1, 1}, {2, 2}, dcfg);

  std::vector<int> rows = {0, 3, 7};
  WeightedBatch batch = make_batch(view, rows, disc);
  REQUIRE(batch.rows.size() == 3);
  for (size_t i = 0; i < rows.size(); ++i) {
    int r = rows[i];
    CHECK(batch.rows[i].obs == view.obs[r]);
    CHECK(batch.rows[i].acts == view.acts[r]);
    CHECK(batch.rows[i].log_ratio ==
          doctest::Approx(ratio::log_ratio(disc, view.obs[r], view.acts[r]))
              .epsilon(1e-12));
  }
}

TEST_CASE("literal and simplified value losses agree in value and gradient") {
  // the closed-form weight substitution is exact, so both forms of the loss
  // and their parameter gradients must coincide up to rounding
  for (auto kind : {approx::MixerKind::Linear, approx::MixerKind::TwoLayer}) {
    ValueConfig cfg = tab_cfg(0.35, 0.9);
    cfg.mixer = kind;
    cfg.mixer_hidden = 3;
    ValueModel model({3, 2}, cfg);
    WeightedBatch batch = synth_batch(24, 7);
    auto init = synth_init(6, 8);

    annotate(batch, model);
    zero_all(model);
    double simple = value_loss(model, batch, init, true, false);
    auto g_simple = all_grads(model);

    annotate(batch, model);
    zero_all(model);
    double literal = value_loss(model, batch, init, true, true);
    auto g_literal = all_grads(model);

    INFO("mixer kind " << int(kind));
    CHECK(std::abs(simple - literal) < 1e-12 * std::max(1.0, std::abs(simple)));
    REQUIRE(g_simple.size() == g_literal.size());
    for (size_t i = 0; i < g_simple.size(); ++i)
      CHECK(g_simple[i] == doctest::Approx(g_literal[i]).epsilon(1e-9));
  }
}

TEST_CASE("value loss is not jointly convex across blocks") {
  // with a linear mixer the exponent couples mixer weights and local outputs
  // bilinearly; sampling segments that vary both blocks at once finds
  // midpoint violations, which is exactly why the certified probes hold one
  // block fixed
  ValueConfig cfg = tab_cfg(0.7, 0.9);
  ValueModel model({3, 2}, cfg);
  WeightedBatch batch = synth_batch(16, 21);
  auto init = synth_init(5, 22);
  size_t dim = all_params(model).size();

  auto loss = [&](const std::vector<double>& v) {
    set_all_params(model, v);
    annotate(batch, model);
    return value_loss(model, batch, init, false, false);
  };
  auto sampler = [&](Rng& rng, std::vector<double>& x, std::vector<double>& y) {
    x.resize(dim);
    y.resize(dim);
    for (auto& v : x) v = rng.uniform(-1.5, 1.5);
    for (auto& v : y) v = rng.uniform(-1.5, 1.5);
  };
  auto rep = approx::convexity_probe(loss, sampler, 600, 1e-9, 13);
  CHECK(rep.n_violations > 0);
  CHECK(rep.worst_gap > 1e-6);
}

TEST_CASE("training drives the mean union weight to one") {
  // stationarity of the loss in the mixer offset forces E_U[w] = 1
  data::Dataset ds_e = verify::counts_dataset(2, 2, {7, 9, 11, 13});
  data::Dataset ds_u = verify::counts_dataset(2, 2, {13, 11, 9, 7});
  auto view_e = data::TransitionView::build(ds_e, 0.9);
  auto view_u = data::TransitionView::build(ds_u, 0.9);

  ratio::DiscConfig dcfg;
  dcfg.steps = 1500;
  dcfg.batch = 128;
  dcfg.lr = 5e-3;
  dcfg.hidden = {};
  dcfg.seed = 31;
  ratio::DiscModel disc = ratio::train_discriminator(view_e, view_u, dcfg);

  ValueConfig vcfg = tab_cfg(0.7, 0.9);
  vcfg.steps = 2500;
  vcfg.batch = 128;
  vcfg.lr = 5e-3;
  vcfg.seed = 32;
  ValueModel model = train_values(view_e, view_u, disc, vcfg);

  double mean_w = 0.0;
  for (int r = 0; r < view_u.n_rows(); ++r) {
    double lr = ratio::log_ratio(disc, view_u.obs[r], view_u.acts[r]);
    double A = advantage(model, lr, view_u.obs[r], view_u.next_obs[r],
                         view_u.terminal[r] != 0);
    mean_w += view_u.weight[r] * weight(A, model.alpha);
  }
  CHECK(mean_w == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("non-finite loss is an error, not a number") {
  ValueModel model({3, 2}, tab_cfg(0.05, 0.9));
  WeightedBatch batch = synth_batch(4, 5);
  batch.rows[2].log_ratio = 5000.0;  // exp overflows
  auto init = synth_init(3, 6);
  annotate(batch, model);
  CHECK_THROWS_WITH_AS(value_loss(model, batch, init, false, false),
                       doctest::Contains("non-finite"), DiceError);
}
