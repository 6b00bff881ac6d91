#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "approx.hpp"
#include "serial.hpp"

using namespace miso;
using namespace miso::approx;

namespace {

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

}  // namespace

TEST_CASE("mlp forward matches a hand computation") {
  ApproxSpec spec;
  spec.input_dim = 2;
  spec.hidden = {2};
  spec.output_dim = 1;
  spec.activation = "relu";
  Mlp net(spec, 1);

  // layer 0: w [out][in] = [[1,2],[3,-1]], b = [0.5, -0.5]
  // layer 1: w = [[2,-3]], b = [0.25]
  net.set_params({1, 2, 3, -1, 0.5, -0.5, 2, -3, 0.25});

  std::vector<double> x = {1.0, -1.0};
  std::vector<double> y;
  net.forward(x, 1, y);
  // h = relu([1*1+2*(-1)+0.5, 3*1+(-1)*(-1)-0.5]) = relu([-0.5, 3.5]) = [0, 3.5]
  // y = 2*0 - 3*3.5 + 0.25 = -10.25
  CHECK(y.size() == 1);
  CHECK(y[0] == doctest::Approx(-10.25).epsilon(1e-12));
  CHECK(net.predict_one(x.data()) == doctest::Approx(-10.25).epsilon(1e-12));
}

TEST_CASE("mlp batch forward equals row-by-row predict") {
  ApproxSpec spec;
  spec.input_dim = 3;
  spec.hidden = {8, 4};
  spec.output_dim = 2;
  spec.activation = "tanh";
  Mlp net(spec, 7);

  int batch = 5;
  Rng rng(3);
  std::vector<double> x(batch * 3);
  for (auto& v : x) v = rng.normal();
  std::vector<double> y;
  net.forward(x, batch, y);
  REQUIRE(int(y.size()) == batch * 2);

  std::vector<double> row(2);
  for (int b = 0; b < batch; ++b) {
    net.predict(x.data() + b * 3, 1, row.data());
    CHECK(y[b * 2] == doctest::Approx(row[0]).epsilon(1e-12));
    CHECK(y[b * 2 + 1] == doctest::Approx(row[1]).epsilon(1e-12));
  }
}

TEST_CASE("mlp analytic gradients agree with finite differences") {
  for (const char* act : {"relu", "tanh", "softplus"}) {
    ApproxSpec spec;
    spec.input_dim = 4;
    spec.hidden = {6};
    spec.output_dim = 2;
    spec.activation = act;
    Mlp net(spec, 11);

    int batch = 3;
    Rng rng(5);
    std::vector<double> x(batch * 4);
    for (auto& v : x) v = rng.normal();

    auto eval = [&](bool with_grad) {
      if (with_grad) net.zero_grad();
      std::vector<double> y;
      net.forward(x, batch, y);
      double loss = 0.0;
      std::vector<double> dy(y.size());
      for (size_t i = 0; i < y.size(); ++i) {
        loss += 0.5 * y[i] * y[i];
        dy[i] = y[i];
      }
      if (with_grad) net.backward(dy);
      return loss;
    };
    auto rep = grad_check(eval, net.params());
    INFO("activation " << act);
    CHECK(rep.max_rel_err < 1e-4);
    CHECK(rep.n_checked == net.n_params());
  }
}

TEST_CASE("mlp input gradients are correct") {
  ApproxSpec spec;
  spec.input_dim = 3;
  spec.hidden = {5};
  spec.output_dim = 1;
  spec.activation = "softplus";
  Mlp net(spec, 13);

  std::vector<double> x = {0.3, -0.7, 1.1};
  auto loss_at = [&](const std::vector<double>& xx) {
    std::vector<double> y;
    Mlp& n = net;
    std::vector<double> xv = xx;
    n.forward(xv, 1, y);
    return 0.5 * y[0] * y[0];
  };

  std::vector<double> y;
  net.forward(x, 1, y);
  std::vector<double> dx;
  net.zero_grad();
  net.backward({y[0]}, &dx);
  REQUIRE(dx.size() == 3);

  for (int i = 0; i < 3; ++i) {
    std::vector<double> xp = x, xm = x;
    xp[i] += 1e-6;
    xm[i] -= 1e-6;
    double num = (loss_at(xp) - loss_at(xm)) / 2e-6;
    CHECK(dx[i] == doctest::Approx(num).epsilon(1e-5));
  }
}

TEST_CASE("param views cover get/set round trip") {
  ApproxSpec spec;
  spec.input_dim = 2;
  spec.hidden = {3};
  spec.output_dim = 1;
  Mlp net(spec, 2);
  auto v = net.get_params();
  CHECK(v.size() == net.n_params());
  for (auto& p : v) p += 0.125;
  net.set_params(v);
  auto w = net.get_params();
  CHECK(v == w);
  CHECK_THROWS_AS(net.set_params(std::vector<double>(v.size() + 1, 0.0)),
                  DimError);
}

TEST_CASE("mixer forms compute what they claim") {
  std::vector<double> locals = {0.5, -1.5, 2.0};

  Mixer vdn(MixerKind::Vdn, 3, 0, 1);
  CHECK(vdn.mix_one(locals.data()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(vdn.n_params() == 0);

  Mixer lin(MixerKind::Linear, 3, 0, 1);
  lin.set_params({0.25, 1.0, 2.0, -0.5});
  // 0.25 + 1*0.5 + 2*(-1.5) - 0.5*2 = -3.25
  CHECK(lin.mix_one(locals.data()) == doctest::Approx(-3.25).epsilon(1e-12));

  Mixer two(MixerKind::TwoLayer, 2, 2, 3);
  // layout [W (hidden x n), b (hidden), v (hidden), c]
  two.set_params({1.0, 0.0, 0.0, 1.0, 0.1, -0.1, 0.5, 2.0, 0.25});
  double x0 = 0.5, x1 = -1.5;
  double expect =
      0.5 * softplus(x0 + 0.1) + 2.0 * softplus(x1 - 0.1) + 0.25;
  double got = two.mix_one(std::vector<double>{x0, x1}.data());
  CHECK(got == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("mixer batch forward and backward are consistent") {
  for (auto kind : {MixerKind::Linear, MixerKind::TwoLayer}) {
    Mixer mix(kind, 3, 4, 9);
    int batch = 6;
    Rng rng(17);
    std::vector<double> x(batch * 3);
    for (auto& v : x) v = rng.normal();

    std::vector<double> y;
    mix.forward(x, batch, y);
    REQUIRE(int(y.size()) == batch);
    for (int b = 0; b < batch; ++b)
      CHECK(y[b] == doctest::Approx(mix.mix_one(x.data() + b * 3)).epsilon(1e-12));

    if (mix.n_params() == 0) continue;
    auto eval = [&](bool with_grad) {
      if (with_grad) mix.zero_grad();
      std::vector<double> yy;
      mix.forward(x, batch, yy);
      double loss = 0.0;
      std::vector<double> dy(yy.size());
      for (size_t i = 0; i < yy.size(); ++i) {
        loss += 0.5 * yy[i] * yy[i];
        dy[i] = yy[i];
      }
      if (with_grad) mix.backward(dy);
      return loss;
    };
    auto rep = grad_check(eval, mix.params());
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("mixer backward propagates to locals") {
  Mixer mix(MixerKind::TwoLayer, 2, 3, 21);
  std::vector<double> x = {0.4, -0.9};
  std::vector<double> y;
  mix.forward(x, 1, y);
  std::vector<double> dl;
  mix.zero_grad();
  mix.backward({1.0}, &dl);
  REQUIRE(dl.size() == 2);
  for (int i = 0; i < 2; ++i) {
    std::vector<double> xp = x, xm = x;
    xp[i] += 1e-6;
    xm[i] -= 1e-6;
    double num = (mix.mix_one(xp.data()) - mix.mix_one(xm.data())) / 2e-6;
    CHECK(dl[i] == doctest::Approx(num).epsilon(1e-5));
  }
}

TEST_CASE("adam minimizes a quadratic and skips non-finite steps") {
  // single parameter block owned by the test
  std::vector<double> p = {5.0, -3.0};
  std::vector<double> g = {0.0, 0.0};
  ParamView view{p.data(), g.data(), 2};

  AdamConfig cfg;
  cfg.lr = 0.05;
  Adam opt(cfg);
  opt.attach({view});

  for (int t = 0; t < 2000; ++t) {
    g[0] = p[0] - 1.0;
    g[1] = p[1] + 2.0;
    CHECK(opt.step());
  }
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(p[1] == doctest::Approx(-2.0).epsilon(1e-3));

  double before0 = p[0];
  g[0] = std::numeric_limits<double>::quiet_NaN();
  g[1] = 1.0;
  CHECK_FALSE(opt.step());
  CHECK(opt.steps_skipped() == 1);
  CHECK(p[0] == before0);  // the whole step was skipped
}

TEST_CASE("grad check flags a wrong gradient") {
  std::vector<double> p = {1.3};
  std::vector<double> g = {0.0};
  auto eval = [&](bool with_grad) {
    if (with_grad) g[0] = 3.0 * p[0];  // wrong: true grad of p^2 is 2p
    return p[0] * p[0];
  };
  auto rep = grad_check(eval, {ParamView{p.data(), g.data(), 1}});
  CHECK(rep.max_rel_err > 0.1);
}

TEST_CASE("convexity probe accepts convex and rejects concave") {
  auto quad = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
  };
  auto sampler = [](Rng& rng, std::vector<double>& a, std::vector<double>& b) {
    a.resize(4);
    b.resize(4);
    for (auto& v : a) v = rng.uniform(-2.0, 2.0);
    for (auto& v : b) v = rng.uniform(-2.0, 2.0);
  };
  auto rep = convexity_probe(quad, sampler, 500, 1e-9, 3);
  CHECK(rep.n_segments == 500);
  CHECK(rep.n_violations == 0);

  auto neg = [&](const std::vector<double>& v) { return -quad(v); };
  auto rep2 = convexity_probe(neg, sampler, 500, 1e-9, 3);
  CHECK(rep2.n_violations > 0);
  CHECK(rep2.worst_gap > 0.0);
}

TEST_CASE("checkpoint round trip preserves names and exact values") {
  std::string path =
      (std::filesystem::temp_directory_path() / "miso_ckpt_test.bin").string();
  std::vector<NamedParams> blocks = {
      {"meta", {2.0, 3.0, 5.0}},
      {"pi0", {0.1, -1e-17, 3.14159265358979}},
      {"empty", {}},
  };
  save_checkpoint(path, blocks);
  auto back = load_checkpoint(path);
  REQUIRE(back.size() == 3);
  CHECK(back[0].name == "meta");
  CHECK(back[1].name == "pi0");
  CHECK(back[2].name == "empty");
  CHECK(back[1].values == blocks[1].values);  // bit-exact doubles
  CHECK(back[2].values.empty());

  // corrupt and confirm detection
  {
    FILE* f = fopen(path.c_str(), "r+b");
    REQUIRE(f != nullptr);
    fseek(f, 9, SEEK_SET);
    int c = fgetc(f);
    fseek(f, 9, SEEK_SET);
    fputc(c ^ 0x01, f);
    fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}
