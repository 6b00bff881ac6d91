#include "approx.hpp"

#include <cmath>
#include <cstring>

#include "serial.hpp"

namespace miso::approx {

Act act_from_string(const std::string& name) {
  if (name == "relu") return Act::Relu;
  if (name == "tanh") return Act::Tanh;
  if (name == "softplus") return Act::Softplus;
  throw DimError("unknown activation: " + name);
}

static double softplus(double x) {
  // overflow-safe: log(1+e^x) = max(x,0) + log1p(e^{-|x|})
  return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double act_eval(Act a, double x) {
  switch (a) {
    case Act::Relu:
      return x > 0.0 ? x : 0.0;
    case Act::Tanh:
      return std::tanh(x);
    case Act::Softplus:
      return softplus(x);
  }
  return 0.0;
}

// derivative as a function of the *post-activation* value is awkward for
// softplus, so derivatives are taken from the pre-activation input
double act_deriv_from_input(Act a, double x) {
  switch (a) {
    case Act::Relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Act::Tanh: {
      double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Act::Softplus:
      return 1.0 / (1.0 + std::exp(-x));
  }
  return 0.0;
}

Mlp::Mlp(const ApproxSpec& spec, uint64_t seed) : spec_(spec) {
  if (spec.input_dim <= 0 || spec.output_dim <= 0)
    throw DimError("ApproxSpec dims must be positive");
  act_ = act_from_string(spec.activation);
  Rng rng(seed);
  int prev = spec.input_dim;
  auto add_layer = [&](int out) {
    Layer l;
    l.in = prev;
    l.out = out;
    l.w.resize(size_t(out) * prev);
    l.b.assign(out, 0.0);
    l.gw.assign(l.w.size(), 0.0);
    l.gb.assign(out, 0.0);
    double bound = 1.0 / std::sqrt(double(prev));  // fan-in scaled
    for (auto& w : l.w) w = rng.uniform(-bound, bound);
    layers_.push_back(std::move(l));
    prev = out;
  };
  for (int h : spec.hidden) {
    if (h <= 0) throw DimError("hidden width must be positive");
    add_layer(h);
  }
  add_layer(spec.output_dim);
}

void Mlp::affine(const Layer& l, const double* x, int batch, double* y) const {
  for (int b = 0; b < batch; ++b) {
    const double* xi = x + size_t(b) * l.in;
    double* yi = y + size_t(b) * l.out;
    for (int o = 0; o < l.out; ++o) {
      const double* w = l.w.data() + size_t(o) * l.in;
      double acc = l.b[o];
      for (int i = 0; i < l.in; ++i) acc += w[i] * xi[i];
      yi[o] = acc;
    }
  }
}

void Mlp::forward(const std::vector<double>& x, int batch,
                  std::vector<double>& y) {
  if (x.size() != size_t(batch) * spec_.input_dim)
    throw DimError("Mlp::forward input size mismatch");
  cached_batch_ = batch;
  cache_.assign(layers_.size() + 1, {});
  cache_[0] = x;
  std::vector<double> cur = x;
  for (size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    std::vector<double> pre(size_t(batch) * l.out);
    affine(l, cur.data(), batch, pre.data());
    if (li + 1 < layers_.size()) {
      // hidden layer: keep pre-activation for backward, pass activation on
      cache_[li + 1] = pre;
      for (auto& v : pre) v = act_eval(act_, v);
    } else {
      cache_[li + 1] = pre;  // output layer is linear
    }
    cur = std::move(pre);
  }
  y = cur;
}

void Mlp::backward(const std::vector<double>& dy, std::vector<double>* dx) {
  if (cached_batch_ == 0) throw DimError("Mlp::backward without forward");
  int batch = cached_batch_;
  std::vector<double> delta = dy;  // grad w.r.t. current layer's pre-activation
  for (size_t li = layers_.size(); li-- > 0;) {
    Layer& l = layers_[li];
    // input to this layer: activation of cache_[li] (or raw input for li==0)
    const std::vector<double>& raw_in = cache_[li];
    std::vector<double> in;
    if (li == 0) {
      in = raw_in;
    } else {
      in.resize(raw_in.size());
      for (size_t k = 0; k < raw_in.size(); ++k)
        in[k] = act_eval(act_, raw_in[k]);
    }
    std::vector<double> dprev(size_t(batch) * l.in, 0.0);
    for (int b = 0; b < batch; ++b) {
      const double* d = delta.data() + size_t(b) * l.out;
      const double* xi = in.data() + size_t(b) * l.in;
      double* dp = dprev.data() + size_t(b) * l.in;
      for (int o = 0; o < l.out; ++o) {
        double g = d[o];
        l.gb[o] += g;
        double* gw = l.gw.data() + size_t(o) * l.in;
        const double* w = l.w.data() + size_t(o) * l.in;
        for (int i = 0; i < l.in; ++i) {
          gw[i] += g * xi[i];
          dp[i] += g * w[i];
        }
      }
    }
    if (li > 0) {
      // chain through the activation of the previous layer
      const std::vector<double>& pre = cache_[li];
      for (size_t k = 0; k < dprev.size(); ++k)
        dprev[k] *= act_deriv_from_input(act_, pre[k]);
    }
    delta = std::move(dprev);
  }
  if (dx) *dx = std::move(delta);
}

void Mlp::predict(const double* x, int batch, double* y) const {
  std::vector<double> cur(x, x + size_t(batch) * spec_.input_dim);
  for (size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    std::vector<double> nxt(size_t(batch) * l.out);
    affine(l, cur.data(), batch, nxt.data());
    if (li + 1 < layers_.size())
      for (auto& v : nxt) v = act_eval(act_, v);
    cur = std::move(nxt);
  }
  std::memcpy(y, cur.data(), cur.size() * sizeof(double));
}

double Mlp::predict_one(const double* x) const {
  double y;
  predict(x, 1, &y);
  return y;
}

void Mlp::zero_grad() {
  for (auto& l : layers_) {
    std::fill(l.gw.begin(), l.gw.end(), 0.0);
    std::fill(l.gb.begin(), l.gb.end(), 0.0);
  }
}

std::vector<ParamView> Mlp::params() {
  std::vector<ParamView> v;
  for (auto& l : layers_) {
    v.push_back({l.w.data(), l.gw.data(), l.w.size()});
    v.push_back({l.b.data(), l.gb.data(), l.b.size()});
  }
  return v;
}

size_t Mlp::n_params() const {
  size_t n = 0;
  for (auto& l : layers_) n += l.w.size() + l.b.size();
  return n;
}

std::vector<double> Mlp::get_params() const {
  std::vector<double> out;
  out.reserve(n_params());
  for (auto& l : layers_) {
    out.insert(out.end(), l.w.begin(), l.w.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

void Mlp::set_params(const std::vector<double>& v) {
  if (v.size() != n_params()) throw DimError("Mlp::set_params size mismatch");
  size_t o = 0;
  for (auto& l : layers_) {
    std::copy(v.begin() + o, v.begin() + o + l.w.size(), l.w.begin());
    o += l.w.size();
    std::copy(v.begin() + o, v.begin() + o + l.b.size(), l.b.begin());
    o += l.b.size();
  }
}

// ------------------------------------------------------------------- Mixer

MixerKind mixer_from_string(const std::string& name) {
  if (name == "linear") return MixerKind::Linear;
  if (name == "vdn") return MixerKind::Vdn;
  if (name == "two-layer") return MixerKind::TwoLayer;
  throw DimError("unknown mixer: " + name);
}

std::string mixer_to_string(MixerKind k) {
  switch (k) {
    case MixerKind::Linear:
      return "linear";
    case MixerKind::Vdn:
      return "vdn";
    case MixerKind::TwoLayer:
      return "two-layer";
  }
  return "?";
}

Mixer::Mixer(MixerKind kind, int n_inputs, int hidden, uint64_t seed)
    : kind_(kind), n_(n_inputs), hidden_(hidden) {
  if (n_inputs <= 0) throw DimError("mixer needs n_inputs > 0");
  Rng rng(seed);
  switch (kind_) {
    case MixerKind::Linear:
      // [phi_0, phi_1..phi_n]
      p_.assign(size_t(n_) + 1, 1.0 / n_);
      p_[0] = 0.0;
      break;
    case MixerKind::Vdn:
      break;
    case MixerKind::TwoLayer: {
      if (hidden_ <= 0) throw DimError("two-layer mixer needs hidden > 0");
      // [W (h*n), b (h), v (h), c]
      p_.resize(size_t(hidden_) * n_ + 2 * hidden_ + 1, 0.0);
      double bound = 1.0 / std::sqrt(double(n_));
      for (int j = 0; j < hidden_ * n_; ++j) p_[j] = rng.uniform(-bound, bound);
      double* v = p_.data() + size_t(hidden_) * n_ + hidden_;
      for (int j = 0; j < hidden_; ++j)
        v[j] = std::fabs(rng.uniform(-1.0, 1.0)) / hidden_ + 0.5 / hidden_;
      break;
    }
  }
  g_.assign(p_.size(), 0.0);
}

double Mixer::mix_one(const double* x) const {
  switch (kind_) {
    case MixerKind::Linear: {
      double acc = p_[0];
      for (int i = 0; i < n_; ++i) acc += p_[1 + i] * x[i];
      return acc;
    }
    case MixerKind::Vdn: {
      double acc = 0.0;
      for (int i = 0; i < n_; ++i) acc += x[i];
      return acc;
    }
    case MixerKind::TwoLayer: {
      const double* W = p_.data();
      const double* b = W + size_t(hidden_) * n_;
      const double* v = b + hidden_;
      double c = v[hidden_];
      double acc = c;
      for (int j = 0; j < hidden_; ++j) {
        double pre = b[j];
        for (int i = 0; i < n_; ++i) pre += W[size_t(j) * n_ + i] * x[i];
        acc += v[j] * softplus(pre);
      }
      return acc;
    }
  }
  return 0.0;
}

void Mixer::forward(const std::vector<double>& locals, int batch,
                    std::vector<double>& y) {
  if (locals.size() != size_t(batch) * n_)
    throw DimError("Mixer::forward size mismatch");
  cached_batch_ = batch;
  cache_x_ = locals;
  y.resize(batch);
  if (kind_ == MixerKind::TwoLayer) {
    cache_h_.resize(size_t(batch) * hidden_);
    const double* W = p_.data();
    const double* b = W + size_t(hidden_) * n_;
    const double* v = b + hidden_;
    double c = v[hidden_];
    for (int bi = 0; bi < batch; ++bi) {
      const double* x = locals.data() + size_t(bi) * n_;
      double acc = c;
      for (int j = 0; j < hidden_; ++j) {
        double pre = b[j];
        for (int i = 0; i < n_; ++i) pre += W[size_t(j) * n_ + i] * x[i];
        cache_h_[size_t(bi) * hidden_ + j] = pre;
        acc += v[j] * softplus(pre);
      }
      y[bi] = acc;
    }
  } else {
    for (int bi = 0; bi < batch; ++bi)
      y[bi] = mix_one(locals.data() + size_t(bi) * n_);
  }
}

void Mixer::backward(const std::vector<double>& dy,
                     std::vector<double>* dlocals) {
  if (cached_batch_ == 0) throw DimError("Mixer::backward without forward");
  int batch = cached_batch_;
  if (dlocals) dlocals->assign(size_t(batch) * n_, 0.0);
  switch (kind_) {
    case MixerKind::Linear:
      for (int bi = 0; bi < batch; ++bi) {
        double d = dy[bi];
        const double* x = cache_x_.data() + size_t(bi) * n_;
        g_[0] += d;
        for (int i = 0; i < n_; ++i) {
          g_[1 + i] += d * x[i];
          if (dlocals) (*dlocals)[size_t(bi) * n_ + i] = d * p_[1 + i];
        }
      }
      break;
    case MixerKind::Vdn:
      if (dlocals)
        for (int bi = 0; bi < batch; ++bi)
          for (int i = 0; i < n_; ++i)
            (*dlocals)[size_t(bi) * n_ + i] = dy[bi];
      break;
    case MixerKind::TwoLayer: {
      const double* W = p_.data();
      const double* v = W + size_t(hidden_) * n_ + hidden_;
      double* gW = g_.data();
      double* gb = gW + size_t(hidden_) * n_;
      double* gv = gb + hidden_;
      double* gc = gv + hidden_;
      for (int bi = 0; bi < batch; ++bi) {
        double d = dy[bi];
        const double* x = cache_x_.data() + size_t(bi) * n_;
        const double* pre = cache_h_.data() + size_t(bi) * hidden_;
        *gc += d;
        for (int j = 0; j < hidden_; ++j) {
          double s = softplus(pre[j]);
          double sig = 1.0 / (1.0 + std::exp(-pre[j]));
          gv[j] += d * s;
          double dpre = d * v[j] * sig;
          gb[j] += dpre;
          for (int i = 0; i < n_; ++i) {
            gW[size_t(j) * n_ + i] += dpre * x[i];
            if (dlocals)
              (*dlocals)[size_t(bi) * n_ + i] += dpre * W[size_t(j) * n_ + i];
          }
        }
      }
      break;
    }
  }
}

void Mixer::zero_grad() { std::fill(g_.begin(), g_.end(), 0.0); }

std::vector<ParamView> Mixer::params() {
  if (p_.empty()) return {};
  return {{p_.data(), g_.data(), p_.size()}};
}

size_t Mixer::n_params() const { return p_.size(); }
std::vector<double> Mixer::get_params() const { return p_; }
void Mixer::set_params(const std::vector<double>& v) {
  if (v.size() != p_.size()) throw DimError("Mixer::set_params size mismatch");
  p_ = v;
}

// -------------------------------------------------------------------- Adam

void Adam::attach(std::vector<ParamView> views) {
  views_ = std::move(views);
  size_t n = 0;
  for (auto& v : views_) n += v.count;
  m_.assign(n, 0.0);
  v_.assign(n, 0.0);
  t_ = 0;
  skipped_ = 0;
}

bool Adam::step() {
  for (auto& view : views_)
    for (size_t i = 0; i < view.count; ++i)
      if (!std::isfinite(view.grad[i])) {
        ++skipped_;
        return false;
      }
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  size_t o = 0;
  for (auto& view : views_) {
    for (size_t i = 0; i < view.count; ++i, ++o) {
      double g = view.grad[i];
      m_[o] = cfg_.beta1 * m_[o] + (1.0 - cfg_.beta1) * g;
      v_[o] = cfg_.beta2 * v_[o] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m_[o] / bc1;
      double vhat = v_[o] / bc2;
      view.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  return true;
}

// -------------------------------------------------------------- grad check

GradCheckReport grad_check(const std::function<double(bool)>& eval,
                           std::vector<ParamView> views, double h,
                           double floor_denom) {
  GradCheckReport rep;
  eval(true);  // fills grads
  std::vector<std::vector<double>> analytic;
  for (auto& v : views)
    analytic.emplace_back(v.grad, v.grad + v.count);
  for (size_t vi = 0; vi < views.size(); ++vi) {
    auto& view = views[vi];
    for (size_t i = 0; i < view.count; ++i) {
      double saved = view.value[i];
      view.value[i] = saved + h;
      double up = eval(false);
      view.value[i] = saved - h;
      double dn = eval(false);
      view.value[i] = saved;
      double numeric = (up - dn) / (2.0 * h);
      double a = analytic[vi][i];
      double denom = std::max({std::fabs(a), std::fabs(numeric), floor_denom});
      double rel = std::fabs(a - numeric) / denom;
      if (rel > rep.max_rel_err) rep.max_rel_err = rel;
      ++rep.n_checked;
    }
  }
  return rep;
}

// --------------------------------------------------------- convexity probe

ConvexityReport convexity_probe(
    const std::function<double(const std::vector<double>&)>& loss,
    const std::function<void(Rng&, std::vector<double>&, std::vector<double>&)>&
        sampler,
    int n_segments, double tol, uint64_t seed) {
  ConvexityReport rep;
  rep.n_segments = n_segments;
  Rng rng(seed);
  std::vector<double> x, y, mid;
  for (int s = 0; s < n_segments; ++s) {
    sampler(rng, x, y);
    mid.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) mid[i] = 0.5 * (x[i] + y[i]);
    double lx = loss(x), ly = loss(y), lm = loss(mid);
    if (!std::isfinite(lx) || !std::isfinite(ly) || !std::isfinite(lm))
      throw NumericError("convexity_probe: non-finite loss at probe point");
    double gap = lm - 0.5 * (lx + ly) - tol;
    if (gap > 0.0) {
      ++rep.n_violations;
      if (gap > rep.worst_gap) rep.worst_gap = gap;
    }
  }
  return rep;
}

// -------------------------------------------------------------- checkpoint

static constexpr uint32_t kCkptMagic = 0x4d434b50;  // "MCKP"
static constexpr uint32_t kCkptVersion = 1;

void save_checkpoint(const std::string& path,
                     const std::vector<NamedParams>& blocks) {
  ByteWriter w;
  w.u32(kCkptMagic);
  w.u32(kCkptVersion);
  w.u32(uint32_t(blocks.size()));
  for (auto& b : blocks) {
    w.str(b.name);
    w.u64(b.values.size());
    for (double v : b.values) w.f64(v);
  }
  w.write_file_with_checksum(path);
}

std::vector<NamedParams> load_checkpoint(const std::string& path) {
  ByteReader r = ByteReader::from_file_checked(path);
  if (r.u32() != kCkptMagic) throw FormatError("not a checkpoint: " + path);
  uint32_t ver = r.u32();
  if (ver != kCkptVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(ver));
  uint32_t n = r.u32();
  std::vector<NamedParams> out(n);
  for (auto& b : out) {
    b.name = r.str();
    uint64_t cnt = r.u64();
    b.values.resize(cnt);
    for (auto& v : b.values) v = r.f64();
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in " + path);
  return out;
}

}  // namespace miso::approx
