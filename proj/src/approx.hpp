#pragma once
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace miso::approx {

struct DimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A window into one parameter tensor and its gradient accumulator.
struct ParamView {
  double* value = nullptr;
  double* grad = nullptr;
  size_t count = 0;
};

struct ApproxSpec {
  int input_dim = 0;
  std::vector<int> hidden{256};
  int output_dim = 1;
  std::string activation = "relu";  // relu | tanh | softplus
};

enum class Act { Relu, Tanh, Softplus };
Act act_from_string(const std::string& name);
double act_eval(Act a, double x);
double act_deriv_from_input(Act a, double x);

// Dense feed-forward net over one-hot (or any real) inputs, batch row-major.
// forward() caches activations for the matching backward(); predict() is the
// cache-free read-only path for evaluation after training.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const ApproxSpec& spec, uint64_t seed);

  int input_dim() const { return spec_.input_dim; }
  int output_dim() const { return spec_.output_dim; }
  const ApproxSpec& spec() const { return spec_; }

  void forward(const std::vector<double>& x, int batch, std::vector<double>& y);
  // dy: batch*output_dim upstream grads; accumulates into parameter grads.
  // dx (optional): receives batch*input_dim gradient w.r.t. inputs.
  void backward(const std::vector<double>& dy, std::vector<double>* dx = nullptr);
  void predict(const double* x, int batch, double* y) const;
  double predict_one(const double* x) const;  // output_dim == 1 convenience

  void zero_grad();
  std::vector<ParamView> params();
  size_t n_params() const;
  std::vector<double> get_params() const;
  void set_params(const std::vector<double>& v);

 private:
  struct Layer {
    int in = 0, out = 0;
    std::vector<double> w, b, gw, gb;  // w row-major [out][in]
  };
  void affine(const Layer& l, const double* x, int batch, double* y) const;

  ApproxSpec spec_;
  Act act_ = Act::Relu;
  std::vector<Layer> layers_;
  // caches from the last forward(): input batch + post-activation of each layer
  int cached_batch_ = 0;
  std::vector<std::vector<double>> cache_;  // cache_[0] = input, then per layer
};

enum class MixerKind { Linear, Vdn, TwoLayer };
MixerKind mixer_from_string(const std::string& name);
std::string mixer_to_string(MixerKind k);

// Aggregates n per-agent scalars into one global scalar.
//   Linear:   y = phi_0 + sum_i phi_i x_i           params [phi_0, phi_1..n]
//   Vdn:      y = sum_i x_i                         no params
//   TwoLayer: y = sum_j v_j softplus(W_j x + b_j) + c, v initialized positive
//             so the map is convex and monotone in x at init.
class Mixer {
 public:
  Mixer() = default;
  Mixer(MixerKind kind, int n_inputs, int hidden, uint64_t seed);

  MixerKind kind() const { return kind_; }
  int n_inputs() const { return n_; }

  void forward(const std::vector<double>& locals, int batch,
               std::vector<double>& y);
  void backward(const std::vector<double>& dy,
                std::vector<double>* dlocals = nullptr);
  double mix_one(const double* locals) const;

  void zero_grad();
  std::vector<ParamView> params();
  size_t n_params() const;
  std::vector<double> get_params() const;
  void set_params(const std::vector<double>& v);

 private:
  MixerKind kind_ = MixerKind::Vdn;
  int n_ = 0, hidden_ = 0;
  std::vector<double> p_, g_;  // flat parameters / grads
  int cached_batch_ = 0;
  std::vector<double> cache_x_, cache_h_;  // inputs, hidden pre-activations
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected adaptive-moment optimizer over a fixed set of ParamViews.
// A non-finite gradient anywhere skips the whole step (and counts it).
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void attach(std::vector<ParamView> views);
  bool step();
  int steps_taken() const { return t_; }
  int steps_skipped() const { return skipped_; }
  double lr() const { return cfg_.lr; }

 private:
  AdamConfig cfg_;
  std::vector<ParamView> views_;
  std::vector<double> m_, v_;
  int t_ = 0, skipped_ = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t n_checked = 0;
};

// Central-difference check of analytic gradients. `eval(true)` must zero the
// grads, run forward+backward and return the loss; `eval(false)` must return
// the loss only. Relative error uses max(|a|,|n|,floor) so that near-zero
// gradient pairs cannot blow it up on finite-difference noise.
GradCheckReport grad_check(const std::function<double(bool)>& eval,
                           std::vector<ParamView> views, double h = 1e-5,
                           double floor_denom = 1e-4);

struct ConvexityReport {
  int n_segments = 0;
  int n_violations = 0;
  double worst_gap = 0.0;  // max of loss(mid) - avg(loss(x),loss(y)) - tol
};

// Midpoint convexity test: for sampled parameter pairs (x, y), checks
// loss((x+y)/2) <= (loss(x)+loss(y))/2 + tol. The sampler fills two endpoint
// vectors; segment structure (which coordinates vary) is the sampler's call.
ConvexityReport convexity_probe(
    const std::function<double(const std::vector<double>&)>& loss,
    const std::function<void(Rng&, std::vector<double>&, std::vector<double>&)>&
        sampler,
    int n_segments, double tol, uint64_t seed);

// ------------------------------------------------------------- checkpoints
struct NamedParams {
  std::string name;
  std::vector<double> values;
};

void save_checkpoint(const std::string& path,
                     const std::vector<NamedParams>& blocks);
std::vector<NamedParams> load_checkpoint(const std::string& path);

}  // namespace miso::approx
