#pragma once
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "approx.hpp"
#include "data.hpp"
#include "metrics.hpp"
#include "ratio.hpp"

namespace miso::dice {

struct DiceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValueConfig {
  int steps = 2000;
  int batch = 512;
  double lr = 3e-4;
  approx::MixerKind mixer = approx::MixerKind::Linear;
  std::vector<int> hidden = {256};
  int mixer_hidden = 64;
  double alpha = 0.05;
  double gamma = 0.99;
  uint64_t seed = 0;
};

// Per-agent potentials nu_i(o_i) mixed to nu_tot. alpha is the strength of
// the pull toward the union data; gamma the discount shared with the views.
struct ValueModel {
  std::vector<approx::Mlp> locals;
  approx::Mixer mixer;
  std::vector<int> n_obs;
  double alpha = 0.05;
  double gamma = 0.99;

  ValueModel(const std::vector<int>& n_obs, const ValueConfig& cfg);
  int n_agents() const { return int(locals.size()); }
  double nu_tot(const std::vector<int>& obs) const;
};

// A = log_ratio + gamma * nu_tot(next) - nu_tot(obs); terminal successors
// contribute zero.
double advantage(const ValueModel& model, double log_ratio,
                 const std::vector<int>& obs, const std::vector<int>& next_obs,
                 bool terminal);

// closed-form inner maximizer exp(A/(1+alpha) - 1)
double weight(double A, double alpha);

// Transition batch annotated with the fixed discriminator signal. A and w
// are filled against a ValueModel by annotate() and satisfy
// w = exp(A/(1+alpha) - 1) by construction.
struct WeightedRow {
  std::vector<int> obs, acts, next_obs;
  bool terminal = false;
  double log_ratio = 0.0;
  double A = 0.0;
  double w = 0.0;
};
struct WeightedBatch {
  std::vector<WeightedRow> rows;
};

WeightedBatch make_batch(const data::TransitionView& view,
                         const std::vector<int>& rows,
                         const ratio::DiscModel& disc);
void annotate(WeightedBatch& batch, const ValueModel& model);

// (1-gamma) * mean_init[nu_tot] + (1+alpha) * mean_batch[exp(A/(1+alpha)-1)].
// literal=true evaluates the unsubstituted inner objective
// mean[w*(A - (1+alpha) log w*)] in place of the exponential term; the two
// agree identically and a test pins that. with_grad accumulates into params.
double value_loss(ValueModel& model, const WeightedBatch& batch,
                  const std::vector<std::vector<int>>& init_obs, bool with_grad,
                  bool literal = false);

// Minimizes the value loss over union transitions; the identified-expert view
// only feeds a diagnostic metric (mean weight on its rows).
ValueModel train_values(const data::TransitionView& view_e,
                        const data::TransitionView& view_u,
                        const ratio::DiscModel& disc, const ValueConfig& cfg,
                        metrics::Sink* sink = nullptr);

struct InnerMaxReport {
  double w_closed = 0.0;
  double w_numeric = 0.0;
  double rel_err = 0.0;
  double identity_err = 0.0;  // |w(A - (1+alpha) log w) - (1+alpha) w| at w*
  bool ok = false;
};

// Golden-section maximization of g(w) = w * (A - (1+alpha) log w), bracketed
// by a power-of-two scan that never consults the closed form; ok means the
// numeric argmax matches exp(A/(1+alpha) - 1) within 1e-6 relative.
InnerMaxReport inner_max_report(double A, double alpha);
bool inner_max_check(double A, double alpha);

}  // namespace miso::dice
