#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "approx.hpp"
#include "data.hpp"

namespace miso::metrics {
class Sink;
}

namespace miso::ratio {

struct RatioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DiscConfig {
  int steps = 2000;
  int batch = 512;
  double lr = 3e-4;
  approx::MixerKind mixer = approx::MixerKind::Linear;
  std::vector<int> hidden = {256};
  int mixer_hidden = 64;
  double clip_eps = 1e-5;
  double clip_L = 10.0;
  uint64_t seed = 0;
};

// Per-agent classifiers over (one-hot obs, one-hot act), mixed to a single
// output that plays the role of P(expert | s, a). The mix is clipped to
// [eps, 1-eps]; gradients pass through the clip unchanged so a saturated
// output can still recover (zeroing them would freeze training for good).
struct DiscModel {
  std::vector<approx::Mlp> locals;
  approx::Mixer mixer;
  std::vector<int> n_obs;
  std::vector<int> n_actions;
  double clip_eps = 1e-5;
  double clip_L = 10.0;

  DiscModel(const std::vector<int>& n_obs, const std::vector<int>& n_actions,
            const DiscConfig& cfg);

  int n_agents() const { return int(locals.size()); }
  double c_value(const std::vector<int>& obs, const std::vector<int>& acts) const;
};

// Minimized classification loss -[mean_E log c + mean_U log(1-c)] over the
// referenced rows; finite by clipping. with_grad accumulates parameter
// gradients (caller zeroes them).
double disc_loss(DiscModel& model, const data::TransitionView& view_e,
                 const std::vector<int>& rows_e, const data::TransitionView& view_u,
                 const std::vector<int>& rows_u, bool with_grad);

DiscModel train_discriminator(const data::TransitionView& view_e,
                              const data::TransitionView& view_u,
                              const DiscConfig& cfg, metrics::Sink* sink = nullptr);

// log(c/(1-c)) with c clipped to [eps, 1-eps] and the result clipped to
// [-L, L]; the estimate of log(rho_E/rho_U) consumed by the value stage.
double log_ratio(const DiscModel& model, const std::vector<int>& obs,
                 const std::vector<int>& acts);
double log_ratio_of_c(double c, double eps, double L);

// Closed-form optimum from discount-weighted visit masses: c* = mE/(mE+mU)
// per joint (obs, act) cell. Cells unseen on both sides carry NaN; reading
// one through value() is the caller's error.
struct TabularC {
  std::vector<double> c;  // [obs_key * n_act_keys + act_key]
  int n_obs_keys = 0;
  int n_act_keys = 0;

  bool defined(int idx) const;
  double value(int idx) const;  // throws on undefined cells
};

std::vector<double> joint_counts(const data::TransitionView& view);
TabularC tabular_optimal_c(const std::vector<double>& counts_e,
                           const std::vector<double>& counts_u, int n_obs_keys,
                           int n_act_keys);

// The classification objective J (maximized form, no clipping) as a pure
// function of raw per-agent outputs and linear mixing weights; fuel for the
// concavity probe, which keeps every mixed output strictly inside (0, 1).
double disc_objective_from_raws(const std::vector<std::vector<double>>& raws_e,
                                const std::vector<std::vector<double>>& raws_u,
                                const std::vector<double>& eta);

}  // namespace miso::ratio
