// Pipeline driver over the C API: gen-data -> label -> train -> eval, plus
// verify and plot. Configuration precedence is file, then MISO_* environment
// variables, then explicit flags.
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "misodice.h"

namespace {

struct Overrides {
  std::vector<std::pair<std::string, std::string>> kv;
};

int to_exit_code(int rc) {
  switch (rc) {
    case MISO_OK:
      return 0;
    case MISO_ERR_CONFIG:
      return 2;
    case MISO_ERR_DIVERGENCE:
      return 3;
    case MISO_ERR_VERIFY:
      return 4;
    default:
      return 1;
  }
}

struct RunHandle {
  miso_run* run = nullptr;
  ~RunHandle() { miso_run_destroy(run); }
};

int finish(miso_run* run, int rc) {
  if (rc == MISO_OK || rc == MISO_ERR_VERIFY) {
    const char* out = miso_last_output(run);
    if (out && *out) std::printf("%s\n", out);
  }
  if (rc != MISO_OK) {
    const char* err = miso_last_error(run);
    if (err && *err) std::fprintf(stderr, "error: %s\n", err);
  }
  return to_exit_code(rc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"misodice: preference-identified expert data, then "
               "occupancy-matching team imitation"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path,
                 "config file; defaults apply when omitted");

  Overrides ov;
  // shared knobs, applied after the file and environment
  app.add_option_function<std::string>(
      "--seed", [&](const std::string& v) { ov.kv.emplace_back("seed", v); },
      "global seed");
  app.add_option_function<std::string>(
      "--method", [&](const std::string& v) { ov.kv.emplace_back("method", v); },
      "misodice | bc | indd | vdn | phase1-greedy");
  app.add_option_function<std::string>(
      "--beta", [&](const std::string& v) { ov.kv.emplace_back("beta", v); },
      "cloning mixture weight, bc only");
  app.add_option_function<std::string>(
      "--mixer",
      [&](const std::string& v) { ov.kv.emplace_back("phase2.mixer", v); },
      "linear | vdn | two-layer");
  app.add_option_function<std::string>(
      "--alpha",
      [&](const std::string& v) { ov.kv.emplace_back("phase2.alpha", v); },
      "union-anchor strength, >= 0");
  app.add_option_function<std::string>(
      "--provider",
      [&](const std::string& v) { ov.kv.emplace_back("preference.provider", v); },
      "rule | noisy | http");
  app.add_option_function<std::string>(
      "--topk", [&](const std::string& v) { ov.kv.emplace_back("phase1.k", v); },
      "trajectories declared expert-like");
  app.add_option_function<std::string>(
      "--n-expert",
      [&](const std::string& v) { ov.kv.emplace_back("dataset.n_expert", v); },
      "expert trajectories to generate");
  app.add_option_function<std::string>(
      "--endpoint",
      [&](const std::string& v) { ov.kv.emplace_back("preference.endpoint", v); },
      "http labeler base url");

  std::string out_dir = "out";
  std::string dataset_path, manifest_path, checkpoint_path, plot_out;
  std::vector<std::string> plot_inputs;

  auto* gen = app.add_subcommand("gen-data", "build and write the mixed dataset");
  gen->add_option("--out", out_dir, "output directory");

  auto* label = app.add_subcommand(
      "label", "preference labeling, scoring, and the expert-like split");
  label->add_option("--dataset", dataset_path, "dataset file")->required();
  label->add_option("--out", out_dir, "output directory");

  auto* train = app.add_subcommand("train", "train the selected method");
  train->add_option("--dataset", dataset_path, "dataset file")->required();
  train->add_option("--manifest", manifest_path, "split manifest")->required();
  train->add_option("--out", out_dir, "output directory");

  auto* eval = app.add_subcommand("eval", "roll out a trained policy");
  eval->add_option("--checkpoint", checkpoint_path, "policy checkpoint")
      ->required();

  app.add_subcommand("verify", "run the property suite; nonzero exit on failure");

  auto* plot = app.add_subcommand("plot", "aggregate metrics CSVs across runs");
  plot->add_option("--out", plot_out, "output CSV")->required();
  plot->add_option("inputs", plot_inputs, "metrics CSV files")->required();

  CLI11_PARSE(app, argc, argv);

  RunHandle h;
  h.run = config_path.empty() ? miso_run_create_from_string("{}")
                              : miso_run_create(config_path.c_str());
  if (!h.run) {
    std::fprintf(stderr, "error: %s\n", miso_last_error(nullptr));
    return 2;
  }
  for (const auto& [k, v] : ov.kv) {
    int rc = miso_set_override(h.run, k.c_str(), v.c_str());
    if (rc != MISO_OK) return finish(h.run, rc);
  }

  int rc = MISO_ERR_INVALID;
  if (gen->parsed()) {
    rc = miso_gen_data(h.run, out_dir.c_str());
  } else if (label->parsed()) {
    rc = miso_label(h.run, dataset_path.c_str(), out_dir.c_str());
  } else if (train->parsed()) {
    rc = miso_train(h.run, dataset_path.c_str(), manifest_path.c_str(),
                    out_dir.c_str());
  } else if (eval->parsed()) {
    rc = miso_eval(h.run, checkpoint_path.c_str());
  } else if (app.get_subcommand("verify")->parsed()) {
    rc = miso_verify(h.run);
  } else if (plot->parsed()) {
    std::vector<const char*> ptrs;
    for (const auto& p : plot_inputs) ptrs.push_back(p.c_str());
    rc = miso_plot(h.run, ptrs.data(), int(ptrs.size()), plot_out.c_str());
  }
  return finish(h.run, rc);
}
