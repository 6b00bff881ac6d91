#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "serial.hpp"

namespace miso::data {

double SealedAccess::discounted_return(const Trajectory& t, double gamma) {
  double g = 0.0, d = 1.0;
  for (double r : t.sealed_rewards_) {
    g += d * r;
    d *= gamma;
  }
  return g;
}

void Dataset::validate(bool require_nonempty) const {
  if (n_agents <= 0) throw DataError("dataset with no agents");
  if (int(n_obs.size()) != n_agents || int(n_actions.size()) != n_agents)
    throw DataError("per-agent dims sized wrong");
  if (require_nonempty && trajectories.empty()) throw DataError("empty dataset");
  for (const auto& traj : trajectories) {
    if (traj.steps.empty()) throw DataError("trajectory with no steps");
    const auto& rw = SealedAccess::rewards(traj);
    const auto& st = SealedAccess::states(traj);
    if (!rw.empty() && rw.size() != traj.steps.size())
      throw DataError("sealed rewards length mismatch");
    if (!st.empty() && st.size() != traj.steps.size())
      throw DataError("sealed states length mismatch");
    for (const auto& step : traj.steps) {
      if (int(step.obs.size()) != n_agents || int(step.acts.size()) != n_agents)
        throw DataError("step arity mismatch");
      for (int i = 0; i < n_agents; ++i) {
        if (step.obs[i] < 0 || step.obs[i] >= n_obs[i])
          throw DataError("observation out of range");
        if (step.acts[i] < 0 || step.acts[i] >= n_actions[i])
          throw DataError("action out of range");
      }
    }
  }
}

const Trajectory& Dataset::by_id(int64_t id) const {
  for (const auto& t : trajectories)
    if (t.traj_id == id) return t;
  throw DataError("no trajectory with id " + std::to_string(id));
}

static void check_same_dims(const Dataset& a, const Dataset& b) {
  if (a.n_agents != b.n_agents || a.n_obs != b.n_obs || a.n_actions != b.n_actions)
    throw DataError("dataset dimension mismatch");
}

Dataset build_unlabeled(const Dataset& expert, const Dataset& poor) {
  check_same_dims(expert, poor);
  Dataset out;
  out.n_agents = expert.n_agents;
  out.n_obs = expert.n_obs;
  out.n_actions = expert.n_actions;
  out.provenance = "unlabeled";
  out.trajectories.reserve(expert.trajectories.size() + poor.trajectories.size());
  for (const auto& t : expert.trajectories) out.trajectories.push_back(t);
  for (const auto& t : poor.trajectories) out.trajectories.push_back(t);
  for (size_t i = 0; i < out.trajectories.size(); ++i)
    out.trajectories[i].traj_id = int64_t(i);
  out.validate();
  return out;
}

Dataset dataset_union(const Dataset& a, const Dataset& b) {
  check_same_dims(a, b);
  Dataset out = a;
  out.provenance = "union";
  for (const auto& t : b.trajectories) out.trajectories.push_back(t);
  for (size_t i = 0; i < out.trajectories.size(); ++i)
    out.trajectories[i].traj_id = int64_t(i);
  out.validate();
  return out;
}

// Binary layout, little-endian, trailing fnv1a checksum:
//   u32 magic 'MISO', u32 version, u32 n_agents,
//   per agent u32 n_obs, per agent u32 n_actions,
//   str provenance, u64 n_traj,
//   then one length-prefixed record per trajectory.
static constexpr uint32_t kMagic = 0x4f53494du;  // "MISO"
static constexpr uint32_t kVersion = 1;

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate(false);
  ByteWriter w;
  w.u32(kMagic);
  w.u32(kVersion);
  w.u32(uint32_t(ds.n_agents));
  for (int v : ds.n_obs) w.u32(uint32_t(v));
  for (int v : ds.n_actions) w.u32(uint32_t(v));
  w.str(ds.provenance);
  w.u64(ds.trajectories.size());
  for (const auto& traj : ds.trajectories) {
    ByteWriter rec;
    rec.u64(uint64_t(traj.traj_id));
    rec.u32(uint32_t(traj.steps.size()));
    const auto& rw = SealedAccess::rewards(traj);
    const auto& st = SealedAccess::states(traj);
    uint8_t flags = 0;
    if (!rw.empty()) flags |= 1;
    if (!st.empty()) flags |= 2;
    if (SealedAccess::source(traj) != Source::Unknown) flags |= 4;
    rec.u8(flags);
    if (flags & 4) rec.u8(uint8_t(SealedAccess::source(traj)));
    for (const auto& step : traj.steps) {
      for (int o : step.obs) rec.u32(uint32_t(o));
      for (int a : step.acts) rec.u32(uint32_t(a));
      rec.u8(step.terminal ? 1 : 0);
    }
    for (double r : rw) rec.f64(r);
    for (int s : st) rec.u32(uint32_t(s));
    w.record(rec);
  }
  w.write_file_with_checksum(path);
}

Dataset load_dataset(const std::string& path) {
  ByteReader r = ByteReader::from_file_checked(path);
  if (r.u32() != kMagic) throw FormatError("not a dataset file");
  uint32_t ver = r.u32();
  if (ver != kVersion)
    throw FormatError("unsupported dataset version " + std::to_string(ver));
  Dataset ds;
  ds.n_agents = int(r.u32());
  if (ds.n_agents <= 0 || ds.n_agents > 64) throw FormatError("bad agent count");
  ds.n_obs.resize(ds.n_agents);
  ds.n_actions.resize(ds.n_agents);
  for (int& v : ds.n_obs) v = int(r.u32());
  for (int& v : ds.n_actions) v = int(r.u32());
  ds.provenance = r.str();
  uint64_t n_traj = r.u64();
  ds.trajectories.reserve(n_traj);
  for (uint64_t k = 0; k < n_traj; ++k) {
    uint64_t len = r.u64();
    size_t before = r.remaining();
    if (len > before) throw FormatError("truncated record");
    Trajectory traj;
    traj.traj_id = int64_t(r.u64());
    uint32_t n_steps = r.u32();
    uint8_t flags = r.u8();
    if (flags & 4) SealedAccess::source(traj) = Source(r.u8());
    traj.steps.resize(n_steps);
    for (auto& step : traj.steps) {
      step.obs.resize(ds.n_agents);
      step.acts.resize(ds.n_agents);
      for (int& o : step.obs) o = int(r.u32());
      for (int& a : step.acts) a = int(r.u32());
      step.terminal = r.u8() != 0;
    }
    if (flags & 1) {
      auto& rw = SealedAccess::rewards(traj);
      rw.resize(n_steps);
      for (double& v : rw) v = r.f64();
    }
    if (flags & 2) {
      auto& st = SealedAccess::states(traj);
      st.resize(n_steps);
      for (int& v : st) v = int(r.u32());
    }
    if (before - r.remaining() != len) throw FormatError("record length mismatch");
    ds.trajectories.push_back(std::move(traj));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last record");
  ds.validate(false);
  return ds;
}

void save_manifest(const SplitResult& split, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  char buf[64];
  f << "misodice-split 1\n";
  f << "n " << split.scores_by_id.size() << " k " << split.expert_ids.size() << "\n";
  auto line = [&](const char* tag, int64_t id) {
    std::snprintf(buf, sizeof buf, "%.17g", split.scores_by_id.at(size_t(id)));
    f << tag << ' ' << id << ' ' << buf << "\n";
  };
  for (int64_t id : split.expert_ids) line("expert", id);
  for (int64_t id : split.mix_ids) line("mix", id);
  if (!f) throw IoError("write failed for " + path);
}

SplitResult load_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::string word;
  int version = 0;
  if (!(f >> word >> version) || word != "misodice-split" || version != 1)
    throw FormatError("not a split manifest");
  size_t n = 0, k = 0;
  std::string kw1, kw2;
  if (!(f >> kw1 >> n >> kw2 >> k) || kw1 != "n" || kw2 != "k")
    throw FormatError("bad manifest header");
  SplitResult out;
  out.scores_by_id.assign(n, 0.0);
  int64_t id;
  double score;
  while (f >> word >> id >> score) {
    if (id < 0 || size_t(id) >= n) throw FormatError("manifest id out of range");
    out.scores_by_id[size_t(id)] = score;
    if (word == "expert") out.expert_ids.push_back(id);
    else if (word == "mix") out.mix_ids.push_back(id);
    else throw FormatError("bad manifest tag: " + word);
  }
  if (out.expert_ids.size() != k || out.expert_ids.size() + out.mix_ids.size() != n)
    throw FormatError("manifest line count mismatch");
  return out;
}

TransitionView TransitionView::build(const Dataset& ds, double gamma) {
  ds.validate();
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DataError("discount outside [0,1)");
  TransitionView v;
  v.n_agents = ds.n_agents;
  v.n_obs = ds.n_obs;
  v.n_actions = ds.n_actions;
  v.gamma = gamma;
  for (const auto& traj : ds.trajectories) {
    v.init_obs.push_back(traj.steps.front().obs);
    int T = int(traj.steps.size());
    double d = 1.0;
    for (int t = 0; t < T; ++t, d *= gamma) {
      const auto& step = traj.steps[t];
      bool last = (t == T - 1);
      if (last && !step.terminal) break;  // truncated tail, no successor
      v.obs.push_back(step.obs);
      v.acts.push_back(step.acts);
      v.next_obs.push_back(step.terminal ? step.obs : traj.steps[t + 1].obs);
      v.terminal.push_back(step.terminal ? 1 : 0);
      v.weight.push_back(d);
      v.traj_id.push_back(traj.traj_id);
      v.t.push_back(t);
      if (step.terminal) break;
    }
  }
  if (v.weight.empty()) throw DataError("no usable transitions in dataset");
  double total = 0.0;
  for (double w : v.weight) total += w;
  v.weight_cdf.resize(v.weight.size());
  double acc = 0.0;
  for (size_t i = 0; i < v.weight.size(); ++i) {
    v.weight[i] /= total;
    acc += v.weight[i];
    v.weight_cdf[i] = acc;
  }
  return v;
}

int TransitionView::sample_row(Rng& rng) const {
  return rng.categorical_cdf(weight_cdf);
}

int TransitionView::joint_obs_key(const std::vector<int>& o) const {
  int key = 0;
  for (int i = 0; i < n_agents; ++i) key = key * n_obs[i] + o[i];
  return key;
}

int TransitionView::n_joint_obs() const {
  int n = 1;
  for (int v : n_obs) n *= v;
  return n;
}

int TransitionView::joint_act_key(const std::vector<int>& a) const {
  int key = 0;
  for (int i = 0; i < n_agents; ++i) key = key * n_actions[i] + a[i];
  return key;
}

int TransitionView::n_joint_acts() const {
  int n = 1;
  for (int v : n_actions) n *= v;
  return n;
}

}  // namespace miso::data
