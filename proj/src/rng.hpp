#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace miso {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent stream seed from a base seed and a stream tag. Used everywhere a
// component needs its own reproducible stream (per episode, per stage, per
// agent) so that concurrency and reordering cannot change sampled content.
inline uint64_t mix_seed(uint64_t base, uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream ^ 0x5851f42d4c957f2dull));
}

// mt19937_64 is fully specified by the standard, so the raw stream is
// bit-reproducible across platforms. The std:: distribution adapters are
// implementation-defined, which would break byte-identical artifacts, so the
// few distributions needed are implemented here by hand.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n); modulo bias is < 2^-40 at desk-scale n, irrelevant next to determinism
  uint64_t below(uint64_t n) { return next_u64() % n; }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.28318530717958647692 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // index ~ w / sum(w); w unnormalized, nonnegative
  int categorical(const double* w, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += w[i];
    double u = uniform() * total;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

  // cdf strictly increasing to cdf.back(); returns first index with u < cdf[i]
  int categorical_cdf(const std::vector<double>& cdf) {
    double u = uniform() * cdf.back();
    size_t lo = 0, hi = cdf.size() - 1;
    while (lo < hi) {
      size_t mid = (lo + hi) / 2;
      if (u < cdf[mid])
        hi = mid;
      else
        lo = mid + 1;
    }
    return static_cast<int>(lo);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace miso
