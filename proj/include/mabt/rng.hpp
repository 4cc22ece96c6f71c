#pragma once

#include <cmath>
#include <cstdint>

namespace mabt {

// Counter-based splittable pseudo-random generator.
//
// Each stream is (key, counter); the n-th output is the SplitMix64 finalizer
// applied to key + n*golden-ratio, i.e. plain SplitMix64 seeded with `key`.
// derive(tag) produces a child stream whose key mixes the parent key with the
// tag, giving cheap, reproducible, statistically independent substreams: a
// stream's outputs never depend on how many variates sibling streams consumed.
// This is what makes per-replication results independent of thread scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key), ctr_(0) {}

  std::uint64_t next_u64() {
    ctr_ += 0x9e3779b97f4a7c15ull;
    return mix(key_ + ctr_);
  }

  // Child stream addressed by an integer tag (domain-separated from next_u64).
  Rng derive(std::uint64_t tag) const {
    return Rng(mix(mix(key_ ^ 0x8e9c29d46c1cd1adull) + tag * 0x9e3779b97f4a7c15ull));
  }

  // Uniform on [0, 1), 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Consumes exactly one variate for any p, including p = 0 and p = 1.
  bool bernoulli(double p) { return uniform01() < p; }

  // Exponential with the given mean (mean = 1/rate). A zero draw is possible
  // when the underlying uniform hits 1 exactly.
  double exponential(double mean) { return -mean * std::log(uniform_open()); }

  // Standard normal via Box-Muller; consumes exactly two variates, no cache.
  double normal() {
    double r = std::sqrt(-2.0 * std::log(uniform_open()));
    double theta = 6.283185307179586476925286766559 * uniform01();
    return r * std::cos(theta);
  }

  // Marsaglia-Tsang; valid for shape >= 1 (all Beta parameters here are
  // positive integers, so the shape < 1 boost is never needed).
  double gamma(double shape) {
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = uniform_open();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t ctr_;
};

// Named substream tags. A replication's streams are derived as
// Rng(seed).derive(phase).derive(replication).derive(component).
namespace stream {
// Phases.
inline constexpr std::uint64_t kEvaluation = 1;
inline constexpr std::uint64_t kCalibration = 2;
// Per-decision components.
inline constexpr std::uint64_t kAllocation = 1;
inline constexpr std::uint64_t kTieBreak = 2;
inline constexpr std::uint64_t kTsSampling = 3;
inline constexpr std::uint64_t kPerturbation = 4;
inline constexpr std::uint64_t kOutcome = 5;
}  // namespace stream

}  // namespace mabt
