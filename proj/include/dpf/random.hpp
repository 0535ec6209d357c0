#ifndef DPF_RANDOM_HPP
#define DPF_RANDOM_HPP

#include <cstdint>
#include <string_view>

#include "dpf/tensor.hpp"

namespace dpf {

/// Counter-based pseudo-random stream. The same seed always yields the same
/// sample sequence, and streams derived by labelled split are reproducible
/// regardless of how calls to the siblings interleave. One stream per model
/// component or resampler; a stream is single-owner.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x2545F4914F6CDD1Dull)) {}

  /// Independent child stream keyed by label; same label, same stream.
  Rng split(std::string_view label) const;
  /// Independent child stream keyed by an integer (e.g. a seed index).
  Rng split(std::uint64_t label) const;

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

  /// Uniform on [0, 1).
  double uniform();
  /// Standard normal via Box-Muller (two uniforms per draw).
  double normal();
  /// Uniform integer in [0, n).
  Index uniform_index(Index n);

  Array normals(Index n);
  Array uniforms(Index n);

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static std::uint64_t mix(std::uint64_t z);

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dpf

#endif
