#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>

namespace tcontrol {

/// Counter-based random stream. The state is derived by hashing a key
/// (seed plus any number of site coordinates), so the draws at a given site
/// do not depend on the order in which sites are visited or on how work is
/// split across threads.
///
/// Satisfies UniformRandomBitGenerator.
class KeyedStream {
 public:
  using result_type = std::uint64_t;

  explicit KeyedStream(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}
  KeyedStream(std::uint64_t seed, std::initializer_list<std::uint64_t> coords);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Poisson draw. Inversion for small means, PTRS (Hormann 1993) above 10.
  std::uint64_t poisson(double mean);

  /// Index drawn from unnormalized nonnegative weights. Returns the last
  /// index with positive weight if rounding pushes the cursor past the end.
  std::size_t categorical(std::span<const double> weights);

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stream labels keep the different stochastic stages of a run apart.
enum class StreamTag : std::uint64_t {
  kRestart = 1,
  kGibbs = 2,
  kFieldInit = 3,
  kFieldPrior = 4,
  kFieldTransition = 5,
  kFieldSmoothing = 6,
  kCounts = 7,
  kScatter = 8,
};

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

}  // namespace tcontrol
