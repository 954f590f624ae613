#pragma once

#include <array>
#include <cstdint>

namespace tpgf {

/// Deterministic xoshiro256** generator, seeded through splitmix64.
///
/// Integer draws are bit-identical on every platform. Normal draws use the
/// Marsaglia polar method (sqrt and log only) and consume a cached spare on
/// every second call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer on [0, bound).
  std::uint64_t uniform_int(std::uint64_t bound);
  double normal();
  bool bernoulli(double p);

  /// Independent stream derived as seed XOR stream_id.
  Rng split(std::uint64_t stream_id) const { return Rng(seed_ ^ stream_id); }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace tpgf
