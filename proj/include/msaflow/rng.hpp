#ifndef MSAFLOW_RNG_HPP
#define MSAFLOW_RNG_HPP

#include <cmath>
#include <cstdint>

namespace msaflow::rng {

// Counter-based generation: every draw is a pure function of a key tuple, so
// results are independent of evaluation order and identical across runs and
// worker counts. Keys are mixed with the splitmix64 finalizer, which has full
// 64-bit avalanche.

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Distinct streams keep Brownian increments, random fields and random draws
/// from ever sharing a key.
enum Stream : std::uint64_t {
  kBrownian = 0x1000,
  kField = 0x2000,
  kPoints = 0x3000,
};

inline std::uint64_t key(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t path, std::uint64_t step,
                         std::uint64_t comp) {
  std::uint64_t h = mix64(seed ^ (stream << 32));
  h = mix64(h ^ path);
  h = mix64(h ^ (step << 20));
  return mix64(h ^ (comp << 40));
}

/// Map to (0, 1]: 53 mantissa bits, never exactly 0.
inline double to_unit(std::uint64_t x) {
  return static_cast<double>((x >> 11) + 1) * 0x1.0p-53;
}

/// Standard normal draw for one key tuple (Box-Muller on two mixed words).
inline double normal(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t path, std::uint64_t step,
                     std::uint64_t comp) {
  const std::uint64_t k = key(seed, stream, path, step, comp);
  const double u1 = to_unit(mix64(k ^ 0xd1b54a32d192ed03ULL));
  const double u2 = to_unit(mix64(k ^ 0x8cb92ba72f3d8dd7ULL));
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

/// Uniform draw in [lo, hi) for one key tuple.
inline double uniform(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t path, std::uint64_t step,
                      std::uint64_t comp, double lo, double hi) {
  const std::uint64_t k = key(seed, stream, path, step, comp);
  const double u = static_cast<double>(mix64(k) >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

}  // namespace msaflow::rng

#endif
