#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wdse {

// Memory sizes are exact integers (bytes); times are seconds; FLOP counts are
// doubles because iteration-level counts overflow the useful int64 range once
// multiplied by microbatch counts.
using Bytes = std::int64_t;
using Seconds = double;
using Flops = double;

inline constexpr Bytes KiB = 1024;
inline constexpr Bytes MiB = 1024 * KiB;
inline constexpr Bytes GiB = 1024 * MiB;
inline constexpr Bytes GB = 1000000000;   // decimal, matches marketing DRAM sizes
inline constexpr double TBps = 1e12;      // bandwidth convenience unit

// Mixed-precision training state: FP16 weight + FP16 gradient + FP32 master
// weight + two FP32 Adam moments = 16 bytes per parameter.
inline constexpr Bytes kBytesPerParam = 16;
// Activations travel and persist as FP16.
inline constexpr Bytes kActElemBytes = 2;
// All per-die byte footprints round up to this allocation granule.
inline constexpr Bytes kAllocAlign = 256;

template <typename T>
constexpr T ceil_div(T a, T b) {
  return (a + b - 1) / b;
}

constexpr Bytes align_up(Bytes v, Bytes granule = kAllocAlign) {
  return ceil_div(v, granule) * granule;
}

// Configuration or input files that fail structural validation.
struct SpecError : std::runtime_error {
  explicit SpecError(const std::string& what) : std::runtime_error(what) {}
};

// A request that is structurally valid but cannot be satisfied by the
// hardware (capacity, geometry, or scheduling constraints).
struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

// FNV-1a, used for content hashes of cache keys and report provenance.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t seed = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s,
                           std::uint64_t seed = 1469598103934665603ull) {
  return fnv1a(s.data(), s.size(), seed);
}

// splitmix64: derives independent RNG streams from (master seed, stream id)
// so results do not depend on worker-thread count.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace wdse
