#pragma once

#include <cstdint>
#include <random>

namespace metanode {

/// Portable normal sampler: std::mt19937_64 (output sequence fixed by the
/// standard) feeding a hand-written Box-Muller transform, since
/// std::normal_distribution is implementation-defined.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in (0, 1] built from the top 53 bits.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal(double mean, double stddev);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to derive independent per-trial seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for trial `index` of a sweep driven by `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// 64-bit FNV-1a over raw bytes, used for file and config checksums.
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace metanode
