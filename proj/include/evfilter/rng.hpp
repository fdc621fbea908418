#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace evf {

/// Seeded generator with platform-independent derived distributions.
///
/// The standard distribution adaptors are implementation-defined, so uniform
/// indices, reals and normals are derived here directly from mt19937_64 output.
/// Every seeded operation in the library goes through this type, which keeps
/// experiment reports byte-identical across standard library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, bound); bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound);

  // Uniform in [0, 1).
  double uniform01();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from a base seed and a stream tag.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace evf
