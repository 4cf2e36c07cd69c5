#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace sige {

// Raised for shape mismatches, malformed files, and bad run configurations.
// The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

uint64_t fnv1a64(const void* data, size_t bytes,
                 uint64_t seed = 1469598103934665603ull);

// Deterministic RNG. mt19937 output is standard-mandated, and the mapping to
// floats below avoids std::uniform_real_distribution (implementation-defined),
// so streams are identical across toolchains.
class Rng {
 public:
  explicit Rng(uint32_t seed) : state_(seed) {}

  uint32_t next_u32() { return state_(); }

  float uniform(float lo, float hi) {
    double u = next_u32() * (1.0 / 4294967296.0);  // [0, 1)
    return static_cast<float>(lo + (static_cast<double>(hi) - lo) * u);
  }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u32() % static_cast<uint32_t>(hi - lo + 1));
  }

 private:
  std::mt19937 state_;
};

// Worker count for kernel-internal parallelism. Reads SIGE_THREADS on every
// call (tests toggle it); defaults to 1 so benchmarks are single-threaded
// unless opted in.
int worker_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous ranges, one per
// worker; every index is processed exactly once, so kernels that write
// disjoint outputs per index stay deterministic at any thread count.
// Nested calls run serially.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace sige
