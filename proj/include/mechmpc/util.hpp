/*
 Copyright 2026 mechmpc contributors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef MECHMPC_UTIL_HPP
#define MECHMPC_UTIL_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace mechmpc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised when the solver encounters non-finite numbers (distinct from an
/// infeasible problem, which is reported in-band via the solution status).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised on malformed configuration or dimension mismatches.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Small deterministic RNG (splitmix64 core, Box-Muller normals).
/// All randomized components of the library draw from this so that runs are
/// reproducible across invocations given the same seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no cached spare, keeps streams simple).
  double normal();

  /// Derive an independent stream, e.g. one per (agent, sample) pair.
  static std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

 private:
  std::uint64_t state_;
};

/// Round-trip-exact decimal formatting (17 significant digits).
std::string format_double(double v);

/// FNV-1a 64-bit hash of a byte string, hex-encoded.
std::string fnv1a_hex(const std::string& bytes);

/// Runs fn(i) for i in [0, count). With jobs > 1 items are distributed over
/// worker threads; results must be written to disjoint slots so the outcome
/// is identical for any job count.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

}  // namespace mechmpc

#endif  // MECHMPC_UTIL_HPP
