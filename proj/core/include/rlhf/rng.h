// Copyright 2026 The rlhf-bilevel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RLHF_RNG_H_
#define RLHF_RNG_H_

#include <cstdint>
#include <random>
#include <span>

namespace rlhf {

// Fixed 64-bit finalizer (splitmix64). Used to derive independent streams
// from one master seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for stream `stream` of a run seeded with `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(mix64(master) ^ mix64(stream + 0x5851f42d4c957f2dULL));
}

// Named stream indices of a training run.
enum class Stream : std::uint64_t {
  kEnvironment = 0,
  kInit = 1,
  kPlainChain = 2,
  kPenalizedChain = 3,
  kLabeler = 4,
  kPlainCritic = 5,
  kPenalizedCritic = 6,
  kUpper = 7,
  kHeldOut = 8,
};

constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream) {
  return derive_seed(master, static_cast<std::uint64_t>(stream));
}

// Random source with portable samplers. std::mt19937_64 output is fixed by
// the standard; the standard distributions are not, so the samplers below
// are written out to keep every stream bit-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Rate-1 exponential.
  double exponential();

  // Standard normal (Box-Muller, one draw per call).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  // Index drawn from the probability vector `probs` (assumed normalized).
  int categorical(std::span<const double> probs);

  // Uniform index in [0, n).
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace rlhf

#endif  // RLHF_RNG_H_
