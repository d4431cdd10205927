#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace grainkin {

// Every stochastic component draws from this wrapper. mt19937_64 has a fully
// specified output sequence and the distributions below are hand-rolled, so a
// given seed produces the same stream on every platform. The <random>
// distribution adaptors are avoided on purpose: their algorithms are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform on [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform on {0, ..., n-1}; requires n > 0.
  std::size_t uniform_index(std::size_t n) {
    auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  // Exponential waiting time; requires rate > 0.
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace grainkin
