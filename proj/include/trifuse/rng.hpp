// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "trifuse/error.hpp"

namespace trifuse {

/// Seeded random stream shared by model init, shuffling, augmentation and
/// dropout. Draws never cache values between calls, so the engine state
/// alone determines every future draw.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two engine draws.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw ValidationError("Rng::below: empty range");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % n);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  std::string state() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
  }

  void set_state(const std::string& text) {
    std::istringstream in(text);
    in >> engine_;
    if (in.fail()) throw FormatError("corrupt RNG state");
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace trifuse
