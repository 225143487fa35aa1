#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "acl/errors.hpp"

namespace acl {

// Deterministic random source. std::mt19937_64 supplies the bits; the
// uniform/normal transforms are implemented here so streams are identical
// across standard libraries (std::normal_distribution is not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw ArgumentError("uniform_int: empty range");
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Rejection sampling keeps the draw unbiased.
    std::uint64_t limit = span == 0 ? ~0ull : (~0ull / span) * span;
    std::uint64_t x;
    do {
      x = eng_();
    } while (span != 0 && x >= limit);
    return lo + static_cast<std::int64_t>(span == 0 ? x : x % span);
  }

  // Standard normal via Box-Muller. Draws two uniforms per sample and keeps
  // one branch, so the stream position is a simple function of call count.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <class Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Named sub-stream with a seed decorrelated from the parent's.
  static Rng derive(std::uint64_t seed, std::uint64_t tag) {
    // splitmix64 over (seed ^ rotated tag)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
  }

  std::string state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (is.fail()) throw ArgumentError("Rng::restore: malformed state string");
  }

  bool operator==(const Rng& o) const { return eng_ == o.eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace acl
