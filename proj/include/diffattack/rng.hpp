#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace diffattack {

// mt19937_64 with a portable bounded draw. std::uniform_int_distribution is
// implementation-defined, so it is avoided to keep runs reproducible across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace detail {
inline std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  // field separator so ("ab","c") and ("a","bc") hash differently
  h ^= 0xff;
  h *= 0x100000001b3ULL;
  return h;
}
}  // namespace detail

// Per-run seed for one (seed input, model pair) task of a campaign.
inline std::uint64_t derive_run_seed(std::uint64_t base, std::string_view seed_id,
                                     std::string_view model_a, std::string_view model_b) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = detail::fnv1a(h, seed_id);
  h = detail::fnv1a(h, model_a);
  h = detail::fnv1a(h, model_b);
  return splitmix64(h ^ splitmix64(base));
}

}  // namespace diffattack
