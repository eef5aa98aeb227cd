#pragma once

#include <cstdint>

namespace tsync {

// SplitMix64: counter-based 64-bit generator (Steele, Lea & Flood). One
// multiply-xorshift chain per draw; trivially splittable by seeding from a
// derived counter, which gives independent per-trial streams.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 significant bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

  private:
    std::uint64_t state_;
};

// Derived seed for trial `index` of a run seeded with `seed`; distinct
// indices land in well-separated SplitMix64 streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 mix(seed ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    return mix.next_u64();
}

} // namespace tsync
