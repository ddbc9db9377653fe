#pragma once

#include <cstdint>
#include <limits>

namespace qwise {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based stream: the state is a pure function of (seed, x, y, frame),
// so a pixel's noise never depends on iteration order or worker count.
class CounterRng {
public:
    using result_type = std::uint64_t;

    constexpr CounterRng(std::uint64_t seed, std::uint64_t x, std::uint64_t y, std::uint64_t frame) noexcept
        : state_(mix64(mix64(mix64(mix64(seed) ^ x) ^ (y * 0xd6e8feb86659fd93ULL)) ^ (frame * 0xa0761d6478bd642fULL))) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

}  // namespace qwise
