#pragma once

// Counter-keyed random substreams.
//
// Every random quantity in a trial is drawn from a stream keyed by
// (seed, trial, round, link class). Trials can therefore be split across
// workers in any way without changing a single draw.

#include <cstdint>
#include <limits>

namespace coop_arq {

/// 64-bit finalizer from SplitMix64 (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// SplitMix64 engine. Satisfies UniformRandomBitGenerator, so the
/// <random> distributions work on top of it. Seeding is a single store,
/// which is what makes per-(trial, round, class) substreams cheap.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    constexpr explicit SplitMix64(std::uint64_t state = 0) noexcept : state_(state) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

/// Link classes, each with its own substream family.
enum class Link : std::uint32_t {
    SD = 0,         // source -> destination gain
    SR = 1,         // source -> relay gains (one draw per relay)
    RD = 2,         // relay -> destination gains
    RR = 3,         // active relay -> overhearing relay gains
    PhaseSD = 4,
    PhaseSR = 5,
    PhaseRD = 6,
    PhaseRR = 7,
    NoiseD = 8,     // destination receiver noise
    NoiseR = 9,     // relay receiver noise; node index is added to the key
    Bits = 10,      // information bits
    Placement = 11
};

inline SplitMix64 substream(std::uint64_t seed, std::uint64_t trial, std::uint32_t round,
                            Link cls, std::uint32_t node = 0) noexcept {
    std::uint64_t k = mix64(seed);
    k = mix64(k ^ trial);
    k = mix64(k ^ (static_cast<std::uint64_t>(round) << 32 | static_cast<std::uint32_t>(cls)));
    k = mix64(k ^ (static_cast<std::uint64_t>(node) + 0x5bd1e995ULL));
    return SplitMix64(k);
}

} // namespace coop_arq
