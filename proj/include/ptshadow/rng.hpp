#pragma once

#include <cmath>
#include <cstdint>

namespace ptshadow {

// SplitMix64 finalizer (Steele/Lea/Vigna), used here in counter mode: the
// i-th output of the stream with key k is mix(k + (i+1)*gamma). Output i
// depends only on (k, i), so streams can be forked per record and consumed
// in parallel while staying byte-reproducible.
inline constexpr std::uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ull;

inline std::uint64_t splitmix64_mix(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64()
    {
        ++counter_;
        return splitmix64_mix(key_ + counter_ * kSplitMixGamma);
    }

    // Uniform in [0,1) with 53 significant bits.
    double next_double()
    {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; draws exactly two uniforms per call so
    // the counter advance is fixed (no cached second value).
    double next_gaussian()
    {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0)
            u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n), unbiased (rejection on the top remainder).
    std::uint64_t next_below(std::uint64_t n)
    {
        const std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n + 1) % n;
        for (;;) {
            const std::uint64_t v = next_u64();
            if (v <= limit)
                return v % n;
        }
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Dataset records draw from substream mix(mix(seed) + record_index); this is
// the one place the substream convention is defined. The outer mix keeps the
// per-record keys off the gamma lattice that CounterRng itself walks (keys
// differing by a multiple of gamma would yield shifted copies of one stream);
// the inner mix decorrelates nearby seeds, so sweeps over sequential seeds
// never reuse a record substream (plain seed ^ record_index would collide,
// e.g. 3000^5 == 3005^0).
inline CounterRng record_stream(std::uint64_t seed, std::uint64_t record_index)
{
    return CounterRng(splitmix64_mix(splitmix64_mix(seed) + record_index));
}

} // namespace ptshadow
