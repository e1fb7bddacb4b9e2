#ifndef HSAFFINE_RNG_HPP
#define HSAFFINE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace hsaffine {

/// Counter-based random stream keyed by (seed, stream, substream).
///
/// Output k is the SplitMix64 finalizer applied to key + (k+1) * gamma, so a
/// stream has no state beyond its key and counter and distinct keys never
/// share state. Paths use stream = path index, substream = window index.
class StreamRng {
public:
    using result_type = std::uint64_t;

    explicit StreamRng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0)
        : key_(mix(mix(mix(seed) ^ (stream * 0xD1B54A32D192ED03ULL)) ^ (substream * 0x8CB92BA72F3D8DD7ULL))) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return next_u64(); }

    result_type next_u64() {
        ++counter_;
        return mix(key_ + counter_ * kGamma);
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        const double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace hsaffine

#endif  // HSAFFINE_RNG_HPP
