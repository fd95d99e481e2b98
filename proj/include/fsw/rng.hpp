#pragma once

#include <cstdint>
#include <random>

namespace fsw {

/// Deterministic random stream with a fully pinned-down draw procedure.
///
/// Datasets must be byte-reproducible across platforms and toolchains, so
/// every derived draw is spelled out here instead of relying on
/// std::uniform_*_distribution (whose output is implementation-defined):
///   - engine: std::mt19937_64 seeded with the single-argument constructor
///   - uniform_int(lo, hi): rejection sampling on raw 64-bit outputs
///   - uniform_real01(): top 53 bits scaled to [0, 1)
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Unbiased integer in [lo, hi], lo <= hi.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span =
            static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
        if (span == 0) {
            // full 64-bit range
            return static_cast<int64_t>(next_u64());
        }
        // Accept x < largest multiple of span; then x % span is unbiased.
        const uint64_t rem = UINT64_MAX % span;
        if (rem == span - 1) {
            return lo + static_cast<int64_t>(next_u64() % span);
        }
        const uint64_t bound = UINT64_MAX - rem;
        uint64_t x = next_u64();
        while (x >= bound) {
            x = next_u64();
        }
        return lo + static_cast<int64_t>(x % span);
    }

    /// Real in [0, 1) with 53-bit resolution.
    double uniform_real01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace fsw
