#pragma once

#include <bit>
#include <cstdint>
#include <vector>

namespace vtrhm {

// SplitMix64 finalizer: bijective, passes the usual avalanche tests.
inline uint64_t mix64(uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

inline constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

/// Counter-based pseudo-random stream.
///
/// A stream is a (key, counter) pair; draw k of a stream with key K is
/// mix64(K + (k+1)*golden), i.e. the classic SplitMix64 sequence. Streams fork
/// children by folding a tag into the key, so a stream is named by its seed and
/// the path of tags that produced it, independent of how many values any
/// ancestor has drawn. This is what makes per-sentence / per-level work safely
/// parallelizable while staying bit-reproducible.
class Rng {
public:
    explicit Rng(uint64_t seed) : key_(mix64(seed + kGolden)) {}

    // Derived stream; fork(a).fork(b) and fork(b).fork(a) differ.
    Rng fork(uint64_t tag) const {
        return Rng(mix64(key_ ^ (mix64(tag + kGolden) | 1)), FromKey{});
    }

    uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

    // Uniform on [0,1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased uniform on [0,n), n >= 1, by masked rejection.
    uint64_t next_below(uint64_t n) {
        if (n <= 1) return 0;
        const uint64_t mask = ~0ull >> std::countl_zero(n - 1);
        for (;;) {
            const uint64_t r = next_u64() & mask;
            if (r < n) return r;
        }
    }

    bool next_bernoulli(double p) { return next_double() < p; }

    uint64_t key() const { return key_; }

private:
    struct FromKey {};
    Rng(uint64_t key, FromKey) : key_(key) {}

    uint64_t key_;
    uint64_t counter_ = 0;
};

/// k distinct values from [0,n), uniform over subsets, in draw order.
/// Sparse Fisher-Yates: only touched slots are stored, so n may be huge
/// (e.g. v^3 packed tuples) as long as k fits in memory.
std::vector<uint64_t> sample_without_replacement(uint64_t n, uint64_t k, Rng& rng);

}  // namespace vtrhm
