#include "vtrhm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"

using namespace vtrhm;

TEST_CASE("streams are deterministic and order-independent of siblings") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    // forking depends only on the tag path, not on draws made from the parent
    Rng p1(7);
    Rng p2(7);
    (void)p2.next_u64();
    (void)p2.next_u64();
    CHECK(p1.fork(3).next_u64() == p2.fork(3).next_u64());

    // distinct tag paths give distinct streams; order of tags matters
    Rng root(9);
    CHECK(root.fork(1).fork(2).next_u64() != root.fork(2).fork(1).next_u64());
    CHECK(root.fork(1).next_u64() != root.fork(2).next_u64());
}

TEST_CASE("next_below is in range and roughly uniform") {
    Rng rng(123);
    std::vector<int> hist(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const uint64_t x = rng.next_below(7);
        REQUIRE(x < 7);
        ++hist[x];
    }
    for (int c : hist) CHECK(std::abs(c - n / 7) < 5 * std::sqrt(static_cast<double>(n) / 7));
}

TEST_CASE("next_double is in [0,1)") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.next_double();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("sample_without_replacement draws distinct values with uniform margins") {
    Rng rng(1);
    auto s = sample_without_replacement(100, 30, rng);
    CHECK(s.size() == 30);
    std::set<uint64_t> uniq(s.begin(), s.end());
    CHECK(uniq.size() == 30);
    for (uint64_t x : s) CHECK(x < 100);

    // full permutation case
    Rng rng2(2);
    auto perm = sample_without_replacement(10, 10, rng2);
    std::sort(perm.begin(), perm.end());
    for (uint64_t i = 0; i < 10; ++i) CHECK(perm[i] == i);

    // inclusion frequency of a fixed element ~ k/n
    int hits = 0;
    const int trials = 20000;
    Rng rng3(3);
    for (int t = 0; t < trials; ++t) {
        auto draw = sample_without_replacement(20, 5, rng3);
        hits += std::count(draw.begin(), draw.end(), 13ull);
    }
    const double freq = static_cast<double>(hits) / trials;
    CHECK(std::abs(freq - 0.25) < 0.02);
}
