#include "vtrhm/grammar.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "vtrhm/analytics.hpp"

using namespace vtrhm;

namespace {

GrammarParams quick_params(int v, int L, int m2, int m3, uint64_t seed) {
    GrammarParams p;
    p.v = v;
    p.L = L;
    p.m2 = m2;
    p.m3 = m3;
    p.seed = seed;
    return p;
}

}  // namespace

TEST_CASE("generated grammars satisfy the structural contract") {
    for (uint64_t seed : {0ull, 1ull, 2ull, 3ull, 4ull, 5ull, 6ull, 7ull, 8ull, 9ull}) {
        for (int v : {2, 5, 8}) {
            const int m2 = 1 + static_cast<int>(seed % v);
            const int m3 = 1 + static_cast<int>((7 * seed + 3) % (v * v));
            Grammar g = generate_grammar(quick_params(v, 3, m2, m3, seed));
            REQUIRE(g.levels.size() == 3);
            for (const auto& lev : g.levels) {
                REQUIRE(static_cast<int>(lev.binary.size()) == v * m2);
                REQUIRE(static_cast<int>(lev.ternary.size()) == v * m3);
                std::set<std::array<int32_t, 2>> pairs(lev.binary.begin(), lev.binary.end());
                std::set<std::array<int32_t, 3>> triples(lev.ternary.begin(), lev.ternary.end());
                CHECK(pairs.size() == lev.binary.size());    // unambiguous within arity
                CHECK(triples.size() == lev.ternary.size());
                for (const auto& r : lev.binary)
                    for (int32_t s : r) CHECK((s >= 0 && s < v));
                for (const auto& r : lev.ternary)
                    for (int32_t s : r) CHECK((s >= 0 && s < v));
            }
        }
    }
}

TEST_CASE("generation is seed-deterministic") {
    Grammar a = generate_grammar(quick_params(6, 2, 2, 5, 77));
    Grammar b = generate_grammar(quick_params(6, 2, 2, 5, 77));
    Grammar c = generate_grammar(quick_params(6, 2, 2, 5, 78));
    CHECK(a.levels[0].binary == b.levels[0].binary);
    CHECK(a.levels[1].ternary == b.levels[1].ternary);
    CHECK(a.levels[0].binary != c.levels[0].binary);
}

TEST_CASE("saturated grammar: every pair and triple is a rule") {
    Grammar g = generate_grammar(quick_params(4, 2, 4, 16, 11));
    for (const auto& lev : g.levels) {
        std::set<std::array<int32_t, 2>> pairs(lev.binary.begin(), lev.binary.end());
        std::set<std::array<int32_t, 3>> triples(lev.ternary.begin(), lev.ternary.end());
        CHECK(pairs.size() == 16);
        CHECK(triples.size() == 64);
    }
}

TEST_CASE("infeasible parameters are rejected") {
    CHECK_THROWS_AS(generate_grammar(quick_params(4, 2, 5, 4, 0)), std::invalid_argument);
    CHECK_THROWS_AS(generate_grammar(quick_params(4, 2, 2, 17, 0)), std::invalid_argument);
    CHECK_THROWS_AS(generate_grammar(quick_params(0, 2, 1, 1, 0)), std::invalid_argument);
    GrammarParams bad = quick_params(4, 2, 2, 4, 0);
    bad.p3 = 0.7;  // p2 + p3 != 1
    CHECK_THROWS_AS(generate_grammar(bad), std::invalid_argument);
    CHECK_THROWS_AS(make_dataset(generate_grammar(quick_params(4, 1, 2, 4, 0)), 0, 1),
                    std::invalid_argument);
}

TEST_CASE("sampled derivations re-derive under the grammar's own rules") {
    Grammar g = generate_grammar(quick_params(7, 3, 3, 10, 5));
    Rng rng(99);
    for (int it = 0; it < 200; ++it) {
        Derivation d = sample_derivation(g, rng);
        REQUIRE(d.symbols.size() == 4);
        CHECK(d.symbols[0].size() == 1);
        CHECK(d.symbols[0][0] == d.root);
        for (int l = 0; l < 3; ++l) {
            const auto& lev = g.levels[l];
            size_t pos = 0;
            REQUIRE(d.arities[l].size() == d.symbols[l].size());
            for (size_t k = 0; k < d.symbols[l].size(); ++k) {
                const int32_t parent = d.symbols[l][k];
                const int8_t s = d.arities[l][k];
                REQUIRE((s == 2 || s == 3));
                bool found = false;
                if (s == 2) {
                    std::array<int32_t, 2> rhs = {d.symbols[l + 1][pos], d.symbols[l + 1][pos + 1]};
                    for (int r = parent * lev.m2; r < (parent + 1) * lev.m2; ++r)
                        found |= (lev.binary[r] == rhs);
                } else {
                    std::array<int32_t, 3> rhs = {d.symbols[l + 1][pos], d.symbols[l + 1][pos + 1],
                                                  d.symbols[l + 1][pos + 2]};
                    for (int r = parent * lev.m3; r < (parent + 1) * lev.m3; ++r)
                        found |= (lev.ternary[r] == rhs);
                }
                CHECK(found);
                pos += s;
            }
            CHECK(pos == d.symbols[l + 1].size());
        }
    }
}

TEST_CASE("root labels are uniform and sentence lengths match the master equation") {
    const int v = 5;
    Grammar g = generate_grammar(quick_params(v, 2, 2, 6, 4));
    const int64_t P = 20000;
    Dataset data = make_dataset(g, P, 1234);
    std::vector<int> roots(v, 0);
    std::vector<int> lengths(10, 0);
    for (const auto& s : data) {
        ++roots[s.label];
        REQUIRE(s.tokens.size() >= 4);
        REQUIRE(s.tokens.size() <= 9);
        ++lengths[s.tokens.size()];
    }
    const double se_root = std::sqrt(static_cast<double>(P) / v);
    for (int c : roots) CHECK(std::abs(c - P / v) < 5 * se_root);

    LengthDistribution ld = length_distribution(2);
    for (int d = 4; d <= 9; ++d) {
        const double expect = static_cast<double>(P) * ld.at(d);
        const double se = std::sqrt(expect * (1.0 - ld.at(d)));
        CHECK(std::abs(lengths[d] - expect) < 4 * se);
    }
}

TEST_CASE("mean sampled length at L=3 approaches 2.5^3") {
    Grammar g = generate_grammar(quick_params(4, 3, 2, 8, 21));
    Dataset data = make_dataset(g, 20000, 9);
    double mean = 0;
    for (const auto& s : data) mean += static_cast<double>(s.tokens.size());
    mean /= static_cast<double>(data.size());
    CHECK(mean == doctest::Approx(15.625).epsilon(0.01));
}

TEST_CASE("datasets are reproducible and independent of worker count") {
    Grammar g = generate_grammar(quick_params(6, 2, 2, 6, 3));
    Dataset a = make_dataset(g, 500, 42, 1);
    Dataset b = make_dataset(g, 500, 42, 4);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].label == b[i].label);
        CHECK(a[i].tokens == b[i].tokens);
    }
    // prefix property: first rows of a longer dataset coincide
    Dataset c = make_dataset(g, 100, 42, 2);
    for (size_t i = 0; i < c.size(); ++i) CHECK(c[i].tokens == a[i].tokens);
}

TEST_CASE("params_from_f rounds rule counts and clamps at one") {
    GrammarParams p = params_from_f(8, 2, 0.25, 1);
    CHECK(p.m2 == 2);
    CHECK(p.m3 == 16);
    GrammarParams q = params_from_f(8, 2, 0.01, 1);
    CHECK(q.m2 == 1);
    CHECK(q.m3 == 1);
    CHECK(params_from_f(24, 3, 0.15, 1).m2 == 4);
    CHECK(params_from_f(24, 3, 0.15, 1).m3 == 86);
}
