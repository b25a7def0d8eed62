#include "vtrhm/analytics.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "doctest.h"

using namespace vtrhm;

namespace {

// Brute-force oracle: enumerate every assignment of branching arities for a
// depth-3 tree and tally leaf counts, both unweighted (topologies) and
// weighted by p2^{#binary} p3^{#ternary} (length probabilities).
struct BruteL3 {
    std::map<int, double> prob;
    std::map<int, int64_t> shapes;

    explicit BruteL3(double p2) {
        const double p3 = 1.0 - p2;
        for (int a0 = 2; a0 <= 3; ++a0) {
            const double w0 = (a0 == 2) ? p2 : p3;
            const int d1 = a0;
            for (uint32_t m1 = 0; m1 < (1u << d1); ++m1) {
                int d2 = 0;
                double w1 = w0;
                for (int k = 0; k < d1; ++k) {
                    const bool ternary = (m1 >> k) & 1u;
                    d2 += ternary ? 3 : 2;
                    w1 *= ternary ? p3 : p2;
                }
                for (uint32_t m2 = 0; m2 < (1u << d2); ++m2) {
                    int d3 = 0;
                    double w2 = w1;
                    for (int k = 0; k < d2; ++k) {
                        const bool ternary = (m2 >> k) & 1u;
                        d3 += ternary ? 3 : 2;
                        w2 *= ternary ? p3 : p2;
                    }
                    prob[d3] += w2;
                    shapes[d3] += 1;
                }
            }
        }
    }
};

}  // namespace

TEST_CASE("length distribution: exact small tables") {
    LengthDistribution l1 = length_distribution(1);
    CHECK(l1.d_min == 2);
    CHECK(l1.at(2) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(l1.at(3) == doctest::Approx(0.5).epsilon(1e-15));

    LengthDistribution l2 = length_distribution(2);
    CHECK(l2.d_min == 4);
    CHECK(l2.d_max() == 9);
    CHECK(l2.at(4) == doctest::Approx(1.0 / 8).epsilon(1e-14));
    CHECK(l2.at(5) == doctest::Approx(1.0 / 4).epsilon(1e-14));
    CHECK(l2.at(6) == doctest::Approx(3.0 / 16).epsilon(1e-14));
    CHECK(l2.at(7) == doctest::Approx(3.0 / 16).epsilon(1e-14));
    CHECK(l2.at(8) == doctest::Approx(3.0 / 16).epsilon(1e-14));
    CHECK(l2.at(9) == doctest::Approx(1.0 / 16).epsilon(1e-14));
    CHECK(l2.mean() == doctest::Approx(6.25).epsilon(1e-14));
}

TEST_CASE("length distribution at depth 3 matches exhaustive enumeration") {
    for (double p2 : {0.5, 0.3, 0.9}) {
        BruteL3 oracle(p2);
        LengthDistribution ld = length_distribution(3, p2);
        CHECK(ld.d_min == 8);
        CHECK(ld.d_max() == 27);
        for (int d = 8; d <= 27; ++d)
            CHECK(ld.at(d) == doctest::Approx(oracle.prob[d]).epsilon(1e-12));
    }
}

TEST_CASE("length distribution stays normalized and keeps its mean at depth") {
    for (int L : {4, 6, 8}) {
        LengthDistribution ld = length_distribution(L);
        double sum = 0;
        for (double x : ld.p) sum += x;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(ld.mean() == doctest::Approx(std::pow(2.5, L)).epsilon(1e-9));
        CHECK(ld.d_min == (int64_t(1) << L));
    }
    CHECK_THROWS_AS(length_distribution(-1), std::invalid_argument);
}

TEST_CASE("typical length") {
    CHECK(typical_length(1) == 2);
    CHECK(typical_length(2) == 6);
    CHECK(typical_length(3) == 15);
    CHECK(typical_length(5) == 97);
    CHECK(typical_length(8) == 1525);
}

TEST_CASE("topology counts: small tables and exhaustive depth-3 oracle") {
    TopologyTable t2 = topology_count(2);
    CHECK(t2.at(4) == 1);
    CHECK(t2.at(5) == 2);
    CHECK(t2.at(6) == 2);
    CHECK(t2.at(7) == 3);
    CHECK(t2.at(8) == 3);
    CHECK(t2.at(9) == 1);
    CHECK(t2.total() == 12);

    BruteL3 oracle(0.5);
    TopologyTable t3 = topology_count(3);
    CHECK(t3.d_min == 8);
    CHECK(t3.d_max() == 27);
    for (int d = 8; d <= 27; ++d) CHECK(t3.at(d) == bigint(oracle.shapes[d]));
}

TEST_CASE("topology counts need big integers by depth 6") {
    TopologyTable t5 = topology_count(5);
    CHECK(t5.at(98) == bigint("1956682598720036344"));
    TopologyTable t6 = topology_count(6);
    bigint mx = 0;
    for (const auto& c : t6.count) mx = std::max(mx, c);
    CHECK(mx > (bigint(1) << 64));
}

TEST_CASE("grammatical fraction: closed forms at shallow depth") {
    for (double f : {0.1, 0.5, 0.9, 1.0}) {
        GrammaticalFraction g1 = grammatical_fraction(1, f);
        CHECK(g1.at(2) == doctest::Approx(f).epsilon(1e-14));
        CHECK(g1.at(3) == doctest::Approx(f).epsilon(1e-14));

        GrammaticalFraction g2 = grammatical_fraction(2, f);
        const double f3 = f * f * f;
        const double f4 = f3 * f;
        CHECK(g2.at(4) == doctest::Approx(f3).epsilon(1e-12));
        CHECK(g2.at(5) == doctest::Approx(f3).epsilon(1e-12));
        CHECK(g2.at(6) == doctest::Approx(2.0 / 3 * f3 + 1.0 / 3 * f4).epsilon(1e-12));
        CHECK(g2.at(9) == doctest::Approx(f4).epsilon(1e-12));
    }
    CHECK(grammatical_fraction(2, 0.5).at(6) == doctest::Approx(5.0 / 48).epsilon(1e-12));
}

TEST_CASE("grammatical fraction: all-binary and all-ternary corners, saturation") {
    // Unique preimage chains give F(2^L) = f^(2^L - 1), F(3^L) = f^((3^L - 1)/2).
    const double f = 0.5;
    GrammaticalFraction g5 = grammatical_fraction(5, f);
    CHECK(std::log(g5.at(32)) == doctest::Approx(31 * std::log(f)).epsilon(1e-9));
    CHECK(std::log(g5.at(243)) == doctest::Approx(121 * std::log(f)).epsilon(1e-9));
    GrammaticalFraction g8 = grammatical_fraction(8, f);
    CHECK(std::log(g8.at(256)) == doctest::Approx(255 * std::log(f)).epsilon(1e-9));
    const double ftyp = g8.at(typical_length(8));
    CHECK(ftyp > 0.0);
    CHECK(ftyp < 1e-250);

    GrammaticalFraction sat = grammatical_fraction(6, 1.0);
    for (double x : sat.F) CHECK(x == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("grammatical fraction is monotone in f") {
    double prev = 0.0;
    for (int k = 1; k <= 20; ++k) {
        const double f = k / 20.0;
        const double cur = grammatical_fraction(4, f).at(typical_length(4));
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("depth-2 class entropy: endpoints and monotonicity") {
    CHECK(class_entropy_L2(0.0) == 0.0);
    const double ln2 = std::log(2.0);
    const double ln3 = std::log(3.0);
    const double at_one = 0.25 * ln2 + (3.0 / 16) * (ln3 - 2.0 / 3 * ln2) + (3.0 / 8) * ln3;
    CHECK(class_entropy_L2(1.0) == doctest::Approx(at_one).epsilon(1e-14));
    double prev = -1.0;
    for (int k = 0; k <= 100; ++k) {
        const double h = class_entropy_L2(k / 100.0);
        CHECK(h >= prev);
        CHECK(h <= at_one + 1e-12);
        prev = h;
    }
    CHECK_THROWS_AS(class_entropy_L2(1.5), std::invalid_argument);
}

TEST_CASE("saturated latent density reproduces topology counts") {
    LatentDensityTrajectory tr = latent_density(1.0, 1.0, 5, false, false);
    REQUIRE(tr.levels.size() == 5);
    for (int level = 1; level <= 5; ++level) {
        TopologyTable tc = topology_count(level);
        const auto& rec = tr.levels[level - 1];
        CHECK(rec.level == level);
        CHECK(rec.lam_min == tc.d_min);
        REQUIRE(static_cast<int64_t>(rec.n.size()) == tc.d_max() - tc.d_min + 1);
        for (int64_t d = tc.d_min; d <= tc.d_max(); ++d) {
            const double want = static_cast<double>(tc.at(d));
            CHECK(tr.at(level, d) == doctest::Approx(want).epsilon(1e-9));
        }
        CHECK(tr.at(level, typical_length(level)) ==
              doctest::Approx(rec.n_typical).epsilon(1e-12));
    }
    CHECK(tr.verdict == LatentDensityTrajectory::Verdict::diverge);
}

TEST_CASE("latent density levels are peak-normalized over the right windows") {
    LatentDensityTrajectory tr = latent_density(0.45, 0.45, 6, false, false);
    for (const auto& rec : tr.levels) {
        CHECK(rec.lam_min == (int64_t(1) << rec.level));
        int64_t width = 1;
        for (int k = 0; k < rec.level; ++k) width *= 3;
        width -= rec.lam_min - 1;
        CHECK(static_cast<int64_t>(rec.n.size()) == width);
        double mx = 0;
        for (double x : rec.n) {
            CHECK(x >= 0.0);
            mx = std::max(mx, x);
        }
        CHECK(mx == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("latent density verdicts bracket the uncorrected crossover at 1/2") {
    CHECK(latent_density(0.45, 0.45, 12, false).verdict ==
          LatentDensityTrajectory::Verdict::decay);
    CHECK(latent_density(0.55, 0.55, 12, false).verdict ==
          LatentDensityTrajectory::Verdict::diverge);
    CHECK(latent_density(1.0, 1.0, 12, false).verdict ==
          LatentDensityTrajectory::Verdict::diverge);
}

TEST_CASE("latent density verdicts bracket the corrected crossover at 3/8") {
    LatentDensityTrajectory lo = latent_density(0.35, 0.35, 8, true);
    LatentDensityTrajectory hi = latent_density(0.40, 0.40, 8, true);
    CHECK(lo.verdict == LatentDensityTrajectory::Verdict::decay);
    CHECK(hi.verdict == LatentDensityTrajectory::Verdict::diverge);
    CHECK(lo.corrected_init == doctest::Approx(0.48).epsilon(1e-12));
    CHECK(hi.corrected_init == doctest::Approx(0.52).epsilon(1e-12));
    CHECK(verdict_name(lo.verdict) == std::string("decay"));
    CHECK(verdict_name(hi.verdict) == std::string("diverge"));
}

TEST_CASE("predicted sample complexity") {
    CHECK(predicted_sample_complexity(8, 2, 16, 2) == doctest::Approx(2048).epsilon(1e-12));
    CHECK(predicted_sample_complexity(8, 1, 8, 2) == doctest::Approx(512).epsilon(1e-12));
    CHECK(predicted_sample_complexity(12, 1, 12, 2) == doctest::Approx(1152).epsilon(1e-12));
    CHECK(predicted_sample_complexity(16, 1, 16, 2) == doctest::Approx(2048).epsilon(1e-12));
    CHECK(predicted_sample_complexity(8, 2, 16, 3) == doctest::Approx(32768).epsilon(1e-12));
    // depth-1 case needs no statistics amplification: P* = v * m3
    CHECK(predicted_sample_complexity(5, 3, 7, 1) == doctest::Approx(35).epsilon(1e-12));
    CHECK_THROWS_AS(predicted_sample_complexity(0, 1, 1, 1), std::invalid_argument);
}
