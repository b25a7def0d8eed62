#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <vector>

namespace vtrhm {

using bigint = boost::multiprecision::cpp_int;

/// Probability of each sentence length after L branching levels; support is
/// exactly [2^L, 3^L] for L >= 1 (and {1} for L = 0).
struct LengthDistribution {
    int L = 0;
    int64_t d_min = 1;
    std::vector<double> p;  // p[d - d_min]

    double at(int64_t d) const {
        const int64_t i = d - d_min;
        return (i >= 0 && i < static_cast<int64_t>(p.size())) ? p[i] : 0.0;
    }
    int64_t d_max() const { return d_min + static_cast<int64_t>(p.size()) - 1; }
    double mean() const;
};

/// Exact number of distinct {2,3}-ary tree topologies per sentence length.
struct TopologyTable {
    int L = 1;
    int64_t d_min = 2;
    std::vector<bigint> count;

    bigint at(int64_t d) const {
        const int64_t i = d - d_min;
        return (i >= 0 && i < static_cast<int64_t>(count.size())) ? count[i] : bigint(0);
    }
    int64_t d_max() const { return d_min + static_cast<int64_t>(count.size()) - 1; }
    bigint total() const;
};

// Typical sentence length at depth L: floor(2.5^L).
int64_t typical_length(int L);

// Top-down master recursion for sentence lengths, branching binary with
// probability p2 at every node. Kahan-compensated sums.
LengthDistribution length_distribution(int L, double p2 = 0.5);

// Same recursion with unit weights and exact integers: counts topologies.
TopologyTable topology_count(int L);

// Fraction of length-d sequences deriving from at least one tree, per length.
// The returned vector is indexed like LengthDistribution (offset 2^L).
struct GrammaticalFraction {
    int L = 1;
    int64_t d_min = 2;
    std::vector<double> F;
    double at(int64_t d) const {
        const int64_t i = d - d_min;
        return (i >= 0 && i < static_cast<int64_t>(F.size())) ? F[i] : 0.0;
    }
};
GrammaticalFraction grammatical_fraction(int L, double f);

// Expected class entropy (nats) of a depth-2 grammar in the large-v regime:
// (1/4) f^3 H(1/2,1/2) + (3/16)(2/3 f^3 + 1/3 f^4) H(1/3,2/3)
//   + (3/8)(2 f^4 (1-f^4) H(1/2,1/2) + f^8 H(1/3,1/3,1/3)).
double class_entropy_L2(double f);

/// Average number of candidate constituents per position that a recognizer
/// builds, iterated level by level: n'(lam) = f2*(n ⊛ n)(lam) + f3*(n ⊛ n ⊛ n)(lam)
/// restricted to each level's span window.
///
/// Uncorrected mode starts from a single token-level candidate (n_1 = 1) and
/// classifies diverge/decay by whether n at the typical length crosses 1e3 /
/// 1e-3 within at most 12 levels ("undetermined" otherwise); that iteration
/// crosses over at f = 1/2 exactly. Corrected mode starts one level up, where
/// the planted derivation guarantees occupancy 1/(2<s>) and the remaining
/// vacancies fill spuriously with probability f, i.e. n_{2,3} = 1/5 + (4/5)f;
/// its verdict compares that renormalized occupancy against the critical
/// occupancy 1/2 (the crossover rule behind f_c = 3/8), while the trajectory
/// is still iterated and reported. The two rules agree except between
/// f = 3/8 and the iterated corrected crossing near 0.434, where the
/// renormalized-occupancy rule is the meaningful one.
struct LatentDensityTrajectory {
    enum class Verdict { diverge, decay, undetermined };

    double f2 = 0, f3 = 0;
    bool corrected = false;

    struct Level {
        int level = 0;        // reversed depth (1 = spans of length 2..3)
        int64_t lam_min = 0;  // window start 2^level
        std::vector<double> n;  // normalized so max = 1; true value = n*exp(log_scale)
        double log_scale = 0;
        double n_typical = 0;  // true value at floor(2.5^level)
    };
    std::vector<Level> levels;
    Verdict verdict = Verdict::undetermined;
    double corrected_init = 0;  // mean renormalized occupancy (corrected mode)

    double n_final() const { return levels.empty() ? 0.0 : levels.back().n_typical; }
    double at(int level, int64_t lam) const;  // true value, 0 outside windows
};

inline constexpr double kDensityDivergeThreshold = 1e3;
inline constexpr double kDensityDecayThreshold = 1e-3;
inline constexpr int kDensityMaxLevels = 12;

LatentDensityTrajectory latent_density(double f2, double f3, int L, bool corrected_init,
                                       bool stop_at_escape = true);

// Scale where the layerwise moment method has collected enough statistics:
// (p2^2/2)^(1-L) * v * m3 * m2^(L-1).
double predicted_sample_complexity(int v, int m2, int m3, int L, double p2 = 0.5);

const char* verdict_name(LatentDensityTrajectory::Verdict verdict);

}  // namespace vtrhm
