#pragma once

#include <cstdint>
#include <vector>

#include "vtrhm/grammar.hpp"

namespace vtrhm {

/// Dense layered parse chart. Layer l (0 = root, L = tokens) holds a
/// d x width x v tensor of inside values where the span-length axis covers
/// exactly [2^(L-l), 3^(L-l)]; rows whose span would overrun the sentence are
/// materialized but stay at the empty value (0 or -inf).
struct InsideChart {
    struct Layer {
        int64_t span_min = 1;
        int64_t width = 1;
        std::vector<double> val;  // [(i * width + (lam - span_min)) * v + z]
    };

    int v = 0;
    int L = 0;
    int64_t d = 0;
    bool log_space = false;
    std::vector<Layer> layers;  // size L+1

    double* cell(int level, int64_t i, int64_t lam) {
        Layer& lay = layers[level];
        return lay.val.data() + (i * lay.width + (lam - lay.span_min)) * v;
    }
    const double* cell(int level, int64_t i, int64_t lam) const {
        const Layer& lay = layers[level];
        return lay.val.data() + (i * lay.width + (lam - lay.span_min)) * v;
    }
    // Value clamped to the empty element outside a layer's span window.
    double at(int level, int64_t i, int64_t lam, int32_t z) const;

    // Inside values of the whole sentence per root label (layer 0, span d).
    std::vector<double> root_values() const;
};

InsideChart make_inside_chart(int v, int L, int64_t d, bool log_space);

/// Same layout with one bit per (i, lam, z): "some depth-consistent subtree
/// with this root label yields exactly this span".
struct BooleanChart {
    struct Layer {
        int64_t span_min = 1;
        int64_t width = 1;
        std::vector<uint64_t> bits;  // words-per-cell packed
    };

    int v = 0;
    int L = 0;
    int64_t d = 0;
    int words = 1;  // ceil(v / 64)
    std::vector<Layer> layers;

    uint64_t* cell(int level, int64_t i, int64_t lam) {
        Layer& lay = layers[level];
        return lay.bits.data() + (i * lay.width + (lam - lay.span_min)) * words;
    }
    const uint64_t* cell(int level, int64_t i, int64_t lam) const {
        const Layer& lay = layers[level];
        return lay.bits.data() + (i * lay.width + (lam - lay.span_min)) * words;
    }
    bool get(int level, int64_t i, int64_t lam, int32_t z) const;
    void set(int level, int64_t i, int64_t lam, int32_t z);

    // Root labels able to derive the full sentence, ascending.
    std::vector<int32_t> root_labels() const;
};

BooleanChart make_boolean_chart(int v, int L, int64_t d);

/// One level of rules rearranged for chart fills: ternary grouped by first
/// child (recognizer loops) and by third child (inside midpoint loops), plus
/// flat (parent, children...) lists and the shared per-rule probabilities.
struct LevelIndex {
    int v = 0;
    double pb = 0;  // probability of one binary rule: p2 / m2 (0 if unweighted)
    double pt = 0;  // p3 / m3
    double log_pb = 0;
    double log_pt = 0;

    std::vector<std::array<int32_t, 3>> binary;                    // (z, a, b)
    std::vector<std::vector<std::array<int32_t, 2>>> bin_by_first;  // [a] -> (b, z)
    std::vector<std::vector<std::array<int32_t, 3>>> ter_by_first;  // [a] -> (b, c, z)
    std::vector<std::vector<std::array<int32_t, 3>>> ter_by_third;  // [c] -> (z, a, b)
};

// Index a grammar level, attaching uniform per-rule probabilities.
LevelIndex make_level_index(const RuleLevel& level, int v, double p2, double p3);

// Index bare candidate rule lists (recognition only, probabilities unset).
LevelIndex make_level_index_from_rules(int v,
                                       const std::vector<std::array<int32_t, 3>>& binary_zab,
                                       const std::vector<std::array<int32_t, 4>>& ternary_zabc);

}  // namespace vtrhm
