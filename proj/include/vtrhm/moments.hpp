#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "vtrhm/grammar.hpp"

namespace vtrhm {

// Densely materialized count tensors up to this vocabulary size; above it the
// pair/triple counts live in hash maps keyed by packed tuples.
inline constexpr int kDenseVocabCap = 32;

/// Single-level Boolean candidate tensor for one sentence: bit (i, lam, z) says
/// "the learned rules can derive tokens i..i+lam-1 from nonterminal z at chart
/// level `level`" (level L = raw tokens, span 1).
struct DetectorChart {
    int v = 0;
    int L = 0;
    int level = 0;
    int64_t d = 0;
    int64_t span_min = 1;
    int64_t width = 1;
    int words = 1;
    std::vector<uint64_t> bits;

    const uint64_t* cell(int64_t i, int64_t lam) const {
        return bits.data() + (i * width + (lam - span_min)) * words;
    }
    uint64_t* cell(int64_t i, int64_t lam) {
        return bits.data() + (i * width + (lam - span_min)) * words;
    }
    bool get(int64_t i, int64_t lam, int32_t z) const {
        if (i < 0 || i >= d || lam < span_min || lam >= span_min + width) return false;
        return (cell(i, lam)[z >> 6] >> (z & 63)) & 1u;
    }
    void set(int64_t i, int64_t lam, int32_t z) {
        cell(i, lam)[z >> 6] |= uint64_t(1) << (z & 63);
    }
    int64_t popcount() const;
};

// Token one-hots as a level-L detector chart.
DetectorChart token_detectors(const std::vector<int32_t>& tokens, int v, int L);

/// Root-to-latent moment statistics at one level, held as exact integer counts
/// of detector co-occurrences pooled over every admissible (position, span...)
/// slot, from which mean-centered covariances are derived on demand.
///
/// A "slot" is one admissible placement: (i, q) for singles, (i, q, q') for
/// adjacent pairs, (i, q, q', q'') for adjacent triples, with every span drawn
/// from the level's window and the whole placement inside the sentence. Slots
/// are counted whether or not any detector fires there, which is what makes
/// the root marginal exact.
class MomentTensors {
public:
    MomentTensors() = default;
    MomentTensors(int v, int L, int level);

    int v() const { return v_; }
    int level() const { return level_; }
    int64_t sample_count() const { return P_; }

    // Folds one sentence's detector chart in with an integer weight (weight 1
    // for empirical samples; larger weights let exact population enumerations
    // reuse the same path).
    void add_sentence(const DetectorChart& chart, int32_t root, int64_t weight = 1);
    // Exact merge: counts add component-wise.
    void merge(const MomentTensors& other);

    // Mean-centered covariances: C(t, alpha) = N(t;alpha)/W - n_t w_alpha / W^2
    // with W the total slot count, n_t the tuple's own count and w_alpha the
    // root's slot weight. Every slice sums to 0 over alpha by construction.
    double C1(int32_t a, int32_t alpha) const;
    std::vector<double> c2_slice(int32_t a, int32_t b) const;
    std::vector<double> c3_slice(int32_t a, int32_t b, int32_t c) const;
    std::vector<double> c1_row(int32_t a) const;

    // Packed tuples (a*v+b, (a*v+b)*v+c) with at least one co-occurrence,
    // ascending.
    std::vector<int64_t> observed_pairs() const;
    std::vector<int64_t> observed_triples() const;

    int64_t pair_count(int32_t a, int32_t b) const;        // n_t over all roots
    int64_t triple_count(int32_t a, int32_t b, int32_t c) const;

    int64_t slots1() const { return slots1_; }
    int64_t slots2() const { return slots2_; }
    int64_t slots3() const { return slots3_; }

private:
    const std::vector<int64_t>* find_sparse(const std::unordered_map<int64_t, std::vector<int64_t>>& m,
                                            int64_t key) const;
    std::vector<int64_t>& sparse_row(std::unordered_map<int64_t, std::vector<int64_t>>& m,
                                     int64_t key);

    int v_ = 0;
    int L_ = 0;
    int level_ = 0;
    bool dense_ = true;
    int64_t P_ = 0;
    int64_t slots1_ = 0, slots2_ = 0, slots3_ = 0;
    std::vector<int64_t> root_slots1_, root_slots2_, root_slots3_;  // [alpha]
    std::vector<int64_t> c1_;                                      // [a*v + alpha]
    std::vector<int64_t> c2_, c3_;                                 // dense: [t*v + alpha]
    std::unordered_map<int64_t, std::vector<int64_t>> s2_, s3_;    // sparse rows
};

/// Token-level moments straight from the dataset (no charts materialized).
MomentTensors estimate_moments(const Dataset& data, int v, int L, int workers = 0);

/// Moments of an arbitrary level from per-sentence detector charts (aligned
/// with the dataset by index).
MomentTensors estimate_moments(const Dataset& data, const std::vector<DetectorChart>& charts,
                               int workers = 0);

/// Root-to-sibling counts conditioned on the two topology-determined strata of
/// the varying-length model. A sentence of length 2^L can only arise when every
/// arity choice in its tree came out binary, so at height h the children of any
/// height-h node occupy fixed stride-2^h windows and the detector pairs read at
/// those aligned offsets are guaranteed true siblings; sentences of length 3^L
/// are the all-ternary mirror used for triples. Pair statistics read this way
/// carry no cross-boundary or mixed-arity contamination at any vocabulary size,
/// and a tuple observed at an aligned slot is (for L <= 2) necessarily a rule
/// of the generating grammar.
///
/// Counts are resolved per slot (which aligned window) and per root, since a
/// parent's rules share their root coupling separately at each slot; keeping
/// slots apart makes the per-parent directions longer and collisions between
/// different parents rarer.
struct AlignedMoments {
    int v = 0;
    int nslots2 = 0, nslots3 = 0;   // aligned windows per stratum sentence
    int64_t sent2 = 0, sent3 = 0;   // stratum sizes (sentence counts)
    std::vector<int64_t> root2, root3;  // per-root stratum sentence counts
    // Packed tuple -> counts laid out as [slot * v + alpha].
    std::unordered_map<int64_t, std::vector<int64_t>> pair_counts;
    std::unordered_map<int64_t, std::vector<int64_t>> triple_counts;

    void merge(const AlignedMoments& other);
    std::vector<int64_t> observed_pairs() const;    // ascending packed keys
    std::vector<int64_t> observed_triples() const;
    int64_t pair_total(int64_t key) const;          // count over slots and roots
    int64_t triple_total(int64_t key) const;
    // Covariance of "tuple present at slot" with the root one-hot across the
    // stratum: count/N - slot-marginal * root-marginal. One coordinate per
    // (slot, root) cell; rules of the same parent share the direction exactly
    // in the population.
    std::vector<double> pair_slice(int64_t key) const;
    std::vector<double> triple_slice(int64_t key) const;
};

/// Stratified counts at the charts' level; `charts` holds the child-level
/// detectors of every sentence (height h children live at chart level
/// L - h + 1, with spans 2^(h-1) / 3^(h-1) inside the respective stratum).
AlignedMoments estimate_aligned(const Dataset& data, const std::vector<DetectorChart>& charts,
                                int workers = 0);

/// Same counts with charts built on demand (keeps memory flat over large
/// datasets); `chart_of(i)` must return sentence i's chart at `level`.
AlignedMoments estimate_aligned(const Dataset& data, int v, int L, int level,
                                const std::function<DetectorChart(int64_t)>& chart_of,
                                int workers = 0);

}  // namespace vtrhm
