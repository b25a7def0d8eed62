#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtrhm/moments.hpp"

namespace vtrhm {

struct ClusterOptions {
    // Self-consistency floor: after grouping, every retained slice must have
    // cosine >= tau to its own class centroid, and strictly greater than to
    // every other class centroid; otherwise inference fails.
    double tau = 0.5;
    // Absolute norm threshold below which slices are discarded as noise.
    // 0 selects the automatic rule: a two-class split on log norms, applied
    // only when the resulting modes are at least a decade apart (otherwise
    // the norm distribution is treated as one mode and nothing is dropped).
    double discard_override = 0.0;
    // Minimum acceptable centroid cosine when matching ternary classes to
    // binary classes.
    double align_min = 0.5;
};

/// Result of grouping covariance slices into sibling classes.
///
/// `candidates`/`norms` describe every tuple considered (diagnostic);
/// `items`/`labels` the retained tuples and their cluster ids. For binary
/// inference cluster ids are 0..n_clusters-1 ordered by each cluster's
/// smallest member tuple; for ternary inference they are the ids of the
/// aligned binary clusters.
struct ClusterAssignment {
    bool success = false;
    std::string failure;
    int arity = 2;
    int n_clusters = 0;
    std::vector<int64_t> items;
    std::vector<int32_t> labels;
    std::vector<std::vector<double>> centroids;  // unit vectors, [cluster id]
    std::vector<int64_t> candidates;
    std::vector<double> norms;
    double discard_threshold = 0.0;

    int32_t a_of(size_t k, int v) const {
        return static_cast<int32_t>(arity == 2 ? items[k] / v : items[k] / (int64_t(v) * v));
    }
    int32_t b_of(size_t k, int v) const {
        return static_cast<int32_t>(arity == 2 ? items[k] % v : (items[k] / v) % v);
    }
    int32_t c_of(size_t k, int v) const { return static_cast<int32_t>(items[k] % v); }
};

// Threshold maximizing inter-class variance of a two-class split of `values`
// (histogram method). Degenerate inputs (all equal) yield min(values), i.e.
// nothing below the threshold.
double otsu_threshold(const std::vector<double>& values);

/// Deterministic average-linkage grouping of unit vectors into exactly k
/// classes, by nearest-neighbor-chain agglomeration on dissimilarity
/// 1 - cosine (ties broken toward the smallest cluster slot), followed by a
/// self-consistency check: every vector needs cosine >= tau to its own class
/// centroid and strictly above its cosine to any other centroid. Labels are
/// 0..k-1 ordered by each class's smallest member index.
struct LinkageResult {
    bool success = false;
    std::string failure;
    std::vector<int32_t> labels;
    std::vector<std::vector<double>> centroids;  // unit vectors, [class]
    double min_own_cos = 1.0;    // worst member-to-own-centroid cosine
    double min_margin = 2.0;     // worst (own - best other) cosine gap
};
LinkageResult average_linkage(const std::vector<std::vector<double>>& units, int k, double tau);

/// Groups pair covariance slices: discards low-norm slices, unit-normalizes
/// the rest, agglomerates to exactly v classes (one per parent symbol) and
/// validates the grouping. On any violation returns success=false with
/// diagnostics intact.
ClusterAssignment infer_binary_rules(const MomentTensors& m, const ClusterOptions& opt = {});

/// Groups whitened triple slices (raw slice minus 1/v times the sum of its
/// two adjacent pair slices) the same way and aligns the resulting classes to
/// the binary ones by greedy best-cosine centroid matching; labels are
/// rewritten into the binary id space. Alignment below align_min fails.
ClusterAssignment infer_ternary_rules(const MomentTensors& m, const ClusterAssignment& binary,
                                      const ClusterOptions& opt = {});

}  // namespace vtrhm
