#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

namespace vtrhm {

/// Valid span decompositions per reversed level. At reversed level lt a
/// constituent covers lam in [2^lt, 3^lt] positions and its children must
/// each cover a span in [2^(lt-1), 3^(lt-1)]; the tables list every binary
/// split q (children q, lam-q) and ternary split (q, r) (children q, r,
/// lam-q-r) satisfying that window constraint.
struct SplitTables {
    struct LevelSplits {
        int64_t lam_min = 0;
        int64_t lam_max = 0;
        std::vector<std::vector<int32_t>> binary;                    // [lam - lam_min] -> {q}
        std::vector<std::vector<std::pair<int32_t, int32_t>>> ternary;  // -> {(q, r)}
    };

    int L = 0;
    std::vector<LevelSplits> levels;  // levels[lt - 1], lt = 1..L

    const std::vector<int32_t>& binary_splits(int lt, int64_t lam) const;
    const std::vector<std::pair<int32_t, int32_t>>& ternary_splits(int lt, int64_t lam) const;
};

// Exhaustive, eager construction for reversed levels 1..L.
SplitTables build_split_tables(int L);

// Process-wide memoized copy (grammars of equal depth share one table set).
std::shared_ptr<const SplitTables> shared_split_tables(int L);

}  // namespace vtrhm
