#include "vtrhm/split_tables.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <stdexcept>

namespace vtrhm {

namespace {

const std::vector<int32_t> kNoBinary{};
const std::vector<std::pair<int32_t, int32_t>> kNoTernary{};

int64_t ipow(int64_t b, int e) {
    int64_t r = 1;
    for (int k = 0; k < e; ++k) r *= b;
    return r;
}

}  // namespace

const std::vector<int32_t>& SplitTables::binary_splits(int lt, int64_t lam) const {
    if (lt < 1 || lt > L) return kNoBinary;
    const LevelSplits& lev = levels[lt - 1];
    if (lam < lev.lam_min || lam > lev.lam_max) return kNoBinary;
    return lev.binary[lam - lev.lam_min];
}

const std::vector<std::pair<int32_t, int32_t>>& SplitTables::ternary_splits(int lt,
                                                                            int64_t lam) const {
    if (lt < 1 || lt > L) return kNoTernary;
    const LevelSplits& lev = levels[lt - 1];
    if (lam < lev.lam_min || lam > lev.lam_max) return kNoTernary;
    return lev.ternary[lam - lev.lam_min];
}

SplitTables build_split_tables(int L) {
    if (L < 1) throw std::invalid_argument("build_split_tables: L must be >= 1");
    SplitTables out;
    out.L = L;
    out.levels.resize(L);
    for (int lt = 1; lt <= L; ++lt) {
        SplitTables::LevelSplits& lev = out.levels[lt - 1];
        const int64_t c_lo = ipow(2, lt - 1);
        const int64_t c_hi = ipow(3, lt - 1);
        lev.lam_min = 2 * c_lo;
        lev.lam_max = 3 * c_hi;
        const int64_t n = lev.lam_max - lev.lam_min + 1;
        lev.binary.resize(n);
        lev.ternary.resize(n);
        for (int64_t lam = lev.lam_min; lam <= lev.lam_max; ++lam) {
            auto& bin = lev.binary[lam - lev.lam_min];
            const int64_t q_lo = std::max(c_lo, lam - c_hi);
            const int64_t q_hi = std::min(c_hi, lam - c_lo);
            for (int64_t q = q_lo; q <= q_hi; ++q) bin.push_back(static_cast<int32_t>(q));
            auto& ter = lev.ternary[lam - lev.lam_min];
            const int64_t tq_lo = std::max(c_lo, lam - 2 * c_hi);
            const int64_t tq_hi = std::min(c_hi, lam - 2 * c_lo);
            for (int64_t q = tq_lo; q <= tq_hi; ++q) {
                const int64_t r_lo = std::max(c_lo, lam - q - c_hi);
                const int64_t r_hi = std::min(c_hi, lam - q - c_lo);
                for (int64_t r = r_lo; r <= r_hi; ++r)
                    ter.emplace_back(static_cast<int32_t>(q), static_cast<int32_t>(r));
            }
        }
    }
    return out;
}

std::shared_ptr<const SplitTables> shared_split_tables(int L) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const SplitTables>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(L);
    if (it != cache.end()) return it->second;
    auto built = std::make_shared<const SplitTables>(build_split_tables(L));
    cache.emplace(L, built);
    return built;
}

}  // namespace vtrhm
