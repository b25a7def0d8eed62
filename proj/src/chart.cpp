#include "vtrhm/chart.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "vtrhm/numeric.hpp"

namespace vtrhm {

namespace {

int64_t ipow(int64_t b, int e) {
    int64_t r = 1;
    for (int k = 0; k < e; ++k) r *= b;
    return r;
}

void check_shape_args(int v, int L, int64_t d) {
    if (v < 1) throw std::invalid_argument("chart: v must be >= 1");
    if (L < 1) throw std::invalid_argument("chart: L must be >= 1");
    if (d < ipow(2, L) || d > ipow(3, L))
        throw std::invalid_argument("chart: sentence length outside [2^L, 3^L]");
}

}  // namespace

double InsideChart::at(int level, int64_t i, int64_t lam, int32_t z) const {
    const Layer& lay = layers[level];
    const double empty = log_space ? kNegInf : 0.0;
    if (i < 0 || i >= d || lam < lay.span_min || lam >= lay.span_min + lay.width) return empty;
    return cell(level, i, lam)[z];
}

std::vector<double> InsideChart::root_values() const {
    const double* r = cell(0, 0, d);
    return std::vector<double>(r, r + v);
}

InsideChart make_inside_chart(int v, int L, int64_t d, bool log_space) {
    check_shape_args(v, L, d);
    InsideChart c;
    c.v = v;
    c.L = L;
    c.d = d;
    c.log_space = log_space;
    c.layers.resize(L + 1);
    const double empty = log_space ? kNegInf : 0.0;
    for (int l = 0; l <= L; ++l) {
        InsideChart::Layer& lay = c.layers[l];
        lay.span_min = ipow(2, L - l);
        lay.width = ipow(3, L - l) - lay.span_min + 1;
        lay.val.assign(static_cast<size_t>(d) * lay.width * v, empty);
    }
    return c;
}

bool BooleanChart::get(int level, int64_t i, int64_t lam, int32_t z) const {
    const Layer& lay = layers[level];
    if (i < 0 || i >= d || lam < lay.span_min || lam >= lay.span_min + lay.width) return false;
    return (cell(level, i, lam)[z >> 6] >> (z & 63)) & 1u;
}

void BooleanChart::set(int level, int64_t i, int64_t lam, int32_t z) {
    cell(level, i, lam)[z >> 6] |= uint64_t(1) << (z & 63);
}

std::vector<int32_t> BooleanChart::root_labels() const {
    std::vector<int32_t> out;
    const uint64_t* r = cell(0, 0, d);
    for (int32_t z = 0; z < v; ++z)
        if ((r[z >> 6] >> (z & 63)) & 1u) out.push_back(z);
    return out;
}

BooleanChart make_boolean_chart(int v, int L, int64_t d) {
    check_shape_args(v, L, d);
    BooleanChart c;
    c.v = v;
    c.L = L;
    c.d = d;
    c.words = (v + 63) / 64;
    c.layers.resize(L + 1);
    for (int l = 0; l <= L; ++l) {
        BooleanChart::Layer& lay = c.layers[l];
        lay.span_min = ipow(2, L - l);
        lay.width = ipow(3, L - l) - lay.span_min + 1;
        lay.bits.assign(static_cast<size_t>(d) * lay.width * c.words, 0);
    }
    return c;
}

namespace {

void check_symbol(int32_t s, int v, const char* what) {
    if (s < 0 || s >= v) throw std::invalid_argument(std::string("level index: ") + what);
}

}  // namespace

LevelIndex make_level_index(const RuleLevel& level, int v, double p2, double p3) {
    LevelIndex idx;
    idx.v = v;
    idx.pb = level.m2 > 0 ? p2 / level.m2 : 0.0;
    idx.pt = level.m3 > 0 ? p3 / level.m3 : 0.0;
    idx.log_pb = idx.pb > 0 ? std::log(idx.pb) : kNegInf;
    idx.log_pt = idx.pt > 0 ? std::log(idx.pt) : kNegInf;
    idx.binary.reserve(level.binary.size());
    idx.bin_by_first.resize(v);
    idx.ter_by_first.resize(v);
    idx.ter_by_third.resize(v);
    for (size_t r = 0; r < level.binary.size(); ++r) {
        const auto& ab = level.binary[r];
        const int32_t z = static_cast<int32_t>(level.parent_of_binary(static_cast<int>(r)));
        idx.binary.push_back({z, ab[0], ab[1]});
        idx.bin_by_first[ab[0]].push_back({ab[1], z});
    }
    for (size_t r = 0; r < level.ternary.size(); ++r) {
        const auto& abc = level.ternary[r];
        const int32_t z = static_cast<int32_t>(level.parent_of_ternary(static_cast<int>(r)));
        idx.ter_by_first[abc[0]].push_back({abc[1], abc[2], z});
        idx.ter_by_third[abc[2]].push_back({z, abc[0], abc[1]});
    }
    return idx;
}

LevelIndex make_level_index_from_rules(int v,
                                       const std::vector<std::array<int32_t, 3>>& binary_zab,
                                       const std::vector<std::array<int32_t, 4>>& ternary_zabc) {
    LevelIndex idx;
    idx.v = v;
    idx.log_pb = kNegInf;
    idx.log_pt = kNegInf;
    idx.binary = binary_zab;
    idx.bin_by_first.resize(v);
    idx.ter_by_first.resize(v);
    idx.ter_by_third.resize(v);
    for (const auto& r : binary_zab) {
        check_symbol(r[0], v, "binary parent out of range");
        check_symbol(r[1], v, "binary child out of range");
        check_symbol(r[2], v, "binary child out of range");
        idx.bin_by_first[r[1]].push_back({r[2], r[0]});
    }
    for (const auto& r : ternary_zabc) {
        for (int k = 0; k < 4; ++k) check_symbol(r[k], v, "ternary symbol out of range");
        idx.ter_by_first[r[1]].push_back({r[2], r[3], r[0]});
        idx.ter_by_third[r[3]].push_back({r[0], r[1], r[2]});
    }
    return idx;
}

}  // namespace vtrhm
