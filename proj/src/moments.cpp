#include "vtrhm/moments.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>
#include <string>

#include "vtrhm/parallel.hpp"

namespace vtrhm {
namespace {

// Appends the symbols set in `cell` to `out`.
void collect_bits(const uint64_t* cell, int words, std::vector<int32_t>& out) {
    out.clear();
    for (int w = 0; w < words; ++w) {
        uint64_t bits = cell[w];
        while (bits) {
            out.push_back(static_cast<int32_t>((w << 6) + std::countr_zero(bits)));
            bits &= bits - 1;
        }
    }
}

}  // namespace

int64_t DetectorChart::popcount() const {
    int64_t n = 0;
    for (uint64_t w : bits) n += std::popcount(w);
    return n;
}

DetectorChart token_detectors(const std::vector<int32_t>& tokens, int v, int L) {
    if (v < 1 || L < 1) throw std::invalid_argument("token_detectors: need v >= 1, L >= 1");
    DetectorChart c;
    c.v = v;
    c.L = L;
    c.level = L;
    c.d = static_cast<int64_t>(tokens.size());
    c.span_min = 1;
    c.width = 1;
    c.words = (v + 63) / 64;
    c.bits.assign(static_cast<size_t>(c.d) * c.words, 0);
    for (int64_t i = 0; i < c.d; ++i) {
        const int32_t a = tokens[static_cast<size_t>(i)];
        if (a < 0 || a >= v)
            throw std::invalid_argument("token_detectors: token out of range: " + std::to_string(a));
        c.set(i, 1, a);
    }
    return c;
}

MomentTensors::MomentTensors(int v, int L, int level) : v_(v), L_(L), level_(level) {
    if (v < 1) throw std::invalid_argument("MomentTensors: v must be positive");
    if (level < 0 || level > L) throw std::invalid_argument("MomentTensors: level out of range");
    dense_ = v <= kDenseVocabCap;
    root_slots1_.assign(v, 0);
    root_slots2_.assign(v, 0);
    root_slots3_.assign(v, 0);
    c1_.assign(static_cast<size_t>(v) * v, 0);
    if (dense_) {
        c2_.assign(static_cast<size_t>(v) * v * v, 0);
        c3_.assign(static_cast<size_t>(v) * v * v * v, 0);
    }
}

const std::vector<int64_t>* MomentTensors::find_sparse(
    const std::unordered_map<int64_t, std::vector<int64_t>>& m, int64_t key) const {
    auto it = m.find(key);
    return it == m.end() ? nullptr : &it->second;
}

std::vector<int64_t>& MomentTensors::sparse_row(
    std::unordered_map<int64_t, std::vector<int64_t>>& m, int64_t key) {
    auto [it, fresh] = m.try_emplace(key);
    if (fresh) it->second.assign(v_, 0);
    return it->second;
}

void MomentTensors::add_sentence(const DetectorChart& chart, int32_t root, int64_t weight) {
    if (chart.v != v_ || chart.level != level_ || chart.L != L_)
        throw std::invalid_argument("MomentTensors::add_sentence: chart shape mismatch");
    if (root < 0 || root >= v_)
        throw std::invalid_argument("MomentTensors::add_sentence: root label out of range");
    if (weight <= 0) throw std::invalid_argument("MomentTensors::add_sentence: weight must be positive");

    const int64_t d = chart.d;
    const int64_t lo = chart.span_min;
    const int64_t hi = chart.span_min + chart.width - 1;
    const int words = chart.words;
    const int64_t v = v_;

    std::vector<int32_t> sa, sb, sc;
    int64_t n1 = 0, n2 = 0, n3 = 0;

    for (int64_t i = 0; i < d; ++i) {
        for (int64_t q = lo; q <= std::min(hi, d - i); ++q) {
            ++n1;
            collect_bits(chart.cell(i, q), words, sa);
            for (int32_t a : sa) c1_[static_cast<size_t>(a) * v + root] += weight;
        }
        for (int64_t q = lo; q <= std::min(hi, d - i - lo); ++q) {
            collect_bits(chart.cell(i, q), words, sa);
            for (int64_t q2 = lo; q2 <= std::min(hi, d - i - q); ++q2) {
                ++n2;
                if (sa.empty()) continue;
                collect_bits(chart.cell(i + q, q2), words, sb);
                if (sb.empty()) continue;
                for (int32_t a : sa)
                    for (int32_t b : sb) {
                        const int64_t t = static_cast<int64_t>(a) * v + b;
                        if (dense_)
                            c2_[static_cast<size_t>(t) * v + root] += weight;
                        else
                            sparse_row(s2_, t)[root] += weight;
                    }
            }
        }
        for (int64_t q = lo; q <= std::min(hi, d - i - 2 * lo); ++q) {
            collect_bits(chart.cell(i, q), words, sa);
            for (int64_t q2 = lo; q2 <= std::min(hi, d - i - q - lo); ++q2) {
                const bool have_ab = !sa.empty();
                if (have_ab) collect_bits(chart.cell(i + q, q2), words, sb);
                for (int64_t q3 = lo; q3 <= std::min(hi, d - i - q - q2); ++q3) {
                    ++n3;
                    if (!have_ab || sb.empty()) continue;
                    collect_bits(chart.cell(i + q + q2, q3), words, sc);
                    if (sc.empty()) continue;
                    for (int32_t a : sa)
                        for (int32_t b : sb) {
                            const int64_t ab = (static_cast<int64_t>(a) * v + b) * v;
                            for (int32_t c : sc) {
                                const int64_t t = ab + c;
                                if (dense_)
                                    c3_[static_cast<size_t>(t) * v + root] += weight;
                                else
                                    sparse_row(s3_, t)[root] += weight;
                            }
                        }
                }
            }
        }
    }

    P_ += weight;
    slots1_ += weight * n1;
    slots2_ += weight * n2;
    slots3_ += weight * n3;
    root_slots1_[root] += weight * n1;
    root_slots2_[root] += weight * n2;
    root_slots3_[root] += weight * n3;
}

void MomentTensors::merge(const MomentTensors& other) {
    if (other.v_ != v_ || other.level_ != level_ || other.L_ != L_)
        throw std::invalid_argument("MomentTensors::merge: shape mismatch");
    P_ += other.P_;
    slots1_ += other.slots1_;
    slots2_ += other.slots2_;
    slots3_ += other.slots3_;
    for (int a = 0; a < v_; ++a) {
        root_slots1_[a] += other.root_slots1_[a];
        root_slots2_[a] += other.root_slots2_[a];
        root_slots3_[a] += other.root_slots3_[a];
    }
    for (size_t i = 0; i < c1_.size(); ++i) c1_[i] += other.c1_[i];
    if (dense_) {
        for (size_t i = 0; i < c2_.size(); ++i) c2_[i] += other.c2_[i];
        for (size_t i = 0; i < c3_.size(); ++i) c3_[i] += other.c3_[i];
    } else {
        for (const auto& [k, row] : other.s2_) {
            auto& mine = sparse_row(s2_, k);
            for (int a = 0; a < v_; ++a) mine[a] += row[a];
        }
        for (const auto& [k, row] : other.s3_) {
            auto& mine = sparse_row(s3_, k);
            for (int a = 0; a < v_; ++a) mine[a] += row[a];
        }
    }
}

double MomentTensors::C1(int32_t a, int32_t alpha) const {
    if (slots1_ == 0) return 0.0;
    const double W = static_cast<double>(slots1_);
    int64_t n_a = 0;
    for (int r = 0; r < v_; ++r) n_a += c1_[static_cast<size_t>(a) * v_ + r];
    return c1_[static_cast<size_t>(a) * v_ + alpha] / W -
           static_cast<double>(n_a) * root_slots1_[alpha] / (W * W);
}

std::vector<double> MomentTensors::c1_row(int32_t a) const {
    std::vector<double> out(v_, 0.0);
    for (int r = 0; r < v_; ++r) out[r] = C1(a, r);
    return out;
}

std::vector<double> MomentTensors::c2_slice(int32_t a, int32_t b) const {
    std::vector<double> out(v_, 0.0);
    if (slots2_ == 0) return out;
    const int64_t t = static_cast<int64_t>(a) * v_ + b;
    const int64_t* row = nullptr;
    if (dense_) {
        row = c2_.data() + static_cast<size_t>(t) * v_;
    } else if (const auto* r = find_sparse(s2_, t)) {
        row = r->data();
    }
    const double W = static_cast<double>(slots2_);
    int64_t n_t = 0;
    if (row)
        for (int r = 0; r < v_; ++r) n_t += row[r];
    for (int r = 0; r < v_; ++r) {
        const double joint = row ? static_cast<double>(row[r]) : 0.0;
        out[r] = joint / W - static_cast<double>(n_t) * root_slots2_[r] / (W * W);
    }
    return out;
}

std::vector<double> MomentTensors::c3_slice(int32_t a, int32_t b, int32_t c) const {
    std::vector<double> out(v_, 0.0);
    if (slots3_ == 0) return out;
    const int64_t t = (static_cast<int64_t>(a) * v_ + b) * v_ + c;
    const int64_t* row = nullptr;
    if (dense_) {
        row = c3_.data() + static_cast<size_t>(t) * v_;
    } else if (const auto* r = find_sparse(s3_, t)) {
        row = r->data();
    }
    const double W = static_cast<double>(slots3_);
    int64_t n_t = 0;
    if (row)
        for (int r = 0; r < v_; ++r) n_t += row[r];
    for (int r = 0; r < v_; ++r) {
        const double joint = row ? static_cast<double>(row[r]) : 0.0;
        out[r] = joint / W - static_cast<double>(n_t) * root_slots3_[r] / (W * W);
    }
    return out;
}

int64_t MomentTensors::pair_count(int32_t a, int32_t b) const {
    const int64_t t = static_cast<int64_t>(a) * v_ + b;
    int64_t n = 0;
    if (dense_) {
        for (int r = 0; r < v_; ++r) n += c2_[static_cast<size_t>(t) * v_ + r];
    } else if (const auto* row = find_sparse(s2_, t)) {
        for (int r = 0; r < v_; ++r) n += (*row)[r];
    }
    return n;
}

int64_t MomentTensors::triple_count(int32_t a, int32_t b, int32_t c) const {
    const int64_t t = (static_cast<int64_t>(a) * v_ + b) * v_ + c;
    int64_t n = 0;
    if (dense_) {
        for (int r = 0; r < v_; ++r) n += c3_[static_cast<size_t>(t) * v_ + r];
    } else if (const auto* row = find_sparse(s3_, t)) {
        for (int r = 0; r < v_; ++r) n += (*row)[r];
    }
    return n;
}

std::vector<int64_t> MomentTensors::observed_pairs() const {
    std::vector<int64_t> out;
    if (dense_) {
        const int64_t n = static_cast<int64_t>(v_) * v_;
        for (int64_t t = 0; t < n; ++t) {
            const int64_t* row = c2_.data() + static_cast<size_t>(t) * v_;
            for (int r = 0; r < v_; ++r)
                if (row[r] != 0) {
                    out.push_back(t);
                    break;
                }
        }
    } else {
        out.reserve(s2_.size());
        for (const auto& [k, row] : s2_) {
            (void)row;
            out.push_back(k);
        }
        std::sort(out.begin(), out.end());
    }
    return out;
}

std::vector<int64_t> MomentTensors::observed_triples() const {
    std::vector<int64_t> out;
    if (dense_) {
        const int64_t n = static_cast<int64_t>(v_) * v_ * v_;
        for (int64_t t = 0; t < n; ++t) {
            const int64_t* row = c3_.data() + static_cast<size_t>(t) * v_;
            for (int r = 0; r < v_; ++r)
                if (row[r] != 0) {
                    out.push_back(t);
                    break;
                }
        }
    } else {
        out.reserve(s3_.size());
        for (const auto& [k, row] : s3_) {
            (void)row;
            out.push_back(k);
        }
        std::sort(out.begin(), out.end());
    }
    return out;
}

namespace {

MomentTensors accumulate_shards(const Dataset& data, int v, int L, int level, int workers,
                                const std::function<DetectorChart(int64_t)>& chart_of) {
    if (data.empty()) throw std::invalid_argument("estimate_moments: empty dataset");
    const int64_t n = static_cast<int64_t>(data.size());
    const int shards = shard_count(n, workers);
    std::vector<MomentTensors> parts;
    parts.reserve(shards);
    for (int s = 0; s < shards; ++s) parts.emplace_back(v, L, level);
    parallel_shards(n, workers, [&](int s, int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i)
            parts[s].add_sentence(chart_of(i), data[static_cast<size_t>(i)].label);
    });
    MomentTensors total = std::move(parts[0]);
    for (int s = 1; s < shards; ++s) total.merge(parts[s]);
    return total;
}

}  // namespace

MomentTensors estimate_moments(const Dataset& data, int v, int L, int workers) {
    return accumulate_shards(data, v, L, L, workers, [&](int64_t i) {
        return token_detectors(data[static_cast<size_t>(i)].tokens, v, L);
    });
}

MomentTensors estimate_moments(const Dataset& data, const std::vector<DetectorChart>& charts,
                               int workers) {
    if (charts.size() != data.size())
        throw std::invalid_argument("estimate_moments: charts/dataset size mismatch");
    if (data.empty()) throw std::invalid_argument("estimate_moments: empty dataset");
    const int v = charts[0].v, L = charts[0].L, level = charts[0].level;
    for (const auto& c : charts)
        if (c.v != v || c.L != L || c.level != level)
            throw std::invalid_argument("estimate_moments: charts disagree on shape");
    return accumulate_shards(data, v, L, level, workers,
                             [&](int64_t i) { return charts[static_cast<size_t>(i)]; });
}

namespace {

std::vector<int64_t>& aligned_row(std::unordered_map<int64_t, std::vector<int64_t>>& m,
                                  int64_t key, size_t len) {
    auto [it, fresh] = m.try_emplace(key);
    if (fresh) it->second.assign(len, 0);
    return it->second;
}

int64_t ipow(int64_t base, int exp) {
    int64_t r = 1;
    while (exp-- > 0) r *= base;
    return r;
}

std::vector<int64_t> sorted_keys(const std::unordered_map<int64_t, std::vector<int64_t>>& m) {
    std::vector<int64_t> out;
    out.reserve(m.size());
    for (const auto& [k, row] : m) {
        (void)row;
        out.push_back(k);
    }
    std::sort(out.begin(), out.end());
    return out;
}

int64_t map_total(const std::unordered_map<int64_t, std::vector<int64_t>>& m, int64_t key) {
    auto it = m.find(key);
    int64_t n = 0;
    if (it != m.end())
        for (int64_t x : it->second) n += x;
    return n;
}

// slice[s*v + alpha] = count/N - slot_marginal(s) * root_marginal(alpha), the
// empirical covariance of "tuple fires at aligned slot s" with the root
// indicator over the stratum's N sentences.
std::vector<double> centered_slice(const std::unordered_map<int64_t, std::vector<int64_t>>& m,
                                   int64_t key, int nslots, int v, int64_t N,
                                   const std::vector<int64_t>& root_n) {
    std::vector<double> out(static_cast<size_t>(nslots) * v, 0.0);
    if (N == 0) return out;
    auto it = m.find(key);
    const double W = static_cast<double>(N);
    for (int s = 0; s < nslots; ++s) {
        int64_t rowsum = 0;
        if (it != m.end())
            for (int a = 0; a < v; ++a) rowsum += it->second[static_cast<size_t>(s) * v + a];
        for (int a = 0; a < v; ++a) {
            const double joint =
                it != m.end() ? static_cast<double>(it->second[static_cast<size_t>(s) * v + a]) : 0.0;
            out[static_cast<size_t>(s) * v + a] =
                joint / W - static_cast<double>(rowsum) * root_n[a] / (W * W);
        }
    }
    return out;
}

}  // namespace

void AlignedMoments::merge(const AlignedMoments& other) {
    if (other.v != v || other.nslots2 != nslots2 || other.nslots3 != nslots3)
        throw std::invalid_argument("AlignedMoments::merge: shape mismatch");
    sent2 += other.sent2;
    sent3 += other.sent3;
    for (int a = 0; a < v; ++a) {
        root2[a] += other.root2[a];
        root3[a] += other.root3[a];
    }
    for (const auto& [k, row] : other.pair_counts) {
        auto& mine = aligned_row(pair_counts, k, row.size());
        for (size_t i = 0; i < row.size(); ++i) mine[i] += row[i];
    }
    for (const auto& [k, row] : other.triple_counts) {
        auto& mine = aligned_row(triple_counts, k, row.size());
        for (size_t i = 0; i < row.size(); ++i) mine[i] += row[i];
    }
}

std::vector<int64_t> AlignedMoments::observed_pairs() const { return sorted_keys(pair_counts); }

std::vector<int64_t> AlignedMoments::observed_triples() const { return sorted_keys(triple_counts); }

int64_t AlignedMoments::pair_total(int64_t key) const { return map_total(pair_counts, key); }

int64_t AlignedMoments::triple_total(int64_t key) const { return map_total(triple_counts, key); }

std::vector<double> AlignedMoments::pair_slice(int64_t key) const {
    return centered_slice(pair_counts, key, nslots2, v, sent2, root2);
}

std::vector<double> AlignedMoments::triple_slice(int64_t key) const {
    return centered_slice(triple_counts, key, nslots3, v, sent3, root3);
}

AlignedMoments estimate_aligned(const Dataset& data, int v, int L, int level,
                                const std::function<DetectorChart(int64_t)>& chart_of,
                                int workers) {
    if (data.empty()) throw std::invalid_argument("estimate_aligned: empty dataset");
    if (level < 1 || level > L)
        throw std::invalid_argument("estimate_aligned: charts must sit strictly below the root");

    const int hc = L - level;  // height of the chart's symbols (children)
    const int h = hc + 1;      // height whose rules these counts resolve
    const int64_t span2 = ipow(2, hc), span3 = ipow(3, hc);
    const int64_t d2 = ipow(2, L), d3 = ipow(3, L);
    const int nslots2 = static_cast<int>(ipow(2, L - h));
    const int nslots3 = static_cast<int>(ipow(3, L - h));

    const int64_t n = static_cast<int64_t>(data.size());
    const int shards = shard_count(n, workers);
    std::vector<AlignedMoments> parts(shards);
    for (auto& m : parts) {
        m.v = v;
        m.nslots2 = nslots2;
        m.nslots3 = nslots3;
        m.root2.assign(v, 0);
        m.root3.assign(v, 0);
    }

    parallel_shards(n, workers, [&](int s, int64_t b, int64_t e) {
        AlignedMoments& m = parts[s];
        std::vector<int32_t> sa, sb, sc;
        for (int64_t i = b; i < e; ++i) {
            const DetectorChart c = chart_of(i);
            if (c.v != v || c.L != L || c.level != level)
                throw std::invalid_argument("estimate_aligned: chart shape mismatch");
            const int32_t root = data[static_cast<size_t>(i)].label;
            if (root < 0 || root >= v)
                throw std::invalid_argument("estimate_aligned: root label out of range");
            if (c.d == d2) {
                ++m.sent2;
                ++m.root2[root];
                for (int j = 0; j < nslots2; ++j) {
                    const int64_t p = static_cast<int64_t>(j) * 2 * span2;
                    collect_bits(c.cell(p, span2), c.words, sa);
                    if (sa.empty()) continue;
                    collect_bits(c.cell(p + span2, span2), c.words, sb);
                    for (int32_t a : sa)
                        for (int32_t bsym : sb) {
                            auto& row = aligned_row(m.pair_counts, static_cast<int64_t>(a) * v + bsym,
                                                    static_cast<size_t>(nslots2) * v);
                            row[static_cast<size_t>(j) * v + root] += 1;
                        }
                }
            } else if (c.d == d3) {
                ++m.sent3;
                ++m.root3[root];
                for (int j = 0; j < nslots3; ++j) {
                    const int64_t p = static_cast<int64_t>(j) * 3 * span3;
                    collect_bits(c.cell(p, span3), c.words, sa);
                    if (sa.empty()) continue;
                    collect_bits(c.cell(p + span3, span3), c.words, sb);
                    if (sb.empty()) continue;
                    collect_bits(c.cell(p + 2 * span3, span3), c.words, sc);
                    for (int32_t a : sa)
                        for (int32_t bsym : sb) {
                            const int64_t ab = (static_cast<int64_t>(a) * v + bsym) * v;
                            for (int32_t csym : sc) {
                                auto& row = aligned_row(m.triple_counts, ab + csym,
                                                        static_cast<size_t>(nslots3) * v);
                                row[static_cast<size_t>(j) * v + root] += 1;
                            }
                        }
                }
            }
        }
    });

    AlignedMoments total = std::move(parts[0]);
    for (int s = 1; s < shards; ++s) total.merge(parts[s]);
    return total;
}

AlignedMoments estimate_aligned(const Dataset& data, const std::vector<DetectorChart>& charts,
                                int workers) {
    if (charts.size() != data.size())
        throw std::invalid_argument("estimate_aligned: charts/dataset size mismatch");
    if (data.empty()) throw std::invalid_argument("estimate_aligned: empty dataset");
    const int v = charts[0].v, L = charts[0].L, level = charts[0].level;
    return estimate_aligned(
        data, v, L, level, [&](int64_t i) { return charts[static_cast<size_t>(i)]; }, workers);
}

}  // namespace vtrhm
