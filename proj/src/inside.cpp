#include "vtrhm/inside.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "vtrhm/numeric.hpp"
#include "vtrhm/parallel.hpp"

namespace vtrhm {

namespace {

int64_t ipow(int64_t b, int e) {
    int64_t r = 1;
    for (int k = 0; k < e; ++k) r *= b;
    return r;
}

void validate_sentence(const std::vector<int32_t>& tokens, int v, int L) {
    const int64_t d = static_cast<int64_t>(tokens.size());
    if (d < ipow(2, L) || d > ipow(3, L))
        throw std::invalid_argument("parse: sentence length outside [2^L, 3^L]");
    for (int32_t t : tokens)
        if (t < 0 || t >= v) throw std::invalid_argument("parse: token out of range");
}

// In-place streaming log-sum-exp over parallel (max, mantissa) arrays.
inline void lse_slot(double* mx, double* mant, size_t t, double x) {
    if (x <= mx[t]) {
        mant[t] += std::exp(x - mx[t]);
    } else {
        mant[t] = (mx[t] == kNegInf) ? 1.0 : mant[t] * std::exp(mx[t] - x) + 1.0;
        mx[t] = x;
    }
}

}  // namespace

ParserContext make_parser_context(const Grammar& g) {
    ParserContext ctx;
    ctx.v = g.v();
    ctx.L = g.L();
    ctx.splits = shared_split_tables(ctx.L);
    ctx.levels.reserve(g.levels.size());
    for (const auto& lev : g.levels)
        ctx.levels.push_back(make_level_index(lev, ctx.v, g.params.p2, g.params.p3));
    return ctx;
}

InsideChart inside(const ParserContext& ctx, const std::vector<int32_t>& tokens, SpaceMode mode,
                   int workers) {
    const int v = ctx.v;
    const int L = ctx.L;
    validate_sentence(tokens, v, L);
    const int64_t d = static_cast<int64_t>(tokens.size());
    const bool log_space =
        mode == SpaceMode::logspace || (mode == SpaceMode::automatic && L >= kLogSpaceDepth);
    InsideChart chart = make_inside_chart(v, L, d, log_space);
    for (int64_t i = 0; i < d; ++i) chart.cell(L, i, 1)[tokens[i]] = log_space ? 0.0 : 1.0;

    const int nw = resolve_workers(workers);
    const SplitTables& st = *ctx.splits;
    const size_t vv = static_cast<size_t>(v) * v;

    for (int l = L - 1; l >= 0; --l) {
        const int lt = L - l;  // reversed level of the parents being built
        const LevelIndex& idx = ctx.levels[l];
        const int64_t c_lo = ipow(2, lt - 1);
        const int64_t c_hi = ipow(3, lt - 1);
        const int64_t p_lo = 2 * c_lo;
        const int64_t p_hi = 3 * c_hi;

        // Parallel over start positions; every (i, lam) cell is owned by one
        // worker and accumulated in a fixed order, so fills are reproducible.
        parallel_for(d, nw, [&](int64_t ii) {
            const int64_t i = ii;
            const int64_t rem = d - i;
            if (rem < p_lo) return;
            const int64_t m_lo = 2 * c_lo;  // combined span of the first two children
            const int64_t m_hi = std::min(2 * c_hi, rem);
            const size_t nm = static_cast<size_t>(m_hi - m_lo + 1);

            // Pair tables T[m](a,b) = sum over splits q of
            // M(i, q, a) * M(i+q, m-q, b); they serve the binary rules at
            // m = lam and the first two children of every ternary rule.
            std::vector<double> T(nm * vv, log_space ? kNegInf : 0.0);
            if (!log_space) {
                for (int64_t m = m_lo; m <= m_hi; ++m) {
                    double* Tm = T.data() + (m - m_lo) * vv;
                    for (int32_t q : st.binary_splits(lt, m)) {
                        const double* A = chart.cell(l + 1, i, q);
                        const double* B = chart.cell(l + 1, i + q, m - q);
                        for (int a = 0; a < v; ++a) {
                            const double va = A[a];
                            if (va == 0.0) continue;
                            double* row = Tm + static_cast<size_t>(a) * v;
                            for (int b = 0; b < v; ++b) row[b] += va * B[b];
                        }
                    }
                }
            } else {
                std::vector<double> mx(vv), mant(vv);
                for (int64_t m = m_lo; m <= m_hi; ++m) {
                    std::fill(mx.begin(), mx.end(), kNegInf);
                    std::fill(mant.begin(), mant.end(), 0.0);
                    for (int32_t q : st.binary_splits(lt, m)) {
                        const double* A = chart.cell(l + 1, i, q);
                        const double* B = chart.cell(l + 1, i + q, m - q);
                        for (int a = 0; a < v; ++a) {
                            const double la = A[a];
                            if (la == kNegInf) continue;
                            for (int b = 0; b < v; ++b)
                                if (B[b] != kNegInf)
                                    lse_slot(mx.data(), mant.data(),
                                             static_cast<size_t>(a) * v + b, la + B[b]);
                        }
                    }
                    double* Tm = T.data() + (m - m_lo) * vv;
                    for (size_t t = 0; t < vv; ++t)
                        Tm[t] = mant[t] > 0.0 ? mx[t] + std::log(mant[t]) : kNegInf;
                }
            }

            std::vector<double> zmx, zmant;
            const int64_t lam_hi = std::min(p_hi, rem);
            for (int64_t lam = p_lo; lam <= lam_hi; ++lam) {
                double* cell = chart.cell(l, i, lam);
                const int64_t mm_lo = std::max(m_lo, lam - c_hi);
                const int64_t mm_hi = std::min(m_hi, lam - c_lo);
                if (!log_space) {
                    if (lam <= m_hi) {
                        const double* Tm = T.data() + (lam - m_lo) * vv;
                        for (const auto& r : idx.binary)
                            cell[r[0]] += idx.pb * Tm[static_cast<size_t>(r[1]) * v + r[2]];
                    }
                    for (int64_t m = mm_lo; m <= mm_hi; ++m) {
                        const double* Tm = T.data() + (m - m_lo) * vv;
                        const double* C = chart.cell(l + 1, i + m, lam - m);
                        for (int c = 0; c < v; ++c) {
                            const double y = C[c];
                            if (y == 0.0) continue;
                            const double w = idx.pt * y;
                            for (const auto& r : idx.ter_by_third[c])
                                cell[r[0]] += w * Tm[static_cast<size_t>(r[1]) * v + r[2]];
                        }
                    }
                } else {
                    zmx.assign(v, kNegInf);
                    zmant.assign(v, 0.0);
                    if (lam <= m_hi) {
                        const double* Tm = T.data() + (lam - m_lo) * vv;
                        for (const auto& r : idx.binary) {
                            const double t = Tm[static_cast<size_t>(r[1]) * v + r[2]];
                            if (t != kNegInf)
                                lse_slot(zmx.data(), zmant.data(), r[0], idx.log_pb + t);
                        }
                    }
                    for (int64_t m = mm_lo; m <= mm_hi; ++m) {
                        const double* Tm = T.data() + (m - m_lo) * vv;
                        const double* C = chart.cell(l + 1, i + m, lam - m);
                        for (int c = 0; c < v; ++c) {
                            const double y = C[c];
                            if (y == kNegInf) continue;
                            const double base = idx.log_pt + y;
                            for (const auto& r : idx.ter_by_third[c]) {
                                const double t = Tm[static_cast<size_t>(r[1]) * v + r[2]];
                                if (t != kNegInf)
                                    lse_slot(zmx.data(), zmant.data(), r[0], base + t);
                            }
                        }
                    }
                    for (int z = 0; z < v; ++z)
                        cell[z] = zmant[z] > 0.0 ? zmx[z] + std::log(zmant[z]) : kNegInf;
                }
            }
        });
    }
    return chart;
}

InsideChart inside(const Grammar& g, const std::vector<int32_t>& tokens, SpaceMode mode,
                   int workers) {
    return inside(make_parser_context(g), tokens, mode, workers);
}

BooleanChart cyk(const ParserContext& ctx, const std::vector<int32_t>& tokens, int workers) {
    const int v = ctx.v;
    const int L = ctx.L;
    validate_sentence(tokens, v, L);
    const int64_t d = static_cast<int64_t>(tokens.size());
    BooleanChart chart = make_boolean_chart(v, L, d);
    for (int64_t i = 0; i < d; ++i) chart.set(L, i, 1, tokens[i]);

    const int nw = resolve_workers(workers);
    const SplitTables& st = *ctx.splits;
    const int words = chart.words;

    for (int l = L - 1; l >= 0; --l) {
        const int lt = L - l;
        const LevelIndex& idx = ctx.levels[l];
        const int64_t p_lo = ipow(2, lt);
        const int64_t p_hi = ipow(3, lt);

        parallel_for(d, nw, [&](int64_t ii) {
            const int64_t i = ii;
            const int64_t rem = d - i;
            if (rem < p_lo) return;
            const int64_t lam_hi = std::min(p_hi, rem);
            for (int64_t lam = p_lo; lam <= lam_hi; ++lam) {
                uint64_t* cell = chart.cell(l, i, lam);
                auto has = [](const uint64_t* c, int32_t s) {
                    return (c[s >> 6] >> (s & 63)) & 1u;
                };
                for (int32_t q : st.binary_splits(lt, lam)) {
                    const uint64_t* A = chart.cell(l + 1, i, q);
                    const uint64_t* B = chart.cell(l + 1, i + q, lam - q);
                    for (int w = 0; w < words; ++w) {
                        uint64_t bits = A[w];
                        while (bits) {
                            const int a = w * 64 + std::countr_zero(bits);
                            bits &= bits - 1;
                            for (const auto& r : idx.bin_by_first[a])
                                if (has(B, r[0])) cell[r[1] >> 6] |= uint64_t(1) << (r[1] & 63);
                        }
                    }
                }
                for (const auto& qr : st.ternary_splits(lt, lam)) {
                    const int64_t q = qr.first;
                    const int64_t r2 = qr.second;
                    const uint64_t* A = chart.cell(l + 1, i, q);
                    const uint64_t* B = chart.cell(l + 1, i + q, r2);
                    const uint64_t* C = chart.cell(l + 1, i + q + r2, lam - q - r2);
                    for (int w = 0; w < words; ++w) {
                        uint64_t bits = A[w];
                        while (bits) {
                            const int a = w * 64 + std::countr_zero(bits);
                            bits &= bits - 1;
                            for (const auto& r : idx.ter_by_first[a])
                                if (has(B, r[0]) && has(C, r[1]))
                                    cell[r[2] >> 6] |= uint64_t(1) << (r[2] & 63);
                        }
                    }
                }
            }
        });
    }
    return chart;
}

BooleanChart cyk(const Grammar& g, const std::vector<int32_t>& tokens, int workers) {
    return cyk(make_parser_context(g), tokens, workers);
}

double ClassPosterior::entropy() const {
    KahanSum h;
    for (double p : probs)
        if (p > 0.0) h.add(-p * std::log(p));
    return h.value();
}

std::optional<ClassPosterior> class_posterior(const InsideChart& chart) {
    const std::vector<double> r = chart.root_values();
    ClassPosterior out;
    out.probs.assign(chart.v, 0.0);
    const double log_v = std::log(static_cast<double>(chart.v));
    if (!chart.log_space) {
        KahanSum s;
        for (double x : r) s.add(x);
        const double total = s.value();
        if (total <= 0.0) return std::nullopt;
        for (int z = 0; z < chart.v; ++z) out.probs[z] = r[z] / total;
        out.log_likelihood = std::log(total) - log_v;
        out.sentence_likelihood = total / chart.v;
    } else {
        LogSumExp lse;
        for (double x : r) lse.add(x);
        const double log_total = lse.value();
        if (log_total == kNegInf) return std::nullopt;
        for (int z = 0; z < chart.v; ++z)
            out.probs[z] = r[z] == kNegInf ? 0.0 : std::exp(r[z] - log_total);
        out.log_likelihood = log_total - log_v;
        out.sentence_likelihood = std::exp(out.log_likelihood);
    }
    return out;
}

std::vector<EntropySweepPoint> expected_class_entropy(int v, int L,
                                                      const std::vector<double>& f_grid,
                                                      int n_grammars, int n_sentences,
                                                      uint64_t seed, int workers) {
    if (n_grammars < 1 || n_sentences < 1)
        throw std::invalid_argument("expected_class_entropy: n_grammars, n_sentences >= 1");
    if (v < 2) throw std::invalid_argument("expected_class_entropy: v >= 2");
    const int nw = resolve_workers(workers);
    const double log_v = std::log(static_cast<double>(v));
    std::vector<EntropySweepPoint> out;
    out.reserve(f_grid.size());
    Rng master(seed);
    for (size_t gi = 0; gi < f_grid.size(); ++gi) {
        const double f = f_grid[gi];
        Rng point = master.fork(gi);
        // entropies gathered per grammar, merged in grammar order
        std::vector<std::vector<double>> per_grammar(n_grammars);
        parallel_for(n_grammars, nw, [&](int64_t j) {
            Rng gfork = point.fork(j);
            const GrammarParams params = params_from_f(v, L, f, gfork.fork(kStreamRules).key());
            const Grammar g = generate_grammar(params);
            const ParserContext ctx = make_parser_context(g);
            Rng sent = gfork.fork(kStreamData);
            std::vector<double>& hs = per_grammar[j];
            hs.reserve(n_sentences);
            for (int s = 0; s < n_sentences; ++s) {
                Rng one = sent.fork(s);
                const Derivation der = sample_derivation(g, one);
                const InsideChart chart = inside(ctx, der.tokens(), SpaceMode::automatic, 1);
                const auto post = class_posterior(chart);
                hs.push_back(post ? post->entropy() / log_v : 0.0);
            }
        });
        KahanSum sum, sumsq;
        int64_t n = 0;
        for (const auto& hs : per_grammar)
            for (double h : hs) {
                sum.add(h);
                sumsq.add(h * h);
                ++n;
            }
        EntropySweepPoint pt;
        pt.f = f;
        const GrammarParams params = params_from_f(v, L, f, 0);
        pt.m2 = params.m2;
        pt.m3 = params.m3;
        pt.samples = n;
        pt.mean_normalized_entropy = sum.value() / static_cast<double>(n);
        const double var =
            std::max(0.0, sumsq.value() / n - pt.mean_normalized_entropy * pt.mean_normalized_entropy);
        pt.std_error = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
        out.push_back(pt);
    }
    return out;
}

}  // namespace vtrhm
