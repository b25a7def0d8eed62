#include "vtrhm/grammar.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "vtrhm/parallel.hpp"

namespace vtrhm {

std::vector<uint64_t> sample_without_replacement(uint64_t n, uint64_t k, Rng& rng) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
    std::unordered_map<uint64_t, uint64_t> moved;  // slot -> value living there
    moved.reserve(2 * k);
    std::vector<uint64_t> out;
    out.reserve(k);
    for (uint64_t i = 0; i < k; ++i) {
        const uint64_t j = i + rng.next_below(n - i);
        auto ji = moved.find(j);
        const uint64_t vj = (ji == moved.end()) ? j : ji->second;
        auto ii = moved.find(i);
        const uint64_t vi = (ii == moved.end()) ? i : ii->second;
        moved[j] = vi;
        out.push_back(vj);
    }
    return out;
}

GrammarParams params_from_f(int v, int L, double f, uint64_t seed, double p2) {
    GrammarParams p;
    p.v = v;
    p.L = L;
    p.m2 = std::max(1, static_cast<int>(std::lround(f * v)));
    p.m3 = std::max(1, static_cast<int>(std::lround(f * static_cast<double>(v) * v)));
    p.p2 = p2;
    p.p3 = 1.0 - p2;
    p.seed = seed;
    return p;
}

static void validate(const GrammarParams& p) {
    if (p.v < 1) throw std::invalid_argument("grammar: v must be >= 1");
    if (p.L < 1) throw std::invalid_argument("grammar: L must be >= 1");
    if (p.m2 < 1 || p.m3 < 1) throw std::invalid_argument("grammar: m2, m3 must be >= 1");
    if (p.m2 > p.v)
        throw std::invalid_argument("grammar: m2 > v leaves too few distinct pairs per parent");
    if (static_cast<int64_t>(p.m3) > static_cast<int64_t>(p.v) * p.v)
        throw std::invalid_argument("grammar: m3 > v^2 leaves too few distinct triples per parent");
    if (p.p2 < 0.0 || p.p2 > 1.0 || std::abs(p.p2 + p.p3 - 1.0) > 1e-12)
        throw std::invalid_argument("grammar: need p2 in [0,1] and p2 + p3 = 1");
}

Grammar generate_grammar(const GrammarParams& params) {
    validate(params);
    Grammar g;
    g.params = params;
    g.levels.resize(params.L);
    const uint64_t v = params.v;
    Rng rules_stream = Rng(params.seed).fork(kStreamRules);
    for (int l = 0; l < params.L; ++l) {
        RuleLevel& lev = g.levels[l];
        lev.m2 = params.m2;
        lev.m3 = params.m3;
        Rng bin = rules_stream.fork(2 * l + 0);
        Rng ter = rules_stream.fork(2 * l + 1);
        const auto pair_ids = sample_without_replacement(v * v, v * params.m2, bin);
        const auto triple_ids = sample_without_replacement(v * v * v, v * params.m3, ter);
        lev.binary.reserve(pair_ids.size());
        for (uint64_t id : pair_ids)
            lev.binary.push_back({static_cast<int32_t>(id / v), static_cast<int32_t>(id % v)});
        lev.ternary.reserve(triple_ids.size());
        for (uint64_t id : triple_ids)
            lev.ternary.push_back({static_cast<int32_t>(id / (v * v)),
                                   static_cast<int32_t>((id / v) % v),
                                   static_cast<int32_t>(id % v)});
    }
    return g;
}

Derivation sample_derivation(const Grammar& g, Rng& rng) {
    const auto& p = g.params;
    Derivation d;
    d.root = static_cast<int32_t>(rng.next_below(p.v));
    d.symbols.resize(p.L + 1);
    d.arities.resize(p.L);
    d.symbols[0] = {d.root};
    for (int l = 0; l < p.L; ++l) {
        const RuleLevel& lev = g.levels[l];
        const auto& cur = d.symbols[l];
        auto& next = d.symbols[l + 1];
        auto& ar = d.arities[l];
        ar.reserve(cur.size());
        next.reserve(cur.size() * 3);
        for (int32_t z : cur) {
            if (rng.next_bernoulli(p.p2)) {
                const auto& rhs = lev.binary[z * p.m2 + rng.next_below(p.m2)];
                ar.push_back(2);
                next.push_back(rhs[0]);
                next.push_back(rhs[1]);
            } else {
                const auto& rhs = lev.ternary[z * p.m3 + rng.next_below(p.m3)];
                ar.push_back(3);
                next.push_back(rhs[0]);
                next.push_back(rhs[1]);
                next.push_back(rhs[2]);
            }
        }
    }
    return d;
}

Dataset make_dataset(const Grammar& g, int64_t P, uint64_t seed, int workers) {
    if (P <= 0) throw std::invalid_argument("make_dataset: P must be positive");
    Dataset data(P);
    Rng base = Rng(seed).fork(kStreamData);
    parallel_for(P, workers, [&](int64_t i) {
        Rng rng = base.fork(static_cast<uint64_t>(i));
        Derivation d = sample_derivation(g, rng);
        data[i].label = d.root;
        data[i].tokens = std::move(d.symbols.back());
    });
    return data;
}

}  // namespace vtrhm
