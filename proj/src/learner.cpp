#include "vtrhm/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>

#include "json.hpp"
#include "vtrhm/io.hpp"
#include "vtrhm/parallel.hpp"
#include "vtrhm/split_tables.hpp"

namespace vtrhm {
namespace {

int64_t ipow(int64_t b, int e) {
    int64_t r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

// Bottom-up chart for one sentence: token detectors pushed through the first
// `steps` learned heights.
DetectorChart encode_to(const LearnedGrammar& lg, const std::vector<int32_t>& tokens, int steps) {
    DetectorChart c = token_detectors(tokens, lg.v, lg.L);
    for (int s = 0; s < steps; ++s) c = apply_detector_step(lg.by_height[s], c);
    return c;
}

}  // namespace

DetectorChart apply_detector_step(const LearnedLevel& rules, const DetectorChart& chart) {
    if (chart.level < 1) throw std::invalid_argument("apply_detector_step: already at the root level");
    DetectorChart out;
    out.v = chart.v;
    out.L = chart.L;
    out.level = chart.level - 1;
    out.d = chart.d;
    const int lt = chart.L - out.level;  // reversed level of the parents
    out.span_min = ipow(2, lt);
    out.width = ipow(3, lt) - out.span_min + 1;
    out.words = chart.words;
    out.bits.assign(static_cast<size_t>(out.d) * out.width * out.words, 0);

    const auto st = shared_split_tables(chart.L);
    const int64_t hi = out.span_min + out.width - 1;
    for (int64_t i = 0; i < out.d; ++i) {
        for (int64_t lam = out.span_min; lam <= std::min(hi, out.d - i); ++lam) {
            uint64_t* cell = out.cell(i, lam);
            for (int32_t q : st->binary_splits(lt, lam))
                for (const auto& r : rules.binary)
                    if (chart.get(i, q, r[1]) && chart.get(i + q, lam - q, r[2]))
                        cell[r[0] >> 6] |= uint64_t(1) << (r[0] & 63);
            for (const auto& [q, s] : st->ternary_splits(lt, lam))
                for (const auto& r : rules.ternary)
                    if (chart.get(i, q, r[1]) && chart.get(i + q, s, r[2]) &&
                        chart.get(i + q + s, lam - q - s, r[3]))
                        cell[r[0] >> 6] |= uint64_t(1) << (r[0] & 63);
        }
    }
    return out;
}

DetectorChart apply_detectors(const LearnedGrammar& lg, const std::vector<int32_t>& tokens,
                              int level) {
    if (level < 0 || level > lg.L) throw std::invalid_argument("apply_detectors: level out of range");
    const int steps = lg.L - level;
    if (static_cast<int>(lg.by_height.size()) < steps)
        throw std::invalid_argument("apply_detectors: rules for the requested level not learned");
    return encode_to(lg, tokens, steps);
}

namespace {

// ---------------------------------------------------------------------------
// Stratified inference: rule support and covariance slices are read from the
// two deterministic-topology strata (sentence lengths 2^L and 3^L), where the
// aligned windows are guaranteed true siblings and the per-(slot, root)
// covariance directions of same-parent tuples coincide.
// ---------------------------------------------------------------------------

// One stratum's aligned slices grouped into exactly v classes.
struct StratumClasses {
    std::string failure;                        // empty on success
    std::vector<int64_t> keys;                  // retained tuple keys, ascending
    std::vector<int32_t> cls;                   // parallel to keys
    std::vector<std::vector<int64_t>> members;  // class id -> keys
};

StratumClasses cluster_stratum(const AlignedMoments& am, int arity, int v,
                               const ClusterOptions& copt, bool count_discard) {
    StratumClasses out;
    const char* what = arity == 2 ? "pair" : "triple";
    std::vector<int64_t> keys = arity == 2 ? am.observed_pairs() : am.observed_triples();
    const int64_t N = arity == 2 ? am.sent2 : am.sent3;
    if (N == 0) {
        out.failure = std::string("the all-") + (arity == 2 ? "binary" : "ternary") +
                      " length stratum is empty";
        return out;
    }
    if (keys.empty()) {
        out.failure = std::string("no aligned ") + what + " observations";
        return out;
    }

    if (count_discard && keys.size() > 1) {
        // Above depth 2 the aligned windows can pick up coincidental detector
        // fires; drop the low-count group only when it sits a decade below
        // the high one.
        std::vector<double> lc;
        lc.reserve(keys.size());
        for (int64_t k : keys)
            lc.push_back(std::log10(static_cast<double>(
                arity == 2 ? am.pair_total(k) : am.triple_total(k))));
        const double thr = otsu_threshold(lc);
        double lo = 0, hi = 0;
        int nlo = 0, nhi = 0;
        for (double x : lc) {
            if (x < thr) {
                lo += x;
                ++nlo;
            } else {
                hi += x;
                ++nhi;
            }
        }
        if (nlo > 0 && nhi > 0 && hi / nhi - lo / nlo >= 1.0) {
            std::vector<int64_t> kept;
            for (size_t i = 0; i < keys.size(); ++i)
                if (lc[i] >= thr) kept.push_back(keys[i]);
            keys = std::move(kept);
        }
    }
    if (static_cast<int>(keys.size()) < v) {
        out.failure = "only " + std::to_string(keys.size()) + " aligned " + what + "s for " +
                      std::to_string(v) +
                      " classes (some parent symbol is unreachable in this stratum)";
        return out;
    }

    std::vector<std::vector<double>> units;
    units.reserve(keys.size());
    for (int64_t k : keys) {
        auto s = arity == 2 ? am.pair_slice(k) : am.triple_slice(k);
        double nn = 0;
        for (double x : s) nn += x * x;
        nn = std::sqrt(nn);
        if (nn <= 0) {
            out.failure = std::string("a ") + what + " slice has zero norm";
            return out;
        }
        for (double& x : s) x /= nn;
        units.push_back(std::move(s));
    }
    LinkageResult lr = average_linkage(units, v, copt.tau);
    if (!lr.success) {
        out.failure = std::string(what) + " classes: " + lr.failure;
        return out;
    }
    out.keys = std::move(keys);
    out.cls = std::move(lr.labels);
    out.members.assign(v, {});
    for (size_t i = 0; i < out.keys.size(); ++i)
        out.members[static_cast<size_t>(out.cls[i])].push_back(out.keys[i]);
    return out;
}

// Root-level rules straight from the aligned root slots, keyed by the training
// label. Below depth 3 these observations are exact; above, a relative-count
// filter drops coincidental tuples sitting far below a label's typical count.
struct TopRules {
    std::string failure;
    std::vector<std::vector<int64_t>> bin;  // per label: pair keys
    std::vector<std::vector<int64_t>> ter;  // per label: triple keys
};

TopRules collect_top_rules(const AlignedMoments& amPairs, const AlignedMoments& amTriples, int v,
                           int L) {
    TopRules out;
    out.bin.assign(v, {});
    out.ter.assign(v, {});
    std::vector<std::vector<int64_t>> cbin(v), cter(v);
    for (int64_t key : amPairs.observed_pairs()) {
        const auto& row = amPairs.pair_counts.at(key);
        for (int a = 0; a < v; ++a)
            if (row[a] > 0) {
                out.bin[a].push_back(key);
                cbin[a].push_back(row[a]);
            }
    }
    for (int64_t key : amTriples.observed_triples()) {
        const auto& row = amTriples.triple_counts.at(key);
        for (int a = 0; a < v; ++a)
            if (row[a] > 0) {
                out.ter[a].push_back(key);
                cter[a].push_back(row[a]);
            }
    }
    if (L > 2) {
        auto filter = [](std::vector<int64_t>& keys, const std::vector<int64_t>& counts) {
            int64_t mx = 0;
            for (int64_t c : counts) mx = std::max(mx, c);
            std::vector<int64_t> kept;
            for (size_t i = 0; i < keys.size(); ++i)
                if (counts[i] * 10 >= mx) kept.push_back(keys[i]);
            keys = std::move(kept);
        };
        for (int a = 0; a < v; ++a) {
            filter(out.bin[a], cbin[a]);
            filter(out.ter[a], cter[a]);
        }
    }
    for (int a = 0; a < v; ++a) {
        if (out.bin[a].empty()) {
            out.failure = "class " + std::to_string(a) + " has no binary root rule in the stratum";
            return out;
        }
        if (out.ter[a].empty()) {
            out.failure = "class " + std::to_string(a) + " has no ternary root rule in the stratum";
            return out;
        }
    }
    return out;
}

// Correspondence between ternary and binary classes of the same height from
// the forced-layout length-5 sentences (depth 2 only: a length-5 sentence must
// have a binary root whose children expand once as a pair and once as a
// triple). With sound rule tables a resolved layout can only pair a ternary
// class with the root-rule partner of the binary class beside it, so votes are
// never wrong, only missing.
std::string align_by_votes(const Dataset& data, int v,
                           const std::unordered_map<int64_t, int32_t>& pair_parent,
                           const std::unordered_map<int64_t, int32_t>& triple_parent,
                           const std::vector<std::vector<int64_t>>& top_bin, int workers,
                           std::vector<int32_t>& sigma) {
    std::vector<std::vector<int32_t>> by_left(static_cast<size_t>(v) * v),
        by_right(static_cast<size_t>(v) * v);
    for (int a = 0; a < v; ++a)
        for (int64_t key : top_bin[a]) {
            const auto x = static_cast<int32_t>(key / v), y = static_cast<int32_t>(key % v);
            by_left[static_cast<size_t>(a) * v + x].push_back(y);
            by_right[static_cast<size_t>(a) * v + y].push_back(x);
        }

    const int64_t n = static_cast<int64_t>(data.size());
    const int shards = shard_count(n, workers);
    std::vector<std::vector<int64_t>> votes(shards,
                                            std::vector<int64_t>(static_cast<size_t>(v) * v, 0));
    parallel_shards(n, workers, [&](int s, int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) {
            const auto& sent = data[static_cast<size_t>(i)];
            if (sent.tokens.size() != 5) continue;
            const auto& t = sent.tokens;
            const auto pl = pair_parent.find(static_cast<int64_t>(t[0]) * v + t[1]);
            const auto pr = pair_parent.find(static_cast<int64_t>(t[3]) * v + t[4]);
            const auto ql =
                triple_parent.find((static_cast<int64_t>(t[0]) * v + t[1]) * v + t[2]);
            const auto qr =
                triple_parent.find((static_cast<int64_t>(t[2]) * v + t[3]) * v + t[4]);
            const bool res_pt = pl != pair_parent.end() && qr != triple_parent.end();
            const bool res_tp = ql != triple_parent.end() && pr != pair_parent.end();
            if (res_pt == res_tp) continue;  // unresolved or ambiguous layout
            if (res_pt) {
                const auto& partners = by_left[static_cast<size_t>(sent.label) * v + pl->second];
                if (partners.size() == 1)
                    votes[s][static_cast<size_t>(qr->second) * v + partners[0]] += 1;
            } else {
                const auto& partners = by_right[static_cast<size_t>(sent.label) * v + pr->second];
                if (partners.size() == 1)
                    votes[s][static_cast<size_t>(ql->second) * v + partners[0]] += 1;
            }
        }
    });
    for (int s = 1; s < shards; ++s)
        for (size_t k = 0; k < votes[0].size(); ++k) votes[0][k] += votes[s][k];

    sigma.assign(v, -1);
    std::vector<int> hits(v, 0);
    for (int tc = 0; tc < v; ++tc) {
        int64_t best = 0, runner = 0;
        int arg = -1;
        for (int c = 0; c < v; ++c) {
            const int64_t x = votes[0][static_cast<size_t>(tc) * v + c];
            if (x > best) {
                runner = best;
                best = x;
                arg = c;
            } else {
                runner = std::max(runner, x);
            }
        }
        if (best == 0)
            return "ternary class " + std::to_string(tc) +
                   " has no resolvable length-5 evidence for its binary counterpart";
        if (best <= 2 * runner)
            return "ternary class " + std::to_string(tc) +
                   " has conflicting length-5 evidence (" + std::to_string(best) + " vs " +
                   std::to_string(runner) + " votes)";
        sigma[tc] = arg;
        ++hits[arg];
    }
    for (int c = 0; c < v; ++c)
        if (hits[c] != 1)
            return "arity-class correspondence is not one-to-one at binary class " +
                   std::to_string(c);
    return {};
}

// Fires of each probe class per training label, over every sentence. The
// centered rate rows give each class's root-frequency fluctuation; the
// binary-side and ternary-side classes of one symbol share that fluctuation,
// which aligns the two clusterings at heights with no forced-layout lengths.
std::vector<std::vector<double>> occupancy_rows(const Dataset& data, int v, int L,
                                                const LearnedLevel& probe,
                                                const std::function<DetectorChart(int64_t)>& chart_of,
                                                int workers) {
    const int64_t n = static_cast<int64_t>(data.size());
    const int shards = shard_count(n, workers);
    std::vector<std::vector<int64_t>> cnt(shards, std::vector<int64_t>(static_cast<size_t>(v) * v, 0));
    std::vector<std::vector<int64_t>> nlab(shards, std::vector<int64_t>(v, 0));
    parallel_shards(n, workers, [&](int s, int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) {
            const auto& sent = data[static_cast<size_t>(i)];
            const DetectorChart up = apply_detector_step(probe, chart_of(i));
            ++nlab[s][sent.label];
            for (int64_t pos = 0; pos < up.d; ++pos)
                for (int64_t lam = up.span_min;
                     lam < up.span_min + up.width && pos + lam <= up.d; ++lam) {
                    const uint64_t* cell = up.cell(pos, lam);
                    for (int w = 0; w < up.words; ++w) {
                        uint64_t bits = cell[w];
                        while (bits) {
                            const int z = (w << 6) + std::countr_zero(bits);
                            bits &= bits - 1;
                            cnt[s][static_cast<size_t>(z) * v + sent.label] += 1;
                        }
                    }
                }
        }
    });
    for (int s = 1; s < shards; ++s) {
        for (size_t k = 0; k < cnt[0].size(); ++k) cnt[0][k] += cnt[s][k];
        for (int a = 0; a < v; ++a) nlab[0][a] += nlab[s][a];
    }
    std::vector<std::vector<double>> rows(v, std::vector<double>(v, 0.0));
    for (int z = 0; z < v; ++z) {
        double mean = 0;
        int present = 0;
        for (int a = 0; a < v; ++a) {
            if (nlab[0][a] > 0) {
                rows[z][a] = static_cast<double>(cnt[0][static_cast<size_t>(z) * v + a]) / nlab[0][a];
                ++present;
            }
            mean += rows[z][a];
        }
        if (present > 0) mean /= present;
        for (int a = 0; a < v; ++a) rows[z][a] -= mean;
    }
    return rows;
}

std::string align_by_occupancy(const std::vector<std::vector<double>>& bin_rows,
                               const std::vector<std::vector<double>>& ter_rows, int v,
                               double align_min, std::vector<int32_t>& sigma) {
    auto unit = [](std::vector<double> x) {
        double nn = 0;
        for (double t : x) nn += t * t;
        nn = std::sqrt(nn);
        if (nn > 0)
            for (double& t : x) t /= nn;
        return x;
    };
    std::vector<std::vector<double>> bu(v), tu(v);
    for (int z = 0; z < v; ++z) {
        bu[z] = unit(bin_rows[z]);
        tu[z] = unit(ter_rows[z]);
    }
    sigma.assign(v, -1);
    std::vector<bool> used_t(v, false), used_b(v, false);
    double worst = 1.0;
    for (int step = 0; step < v; ++step) {
        double best = -std::numeric_limits<double>::infinity();
        int bt = -1, bb = -1;
        for (int t = 0; t < v; ++t) {
            if (used_t[t]) continue;
            for (int b = 0; b < v; ++b) {
                if (used_b[b]) continue;
                double s = 0;
                for (int a = 0; a < v; ++a) s += tu[t][a] * bu[b][a];
                if (s > best) {
                    best = s;
                    bt = t;
                    bb = b;
                }
            }
        }
        sigma[bt] = bb;
        used_t[bt] = true;
        used_b[bb] = true;
        worst = std::min(worst, best);
    }
    if (worst < align_min)
        return "arity-class root-frequency matching too weak (min cosine " +
               std::to_string(worst) + ")";
    return {};
}

// All ways to cut a sentence of depth-2 length d into the root's 2 or 3 child
// spans of width 2 or 3 (d ranges over 4..9).
std::vector<std::vector<int>> compositions_for(int d) {
    std::vector<std::vector<int>> out;
    for (int parts : {2, 3})
        for (int mask = 0; mask < (1 << parts); ++mask) {
            std::vector<int> comp(parts);
            int sum = 0;
            for (int i = 0; i < parts; ++i) {
                comp[i] = (mask >> i) & 1 ? 3 : 2;
                sum += comp[i];
            }
            if (sum == d) out.push_back(std::move(comp));
        }
    return out;
}

// The sentence's segmentation into child spans, if exactly one composition is
// consistent with the known tables: every width-2 span must be a known pair
// and, when `triples` is given, every width-3 span a known triple. The true
// segmentation always passes once the tables are complete, so a unique
// survivor is the true one; ambiguous sentences are skipped.
bool resolve_unique(const std::vector<int32_t>& t, int v,
                    const std::unordered_map<int64_t, int32_t>& pairs,
                    const std::unordered_map<int64_t, int32_t>* triples,
                    const std::vector<std::vector<std::vector<int>>>& comps_of,
                    std::vector<int>& parts) {
    const int d = static_cast<int>(t.size());
    if (d < 4 || d >= static_cast<int>(comps_of.size())) return false;
    int found = 0;
    for (const auto& comp : comps_of[d]) {
        bool ok = true;
        int p = 0;
        for (int w : comp) {
            if (w == 2) {
                if (!pairs.count(static_cast<int64_t>(t[p]) * v + t[p + 1])) ok = false;
            } else if (triples) {
                if (!triples->count((static_cast<int64_t>(t[p]) * v + t[p + 1]) * v + t[p + 2]))
                    ok = false;
            }
            if (!ok) break;
            p += w;
        }
        if (ok) {
            ++found;
            if (found > 1) return false;
            parts = comp;
        }
    }
    return found == 1;
}

// Multinomial profile clustering for sparse counts: each item carries a count
// vector over context features (the training label joined with the segment
// layout and the classes of its width-2 siblings); same-parent items draw
// from the same feature distribution and distinct parents have nearly
// disjoint feature support, so separation does not degrade as v grows. Two
// deterministic hierarchical inits (centered proportions and square-root
// proportions), hard refinement to a fixed point from each; the fixed point
// with the higher classification likelihood wins. Each item must end
// MAP-consistent with posterior mass >= tau on its own class.
struct ProfileClasses {
    std::string failure;
    std::vector<int32_t> cls;
};

using SparseProfile = std::vector<std::pair<int32_t, int64_t>>;  // (feature, count)

ProfileClasses em_profile_classes(const std::vector<SparseProfile>& items, int n_features,
                                  int v, double tau) {
    ProfileClasses out;
    const int n = static_cast<int>(items.size());
    const int K = n_features;
    if (n < v) {
        out.failure = "only " + std::to_string(n) + " profiles for " + std::to_string(v) +
                      " classes";
        return out;
    }
    std::vector<std::vector<double>> prop(n, std::vector<double>(K, 0.0));
    for (int i = 0; i < n; ++i) {
        double tot = 0;
        for (const auto& [k, c] : items[i]) tot += static_cast<double>(c);
        if (tot <= 0) {
            out.failure = "an item has an empty context profile";
            return out;
        }
        for (const auto& [k, c] : items[i]) prop[i][k] = c / tot;
    }
    // Init (a): centered feature distributions — the component shared by all
    // profiles is removed so same-parent items align and cross-parent items
    // decorrelate. Init (b): square-root distributions — insensitive to the
    // sample-size spread that can dominate the centered geometry. Either can
    // land the refinement in a poor fixed point on its own; the likelihood
    // comparison below picks the better basin.
    std::vector<std::vector<int32_t>> inits;
    std::string init_failure;
    {
        std::vector<double> mean(K, 0.0);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < K; ++k) mean[k] += prop[i][k] / n;
        std::vector<std::vector<double>> units(n, std::vector<double>(K));
        for (int i = 0; i < n; ++i) {
            double nn = 0;
            for (int k = 0; k < K; ++k) {
                units[i][k] = prop[i][k] - mean[k];
                nn += units[i][k] * units[i][k];
            }
            nn = std::sqrt(nn);
            if (nn > 0)
                for (double& x : units[i]) x /= nn;
        }
        LinkageResult r = average_linkage(units, v, -2.0);  // partition only
        if (!r.labels.empty())
            inits.push_back(std::move(r.labels));
        else
            init_failure = "profile init: " + r.failure;
    }
    {
        std::vector<std::vector<double>> units(n, std::vector<double>(K));
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < K; ++k) units[i][k] = std::sqrt(prop[i][k]);
        LinkageResult r = average_linkage(units, v, -2.0);  // partition only
        if (!r.labels.empty())
            inits.push_back(std::move(r.labels));
        else if (init_failure.empty())
            init_failure = "profile init: " + r.failure;
    }
    if (inits.empty()) {
        out.failure = init_failure;
        return out;
    }

    // Unit prior mass per class: strong enough to define unseen-feature odds,
    // weak enough not to wash out thin rows.
    const double lam = 1.0 / K;
    std::vector<std::vector<double>> logq(v, std::vector<double>(K, 0.0));
    auto refit = [&](const std::vector<int32_t>& cls) {
        std::vector<std::vector<double>> tot(v, std::vector<double>(K, lam));
        for (int i = 0; i < n; ++i)
            for (const auto& [k, c] : items[i]) tot[cls[i]][k] += static_cast<double>(c);
        for (int c = 0; c < v; ++c) {
            double z = 0;
            for (int k = 0; k < K; ++k) z += tot[c][k];
            for (int k = 0; k < K; ++k) logq[c][k] = std::log(tot[c][k] / z);
        }
    };
    auto loglik = [&](int i, int c) {
        double s = 0;
        for (const auto& [k, cnt] : items[i]) s += static_cast<double>(cnt) * logq[c][k];
        return s;
    };
    struct Run {
        std::vector<int32_t> cls;
        double ll = 0.0;
        std::string failure;
    };
    auto refine = [&](std::vector<int32_t> cls) -> Run {
        Run run;
        bool converged = false;
        for (int it = 0; it < 100 && !converged; ++it) {
            refit(cls);
            converged = true;
            for (int i = 0; i < n; ++i) {
                int best = cls[i];
                double bl = loglik(i, best);
                for (int c = 0; c < v; ++c) {
                    if (c == best) continue;
                    const double l = loglik(i, c);
                    if (l > bl) {
                        bl = l;
                        best = c;
                    }
                }
                if (best != cls[i]) {
                    cls[i] = best;
                    converged = false;
                }
            }
            std::vector<int> sz(v, 0);
            for (int i = 0; i < n; ++i) ++sz[cls[i]];
            for (int c = 0; c < v; ++c)
                if (sz[c] == 0) {
                    run.failure = "a profile class emptied during refinement";
                    return run;
                }
        }
        if (!converged) {
            run.failure = "profile refinement did not converge";
            return run;
        }
        refit(cls);
        for (int i = 0; i < n; ++i) run.ll += loglik(i, cls[i]);
        run.cls = std::move(cls);
        return run;
    };
    Run best;
    std::string first_failure;
    bool have = false;
    for (const auto& ini : inits) {
        Run r = refine(ini);
        if (!r.failure.empty()) {
            if (first_failure.empty()) first_failure = r.failure;
            continue;
        }
        if (!have || r.ll > best.ll) {
            best = std::move(r);
            have = true;
        }
    }
    if (!have) {
        out.failure = first_failure;
        return out;
    }
    out.cls = std::move(best.cls);
    refit(out.cls);
    for (int i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < v; ++c) mx = std::max(mx, loglik(i, c));
        double z = 0, own = 0;
        for (int c = 0; c < v; ++c) {
            const double p = std::exp(loglik(i, c) - mx);
            z += p;
            if (c == out.cls[i]) own = p;
        }
        if (own / z < tau) {
            out.failure = "item " + std::to_string(i) +
                          " is not confidently classified (posterior " +
                          std::to_string(own / z) + ", floor " + std::to_string(tau) + ")";
            return out;
        }
    }
    // Class ids ordered by smallest member.
    std::vector<int32_t> remap(v, -1);
    int next = 0;
    for (int i = 0; i < n; ++i)
        if (remap[out.cls[i]] < 0) remap[out.cls[i]] = next++;
    for (int i = 0; i < n; ++i) out.cls[i] = remap[out.cls[i]];
    return out;
}

// Root ids -> class labels by majority over training sentences with a unique
// surviving root.
void fit_root_labels(LearnedGrammar& lg, const Dataset& data, int workers) {
    const int v = lg.v;
    const int64_t n = static_cast<int64_t>(data.size());
    const int shards = shard_count(n, workers);
    std::vector<std::vector<int64_t>> votes(shards,
                                            std::vector<int64_t>(static_cast<size_t>(v) * v, 0));
    parallel_shards(n, workers, [&](int s, int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) {
            const auto& sent = data[static_cast<size_t>(i)];
            const DetectorChart c = encode_to(lg, sent.tokens, lg.L);
            int32_t root = -1;
            int count = 0;
            for (int32_t z = 0; z < v && count < 2; ++z)
                if (c.get(0, c.d, z)) {
                    root = z;
                    ++count;
                }
            if (count == 1) votes[s][static_cast<size_t>(root) * v + sent.label] += 1;
        }
    });
    for (int s = 1; s < shards; ++s)
        for (size_t k = 0; k < votes[0].size(); ++k) votes[0][k] += votes[s][k];
    lg.root_label.assign(v, -1);
    for (int z = 0; z < v; ++z) {
        int64_t best = 0;
        for (int a = 0; a < v; ++a) {
            const int64_t c = votes[0][static_cast<size_t>(z) * v + a];
            if (c > best) {
                best = c;
                lg.root_label[z] = a;
            }
        }
    }
}

}  // namespace

LearnedGrammar learn(const Dataset& data, const LearnOptions& opt) {
    LearnedGrammar lg;
    if (data.empty()) throw std::invalid_argument("learn: empty dataset");
    if (opt.L < 1) throw std::invalid_argument("learn: L must be >= 1");
    int v = opt.v;
    if (v <= 0) {
        int32_t mx = 0;
        for (const auto& s : data)
            for (int32_t t : s.tokens) mx = std::max(mx, t);
        v = mx + 1;
    }
    for (const auto& s : data)
        if (s.label < 0 || s.label >= v)
            throw std::invalid_argument("learn: class label out of range");
    lg.v = v;
    lg.L = opt.L;
    const int L = lg.L;

    auto fail = [&](int h, const std::string& msg) {
        lg.failure = "height " + std::to_string(h) + ": " + msg;
        lg.failed_height = h;
        return lg;
    };
    auto token_chart_of = [&](int64_t i) {
        return token_detectors(data[static_cast<size_t>(i)].tokens, v, L);
    };

    if (L == 1) {
        // The strata are the whole dataset split by sentence length; the root
        // rules are the observed aligned tuples keyed by the training label.
        const AlignedMoments am = estimate_aligned(data, v, 1, 1, token_chart_of, opt.workers);
        const TopRules top = collect_top_rules(am, am, v, 1);
        if (!top.failure.empty()) return fail(1, top.failure);
        LearnedLevel lvl;
        for (int32_t a = 0; a < v; ++a) {
            for (int64_t key : top.bin[a])
                lvl.binary.push_back(
                    {a, static_cast<int32_t>(key / v), static_cast<int32_t>(key % v)});
            for (int64_t key : top.ter[a])
                lvl.ternary.push_back({a, static_cast<int32_t>(key / (int64_t(v) * v)),
                                       static_cast<int32_t>((key / v) % v),
                                       static_cast<int32_t>(key % v)});
        }
        lg.by_height.push_back(std::move(lvl));
        lg.success = true;
        fit_root_labels(lg, data, opt.workers);
        return lg;
    }

    if (L == 2) {
        // Height 1 pairs: aligned slices of the all-binary stratum, clustered.
        const AlignedMoments am1 = estimate_aligned(data, v, 2, 2, token_chart_of, opt.workers);
        const StratumClasses binc = cluster_stratum(am1, 2, v, opt.cluster, false);
        if (!binc.failure.empty()) return fail(1, "binary " + binc.failure);
        std::unordered_map<int64_t, int32_t> pair_parent;
        for (size_t i = 0; i < binc.keys.size(); ++i) pair_parent[binc.keys[i]] = binc.cls[i];

        // Height 1 triples: pair-table segmentation of every sentence length
        // yields pure triple observations. Each occurrence is described by a
        // context feature joining the training label with the segment layout,
        // the triple's slot, and the classes of its width-2 siblings; that
        // context pins down the parent far more sharply than the label alone.
        std::vector<std::vector<std::vector<int>>> comps_of(10);
        for (int d = 4; d <= 9; ++d) comps_of[d] = compositions_for(d);
        const int64_t n = static_cast<int64_t>(data.size());
        const int shards = shard_count(n, opt.workers);
        struct Acc {
            std::map<int64_t, std::map<int64_t, int64_t>> prof;  // triple key -> context counts
            std::map<int64_t, std::vector<int64_t>> topbin;      // class-pair key -> label counts
        };
        std::vector<Acc> accs(shards);
        const int64_t B = v + 2;  // sibling slot values: pair class, 3-wide marker, padding
        // Length-9 sentences decompose as (3,3,3) no matter how the pair table
        // reads them, so their three aligned windows are sibling triples even
        // when segmentation is ambiguous; their root coupling enters as extra
        // per-slot features past the segmentation-context key range.
        const int64_t aligned_base = 36 * B * B * v;
        parallel_shards(n, opt.workers, [&](int s, int64_t b, int64_t e) {
            std::vector<int> parts;
            std::vector<int64_t> sibval;
            for (int64_t i = b; i < e; ++i) {
                const auto& sent = data[static_cast<size_t>(i)];
                const auto& t = sent.tokens;
                if (t.size() == 9) {
                    for (int w3 = 0; w3 < 3; ++w3) {
                        const int p0 = 3 * w3;
                        const int64_t key =
                            (static_cast<int64_t>(t[p0]) * v + t[p0 + 1]) * v + t[p0 + 2];
                        accs[s].prof[key][aligned_base + w3 * v + sent.label] += 1;
                    }
                }
                if (!resolve_unique(t, v, pair_parent, nullptr, comps_of, parts)) continue;
                int shape = parts.size() == 2 ? 0 : 4;
                sibval.assign(parts.size(), v);
                int p = 0;
                for (size_t j = 0; j < parts.size(); ++j) {
                    if (parts[j] == 3)
                        shape += 1 << j;
                    else
                        sibval[j] = pair_parent.at(static_cast<int64_t>(t[p]) * v + t[p + 1]);
                    p += parts[j];
                }
                p = 0;
                for (size_t j = 0; j < parts.size(); ++j) {
                    if (parts[j] == 3) {
                        const int64_t key =
                            (static_cast<int64_t>(t[p]) * v + t[p + 1]) * v + t[p + 2];
                        int64_t sib[2] = {v + 1, v + 1};
                        int w = 0;
                        for (size_t k = 0; k < parts.size(); ++k)
                            if (k != j) sib[w++] = sibval[k];
                        const int64_t ctx =
                            (((static_cast<int64_t>(shape) * 3 + static_cast<int64_t>(j)) * B +
                              sib[0]) *
                                 B +
                             sib[1]) *
                                v +
                            sent.label;
                        accs[s].prof[key][ctx] += 1;
                    }
                    p += parts[j];
                }
                if (parts.size() == 2 && parts[0] == 2 && parts[1] == 2) {
                    auto& row = accs[s]
                                    .topbin
                                    .try_emplace(sibval[0] * v + sibval[1],
                                                 std::vector<int64_t>(v, 0))
                                    .first->second;
                    row[sent.label] += 1;
                }
            }
        });
        for (int s = 1; s < shards; ++s) {
            for (auto& [key, row] : accs[s].prof) {
                auto& dst = accs[0].prof[key];
                for (const auto& [ctx, c] : row) dst[ctx] += c;
            }
            for (auto& [key, row] : accs[s].topbin) {
                auto& dst =
                    accs[0].topbin.try_emplace(key, std::vector<int64_t>(v, 0)).first->second;
                for (int a = 0; a < v; ++a) dst[a] += row[a];
            }
        }
        std::vector<int64_t> tkeys;
        std::vector<SparseProfile> titems;
        int n_features = 0;
        {
            // Defensive low-count discard: junk can only enter through an
            // incomplete pair table, a decade below the true observations.
            std::vector<double> lc;
            for (auto& [key, row] : accs[0].prof) {
                int64_t tot = 0;
                for (const auto& [ctx, c] : row) tot += c;
                lc.push_back(std::log10(static_cast<double>(tot)));
            }
            double thr = -std::numeric_limits<double>::infinity();
            if (lc.size() > 1) {
                const double cand = otsu_threshold(lc);
                double lo = 0, hi = 0;
                int nlo = 0, nhi = 0;
                for (double x : lc) {
                    if (x < cand) {
                        lo += x;
                        ++nlo;
                    } else {
                        hi += x;
                        ++nhi;
                    }
                }
                if (nlo > 0 && nhi > 0 && hi / nhi - lo / nlo >= 1.0) thr = cand;
            }
            std::map<int64_t, int32_t> feat_index;
            size_t idx = 0;
            for (auto& [key, row] : accs[0].prof) {
                if (lc[idx++] < thr) continue;
                tkeys.push_back(key);
                SparseProfile item;
                item.reserve(row.size());
                for (const auto& [ctx, c] : row) {
                    const auto [it, fresh] =
                        feat_index.emplace(ctx, static_cast<int32_t>(feat_index.size()));
                    item.emplace_back(it->second, c);
                }
                titems.push_back(std::move(item));
            }
            n_features = static_cast<int>(feat_index.size());
        }
        if (static_cast<int>(tkeys.size()) < v)
            return fail(1, "only " + std::to_string(tkeys.size()) + " resolved triples for " +
                               std::to_string(v) + " classes");
        const ProfileClasses pc = em_profile_classes(titems, n_features, v, opt.cluster.tau);
        if (!pc.failure.empty()) return fail(1, "ternary profiles: " + pc.failure);
        std::unordered_map<int64_t, int32_t> triple_parent;
        for (size_t i = 0; i < tkeys.size(); ++i) triple_parent[tkeys[i]] = pc.cls[i];

        std::vector<std::vector<int64_t>> top_bin(v);
        for (auto& [key, row] : accs[0].topbin)
            for (int a = 0; a < v; ++a)
                if (row[a] > 0) top_bin[a].push_back(key);
        std::vector<int32_t> sigma;
        const std::string aerr =
            align_by_votes(data, v, pair_parent, triple_parent, top_bin, opt.workers, sigma);
        if (!aerr.empty()) return fail(1, aerr);

        LearnedLevel lvl1;
        for (size_t i = 0; i < binc.keys.size(); ++i)
            lvl1.binary.push_back({binc.cls[i], static_cast<int32_t>(binc.keys[i] / v),
                                   static_cast<int32_t>(binc.keys[i] % v)});
        std::unordered_map<int64_t, int32_t> triple_canon;
        for (size_t i = 0; i < tkeys.size(); ++i) {
            const int32_t cc = sigma[pc.cls[i]];
            triple_canon[tkeys[i]] = cc;
            lvl1.ternary.push_back({cc, static_cast<int32_t>(tkeys[i] / (int64_t(v) * v)),
                                    static_cast<int32_t>((tkeys[i] / v) % v),
                                    static_cast<int32_t>(tkeys[i] % v)});
        }

        // Root rules from sentences whose full segmentation is unambiguous
        // under both height-1 tables, keyed by the training label.
        struct TopAcc {
            std::map<std::pair<int32_t, int64_t>, int64_t> bin, ter;
        };
        std::vector<TopAcc> tops(shards);
        parallel_shards(n, opt.workers, [&](int s, int64_t b, int64_t e) {
            std::vector<int> parts;
            for (int64_t i = b; i < e; ++i) {
                const auto& sent = data[static_cast<size_t>(i)];
                const auto& t = sent.tokens;
                if (!resolve_unique(t, v, pair_parent, &triple_canon, comps_of, parts)) continue;
                int32_t cls[3];
                int p = 0;
                for (size_t j = 0; j < parts.size(); ++j) {
                    if (parts[j] == 2) {
                        cls[j] = pair_parent.at(static_cast<int64_t>(t[p]) * v + t[p + 1]);
                    } else {
                        cls[j] = triple_canon.at(
                            (static_cast<int64_t>(t[p]) * v + t[p + 1]) * v + t[p + 2]);
                    }
                    p += parts[j];
                }
                if (parts.size() == 2)
                    tops[s].bin[{sent.label, static_cast<int64_t>(cls[0]) * v + cls[1]}] += 1;
                else
                    tops[s].ter[{sent.label,
                                 (static_cast<int64_t>(cls[0]) * v + cls[1]) * v + cls[2]}] += 1;
            }
        });
        for (int s = 1; s < shards; ++s) {
            for (auto& [k, c] : tops[s].bin) tops[0].bin[k] += c;
            for (auto& [k, c] : tops[s].ter) tops[0].ter[k] += c;
        }
        LearnedLevel lvl2;
        for (int arity : {2, 3}) {
            auto& src = arity == 2 ? tops[0].bin : tops[0].ter;
            std::vector<int64_t> mx(v, 0);
            for (auto& [k, c] : src) mx[k.first] = std::max(mx[k.first], c);
            std::vector<int> got(v, 0);
            for (auto& [k, c] : src) {
                if (c * 10 < mx[k.first]) continue;  // stray rules from rare misresolutions
                ++got[k.first];
                const int32_t a = k.first;
                const int64_t key = k.second;
                if (arity == 2)
                    lvl2.binary.push_back(
                        {a, static_cast<int32_t>(key / v), static_cast<int32_t>(key % v)});
                else
                    lvl2.ternary.push_back({a, static_cast<int32_t>(key / (int64_t(v) * v)),
                                            static_cast<int32_t>((key / v) % v),
                                            static_cast<int32_t>(key % v)});
            }
            for (int a = 0; a < v; ++a)
                if (!got[a])
                    return fail(2, "class " + std::to_string(a) + " has no " +
                                       (arity == 2 ? "binary" : "ternary") + " root rule");
        }
        lg.by_height.push_back(std::move(lvl1));
        lg.by_height.push_back(std::move(lvl2));
        lg.success = true;
        fit_root_labels(lg, data, opt.workers);
        return lg;
    }

    // Depth 3 and above: no sentence length forces a mixed layout, so the two
    // clusterings at each height are matched by their root-frequency
    // fluctuations instead, and the aligned support is filtered by relative
    // counts (coincidental fires are possible above depth 2).
    for (int h = 1; h < L; ++h) {
        const int child_level = L - h + 1;
        auto chart_of = [&](int64_t i) {
            return encode_to(lg, data[static_cast<size_t>(i)].tokens, h - 1);
        };
        const AlignedMoments am = estimate_aligned(data, v, L, child_level, chart_of, opt.workers);
        const StratumClasses binc = cluster_stratum(am, 2, v, opt.cluster, true);
        if (!binc.failure.empty()) return fail(h, "binary " + binc.failure);
        const StratumClasses terc = cluster_stratum(am, 3, v, opt.cluster, true);
        if (!terc.failure.empty()) return fail(h, "ternary " + terc.failure);

        LearnedLevel bin_probe, ter_probe;
        for (size_t i = 0; i < binc.keys.size(); ++i)
            bin_probe.binary.push_back({binc.cls[i], static_cast<int32_t>(binc.keys[i] / v),
                                        static_cast<int32_t>(binc.keys[i] % v)});
        for (size_t i = 0; i < terc.keys.size(); ++i)
            ter_probe.ternary.push_back({terc.cls[i],
                                         static_cast<int32_t>(terc.keys[i] / (int64_t(v) * v)),
                                         static_cast<int32_t>((terc.keys[i] / v) % v),
                                         static_cast<int32_t>(terc.keys[i] % v)});
        const auto bin_rows = occupancy_rows(data, v, L, bin_probe, chart_of, opt.workers);
        const auto ter_rows = occupancy_rows(data, v, L, ter_probe, chart_of, opt.workers);
        std::vector<int32_t> sigma;
        const std::string aerr =
            align_by_occupancy(bin_rows, ter_rows, v, opt.cluster.align_min, sigma);
        if (!aerr.empty()) return fail(h, aerr);

        LearnedLevel lvl = std::move(bin_probe);
        for (size_t i = 0; i < terc.keys.size(); ++i)
            lvl.ternary.push_back({sigma[terc.cls[i]],
                                   static_cast<int32_t>(terc.keys[i] / (int64_t(v) * v)),
                                   static_cast<int32_t>((terc.keys[i] / v) % v),
                                   static_cast<int32_t>(terc.keys[i] % v)});
        lg.by_height.push_back(std::move(lvl));
    }

    auto chart_top_of = [&](int64_t i) {
        return encode_to(lg, data[static_cast<size_t>(i)].tokens, L - 1);
    };
    const AlignedMoments amTop = estimate_aligned(data, v, L, 1, chart_top_of, opt.workers);
    const TopRules top = collect_top_rules(amTop, amTop, v, L);
    if (!top.failure.empty()) return fail(L, top.failure);
    LearnedLevel lvl;
    for (int32_t a = 0; a < v; ++a) {
        for (int64_t key : top.bin[a])
            lvl.binary.push_back({a, static_cast<int32_t>(key / v), static_cast<int32_t>(key % v)});
        for (int64_t key : top.ter[a])
            lvl.ternary.push_back({a, static_cast<int32_t>(key / (int64_t(v) * v)),
                                   static_cast<int32_t>((key / v) % v),
                                   static_cast<int32_t>(key % v)});
    }
    lg.by_height.push_back(std::move(lvl));
    lg.success = true;
    fit_root_labels(lg, data, opt.workers);
    return lg;
}

Classification classify(const LearnedGrammar& lg, const std::vector<int32_t>& tokens) {
    Classification out;
    if (!lg.success) return out;
    const int64_t d = static_cast<int64_t>(tokens.size());
    if (d < ipow(2, lg.L) || d > ipow(3, lg.L)) return out;
    for (int32_t t : tokens)
        if (t < 0 || t >= lg.v) return out;
    const DetectorChart c = encode_to(lg, tokens, lg.L);
    int32_t root = -1;
    for (int32_t z = 0; z < lg.v; ++z)
        if (c.get(0, d, z)) {
            ++out.surviving_roots;
            root = z;
        }
    if (out.surviving_roots == 1 && lg.root_label[root] >= 0) {
        out.abstain = false;
        out.label = lg.root_label[root];
    }
    return out;
}

EvalMetrics evaluate(const LearnedGrammar& lg, const Dataset& test) {
    if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
    const int64_t n = static_cast<int64_t>(test.size());
    const int shards = shard_count(n, 0);
    std::vector<int64_t> correct(shards, 0), abstained(shards, 0), wrong(shards, 0);
    parallel_shards(n, 0, [&](int s, int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) {
            const auto& sent = test[static_cast<size_t>(i)];
            const Classification c = classify(lg, sent.tokens);
            if (c.abstain)
                ++abstained[s];
            else if (c.label == sent.label)
                ++correct[s];
            else
                ++wrong[s];
        }
    });
    int64_t ok = 0, ab = 0, bad = 0;
    for (int s = 0; s < shards; ++s) {
        ok += correct[s];
        ab += abstained[s];
        bad += wrong[s];
    }
    EvalMetrics m;
    m.n = n;
    m.accuracy = static_cast<double>(ok) / n;
    m.abstain_rate = static_cast<double>(ab) / n;
    // abstain -> -ln(1/v)/ln(v) = 1, correct -> 0, wrong -> -ln(v^-2)/ln(v) = 2.
    m.normalized_loss = (static_cast<double>(ab) + 2.0 * bad) / n;
    return m;
}

namespace {

// Extends sigma_child to the parents of one height; true iff the learned rules
// are exactly the true ones under some parent bijection.
bool match_height(const LearnedLevel& learned, const RuleLevel& truth,
                  const std::vector<int32_t>& sigma_child, int v,
                  std::vector<int32_t>& sigma_parent) {
    if (learned.binary.size() != truth.binary.size()) return false;
    if (learned.ternary.size() != truth.ternary.size()) return false;

    std::map<std::vector<int32_t>, int32_t> true_bin, true_ter;
    for (size_t r = 0; r < truth.binary.size(); ++r)
        true_bin[{truth.binary[r][0], truth.binary[r][1]}] =
            static_cast<int32_t>(truth.parent_of_binary(static_cast<int>(r)));
    for (size_t r = 0; r < truth.ternary.size(); ++r)
        true_ter[{truth.ternary[r][0], truth.ternary[r][1], truth.ternary[r][2]}] =
            static_cast<int32_t>(truth.parent_of_ternary(static_cast<int>(r)));

    sigma_parent.assign(v, -1);
    std::vector<int> bin_used(v, 0), ter_used(v, 0);
    for (const auto& r : learned.binary) {
        auto it = true_bin.find({sigma_child[r[1]], sigma_child[r[2]]});
        if (it == true_bin.end()) return false;
        if (sigma_parent[r[0]] == -1)
            sigma_parent[r[0]] = it->second;
        else if (sigma_parent[r[0]] != it->second)
            return false;
        ++bin_used[it->second];
    }
    for (const auto& r : learned.ternary) {
        auto it = true_ter.find({sigma_child[r[1]], sigma_child[r[2]], sigma_child[r[3]]});
        if (it == true_ter.end()) return false;
        if (sigma_parent[r[0]] == -1)
            sigma_parent[r[0]] = it->second;
        else if (sigma_parent[r[0]] != it->second)
            return false;
        ++ter_used[it->second];
    }
    // Equal sizes + distinct true right-hand sides make the rule map injective;
    // still require every parent matched and the symbol map bijective.
    std::vector<int> hit(v, 0);
    for (int z = 0; z < v; ++z) {
        if (sigma_parent[z] < 0) return false;
        ++hit[sigma_parent[z]];
    }
    for (int z = 0; z < v; ++z) {
        if (hit[z] != 1) return false;
        if (bin_used[z] != truth.m2 || ter_used[z] != truth.m3) return false;
    }
    return true;
}

}  // namespace

bool recovery_exact(const LearnedGrammar& lg, const Grammar& g) {
    if (!lg.success || lg.v != g.v() || lg.L != g.L()) return false;
    std::vector<int32_t> sigma(lg.v);
    for (int32_t a = 0; a < lg.v; ++a) sigma[a] = a;  // tokens are observed
    for (int h = 1; h <= lg.L; ++h) {
        std::vector<int32_t> up;
        if (!match_height(lg.rules_at_height(h), g.rules_at_height(h), sigma, lg.v, up))
            return false;
        sigma = std::move(up);
    }
    for (int32_t z = 0; z < lg.v; ++z)
        if (lg.root_label[z] != sigma[z]) return false;
    return true;
}

std::vector<LearningCurvePoint> learning_curve(const Grammar& g, const std::vector<int64_t>& grid,
                                               int64_t test_P, uint64_t seed,
                                               const LearnOptions& opt) {
    if (grid.empty()) throw std::invalid_argument("learning_curve: empty grid");
    for (int64_t p : grid)
        if (p < 1) throw std::invalid_argument("learning_curve: training sizes must be positive");
    std::vector<int64_t> sizes = grid;
    std::sort(sizes.begin(), sizes.end());
    const Rng streams(seed);
    const Dataset train = make_dataset(g, sizes.back(), streams.fork(1).key(), opt.workers);
    const Dataset test = make_dataset(g, test_P, streams.fork(2).key(), opt.workers);

    LearnOptions o = opt;
    o.v = g.v();
    o.L = g.L();
    std::vector<LearningCurvePoint> out;
    out.reserve(sizes.size());
    for (int64_t P : sizes) {
        const Dataset prefix(train.begin(), train.begin() + P);
        const LearnedGrammar lg = learn(prefix, o);
        LearningCurvePoint pt;
        pt.P = P;
        pt.learn_success = lg.success;
        if (lg.success) {
            const EvalMetrics m = evaluate(lg, test);
            pt.accuracy = m.accuracy;
            pt.abstain_rate = m.abstain_rate;
            pt.normalized_loss = m.normalized_loss;
            pt.recovered = recovery_exact(lg, g);
        } else {
            pt.failure = lg.failure;
        }
        out.push_back(pt);
    }
    return out;
}

std::string learned_to_json(const LearnedGrammar& lg) {
    nlohmann::ordered_json j;
    j["format_version"] = kGrammarFormatVersion;
    j["inferred"] = true;
    j["success"] = lg.success;
    j["failure"] = lg.failure;
    j["failed_height"] = lg.failed_height;
    j["v"] = lg.v;
    j["L"] = lg.L;
    nlohmann::ordered_json levels = nlohmann::ordered_json::array();
    for (auto it = lg.by_height.rbegin(); it != lg.by_height.rend(); ++it) {
        nlohmann::ordered_json lvl;
        nlohmann::ordered_json bin = nlohmann::ordered_json::array();
        for (const auto& r : it->binary) bin.push_back({r[0], r[1], r[2]});
        nlohmann::ordered_json ter = nlohmann::ordered_json::array();
        for (const auto& r : it->ternary) ter.push_back({r[0], r[1], r[2], r[3]});
        lvl["binary"] = std::move(bin);
        lvl["ternary"] = std::move(ter);
        levels.push_back(std::move(lvl));
    }
    j["levels"] = std::move(levels);
    j["root_label"] = lg.root_label;
    return j.dump(2) + "\n";
}

LearnedGrammar learned_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("learned grammar: invalid JSON: ") + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != kGrammarFormatVersion)
            throw std::runtime_error("learned grammar: unsupported format_version");
        if (!j.at("inferred").get<bool>())
            throw std::runtime_error("learned grammar: missing inferred flag");
        LearnedGrammar lg;
        lg.v = j.at("v").get<int>();
        lg.L = j.at("L").get<int>();
        if (lg.v < 1 || lg.L < 1) throw std::runtime_error("learned grammar: bad dimensions");
        lg.success = j.at("success").get<bool>();
        lg.failure = j.value("failure", std::string());
        lg.failed_height = j.value("failed_height", 0);
        auto check_sym = [&](int64_t x) {
            if (x < 0 || x >= lg.v) throw std::runtime_error("learned grammar: symbol out of range");
            return static_cast<int32_t>(x);
        };
        std::vector<LearnedLevel> root_first;
        for (const auto& lvl : j.at("levels")) {
            LearnedLevel out;
            for (const auto& r : lvl.at("binary")) {
                if (!r.is_array() || r.size() != 3)
                    throw std::runtime_error("learned grammar: malformed binary rule");
                out.binary.push_back({check_sym(r[0].get<int64_t>()), check_sym(r[1].get<int64_t>()),
                                      check_sym(r[2].get<int64_t>())});
            }
            for (const auto& r : lvl.at("ternary")) {
                if (!r.is_array() || r.size() != 4)
                    throw std::runtime_error("learned grammar: malformed ternary rule");
                out.ternary.push_back({check_sym(r[0].get<int64_t>()), check_sym(r[1].get<int64_t>()),
                                       check_sym(r[2].get<int64_t>()), check_sym(r[3].get<int64_t>())});
            }
            root_first.push_back(std::move(out));
        }
        if (lg.success && static_cast<int>(root_first.size()) != lg.L)
            throw std::runtime_error("learned grammar: level count mismatch");
        lg.by_height.assign(root_first.rbegin(), root_first.rend());
        for (const auto& x : j.at("root_label")) {
            const int64_t t = x.get<int64_t>();
            if (t < -1 || t >= lg.v) throw std::runtime_error("learned grammar: bad root label");
            lg.root_label.push_back(static_cast<int32_t>(t));
        }
        if (lg.success && static_cast<int>(lg.root_label.size()) != lg.v)
            throw std::runtime_error("learned grammar: root label map size mismatch");
        return lg;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("learned grammar: missing or mistyped field: ") +
                                 e.what());
    }
}

void save_learned(const LearnedGrammar& lg, const std::string& path) {
    write_file(path, learned_to_json(lg));
}

LearnedGrammar load_learned(const std::string& path) { return learned_from_json(read_file(path)); }

}  // namespace vtrhm
