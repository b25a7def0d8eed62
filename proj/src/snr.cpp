#include "vtrhm/snr.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "vtrhm/parallel.hpp"
#include "vtrhm/rng.hpp"

namespace vtrhm {

namespace {

// Window counts for one pass over a dataset slice: occurrences of each tracked
// triple at the anchor window, split by sentence label.
struct WindowCounts {
    std::vector<int64_t> by_label;  // triple-major, v entries per triple
    std::vector<int64_t> total;     // per triple
    int64_t skipped = 0;            // sentences shorter than the window
};

void count_windows(const Dataset& data, int64_t begin, int64_t end, int v, int anchor,
                   const std::unordered_map<int64_t, int32_t>& index, int workers,
                   WindowCounts& acc) {
    const int64_t n = end - begin;
    if (n <= 0) return;
    const int shards = shard_count(n, workers);
    std::vector<WindowCounts> local(shards);
    for (auto& lc : local) {
        lc.by_label.assign(acc.by_label.size(), 0);
        lc.total.assign(acc.total.size(), 0);
    }
    parallel_shards(n, workers, [&](int s, int64_t b, int64_t e) {
        WindowCounts& lc = local[s];
        for (int64_t i = b; i < e; ++i) {
            const Sentence& sent = data[static_cast<size_t>(begin + i)];
            if (static_cast<int64_t>(sent.tokens.size()) < anchor + 2) {
                ++lc.skipped;
                continue;
            }
            const int64_t key =
                (static_cast<int64_t>(sent.tokens[anchor - 1]) * v + sent.tokens[anchor]) * v +
                sent.tokens[anchor + 1];
            const auto it = index.find(key);
            if (it == index.end()) continue;
            ++lc.by_label[static_cast<size_t>(it->second) * v + sent.label];
            ++lc.total[it->second];
        }
    });
    for (const auto& lc : local) {
        for (size_t j = 0; j < acc.by_label.size(); ++j) acc.by_label[j] += lc.by_label[j];
        for (size_t j = 0; j < acc.total.size(); ++j) acc.total[j] += lc.total[j];
        acc.skipped += lc.skipped;
    }
}

}  // namespace

SnrCurve empirical_snr(const Grammar& g, const std::vector<int64_t>& grid, uint64_t seed,
                       const SnrOptions& opt) {
    if (grid.empty()) throw std::invalid_argument("empirical_snr: empty grid");
    for (int64_t p : grid)
        if (p < 1) throw std::invalid_argument("empirical_snr: grid sizes must be positive");

    const int v = g.v();
    SnrCurve curve;
    curve.v = v;
    // Window centered in the typical sequence: mean branching is 2*p2 + 3*p3
    // per node, so typical length is its L-th power.
    const double mean_s = 2.0 * g.params.p2 + 3.0 * g.params.p3;
    curve.anchor = std::max(1, static_cast<int>(std::pow(mean_s, g.L()) / 2.0));

    const auto& rules = g.rules_at_height(1).ternary;
    if (rules.empty()) throw std::runtime_error("empirical_snr: grammar has no ternary rules");
    const int32_t T = static_cast<int32_t>(rules.size());
    std::unordered_map<int64_t, int32_t> index;
    index.reserve(rules.size() * 2);
    for (int32_t t = 0; t < T; ++t) {
        const auto& r = rules[static_cast<size_t>(t)];
        index.emplace((static_cast<int64_t>(r[0]) * v + r[1]) * v + r[2], t);
    }

    std::vector<int64_t> sizes = grid;
    std::sort(sizes.begin(), sizes.end());
    const int64_t maxP = sizes.back();
    const Rng streams(seed);
    const Dataset meas = make_dataset(g, maxP, streams.fork(2).key(), opt.workers);

    // Asymptote pass. The reference stream is consumed in bounded chunks so
    // its size is limited by time, not memory.
    WindowCounts ref;
    ref.by_label.assign(static_cast<size_t>(T) * v, 0);
    ref.total.assign(T, 0);
    if (opt.shared_stream) {
        curve.n_reference = maxP;
        count_windows(meas, 0, maxP, v, curve.anchor, index, opt.workers, ref);
    } else {
        curve.n_reference = opt.n_reference > 0 ? opt.n_reference : 100 * maxP;
        const int64_t chunk = 1 << 20;
        int64_t done = 0;
        for (uint64_t c = 1; done < curve.n_reference; ++c) {
            const int64_t take = std::min(chunk, curve.n_reference - done);
            const Dataset part = make_dataset(g, take, streams.fork(1).fork(c).key(), opt.workers);
            count_windows(part, 0, take, v, curve.anchor, index, opt.workers, ref);
            done += take;
        }
    }
    curve.n_reference_skipped = ref.skipped;

    curve.signal.assign(T, 0.0);
    std::vector<double> ref_post(static_cast<size_t>(T) * v, 0.0);
    for (int32_t t = 0; t < T; ++t) {
        if (ref.total[t] == 0) {
            ++curve.n_unresolved;
            continue;
        }
        double sig = 0;
        for (int a = 0; a < v; ++a) {
            const double p =
                static_cast<double>(ref.by_label[static_cast<size_t>(t) * v + a]) / ref.total[t];
            ref_post[static_cast<size_t>(t) * v + a] = p;
            const double d = p - 1.0 / v;
            sig += d * d;
        }
        if (sig <= 0.0)
            throw std::runtime_error(
                "empirical_snr: a triple's asymptotic posterior is exactly uniform");
        curve.signal[t] = sig;
    }

    WindowCounts run;
    run.by_label.assign(static_cast<size_t>(T) * v, 0);
    run.total.assign(T, 0);
    int64_t consumed = 0;
    for (int64_t P : sizes) {
        count_windows(meas, consumed, P, v, curve.anchor, index, opt.workers, run);
        consumed = P;
        SnrPoint pt;
        pt.P = P;
        pt.n_skipped = run.skipped;
        double sum = 0, sumsq = 0, sum_snr = 0;
        bool exact = false;  // some triple matched the asymptote exactly
        for (int32_t t = 0; t < T; ++t) {
            if (ref.total[t] == 0 || run.total[t] == 0) {
                ++pt.n_excluded;
                continue;
            }
            double noise = 0;
            for (int a = 0; a < v; ++a) {
                const double d =
                    static_cast<double>(run.by_label[static_cast<size_t>(t) * v + a]) /
                        run.total[t] -
                    ref_post[static_cast<size_t>(t) * v + a];
                noise += d * d;
            }
            const double inv = noise / curve.signal[t];
            sum += inv;
            sumsq += inv * inv;
            if (noise > 0)
                sum_snr += curve.signal[t] / noise;
            else
                exact = true;
            ++pt.n_included;
        }
        if (pt.n_included > 0) {
            pt.mean_inv_snr = sum / pt.n_included;
            pt.inv_snr = exact ? 0.0 : pt.n_included / sum_snr;
            if (pt.n_included > 1) {
                const double var =
                    (sumsq - sum * sum / pt.n_included) / (pt.n_included - 1);
                pt.stderr_inv_snr = std::sqrt(std::max(0.0, var) / pt.n_included);
            }
        }
        curve.points.push_back(pt);
    }
    return curve;
}

PStarResult extract_p_star(const SnrCurve& curve, double threshold) {
    if (threshold <= 0) throw std::invalid_argument("extract_p_star: threshold must be positive");
    std::vector<const SnrPoint*> usable;
    for (const auto& pt : curve.points)
        if (pt.n_included > 0) usable.push_back(&pt);
    if (usable.empty())
        throw std::runtime_error("extract_p_star: no grid point observed any triple");

    PStarResult out;
    if (usable.front()->inv_snr <= threshold) {
        out.p_star = static_cast<double>(usable.front()->P);
        out.below_range = true;
        return out;
    }
    for (size_t i = 1; i < usable.size(); ++i) {
        const SnrPoint& lo = *usable[i - 1];
        const SnrPoint& hi = *usable[i];
        if (hi.inv_snr > threshold) continue;
        const double x0 = std::log(static_cast<double>(lo.P));
        const double x1 = std::log(static_cast<double>(hi.P));
        double frac;
        if (hi.inv_snr > 0) {
            const double y0 = std::log(lo.inv_snr);
            const double y1 = std::log(hi.inv_snr);
            frac = (std::log(threshold) - y0) / (y1 - y0);
        } else {
            // An exact zero (shared-stream diagnostics) has no log; fall back
            // to a linear bracket.
            frac = (lo.inv_snr - threshold) / (lo.inv_snr - hi.inv_snr);
        }
        out.p_star = std::exp(x0 + frac * (x1 - x0));
        return out;
    }
    out.p_star = static_cast<double>(usable.back()->P);
    out.above_range = true;
    return out;
}

}  // namespace vtrhm
