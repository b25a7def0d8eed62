#include "vtrhm/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace vtrhm {
namespace {

double l2_norm(const std::vector<double>& x) {
    double s = 0;
    for (double t : x) s += t * t;
    return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void scale_to_unit(std::vector<double>& x) {
    const double n = l2_norm(x);
    if (n > 0)
        for (double& t : x) t /= n;
}

// Shared tail of both inference paths: discard low norms, normalize,
// agglomerate to exactly v classes, validate. Labels are class indices
// ordered by smallest member tuple.
void cluster_slices(const std::vector<int64_t>& tuples, std::vector<std::vector<double>>& slices,
                    int v, const ClusterOptions& opt, ClusterAssignment& out) {
    out.candidates = tuples;
    out.norms.resize(tuples.size());
    for (size_t k = 0; k < tuples.size(); ++k) out.norms[k] = l2_norm(slices[k]);

    std::vector<double> log_norms;
    log_norms.reserve(tuples.size());
    for (double n : out.norms)
        if (n > 0) log_norms.push_back(std::log10(n));
    if (log_norms.empty()) {
        out.failure = "all candidate slices have zero norm";
        return;
    }
    if (opt.discard_override > 0) {
        out.discard_threshold = opt.discard_override;
    } else {
        // Split log norms in two and discard the lower class, but only when
        // the classes are far enough apart (a decade between means) to be
        // genuine modes; near-equal norms are one population, not noise.
        out.discard_threshold = 0.0;
        if (log_norms.size() > 1) {
            const double cand = otsu_threshold(log_norms);
            double lo = 0, hi = 0;
            int nlo = 0, nhi = 0;
            for (double x : log_norms) {
                if (x < cand) {
                    lo += x;
                    ++nlo;
                } else {
                    hi += x;
                    ++nhi;
                }
            }
            if (nlo > 0 && nhi > 0 && hi / nhi - lo / nlo >= 1.0)
                out.discard_threshold = std::pow(10.0, cand);
        }
    }

    std::vector<std::vector<double>> kept;
    for (size_t k = 0; k < tuples.size(); ++k) {
        if (out.norms[k] <= 0 || out.norms[k] < out.discard_threshold) continue;
        out.items.push_back(tuples[k]);
        kept.push_back(std::move(slices[k]));
        scale_to_unit(kept.back());
    }
    if (kept.empty()) {
        out.failure = "norm threshold discarded every slice";
        return;
    }
    if (static_cast<int>(kept.size()) < v) {
        out.failure = "only " + std::to_string(kept.size()) + " slices retained, need at least " +
                      std::to_string(v) + " for " + std::to_string(v) + " classes";
        return;
    }

    LinkageResult lr = average_linkage(kept, v, opt.tau);
    if (!lr.success) {
        out.failure = lr.failure;
        return;
    }
    out.labels = std::move(lr.labels);
    out.centroids = std::move(lr.centroids);
    out.n_clusters = v;
}

}  // namespace

double otsu_threshold(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("otsu_threshold: no values");
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double mn = *mn_it, mx = *mx_it;
    if (!(mx > mn)) return mn;

    constexpr int kBins = 128;
    std::vector<int64_t> hist(kBins, 0);
    std::vector<double> sum(kBins, 0.0);
    const double w = (mx - mn) / kBins;
    for (double x : values) {
        int b = static_cast<int>((x - mn) / w);
        b = std::clamp(b, 0, kBins - 1);
        ++hist[b];
        sum[b] += x;
    }
    const int64_t total = static_cast<int64_t>(values.size());
    const double total_sum = std::accumulate(sum.begin(), sum.end(), 0.0);

    double best = -1.0;
    int best_bin = 0;
    int64_t n0 = 0;
    double s0 = 0.0;
    for (int b = 0; b + 1 < kBins; ++b) {
        n0 += hist[b];
        s0 += sum[b];
        const int64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const double m0 = s0 / n0;
        const double m1 = (total_sum - s0) / n1;
        const double between = static_cast<double>(n0) * n1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = b;
        }
    }
    if (best < 0) return mn;  // all mass in one bin
    return mn + w * (best_bin + 1);
}

LinkageResult average_linkage(const std::vector<std::vector<double>>& units, int k, double tau) {
    LinkageResult out;
    const int n = static_cast<int>(units.size());
    if (k < 1) {
        out.failure = "class count must be positive";
        return out;
    }
    if (n < k) {
        out.failure = "only " + std::to_string(n) + " vectors for " + std::to_string(k) + " classes";
        return out;
    }
    if (n > 10000) {
        out.failure = "refusing to agglomerate " + std::to_string(n) +
                      " vectors (pairwise matrix too large); tighten the discard threshold";
        return out;
    }

    // Cluster slots are item indices; merging folds the larger slot into the
    // smaller one. D holds average-linkage dissimilarities between live slots.
    std::vector<double> D(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double d = 1.0 - dot(units[i], units[j]);
            D[static_cast<size_t>(i) * n + j] = d;
            D[static_cast<size_t>(j) * n + i] = d;
        }
    std::vector<bool> live(n, true);
    std::vector<int64_t> size(n, 1);

    // Nearest-neighbor chain discovers the dendrogram's merges out of height
    // order, so the full hierarchy is built first and the k-cluster partition
    // is read off afterwards by replaying the n-k lowest merges.
    struct Merge {
        int a, b;
        double h;
    };
    std::vector<Merge> merges;
    merges.reserve(n - 1);
    int n_live = n;
    std::vector<int> chain;
    chain.reserve(n);
    while (n_live > 1) {
        if (chain.empty()) {
            for (int i = 0; i < n; ++i)
                if (live[i]) {
                    chain.push_back(i);
                    break;
                }
        }
        const int c = chain.back();
        // Nearest live neighbor, preferring the chain's previous element on
        // ties, then the smallest slot.
        const int prev = chain.size() >= 2 ? chain[chain.size() - 2] : -1;
        double best = std::numeric_limits<double>::infinity();
        int bj = -1;
        for (int j = 0; j < n; ++j) {
            if (!live[j] || j == c) continue;
            const double d = D[static_cast<size_t>(c) * n + j];
            if (d < best || (d == best && (bj != prev && (j == prev || j < bj)))) {
                best = d;
                bj = j;
            }
        }
        if (bj == prev && prev >= 0) {
            // Mutual nearest neighbors: merge prev and c into min(prev, c).
            const int a = std::min(prev, c), b = std::max(prev, c);
            merges.push_back({a, b, best});
            for (int o = 0; o < n; ++o) {
                if (!live[o] || o == a || o == b) continue;
                const double d = (size[a] * D[static_cast<size_t>(a) * n + o] +
                                  size[b] * D[static_cast<size_t>(b) * n + o]) /
                                 static_cast<double>(size[a] + size[b]);
                D[static_cast<size_t>(a) * n + o] = d;
                D[static_cast<size_t>(o) * n + a] = d;
            }
            size[a] += size[b];
            live[b] = false;
            --n_live;
            chain.pop_back();
            chain.pop_back();
        } else {
            chain.push_back(bj);
        }
    }

    // Replay the n-k cheapest merges (stable on ties, preserving subtree
    // order) through a union-find to cut the hierarchy at k clusters.
    std::vector<int> order(merges.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return merges[x].h < merges[y].h; });
    std::vector<int32_t> uf(n);
    std::iota(uf.begin(), uf.end(), 0);
    auto find = [&](int x) {
        while (uf[x] != x) {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        return x;
    };
    for (int m = 0; m < n - k; ++m) {
        const Merge& mg = merges[order[m]];
        const int ra = find(mg.a), rb = find(mg.b);
        uf[std::max(ra, rb)] = std::min(ra, rb);
    }

    // Class ids ordered by smallest member index.
    std::vector<int32_t> slot_to_id(n, -1);
    out.labels.assign(n, -1);
    int next = 0;
    for (int i = 0; i < n; ++i) {
        const int s = find(i);
        if (slot_to_id[s] < 0) slot_to_id[s] = next++;
        out.labels[i] = slot_to_id[s];
    }

    const size_t dim = units.empty() ? 0 : units[0].size();
    out.centroids.assign(k, std::vector<double>(dim, 0.0));
    for (int i = 0; i < n; ++i)
        for (size_t t = 0; t < dim; ++t) out.centroids[out.labels[i]][t] += units[i][t];
    for (auto& c : out.centroids) scale_to_unit(c);

    for (int i = 0; i < n; ++i) {
        const double own = dot(units[i], out.centroids[out.labels[i]]);
        double other = -1.0;
        for (int c = 0; c < k; ++c) {
            if (c == out.labels[i]) continue;
            other = std::max(other, dot(units[i], out.centroids[c]));
        }
        out.min_own_cos = std::min(out.min_own_cos, own);
        out.min_margin = std::min(out.min_margin, own - other);
        if (own < tau) {
            out.failure = "vector " + std::to_string(i) + " agrees with its own class only at cosine " +
                          std::to_string(own) + " (floor " + std::to_string(tau) + ")";
            return out;
        }
        if (own <= other) {
            out.failure = "vector " + std::to_string(i) + " is at least as close to another class (" +
                          std::to_string(other) + " vs " + std::to_string(own) + ")";
            return out;
        }
    }
    out.success = true;
    return out;
}

ClusterAssignment infer_binary_rules(const MomentTensors& m, const ClusterOptions& opt) {
    ClusterAssignment out;
    out.arity = 2;
    const int v = m.v();
    const auto tuples = m.observed_pairs();
    if (tuples.empty()) {
        out.failure = "no pairs observed";
        return out;
    }
    std::vector<std::vector<double>> slices;
    slices.reserve(tuples.size());
    for (int64_t t : tuples)
        slices.push_back(m.c2_slice(static_cast<int32_t>(t / v), static_cast<int32_t>(t % v)));
    cluster_slices(tuples, slices, v, opt, out);
    if (!out.failure.empty()) return out;
    out.success = true;
    return out;
}

ClusterAssignment infer_ternary_rules(const MomentTensors& m, const ClusterAssignment& binary,
                                      const ClusterOptions& opt) {
    ClusterAssignment out;
    out.arity = 3;
    const int v = m.v();
    if (!binary.success) {
        out.failure = "binary inference did not succeed";
        return out;
    }
    const auto tuples = m.observed_triples();
    if (tuples.empty()) {
        out.failure = "no triples observed";
        return out;
    }
    std::vector<std::vector<double>> slices;
    slices.reserve(tuples.size());
    for (int64_t t : tuples) {
        const int32_t a = static_cast<int32_t>(t / (int64_t(v) * v));
        const int32_t b = static_cast<int32_t>((t / v) % v);
        const int32_t c = static_cast<int32_t>(t % v);
        auto s3 = m.c3_slice(a, b, c);
        const auto ab = m.c2_slice(a, b);
        const auto bc = m.c2_slice(b, c);
        for (int r = 0; r < v; ++r) s3[r] -= (ab[r] + bc[r]) / v;
        slices.push_back(std::move(s3));
    }
    cluster_slices(tuples, slices, v, opt, out);
    if (!out.failure.empty()) return out;

    // Greedy alignment: repeatedly take the best remaining (ternary, binary)
    // centroid cosine; every match must clear align_min.
    std::vector<int32_t> to_binary(v, -1);
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
                for (size_t i = 0; i < out.centroids[t].size(); ++i)
                    s += out.centroids[t][i] * binary.centroids[b][i];
                if (s > best) {
                    best = s;
                    bt = t;
                    bb = b;
                }
            }
        }
        to_binary[bt] = bb;
        used_t[bt] = true;
        used_b[bb] = true;
        worst = std::min(worst, best);
    }
    if (worst < opt.align_min) {
        out.failure = "ternary/binary class alignment too weak (min cosine " +
                      std::to_string(worst) + ")";
        return out;
    }
    for (auto& l : out.labels) l = to_binary[l];
    std::vector<std::vector<double>> remapped(v);
    for (int t = 0; t < v; ++t) remapped[to_binary[t]] = std::move(out.centroids[t]);
    out.centroids = std::move(remapped);
    out.success = true;
    return out;
}

}  // namespace vtrhm
