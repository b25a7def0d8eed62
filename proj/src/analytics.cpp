#include "vtrhm/analytics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>

#include "vtrhm/numeric.hpp"

namespace vtrhm {

int64_t typical_length(int L) {
    return static_cast<int64_t>(std::floor(std::pow(2.5, L)));
}

// Normalized binomial row pmf(t) = C(n,t) p^t (1-p)^(n-t), t = 0..n, computed
// outward from the mode with exact ratio updates and renormalized so the row
// sums to one.
static std::vector<double> binomial_row(int64_t n, double p) {
    std::vector<double> row(n + 1, 0.0);
    if (n == 0) {
        row[0] = 1.0;
        return row;
    }
    if (p <= 0.0 || p >= 1.0) {
        row[p <= 0.0 ? 0 : n] = 1.0;
        return row;
    }
    const int64_t mode = std::clamp<int64_t>(static_cast<int64_t>((n + 1) * p), 0, n);
    row[mode] = 1.0;  // relative to the mode; normalization fixes the scale
    const double odds = p / (1.0 - p);
    for (int64_t t = mode; t < n; ++t) {
        row[t + 1] = row[t] * odds * static_cast<double>(n - t) / static_cast<double>(t + 1);
        if (row[t + 1] == 0.0) break;
    }
    for (int64_t t = mode; t > 0; --t) {
        row[t - 1] = row[t] / odds * static_cast<double>(t) / static_cast<double>(n - t + 1);
        if (row[t - 1] == 0.0) break;
    }
    KahanSum total;
    for (double x : row) total.add(x);
    const double scale = 1.0 / total.value();
    for (double& x : row) x *= scale;
    return row;
}

double LengthDistribution::mean() const {
    KahanSum s;
    for (size_t i = 0; i < p.size(); ++i) s.add(p[i] * static_cast<double>(d_min + i));
    return s.value();
}

LengthDistribution length_distribution(int L, double p2) {
    if (L < 0) throw std::invalid_argument("length_distribution: L must be >= 0");
    if (p2 < 0.0 || p2 > 1.0) throw std::invalid_argument("length_distribution: p2 in [0,1]");
    LengthDistribution cur;
    cur.L = 0;
    cur.d_min = 1;
    cur.p = {1.0};
    for (int lev = 0; lev < L; ++lev) {
        LengthDistribution next;
        next.L = lev + 1;
        next.d_min = cur.d_min * 2;
        const int64_t next_max = (cur.d_min + static_cast<int64_t>(cur.p.size()) - 1) * 3;
        std::vector<KahanSum> acc(next_max - next.d_min + 1);
        for (size_t i = 0; i < cur.p.size(); ++i) {
            const int64_t dp = cur.d_min + static_cast<int64_t>(i);
            if (cur.p[i] == 0.0) continue;
            // t binary children lead to length d = 3*dp - t
            const auto row = binomial_row(dp, p2);
            for (int64_t t = 0; t <= dp; ++t) {
                const int64_t d = 3 * dp - t;
                acc[d - next.d_min].add(cur.p[i] * row[t]);
            }
        }
        next.p.resize(acc.size());
        for (size_t k = 0; k < acc.size(); ++k) next.p[k] = acc[k].value();
        cur = std::move(next);
    }
    return cur;
}

TopologyTable topology_count(int L) {
    if (L < 1) throw std::invalid_argument("topology_count: L must be >= 1");
    TopologyTable cur;
    cur.L = 1;
    cur.d_min = 2;
    cur.count = {bigint(1), bigint(1)};
    for (int lev = 1; lev < L; ++lev) {
        TopologyTable next;
        next.L = lev + 1;
        next.d_min = cur.d_min * 2;
        const int64_t next_max = (cur.d_min + static_cast<int64_t>(cur.count.size()) - 1) * 3;
        next.count.assign(next_max - next.d_min + 1, bigint(0));
        for (size_t i = 0; i < cur.count.size(); ++i) {
            const int64_t dp = cur.d_min + static_cast<int64_t>(i);
            bigint binom = 1;  // C(dp, t) built multiplicatively
            for (int64_t t = 0; t <= dp; ++t) {
                next.count[3 * dp - t - next.d_min] += cur.count[i] * binom;
                binom = binom * (dp - t) / (t + 1);
            }
        }
        cur = std::move(next);
    }
    return cur;
}

bigint TopologyTable::total() const {
    bigint s = 0;
    for (const auto& c : count) s += c;
    return s;
}

GrammaticalFraction grammatical_fraction(int L, double f) {
    if (L < 1) throw std::invalid_argument("grammatical_fraction: L must be >= 1");
    if (f <= 0.0 || f > 1.0) throw std::invalid_argument("grammatical_fraction: f in (0,1]");
    const double logf = std::log(f);
    // log F to survive the f^(#nodes) decay at depth
    std::vector<double> logF = {logf, logf};
    int64_t d_min = 2;
    for (int lev = 1; lev < L; ++lev) {
        const int64_t next_min = d_min * 2;
        const int64_t next_max = (d_min + static_cast<int64_t>(logF.size()) - 1) * 3;
        std::vector<LogSumExp> num(next_max - next_min + 1);
        std::vector<LogSumExp> den(next_max - next_min + 1);
        for (size_t i = 0; i < logF.size(); ++i) {
            const int64_t dp = d_min + static_cast<int64_t>(i);
            const auto row = binomial_row(dp, 0.5);
            for (int64_t t = 0; t <= dp; ++t) {
                if (row[t] == 0.0) continue;
                const int64_t d = 3 * dp - t;
                const double logrow = std::log(row[t]);
                num[d - next_min].add(logrow + dp * logf + logF[i]);
                den[d - next_min].add(logrow);
            }
        }
        std::vector<double> next(num.size());
        for (size_t k = 0; k < next.size(); ++k) next[k] = num[k].value() - den[k].value();
        logF = std::move(next);
        d_min = next_min;
    }
    GrammaticalFraction out;
    out.L = L;
    out.d_min = d_min;
    out.F.resize(logF.size());
    for (size_t k = 0; k < logF.size(); ++k) out.F[k] = std::exp(logF[k]);
    return out;
}

double class_entropy_L2(double f) {
    if (f < 0.0 || f > 1.0) throw std::invalid_argument("class_entropy_L2: f in [0,1]");
    const double ln2 = std::log(2.0);
    const double ln3 = std::log(3.0);
    const double h_13_23 = ln3 - (2.0 / 3.0) * ln2;  // -(1/3)ln(1/3) - (2/3)ln(2/3)
    const double f3 = f * f * f;
    const double f4 = f3 * f;
    const double f8 = f4 * f4;
    return 0.25 * f3 * ln2 + (3.0 / 16.0) * ((2.0 / 3.0) * f3 + (1.0 / 3.0) * f4) * h_13_23 +
           (3.0 / 8.0) * (2.0 * f4 * (1.0 - f4) * ln2 + f8 * ln3);
}

// ---- latent density ----

namespace {

// Full (non-cyclic) self-convolutions via FFTW when the window is wide.
class FftConv {
public:
    // Returns conv(a,a) and conv(a,a,a) (lengths 2n-1 and 3n-2).
    static void self_conv(const std::vector<double>& a, std::vector<double>& sq,
                          std::vector<double>& cube) {
        const size_t n = a.size();
        size_t N = 1;
        while (N < 3 * n) N <<= 1;
        static std::mutex plan_mutex;
        std::vector<double> in(N, 0.0), out(N);
        std::copy(a.begin(), a.end(), in.begin());
        std::vector<std::complex<double>> spec(N / 2 + 1);
        fftw_plan fwd, bwd;
        {
            std::lock_guard<std::mutex> lock(plan_mutex);
            fwd = fftw_plan_dft_r2c_1d(static_cast<int>(N), in.data(),
                                       reinterpret_cast<fftw_complex*>(spec.data()),
                                       FFTW_ESTIMATE);
            bwd = fftw_plan_dft_c2r_1d(static_cast<int>(N),
                                       reinterpret_cast<fftw_complex*>(spec.data()), out.data(),
                                       FFTW_ESTIMATE);
        }
        fftw_execute(fwd);
        std::vector<std::complex<double>> base = spec;
        for (auto& z : spec) z *= z;
        std::vector<std::complex<double>> sq_spec = spec;
        fftw_execute(bwd);
        sq.assign(out.begin(), out.begin() + (2 * n - 1));
        for (double& x : sq) x = std::max(0.0, x / static_cast<double>(N));
        for (size_t k = 0; k < spec.size(); ++k) spec[k] = sq_spec[k] * base[k];
        fftw_execute(bwd);
        cube.assign(out.begin(), out.begin() + (3 * n - 2));
        for (double& x : cube) x = std::max(0.0, x / static_cast<double>(N));
        {
            std::lock_guard<std::mutex> lock(plan_mutex);
            fftw_destroy_plan(fwd);
            fftw_destroy_plan(bwd);
        }
    }
};

void direct_self_conv(const std::vector<double>& a, std::vector<double>& sq,
                      std::vector<double>& cube) {
    const size_t n = a.size();
    sq.assign(2 * n - 1, 0.0);
    for (size_t i = 0; i < n; ++i) {
        if (a[i] == 0.0) continue;
        for (size_t j = 0; j < n; ++j) sq[i + j] += a[i] * a[j];
    }
    cube.assign(3 * n - 2, 0.0);
    for (size_t i = 0; i < sq.size(); ++i) {
        if (sq[i] == 0.0) continue;
        for (size_t j = 0; j < n; ++j) cube[i + j] += sq[i] * a[j];
    }
}

}  // namespace

double LatentDensityTrajectory::at(int level, int64_t lam) const {
    for (const auto& lev : levels) {
        if (lev.level != level) continue;
        const int64_t i = lam - lev.lam_min;
        if (i < 0 || i >= static_cast<int64_t>(lev.n.size())) return 0.0;
        return lev.n[i] * std::exp(lev.log_scale);
    }
    return 0.0;
}

const char* verdict_name(LatentDensityTrajectory::Verdict verdict) {
    switch (verdict) {
        case LatentDensityTrajectory::Verdict::diverge: return "diverge";
        case LatentDensityTrajectory::Verdict::decay: return "decay";
        default: return "undetermined";
    }
}

LatentDensityTrajectory latent_density(double f2, double f3, int L, bool corrected_init,
                                       bool stop_at_escape) {
    if (f2 < 0 || f2 > 1 || f3 < 0 || f3 > 1)
        throw std::invalid_argument("latent_density: f2, f3 in [0,1]");
    if (L < 1) throw std::invalid_argument("latent_density: L >= 1");
    LatentDensityTrajectory out;
    out.f2 = f2;
    out.f3 = f3;
    out.corrected = corrected_init;

    const double mean_s = 2.5;
    double init2 = f2, init3 = f3;  // one map step from a lone token candidate
    if (corrected_init) {
        init2 = 1.0 / (2.0 * mean_s) + f2 * (1.0 - 1.0 / (2.0 * mean_s));
        init3 = 1.0 / (2.0 * mean_s) + f3 * (1.0 - 1.0 / (2.0 * mean_s));
        out.corrected_init = 0.5 * (init2 + init3);
        if (out.corrected_init > 0.5)
            out.verdict = LatentDensityTrajectory::Verdict::diverge;
        else if (out.corrected_init < 0.5)
            out.verdict = LatentDensityTrajectory::Verdict::decay;
    }

    std::vector<double> cur = {init2, init3};
    double log_scale = 0.0;
    int64_t lam_min = 2;
    bool verdict_from_trajectory = !corrected_init;
    const int max_level = std::min(L, kDensityMaxLevels);
    for (int level = 1; level <= max_level; ++level) {
        // record (normalized so max = 1)
        LatentDensityTrajectory::Level rec;
        rec.level = level;
        rec.lam_min = lam_min;
        const double peak = *std::max_element(cur.begin(), cur.end());
        if (peak > 0.0 && peak != 1.0) {
            for (double& x : cur) x /= peak;
            log_scale += std::log(peak);
        }
        rec.n = cur;
        rec.log_scale = log_scale;
        const int64_t lam_typ = typical_length(level);
        const int64_t ti = lam_typ - lam_min;
        const double typ_norm =
            (ti >= 0 && ti < static_cast<int64_t>(cur.size())) ? cur[ti] : 0.0;
        rec.n_typical = typ_norm * std::exp(log_scale);
        out.levels.push_back(std::move(rec));

        const double n_typ = out.levels.back().n_typical;
        if (verdict_from_trajectory && out.verdict == LatentDensityTrajectory::Verdict::undetermined) {
            if (n_typ > kDensityDivergeThreshold)
                out.verdict = LatentDensityTrajectory::Verdict::diverge;
            else if (n_typ < kDensityDecayThreshold)
                out.verdict = LatentDensityTrajectory::Verdict::decay;
        }
        const bool escaped =
            n_typ > kDensityDivergeThreshold || n_typ < kDensityDecayThreshold;
        if (level == max_level || (stop_at_escape && escaped)) break;

        // one map step
        std::vector<double> sq, cube;
        if (cur.size() <= 4096)
            direct_self_conv(cur, sq, cube);
        else
            FftConv::self_conv(cur, sq, cube);
        const int64_t next_min = 2 * lam_min;
        const int64_t next_top = 3 * (lam_min + static_cast<int64_t>(cur.size()) - 1);
        std::vector<double> next(next_top - next_min + 1, 0.0);
        // binary term: support starts at 2*lam_min; ternary at 3*lam_min.
        // Fold the level scale so only ratios enter (avoids overflow when the
        // trajectory has grown or shrunk by hundreds of orders of magnitude).
        double b2, b3, pre_scale;
        if (log_scale >= 0.0) {
            b2 = f2 * std::exp(-log_scale);
            b3 = f3;
            pre_scale = 3.0 * log_scale;
        } else {
            b2 = f2;
            b3 = f3 * std::exp(log_scale);
            pre_scale = 2.0 * log_scale;
        }
        for (size_t k = 0; k < sq.size(); ++k) next[k] += b2 * sq[k];
        for (size_t k = 0; k < cube.size(); ++k) next[3 * lam_min + k - next_min] += b3 * cube[k];
        cur = std::move(next);
        log_scale = pre_scale;
        lam_min = next_min;
    }
    return out;
}

double predicted_sample_complexity(int v, int m2, int m3, int L, double p2) {
    if (v < 1 || m2 < 1 || m3 < 1 || L < 1 || p2 <= 0.0)
        throw std::invalid_argument("predicted_sample_complexity: positive arguments required");
    return std::pow(p2 * p2 / 2.0, 1 - L) * static_cast<double>(v) * m3 *
           std::pow(static_cast<double>(m2), L - 1);
}

}  // namespace vtrhm
