#include "vtrhm/snr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "vtrhm/grammar.hpp"

using namespace vtrhm;

namespace {

std::vector<int64_t> geometric_grid(double lo, double hi, double step, int v) {
    std::vector<int64_t> grid;
    for (double m = lo; m <= hi * 1.0000001; m *= step)
        grid.push_back(static_cast<int64_t>(m * v * v + 0.5));
    return grid;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    const size_t n = xs.size();
    auto ranks = [n](const std::vector<double>& a) {
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return a[i] < a[j]; });
        std::vector<double> r(n);
        for (size_t k = 0; k < n; ++k) r[idx[k]] = static_cast<double>(k);
        return r;
    };
    const std::vector<double> rx = ranks(xs), ry = ranks(ys);
    const double mean = (static_cast<double>(n) - 1.0) / 2.0;
    double num = 0.0, dx = 0.0, dy = 0.0;
    for (size_t k = 0; k < n; ++k) {
        num += (rx[k] - mean) * (ry[k] - mean);
        dx += (rx[k] - mean) * (rx[k] - mean);
        dy += (ry[k] - mean) * (ry[k] - mean);
    }
    return num / std::sqrt(dx * dy);
}

double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

}  // namespace

TEST_CASE("input validation") {
    const Grammar g = generate_grammar(params_from_f(8, 2, 1.0 / 8, 3));
    CHECK_THROWS_AS(empirical_snr(g, {}, 1), std::invalid_argument);
    CHECK_THROWS_AS(empirical_snr(g, {128, 0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(empirical_snr(g, {-5}, 1), std::invalid_argument);

    SnrCurve c;
    c.points.push_back({100, 1.0, 1.0, 0.0, 4, 0, 0});
    CHECK_THROWS_AS(extract_p_star(c, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(extract_p_star(c, -0.5), std::invalid_argument);
    SnrCurve empty;
    empty.points.push_back({100, 1.0, 1.0, 0.0, 0, 4, 0});
    CHECK_THROWS_AS(extract_p_star(empty, 0.5), std::runtime_error);
}

TEST_CASE("curve metadata and bookkeeping") {
    const int v = 8;
    const Grammar g = generate_grammar(params_from_f(v, 2, 1.0 / v, 7));
    const std::vector<int64_t> grid = geometric_grid(1.0, 16.0, 2.0, v);
    const SnrCurve c = empirical_snr(g, grid, 42);

    CHECK(c.v == v);
    // Mean arities 2 and 3 are equally likely, so the typical length is
    // 2.5^L and the window for L=2 starts at position 3.
    CHECK(c.anchor == 3);
    CHECK(c.n_reference == 100 * grid.back());
    CHECK(c.points.size() == grid.size());
    const int64_t T = static_cast<int64_t>(g.rules_at_height(1).ternary.size());
    CHECK(static_cast<int64_t>(c.signal.size()) == T);
    CHECK(T == static_cast<int64_t>(v) * g.params.m3);
    for (double s : c.signal) CHECK(s > 0.0);  // label correlations exist below threshold
    for (size_t i = 0; i < c.points.size(); ++i) {
        const SnrPoint& pt = c.points[i];
        CHECK(pt.P == grid[i]);
        CHECK(pt.n_included + pt.n_excluded == T);
        CHECK(pt.inv_snr > 0.0);
        CHECK(pt.mean_inv_snr > 0.0);
        CHECK(pt.stderr_inv_snr >= 0.0);
    }
    // At L=2 the only sentences too short for a window starting at 3 are the
    // length-4 ones, which make up a quarter of all sentences.
    const SnrPoint& last = c.points.back();
    const double frac = static_cast<double>(last.n_skipped) / static_cast<double>(last.P);
    CHECK(frac == doctest::Approx(0.25).epsilon(0.12));

    SnrOptions oref;
    oref.n_reference = 12345;
    const SnrCurve c2 = empirical_snr(g, {256}, 42, oref);
    CHECK(c2.n_reference == 12345);
}

TEST_CASE("ternary-free grammar cannot be measured") {
    Grammar g = generate_grammar(params_from_f(4, 2, 0.5, 5));
    g.levels.back().ternary.clear();
    g.levels.back().m3 = 0;
    CHECK_THROWS_AS(empirical_snr(g, {64}, 9), std::runtime_error);
}

TEST_CASE("self-comparison yields zero inverse SNR") {
    const int v = 8;
    const Grammar g = generate_grammar(params_from_f(v, 2, 1.0 / v, 11));
    SnrOptions opt;
    opt.shared_stream = true;
    const std::vector<int64_t> grid = {512, 4096};
    const SnrCurve c = empirical_snr(g, grid, 77, opt);
    CHECK(c.n_reference == 4096);
    // The final grid point compares the stream against itself.
    CHECK(c.points.back().inv_snr == 0.0);
    CHECK(c.points.back().mean_inv_snr == 0.0);
    CHECK(c.points.front().inv_snr > 0.0);

    const PStarResult ps = extract_p_star(c, 0.5);
    CHECK_FALSE(ps.above_range);
    CHECK(ps.p_star <= 4096.0);
}

TEST_CASE("noise shrinks like one over sample size") {
    const int v = 8;
    const Grammar g = generate_grammar(params_from_f(v, 2, 1.0 / v, 21));
    const std::vector<int64_t> grid = geometric_grid(4.0, 128.0, std::sqrt(2.0), v);
    const SnrCurve c = empirical_snr(g, grid, 4242);

    std::vector<double> lp, li, lm;
    for (const SnrPoint& pt : c.points)
        if (pt.n_excluded == 0) {
            lp.push_back(std::log(static_cast<double>(pt.P)));
            li.push_back(std::log(pt.inv_snr));
            lm.push_back(std::log(pt.mean_inv_snr));
        }
    REQUIRE(lp.size() >= 6);
    CHECK(lsq_slope(lp, li) == doctest::Approx(-1.0).epsilon(0.25));
    CHECK(lsq_slope(lp, lm) == doctest::Approx(-1.0).epsilon(0.25));

    // Spot check: a 8x increase in P cuts the curve by roughly 8x.
    const auto at = [&](int64_t P) {
        for (const SnrPoint& pt : c.points)
            if (pt.P == P) return pt.inv_snr;
        REQUIRE(false);
        return 0.0;
    };
    const double ratio = at(8 * v * v) / at(64 * v * v);
    CHECK(ratio > 4.0);
    CHECK(ratio < 16.0);
}

TEST_CASE("curve is statistically decreasing in P") {
    struct Config {
        double f;
        uint64_t seed;
    };
    const Config configs[] = {{1.0 / 8, 1}, {1.0 / 8, 2}, {1.0 / 8, 3}, {0.25, 4}, {0.25, 5}};
    for (const Config& cfg : configs) {
        CAPTURE(cfg.f);
        CAPTURE(cfg.seed);
        const Grammar g = generate_grammar(params_from_f(8, 2, cfg.f, cfg.seed));
        const std::vector<int64_t> grid = geometric_grid(1.0, 128.0, 2.0, 8);
        REQUIRE(grid.size() >= 6);
        const SnrCurve c = empirical_snr(g, grid, cfg.seed * 131);
        std::vector<double> ps, inv;
        for (const SnrPoint& pt : c.points)
            if (pt.n_included > 0) {
                ps.push_back(static_cast<double>(pt.P));
                inv.push_back(pt.inv_snr);
            }
        CHECK(spearman(ps, inv) <= -0.9);
    }
}

TEST_CASE("excluded triples vanish as P grows") {
    const int v = 8;
    const Grammar g = generate_grammar(params_from_f(v, 2, 1.0 / v, 31));
    std::vector<int64_t> grid = geometric_grid(1.0, 64.0, 2.0, v);
    grid.insert(grid.begin(), 16);  // deliberately tiny first point
    const SnrCurve c = empirical_snr(g, grid, 1234);
    CHECK(c.points.front().n_excluded > 0);
    CHECK(c.points.back().n_excluded == 0);
    CHECK(c.points.front().n_excluded >= c.points.back().n_excluded);
    CHECK(c.n_unresolved == 0);
}

TEST_CASE("threshold boundary handling") {
    const int v = 8;
    const Grammar g = generate_grammar(params_from_f(v, 2, 1.0 / v, 13));
    const SnrCurve c = empirical_snr(g, geometric_grid(1.0, 64.0, 2.0, v), 555);

    double lo = 1e300, hi = 0.0;
    for (const SnrPoint& pt : c.points)
        if (pt.n_included > 0) {
            lo = std::min(lo, pt.inv_snr);
            hi = std::max(hi, pt.inv_snr);
        }

    // Threshold above every curve value: already satisfied at the first point.
    const PStarResult below = extract_p_star(c, hi * 2.0);
    CHECK(below.below_range);
    CHECK_FALSE(below.above_range);
    CHECK(below.p_star == static_cast<double>(c.points.front().P));

    // Threshold below every curve value: never reached.
    const PStarResult above = extract_p_star(c, lo * 0.5);
    CHECK(above.above_range);
    CHECK_FALSE(above.below_range);
    CHECK(above.p_star == static_cast<double>(c.points.back().P));
}

TEST_CASE("larger thresholds cross earlier") {
    const int v = 8;
    const Grammar g = generate_grammar(params_from_f(v, 2, 1.0 / v, 17));
    const SnrCurve c = empirical_snr(g, geometric_grid(1.0, 128.0, std::sqrt(2.0), v), 999);
    const PStarResult q = extract_p_star(c, 0.25);
    const PStarResult h = extract_p_star(c, 0.5);
    const PStarResult f = extract_p_star(c, 1.0);
    CHECK_FALSE(q.below_range);
    CHECK_FALSE(q.above_range);
    CHECK_FALSE(h.below_range);
    CHECK_FALSE(h.above_range);
    CHECK_FALSE(f.below_range);
    CHECK_FALSE(f.above_range);
    CHECK(f.p_star < h.p_star);
    CHECK(h.p_star < q.p_star);
}

TEST_CASE("deterministic and sharding-independent") {
    const int v = 8;
    const Grammar g = generate_grammar(params_from_f(v, 2, 1.0 / v, 19));
    const std::vector<int64_t> grid = geometric_grid(1.0, 16.0, 2.0, v);
    SnrOptions w1, w3;
    w1.workers = 1;
    w3.workers = 3;
    const SnrCurve a = empirical_snr(g, grid, 2024, w1);
    const SnrCurve b = empirical_snr(g, grid, 2024, w3);
    const SnrCurve d = empirical_snr(g, grid, 2024, w1);
    REQUIRE(a.points.size() == b.points.size());
    for (size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i].inv_snr == b.points[i].inv_snr);
        CHECK(a.points[i].inv_snr == d.points[i].inv_snr);
        CHECK(a.points[i].n_included == b.points[i].n_included);
        CHECK(a.points[i].n_skipped == b.points[i].n_skipped);
    }
    for (size_t t = 0; t < a.signal.size(); ++t) CHECK(a.signal[t] == b.signal[t]);
}

TEST_CASE("depth-3 crossing grows like the squared vocabulary") {
    const int vs[3] = {6, 8, 12};
    std::vector<double> lv, lp;
    for (int v : vs) {
        const Grammar g = generate_grammar(params_from_f(v, 3, 1.0 / v, 11));
        const SnrCurve c = empirical_snr(g, geometric_grid(1.0, 1024.0, 2.0, v),
                                         999 + static_cast<uint64_t>(v));
        CHECK(c.anchor == 7);
        const PStarResult ps = extract_p_star(c, 0.5);
        REQUIRE_FALSE(ps.below_range);
        REQUIRE_FALSE(ps.above_range);
        const double scaled = ps.p_star / (static_cast<double>(v) * v);
        CHECK(scaled > 80.0);
        CHECK(scaled < 700.0);
        lv.push_back(std::log(static_cast<double>(v)));
        lp.push_back(std::log(ps.p_star));
    }
    CHECK(lp[0] < lp[1]);
    CHECK(lp[1] < lp[2]);
    const double slope = lsq_slope(lv, lp);
    CHECK(slope > 1.5);
    CHECK(slope < 3.2);
}
