#pragma once

#include <cstdint>
#include <vector>

#include "vtrhm/grammar.hpp"

namespace vtrhm {

/// One grid point of an inverse-SNR curve.
struct SnrPoint {
    int64_t P = 0;
    double inv_snr = 0.0;         // 1 / mean of signal/noise: the thresholded curve value
    double mean_inv_snr = 0.0;    // mean of noise/signal over included triples
    double stderr_inv_snr = 0.0;  // standard error of that mean across triples
    int64_t n_included = 0;       // grammatical triples observed within the first P sentences
    int64_t n_excluded = 0;       // grammatical triples with no usable observation yet
    int64_t n_skipped = 0;        // sentences among the first P too short for the anchor window
};

/// Inverse signal-to-noise curve for root-label posteriors conditioned on the
/// token triple occupying a fixed anchor window. Per grammatical triple (a
/// ternary right-hand side of the token-producing level), the signal is the
/// squared distance between the asymptotic label posterior and the uniform
/// distribution, and the noise at P is the squared distance between the
/// P-sample posterior estimate and the asymptote; both are v-dimensional
/// vectors. Each grid point averages signal/noise over the triples observed
/// so far and reports the inverse of that average (the thresholded curve),
/// alongside the average of noise/signal.
struct SnrCurve {
    int v = 0;
    int anchor = 0;                  // 1-based start position of the window
    int64_t n_reference = 0;         // sentences behind the asymptote estimate
    int64_t n_reference_skipped = 0;  // reference sentences shorter than the window
    int64_t n_unresolved = 0;         // triples never seen in the reference pass
    std::vector<double> signal;       // per-triple signal (diagnostic; 0 = unresolved)
    std::vector<SnrPoint> points;     // one per grid P, ascending
};

struct SnrOptions {
    int64_t n_reference = 0;  // 0: 100x the largest grid point
    int workers = 0;
    // Diagnostic mode: estimate the asymptote from the measurement stream
    // itself (n_reference is then the largest grid point), so the final point
    // compares identical counts and its inverse SNR is exactly zero.
    bool shared_stream = false;
};

/// Estimates the inverse-SNR curve of g over the given training-set sizes.
/// The anchor window starts at position floor(mean_branching^L / 2), counted
/// from 1; sentences shorter than anchor+2 are skipped and counted. The
/// asymptote comes from a reference stream independent of the measurement
/// stream, and measurement counts are nested: each grid point extends the
/// same stream's prefix. Throws std::invalid_argument on an empty or
/// non-positive grid and std::runtime_error if the asymptote of an observed
/// triple is exactly uniform (a grammar with no label signal cannot be
/// measured).
SnrCurve empirical_snr(const Grammar& g, const std::vector<int64_t>& grid, uint64_t seed,
                       const SnrOptions& opt = {});

/// Threshold crossing of the mean inverse-SNR curve.
struct PStarResult {
    double p_star = 0.0;
    bool below_range = false;  // curve already under the threshold at its first usable point
    bool above_range = false;  // curve never reaches the threshold
};

/// First downward crossing of `threshold` by the inv_snr curve, interpolated
/// linearly in log-log coordinates between the bracketing grid points. Grid
/// points where no triple was observed are ignored. If the first usable point
/// is already at or below the threshold, returns its P with below_range set;
/// if the curve stays above the threshold, returns the last usable P with
/// above_range set. Throws std::invalid_argument for a non-positive threshold
/// and std::runtime_error when no grid point observed any triple.
PStarResult extract_p_star(const SnrCurve& curve, double threshold);

}  // namespace vtrhm
