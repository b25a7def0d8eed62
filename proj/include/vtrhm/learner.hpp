#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtrhm/clustering.hpp"
#include "vtrhm/grammar.hpp"
#include "vtrhm/moments.hpp"

namespace vtrhm {

/// Rules inferred for one height: parents are cluster ids, children symbols of
/// the level below (tokens for height 1).
struct LearnedLevel {
    std::vector<std::array<int32_t, 3>> binary;   // (parent, a, b)
    std::vector<std::array<int32_t, 4>> ternary;  // (parent, a, b, c)
};

/// Bottom-up inferred grammar. by_height[h-1] holds the rules whose parents
/// sit h levels above the tokens; on success there are L of them plus a map
/// from inferred root ids to dataset class labels (-1 where no training
/// sentence ever resolved to a unique root of that id).
struct LearnedGrammar {
    int v = 0;
    int L = 0;
    bool success = false;
    std::string failure;
    int failed_height = 0;  // height whose inference failed, 0 if none
    std::vector<LearnedLevel> by_height;
    std::vector<int32_t> root_label;

    const LearnedLevel& rules_at_height(int h) const { return by_height[h - 1]; }
};

struct LearnOptions {
    int v = 0;          // 0 = infer as max token + 1
    int L = 0;          // required
    ClusterOptions cluster;
    int workers = 0;
};

/// One bottom-up Boolean step: candidates for level chart.level-1 from the
/// rules of the corresponding height.
DetectorChart apply_detector_step(const LearnedLevel& rules, const DetectorChart& chart);

/// Candidate tensor at chart level `level` (L = tokens, 0 = roots) for one
/// sentence, by repeated detector steps; requires the heights above `level`
/// to have been learned.
DetectorChart apply_detectors(const LearnedGrammar& lg, const std::vector<int32_t>& tokens,
                              int level);

/// Level-by-level spectral rule inference over a labelled dataset: estimate
/// moments of the current level, cluster pair and triple covariance slices
/// into parent classes, re-encode the dataset one level up, repeat; finally
/// map inferred roots to class labels by majority over training sentences
/// with a unique surviving root. Deterministic given the dataset. Failures
/// (cluster count != v, weak alignment) abort at the failing height with
/// diagnostics; the partially learned levels stay in `by_height`.
LearnedGrammar learn(const Dataset& data, const LearnOptions& opt);

struct Classification {
    int32_t label = -1;
    bool abstain = true;
    int surviving_roots = 0;
};

/// Parses the sentence bottom-up with the learned rules; a unique surviving
/// root with a known label yields that label, anything else abstains.
Classification classify(const LearnedGrammar& lg, const std::vector<int32_t>& tokens);

struct EvalMetrics {
    int64_t n = 0;
    double accuracy = 0.0;  // abstentions count as errors
    double abstain_rate = 0.0;
    // Cross-entropy of the predicted class distribution against the true
    // label, normalized by the random-guessing value ln(v): abstention
    // predicts the uniform distribution (per-sentence loss exactly 1), a
    // correct prediction costs 0, and a wrong prediction is floored at
    // probability v^-2 (costs 2) to keep the proxy finite.
    double normalized_loss = 1.0;
};

EvalMetrics evaluate(const LearnedGrammar& lg, const Dataset& test);

/// True iff the learned rule sets equal the generating grammar's up to one
/// symbol bijection per level (tokens fixed), and the root label map agrees
/// with the root-level bijection.
bool recovery_exact(const LearnedGrammar& lg, const Grammar& g);

struct LearningCurvePoint {
    int64_t P = 0;
    bool learn_success = false;
    bool recovered = false;
    double accuracy = 0.0;
    double abstain_rate = 1.0;
    double normalized_loss = 1.0;
    std::string failure;  // learner diagnostic when learn_success is false
};

/// Trains on nested prefixes of one training stream (sizes from `grid`),
/// evaluating each learned grammar on a fixed held-out set drawn from a
/// separate stream.
std::vector<LearningCurvePoint> learning_curve(const Grammar& g, const std::vector<int64_t>& grid,
                                               int64_t test_P, uint64_t seed,
                                               const LearnOptions& opt);

// Learned grammar <-> JSON: the generating-grammar schema (levels root-first)
// plus "inferred": true, the success flag and the root label map.
std::string learned_to_json(const LearnedGrammar& lg);
LearnedGrammar learned_from_json(const std::string& json_text);
void save_learned(const LearnedGrammar& lg, const std::string& path);
LearnedGrammar load_learned(const std::string& path);

}  // namespace vtrhm
