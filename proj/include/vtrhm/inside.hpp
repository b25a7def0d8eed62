#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "vtrhm/chart.hpp"
#include "vtrhm/grammar.hpp"
#include "vtrhm/split_tables.hpp"

namespace vtrhm {

/// Numeric representation of inside values. `automatic` switches to log
/// probabilities at depth kLogSpaceDepth, where linear products underflow.
enum class SpaceMode { automatic, linear, logspace };

inline constexpr int kLogSpaceDepth = 4;

/// Immutable per-grammar parsing state (split tables + rule indexes), safe to
/// share across sentences and threads.
struct ParserContext {
    int v = 0;
    int L = 0;
    std::shared_ptr<const SplitTables> splits;
    std::vector<LevelIndex> levels;  // [l] = rules expanding chart level l, l = 0..L-1
};

ParserContext make_parser_context(const Grammar& g);

/// Exact layered inside pass. The returned chart satisfies
/// chart.root_values()[alpha] = Pr(x | root alpha) (or its log); sentences no
/// grammar tree yields leave every root entry empty rather than failing.
/// Throws std::invalid_argument when d is outside [2^L, 3^L] or a token is out
/// of range. Cells are filled in a fixed summation order, so results are
/// bit-identical for every worker count.
InsideChart inside(const ParserContext& ctx, const std::vector<int32_t>& tokens,
                   SpaceMode mode = SpaceMode::automatic, int workers = 0);
InsideChart inside(const Grammar& g, const std::vector<int32_t>& tokens,
                   SpaceMode mode = SpaceMode::automatic, int workers = 0);

/// Boolean recognizer over the same layered structure (derivability only).
BooleanChart cyk(const ParserContext& ctx, const std::vector<int32_t>& tokens, int workers = 0);
BooleanChart cyk(const Grammar& g, const std::vector<int32_t>& tokens, int workers = 0);

/// Label posterior of a parsed sentence under the uniform 1/v root prior.
struct ClassPosterior {
    std::vector<double> probs;        // Pr(alpha | x), sums to 1
    double sentence_likelihood = 0;   // Pr(x) = (1/v) sum_alpha Pr(x|alpha)
    double log_likelihood = 0;        // log Pr(x), robust at depth

    double entropy() const;  // H(alpha|x) in nats
};

// Empty when no root label derives the sentence (posterior undefined).
std::optional<ClassPosterior> class_posterior(const InsideChart& chart);

/// Monte-Carlo scan of the mean class entropy over fresh (grammar, sentence)
/// pairs per rule-density grid point.
struct EntropySweepPoint {
    double f = 0;
    int m2 = 0;
    int m3 = 0;
    double mean_normalized_entropy = 0;  // mean of H(alpha|x) / ln v
    double std_error = 0;
    int64_t samples = 0;
};

std::vector<EntropySweepPoint> expected_class_entropy(int v, int L,
                                                      const std::vector<double>& f_grid,
                                                      int n_grammars, int n_sentences,
                                                      uint64_t seed, int workers = 0);

}  // namespace vtrhm
