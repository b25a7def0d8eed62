#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vtrhm/rng.hpp"

namespace vtrhm {

/// Parameters of a random layered grammar.
///
/// Symbols live in L+1 disjoint vocabularies of size v, identified with the
/// integers 0..v-1 at every level. Each nonterminal owns m2 binary and m3
/// ternary production rules into the vocabulary one level down; an expansion
/// picks a binary rule with probability p2 (each of the m2 equally likely) or
/// a ternary one with probability p3 = 1-p2.
struct GrammarParams {
    int v = 8;
    int L = 2;
    int m2 = 2;
    int m3 = 4;
    double p2 = 0.5;
    double p3 = 0.5;
    uint64_t seed = 0;

    double f2() const { return static_cast<double>(m2) / v; }
    double f3() const { return static_cast<double>(m3) / (static_cast<double>(v) * v); }
};

// Nearest integer rule counts for a target rule fraction f (clamped to >= 1),
// i.e. m2 ~= f*v, m3 ~= f*v^2.
GrammarParams params_from_f(int v, int L, double f, uint64_t seed, double p2 = 0.5);

/// One level of productions. Parent z owns binary[z*m2 .. (z+1)*m2) and
/// ternary[z*m3 .. (z+1)*m3). Right-hand sides are tuples of child symbols;
/// within a level and arity all tuples are pairwise distinct across parents,
/// which is what makes single-level rule application unambiguous.
struct RuleLevel {
    int m2 = 0;
    int m3 = 0;
    std::vector<std::array<int32_t, 2>> binary;
    std::vector<std::array<int32_t, 3>> ternary;

    int parent_of_binary(int rule_index) const { return rule_index / m2; }
    int parent_of_ternary(int rule_index) const { return rule_index / m3; }
};

struct Grammar {
    GrammarParams params;
    // levels[0] expands the root vocabulary; levels[L-1] produces tokens.
    std::vector<RuleLevel> levels;

    int v() const { return params.v; }
    int L() const { return params.L; }
    // Rules whose parents sit at height h above the tokens (h = 1..L; height-1
    // parents produce tokens, height-L parents are roots).
    const RuleLevel& rules_at_height(int h) const { return levels[params.L - h]; }
};

/// Complete sampled derivation. symbols[l] is the symbol sequence at level l
/// (symbols[0] = {root}, symbols[L] = tokens); arities[l][k] in {2,3} is the
/// branching chosen when expanding symbols[l][k].
struct Derivation {
    int32_t root = 0;
    std::vector<std::vector<int32_t>> symbols;
    std::vector<std::vector<int8_t>> arities;

    const std::vector<int32_t>& tokens() const { return symbols.back(); }
};

struct Sentence {
    int32_t label = 0;
    std::vector<int32_t> tokens;
};

using Dataset = std::vector<Sentence>;

/// Draws the rule set: per level and arity, v*m_s distinct right-hand-side
/// tuples sampled uniformly without replacement from the v^s possibilities and
/// assigned to parents in contiguous blocks of m_s (draw order is exchangeable,
/// so the block partition is statistically equivalent to any other fixed one).
/// Throws std::invalid_argument when the parameters are infeasible
/// (m2 > v, m3 > v^2, nonpositive sizes, p2+p3 != 1).
Grammar generate_grammar(const GrammarParams& params);

// Top-down sampling: uniform root, then independent arity/rule choices.
Derivation sample_derivation(const Grammar& g, Rng& rng);

/// P labelled sentences drawn from derivation sub-streams indexed by position
/// in the dataset, so any prefix of a dataset is itself reproducible and the
/// result does not depend on worker count. Throws std::invalid_argument for
/// P <= 0.
Dataset make_dataset(const Grammar& g, int64_t P, uint64_t seed, int workers = 0);

// Derived stream tags (fork path roots under the grammar seed).
inline constexpr uint64_t kStreamRules = 1;
inline constexpr uint64_t kStreamData = 2;

}  // namespace vtrhm
