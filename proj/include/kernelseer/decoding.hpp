// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "kernelseer/constraints.hpp"
#include "kernelseer/models.hpp"

namespace kernelseer {

struct BeamHypothesis {
    TokenSequence prefix;
    double log_prob = 0.0;
    DecoderState state;  // decoder state before consuming prefix.back()
};

struct ScoredSequence {
    TokenSequence tokens;
    double log_prob = 0.0;
};

TokenSequence greedy_decode(const SequencePredictor& predictor,
                            const TokenSequence& input);

// Top-k token sequences by accumulated log probability, sorted descending
// with ties broken by lexicographically smaller token sequence.
std::vector<ScoredSequence> beam_search(const SequencePredictor& predictor,
                                        const TokenSequence& input, int beam_width);

// Beam search that discards a candidate the moment a predicate rejects its
// partially decoded parameter map. Throws BeamExhaustedError naming the
// discarding predicate when every candidate dies at some step.
std::vector<ScoredSequence> constrained_beam_search(
    const SequencePredictor& predictor, const TokenSequence& input, int beam_width,
    std::span<const ConstraintPredicate> predicates, const ProblemDescriptor& descriptor);

}  // namespace kernelseer
