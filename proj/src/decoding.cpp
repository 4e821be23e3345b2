// SPDX-License-Identifier: Apache-2.0
#include "kernelseer/decoding.hpp"

#include <algorithm>
#include <cmath>

namespace kernelseer {

namespace {

bool better(const ScoredSequence& a, const ScoredSequence& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.tokens.ids < b.tokens.ids;  // lexicographic tie-break
}

struct Candidate {
    TokenSequence prefix;
    double log_prob = 0.0;
    DecoderState state;

    bool operator<(const Candidate& other) const {
        if (log_prob != other.log_prob) return log_prob > other.log_prob;
        return prefix.ids < other.prefix.ids;
    }
};

std::vector<ScoredSequence> beam_search_impl(
    const SequencePredictor& predictor, const TokenSequence& input, int beam_width,
    std::span<const ConstraintPredicate> predicates, const ProblemDescriptor* descriptor) {
    if (beam_width < 1) {
        throw ParameterError("beam width must be >= 1, got " + std::to_string(beam_width));
    }
    const EncodedInput enc = predictor.encode(input);
    const int t_out = predictor.num_positions();

    const bool constrained = !predicates.empty();
    KernelSpec spec;
    if (constrained) spec = spec_of(predictor.params());
    const Vocabulary& vocab = predictor.params().vocab;

    std::vector<Candidate> beams(1);
    beams[0].prefix.role = TokenSequence::Role::output;
    beams[0].state = predictor.initial_state(enc);

    for (int pos = 0; pos < t_out; ++pos) {
        std::vector<Candidate> children;
        children.reserve(beams.size() * static_cast<std::size_t>(predictor.vocab_size(pos)));
        std::string last_rejecting;
        for (Candidate& hyp : beams) {
            const int prev = hyp.prefix.ids.empty() ? -1 : hyp.prefix.ids.back();
            DecoderState advanced = hyp.state;
            const nn::Tensor dist = predictor.step(enc, advanced, prev);
            for (int token = 0; token < dist.size(); ++token) {
                Candidate child;
                child.prefix = hyp.prefix;
                child.prefix.ids.push_back(token);
                child.log_prob =
                    hyp.log_prob + std::log(std::max(dist[token], 1e-300));
                child.state = advanced;
                if (constrained) {
                    ParamMap partial;
                    for (std::size_t i = 0; i < child.prefix.ids.size(); ++i) {
                        partial[spec.params[i].name] =
                            vocab.output_param(static_cast<int>(i))
                                .value_of(child.prefix.ids[i]);
                    }
                    const bool final_step = pos == t_out - 1;
                    bool rejected = false;
                    for (const ConstraintPredicate& pred : predicates) {
                        if (pred.full_sequence_only && !final_step) continue;
                        if (!pred.evaluate(*descriptor, partial)) {
                            rejected = true;
                            last_rejecting = pred.name;
                            break;
                        }
                    }
                    if (rejected) continue;
                }
                children.push_back(std::move(child));
            }
        }
        if (children.empty()) {
            throw BeamExhaustedError(
                "constrained beam search: every candidate at position " +
                    std::to_string(pos) + " was rejected (last rejecting predicate: " +
                    last_rejecting + ")",
                last_rejecting, pos);
        }
        std::sort(children.begin(), children.end());
        if (static_cast<int>(children.size()) > beam_width) {
            children.resize(static_cast<std::size_t>(beam_width));
        }
        beams = std::move(children);
    }

    std::vector<ScoredSequence> out;
    out.reserve(beams.size());
    for (Candidate& c : beams) {
        out.push_back({std::move(c.prefix), c.log_prob});
    }
    std::sort(out.begin(), out.end(), better);
    return out;
}

}  // namespace

TokenSequence greedy_decode(const SequencePredictor& predictor,
                            const TokenSequence& input) {
    const EncodedInput enc = predictor.encode(input);
    DecoderState state = predictor.initial_state(enc);
    TokenSequence out;
    out.role = TokenSequence::Role::output;
    int prev = -1;
    for (int pos = 0; pos < predictor.num_positions(); ++pos) {
        const nn::Tensor dist = predictor.step(enc, state, prev);
        int best = 0;
        for (int i = 1; i < dist.size(); ++i) {
            if (dist[i] > dist[best]) best = i;
        }
        out.ids.push_back(best);
        prev = best;
    }
    return out;
}

std::vector<ScoredSequence> beam_search(const SequencePredictor& predictor,
                                        const TokenSequence& input, int beam_width) {
    return beam_search_impl(predictor, input, beam_width, {}, nullptr);
}

std::vector<ScoredSequence> constrained_beam_search(
    const SequencePredictor& predictor, const TokenSequence& input, int beam_width,
    std::span<const ConstraintPredicate> predicates, const ProblemDescriptor& descriptor) {
    return beam_search_impl(predictor, input, beam_width, predicates, &descriptor);
}

}  // namespace kernelseer
