// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kernelseer/constraints.hpp"
#include "kernelseer/problem.hpp"
#include "kernelseer/tensor.hpp"

namespace kernelseer {

// One field's (or one output parameter's) value <-> token-id map.
// Ids are dense in [0, size) and follow ascending value order for input
// fields; output parameters keep their kernel-spec value order.
struct FieldVocab {
    std::string name;
    std::vector<std::int64_t> values;

    int size() const { return static_cast<int>(values.size()); }
    int id_of(std::int64_t value) const;  // -1 if absent
    std::int64_t value_of(int id) const;  // throws IndexError out of range
    // Closest known value by absolute distance; smaller value wins ties.
    std::int64_t nearest(std::int64_t value) const;
};

struct Sample;  // data.hpp

// Per-position token maps for one kernel (and one dataset's input ranges).
// Input fields use the fixed [n, c, h, w, k, y, x] order. Output positions
// mirror the kernel spec's parameter order. The decoder-feedback one-hot
// space reserves slot 0 for the GO token, then one slot per output token.
class Vocabulary {
public:
    static constexpr int kGoToken = 0;

    Vocabulary() = default;
    Vocabulary(std::vector<FieldVocab> input_fields, std::vector<FieldVocab> output_params);

    const std::vector<FieldVocab>& input_fields() const { return input_fields_; }
    const std::vector<FieldVocab>& output_params() const { return output_params_; }
    const FieldVocab& input_field(int i) const { return input_fields_[static_cast<std::size_t>(i)]; }
    const FieldVocab& output_param(int i) const { return output_params_[static_cast<std::size_t>(i)]; }
    int num_output_positions() const { return static_cast<int>(output_params_.size()); }

    // One-hot widths and slot offsets for the flattened token spaces.
    int input_onehot_width() const { return input_width_; }
    int input_offset(int field) const { return input_offsets_[static_cast<std::size_t>(field)]; }
    int feedback_onehot_width() const { return feedback_width_; }
    int feedback_offset(int position) const { return feedback_offsets_[static_cast<std::size_t>(position)]; }

private:
    std::vector<FieldVocab> input_fields_;
    std::vector<FieldVocab> output_params_;
    std::vector<int> input_offsets_;
    std::vector<int> feedback_offsets_;
    int input_width_ = 0;
    int feedback_width_ = 0;
};

// Input vocabularies hold exactly the distinct values observed per field,
// sorted ascending; output vocabularies are the kernel spec's value sets.
// Dataset output values outside the spec are a validation error.
Vocabulary build_vocab(const KernelSpec& spec, const std::vector<Sample>& dataset);

struct TokenSequence {
    enum class Role { input, output };
    Role role = Role::input;
    std::vector<int> ids;

    int length() const { return static_cast<int>(ids.size()); }
    bool operator==(const TokenSequence&) const = default;
};

// Fixed field order [n, c, h, w, k, y, x]; unseen values raise a
// ValidationError naming the field (or snap to the nearest known value
// when allow_nearest is set).
TokenSequence encode_problem(const ProblemDescriptor& d, const Vocabulary& v,
                             bool allow_nearest = false);
ProblemDescriptor decode_problem(const TokenSequence& t, const Vocabulary& v,
                                 Precision precision = Precision::full);

ParamMap decode_params(const TokenSequence& t, const KernelSpec& spec,
                       const Vocabulary& v);
TokenSequence encode_params(const ParamMap& params, const KernelSpec& spec,
                            const Vocabulary& v);

// Vector with exactly one 1.0 at index `token`.
nn::Tensor one_hot(int token, int size);

// One-hot over the flattened input space (offset of field + token id).
nn::Tensor input_onehot(const Vocabulary& v, int field, int token);
// One-hot over the decoder-feedback space; position -1 encodes GO.
nn::Tensor feedback_onehot(const Vocabulary& v, int position, int token);

}  // namespace kernelseer
