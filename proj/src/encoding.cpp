// SPDX-License-Identifier: Apache-2.0
#include "kernelseer/encoding.hpp"

#include <algorithm>
#include <set>

#include "kernelseer/data.hpp"

namespace kernelseer {

int FieldVocab::id_of(std::int64_t value) const {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] == value) return static_cast<int>(i);
    }
    return -1;
}

std::int64_t FieldVocab::value_of(int id) const {
    if (id < 0 || id >= size()) {
        throw IndexError("token id " + std::to_string(id) + " out of range for " + name +
                         " (size " + std::to_string(size()) + ")");
    }
    return values[static_cast<std::size_t>(id)];
}

std::int64_t FieldVocab::nearest(std::int64_t value) const {
    std::int64_t best = values.front();
    for (std::int64_t v : values) {
        const std::int64_t dv = v > value ? v - value : value - v;
        const std::int64_t db = best > value ? best - value : value - best;
        if (dv < db || (dv == db && v < best)) best = v;
    }
    return best;
}

Vocabulary::Vocabulary(std::vector<FieldVocab> input_fields,
                       std::vector<FieldVocab> output_params)
    : input_fields_(std::move(input_fields)), output_params_(std::move(output_params)) {
    input_offsets_.reserve(input_fields_.size());
    for (const FieldVocab& f : input_fields_) {
        input_offsets_.push_back(input_width_);
        input_width_ += f.size();
    }
    feedback_width_ = 1;  // GO slot
    feedback_offsets_.reserve(output_params_.size());
    for (const FieldVocab& f : output_params_) {
        feedback_offsets_.push_back(feedback_width_);
        feedback_width_ += f.size();
    }
}

Vocabulary build_vocab(const KernelSpec& spec, const std::vector<Sample>& dataset) {
    if (dataset.empty()) {
        throw ParameterError("build_vocab: dataset is empty");
    }
    std::vector<FieldVocab> inputs(kNumInputFields);
    std::array<std::set<std::int64_t>, kNumInputFields> seen;
    for (const Sample& s : dataset) {
        for (int f = 0; f < kNumInputFields; ++f) {
            seen[static_cast<std::size_t>(f)].insert(descriptor_field(s.descriptor, f));
        }
        for (const auto& p : spec.params) {
            auto it = s.params.find(p.name);
            if (it == s.params.end()) {
                throw ValidationError("sample missing parameter " + p.name, p.name);
            }
            if (std::find(p.values.begin(), p.values.end(), it->second) == p.values.end()) {
                throw ValidationError("value " + std::to_string(it->second) +
                                          " of parameter " + p.name +
                                          " is outside the legal set for kernel " +
                                          spec.name,
                                      p.name);
            }
        }
    }
    for (int f = 0; f < kNumInputFields; ++f) {
        inputs[static_cast<std::size_t>(f)].name = kInputFieldNames[static_cast<std::size_t>(f)];
        inputs[static_cast<std::size_t>(f)].values.assign(seen[static_cast<std::size_t>(f)].begin(),
                                                          seen[static_cast<std::size_t>(f)].end());
    }
    std::vector<FieldVocab> outputs;
    outputs.reserve(spec.params.size());
    for (const auto& p : spec.params) outputs.push_back(FieldVocab{p.name, p.values});
    return Vocabulary(std::move(inputs), std::move(outputs));
}

TokenSequence encode_problem(const ProblemDescriptor& d, const Vocabulary& v,
                             bool allow_nearest) {
    d.check();
    TokenSequence t;
    t.role = TokenSequence::Role::input;
    t.ids.reserve(kNumInputFields);
    for (int f = 0; f < kNumInputFields; ++f) {
        const FieldVocab& vocab = v.input_field(f);
        std::int64_t value = descriptor_field(d, f);
        int id = vocab.id_of(value);
        if (id < 0 && allow_nearest) {
            value = vocab.nearest(value);
            id = vocab.id_of(value);
        }
        if (id < 0) {
            std::string known;
            const std::int64_t near = vocab.nearest(value);
            throw ValidationError("value " + std::to_string(descriptor_field(d, f)) +
                                      " of field " + vocab.name +
                                      " is not in the vocabulary (nearest known: " +
                                      std::to_string(near) + ")",
                                  vocab.name);
        }
        t.ids.push_back(id);
    }
    return t;
}

ProblemDescriptor decode_problem(const TokenSequence& t, const Vocabulary& v,
                                 Precision precision) {
    if (t.length() != kNumInputFields) {
        throw ParameterError("decode_problem: expected " +
                             std::to_string(kNumInputFields) + " tokens, got " +
                             std::to_string(t.length()));
    }
    ProblemDescriptor d;
    d.precision = precision;
    for (int f = 0; f < kNumInputFields; ++f) {
        set_descriptor_field(d, f, v.input_field(f).value_of(t.ids[static_cast<std::size_t>(f)]));
    }
    return d;
}

ParamMap decode_params(const TokenSequence& t, const KernelSpec& spec,
                       const Vocabulary& v) {
    if (t.length() != spec.num_params()) {
        throw ParameterError("decode_params: sequence length " +
                             std::to_string(t.length()) + " vs " +
                             std::to_string(spec.num_params()) + " parameters of " +
                             spec.name);
    }
    ParamMap out;
    for (int i = 0; i < spec.num_params(); ++i) {
        out[spec.params[static_cast<std::size_t>(i)].name] =
            v.output_param(i).value_of(t.ids[static_cast<std::size_t>(i)]);
    }
    return out;
}

TokenSequence encode_params(const ParamMap& params, const KernelSpec& spec,
                            const Vocabulary& v) {
    if (static_cast<int>(params.size()) != spec.num_params()) {
        throw ParameterError("encode_params: map size " + std::to_string(params.size()) +
                             " vs " + std::to_string(spec.num_params()) +
                             " parameters of " + spec.name);
    }
    TokenSequence t;
    t.role = TokenSequence::Role::output;
    for (int i = 0; i < spec.num_params(); ++i) {
        const std::string& name = spec.params[static_cast<std::size_t>(i)].name;
        auto it = params.find(name);
        if (it == params.end()) {
            throw ValidationError("encode_params: map missing parameter " + name, name);
        }
        const int id = v.output_param(i).id_of(it->second);
        if (id < 0) {
            throw ValidationError("value " + std::to_string(it->second) +
                                      " of parameter " + name + " is not in the vocabulary",
                                  name);
        }
        t.ids.push_back(id);
    }
    return t;
}

nn::Tensor one_hot(int token, int size) {
    if (token < 0 || token >= size) {
        throw IndexError("one_hot: token " + std::to_string(token) + " out of range [0," +
                         std::to_string(size) + ")");
    }
    nn::Tensor t({size});
    t[token] = 1.0;
    return t;
}

nn::Tensor input_onehot(const Vocabulary& v, int field, int token) {
    const int width = v.input_onehot_width();
    const int slot = v.input_offset(field) + token;
    if (token < 0 || token >= v.input_field(field).size()) {
        throw IndexError("input_onehot: token " + std::to_string(token) +
                         " out of range for field " + v.input_field(field).name);
    }
    return one_hot(slot, width);
}

nn::Tensor feedback_onehot(const Vocabulary& v, int position, int token) {
    if (position < 0) return one_hot(Vocabulary::kGoToken, v.feedback_onehot_width());
    if (token < 0 || token >= v.output_param(position).size()) {
        throw IndexError("feedback_onehot: token " + std::to_string(token) +
                         " out of range for position " + std::to_string(position));
    }
    return one_hot(v.feedback_offset(position) + token, v.feedback_onehot_width());
}

}  // namespace kernelseer
