// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kernelseer/constraints.hpp"
#include "kernelseer/data.hpp"
#include "kernelseer/encoding.hpp"
#include "kernelseer/models.hpp"
#include "kernelseer/rng.hpp"
#include "kernelseer/tensor.hpp"

namespace ktest {

using kernelseer::FieldVocab;
using kernelseer::KernelSpec;
using kernelseer::ModelConfig;
using kernelseer::ModelParams;
using kernelseer::ModelVariant;
using kernelseer::Precision;
using kernelseer::Rng;
using kernelseer::TokenSequence;
using kernelseer::Vocabulary;
using kernelseer::nn::Tensor;

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
    return t;
}

inline bool close(double a, double b, double tol = 1e-9) { return std::fabs(a - b) <= tol; }

inline double max_rel_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

// Central finite difference d f / d x through an arbitrary scalar function.
inline double central_difference(const std::function<double(double)>& f, double x,
                                 double eps = 1e-5) {
    return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

// A tiny kernel schema for beam-search oracles: arity positions, each with
// `size` legal values 0..size-1.
inline KernelSpec tiny_spec(int arity, const std::vector<int>& sizes) {
    KernelSpec spec;
    spec.name = "TinyKernel";
    for (int i = 0; i < arity; ++i) {
        KernelSpec::Param p;
        p.name = "p" + std::to_string(i);
        for (int v = 0; v < sizes[static_cast<std::size_t>(i)]; ++v) p.values.push_back(v);
        spec.params.push_back(std::move(p));
    }
    return spec;
}

// Vocabulary whose input fields each hold two values; enough to feed a model.
inline Vocabulary tiny_vocab(const KernelSpec& spec) {
    std::vector<FieldVocab> inputs;
    for (int f = 0; f < kernelseer::kNumInputFields; ++f) {
        inputs.push_back(FieldVocab{kernelseer::kInputFieldNames[static_cast<std::size_t>(f)],
                                    {1, 2}});
    }
    std::vector<FieldVocab> outputs;
    for (const auto& p : spec.params) outputs.push_back(FieldVocab{p.name, p.values});
    return Vocabulary(std::move(inputs), std::move(outputs));
}

inline ModelParams tiny_model(ModelVariant variant, const KernelSpec& spec,
                              std::uint64_t seed, int cell = 6) {
    ModelConfig config;
    config.variant = variant;
    config.encoder_state_size = cell;
    config.pre_attention_size = cell;
    config.post_attention_size = cell;
    config.attention_dense_nodes = 2;
    config.decoder_cell_size = cell;
    config.conv_layers = {{4, 3, 1}, {3, 3, 1}};
    config.dropout = 0.0;
    config.recurrent_dropout = 0.0;
    const Vocabulary vocab = tiny_vocab(spec);
    return kernelseer::init_model(config, spec, vocab, Precision::full, seed);
}

inline TokenSequence tiny_input(std::uint64_t seed) {
    Rng rng(seed);
    TokenSequence t;
    t.role = TokenSequence::Role::input;
    for (int f = 0; f < kernelseer::kNumInputFields; ++f) {
        t.ids.push_back(static_cast<int>(rng.uniform_int(2)));
    }
    return t;
}

}  // namespace ktest
