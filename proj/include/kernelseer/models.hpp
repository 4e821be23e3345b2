// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kernelseer/encoding.hpp"
#include "kernelseer/nn.hpp"

namespace kernelseer {

enum class ModelVariant { enc_dec, attn, attn2, hybrid, hybrid2 };

std::string variant_label(ModelVariant v);  // "enc-dec", "attn", "attn-2", ...
ModelVariant variant_from_label(const std::string& s);

struct ConvLayerSpec {
    int filters = 64;
    int kernel_size = 3;
    int stride = 1;
    bool operator==(const ConvLayerSpec&) const = default;
};

struct ModelConfig {
    ModelVariant variant = ModelVariant::hybrid2;
    int encoder_state_size = 256;     // |e|, enc-dec variant
    int pre_attention_size = 256;     // n_a, per direction
    int post_attention_size = 512;    // n_s
    int attention_dense_nodes = 2;    // n_d
    std::vector<ConvLayerSpec> conv_layers = {{64, 3, 1}, {32, 3, 1}};
    int decoder_cell_size = 256;      // hybrid bi-LSTM cell, per direction
    double dropout = 0.2;
    double recurrent_dropout = 0.2;

    bool operator==(const ModelConfig&) const = default;
    void check() const;
};

// A trained (or freshly initialized) model: named weight tensors plus
// everything needed to run it later (config, kernel schema, vocabulary).
struct ModelParams {
    ModelConfig config;
    std::string kernel;
    Precision precision = Precision::full;
    Vocabulary vocab;
    std::map<std::string, nn::Tensor> tensors;

    int num_output_positions() const { return vocab.num_output_positions(); }
};

// Reconstructs the kernel schema carried inside the params.
KernelSpec spec_of(const ModelParams& params);

ModelParams init_model(const ModelConfig& config, const KernelSpec& spec,
                       const Vocabulary& vocab, Precision precision, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

// Per-input work shared by all beam hypotheses (encoder pass).
struct EncodedInput {
    std::vector<nn::Tensor> activations;  // attention variants
    nn::Tensor h, c;                      // enc-dec thought vector
    std::vector<nn::Tensor> dists;        // hybrid variants: all positions at once
};

// Per-hypothesis decoder state; copied when a beam hypothesis forks.
struct DecoderState {
    nn::Tensor h, c;
    int position = 0;
};

// Stepping facade over a model: encode once per input, then produce one
// output distribution per position. Read-only and safe to share.
class SequencePredictor {
public:
    explicit SequencePredictor(const ModelParams& params);

    int num_positions() const;
    int vocab_size(int position) const;
    const ModelParams& params() const { return *params_; }

    EncodedInput encode(const TokenSequence& input) const;
    DecoderState initial_state(const EncodedInput& enc) const;

    // Distribution for state.position; prev_token is the token emitted at
    // the previous position (ignored by variants without output feedback,
    // and by position 0, which always consumes GO). Advances the state.
    nn::Tensor step(const EncodedInput& enc, DecoderState& state, int prev_token) const;

private:
    const ModelParams* params_;
};

// Full forward pass in infer mode. With teacher tokens the decoder consumes
// them as feedback; otherwise it feeds back its own argmax.
std::vector<nn::Tensor> model_forward(const ModelParams& params, const TokenSequence& input,
                                      const std::vector<int>* teacher = nullptr);

// ---------------------------------------------------------------------------
// Attention and hybrid-encoder building blocks
// ---------------------------------------------------------------------------

// Energy network: Dense(n_d, tanh) on [s_prev; a_t'] followed by a linear
// map to one scalar per input step, softmaxed into a distribution.
struct AttentionScoring {
    nn::DenseParams hidden;  // (state + activation width, n_d)
    nn::DenseParams out;     // (n_d, 1)
};

nn::Tensor attention_weights(const nn::Tensor& s_prev,
                             std::span<const nn::Tensor> activations,
                             const AttentionScoring& scoring);

// C = sum_t alpha[t] * activations[t].
nn::Tensor context_vector(const nn::Tensor& alpha,
                          std::span<const nn::Tensor> activations);

// Conv stack over the one-hot input matrix, flattened row-major to f*o.
nn::Tensor hybrid_encode(const ModelParams& params, const TokenSequence& input);

// Layered decoder: bi-LSTM-1 over the repeated encoded vector, final
// forward/backward states seeding bi-LSTM-2, per-position heads.
std::vector<nn::Tensor> hybrid2_decode(const ModelParams& params, const nn::Tensor& encoded);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct Sample;

// Teacher-forced mean cross entropy (no dropout); shared by tests and the
// finite-difference checks.
double model_loss(const ModelParams& params, const TokenSequence& input,
                  const TokenSequence& target);

// Same loss with gradients. The rng drives dropout masks; pass nullptr for
// a deterministic pass without dropout.
std::pair<double, std::map<std::string, nn::Tensor>> model_loss_gradients(
    const ModelParams& params, const TokenSequence& input, const TokenSequence& target,
    Rng* dropout_rng);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;  // average accuracy, percent, greedy decode
    double test_loss = 0.0;
    double test_accuracy = 0.0;
};

struct TrainOptions {
    int epochs = 30;
    int batch_size = 32;
    std::uint64_t seed = 1;
    int threads = 1;
    double learning_rate = 1e-3;
    double clip_norm = 5.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> log;
};

TrainResult train_model(const ModelConfig& config, const KernelSpec& spec,
                        const Vocabulary& vocab, Precision precision,
                        const std::vector<Sample>& train_set,
                        const std::vector<Sample>& test_set, const TrainOptions& options,
                        const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace kernelseer
