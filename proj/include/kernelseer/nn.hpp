// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kernelseer/rng.hpp"
#include "kernelseer/tensor.hpp"

namespace kernelseer::nn {

// ---------------------------------------------------------------------------
// Parameter bundles
// ---------------------------------------------------------------------------

// Dense layer y = x.W + b with W stored (input_size, output_size).
struct DenseParams {
    Tensor weights;  // (in, out)
    Tensor bias;     // (out)

    int input_size() const { return weights.dim(0); }
    int output_size() const { return weights.dim(1); }
};

// One LSTM cell. Each gate weight matrix maps the concatenated
// [input; hidden] vector to hidden_size, stored (input+hidden, hidden).
struct LstmCellParams {
    int input_size = 0;
    int hidden_size = 0;
    Tensor w_input, w_forget, w_output, w_cand;  // (input+hidden, hidden)
    Tensor b_input, b_forget, b_output, b_cand;  // (hidden)

    static LstmCellParams zeros(int input_size, int hidden_size);
    void check() const;
};

// 1-D convolution bank: filters (f, c_in, k), bias (f).
struct Conv1dParams {
    int num_filters = 0;
    int kernel_size = 0;
    int stride = 1;
    Tensor filters;  // (f, c_in, k)
    Tensor bias;     // (f)

    int in_channels() const { return filters.dim(1); }
};

// ---------------------------------------------------------------------------
// Forward ops (inference path; gradients live in autodiff.hpp)
// ---------------------------------------------------------------------------

// input: (in) or (rows, in); output matches with last dimension = out.
Tensor dense_forward(const Tensor& input, const DenseParams& params);

// Returns (h, c), each (hidden_size).
std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x_t, const Tensor& h_prev,
                                         const Tensor& c_prev,
                                         const LstmCellParams& params);

struct BilstmResult {
    std::vector<Tensor> activations;  // per step, concat(fwd_h, bwd_h), width 2*hidden
    Tensor last_fwd_h, last_fwd_c;    // forward state after the final step
    Tensor last_bwd_h, last_bwd_c;    // backward state after reaching step 0
};

BilstmResult bilstm_forward(std::span<const Tensor> sequence, const LstmCellParams& fwd,
                            const LstmCellParams& bwd);

// input: (t) or (c_in, t); output (f, o) with o = floor((t - k) / s) + 1.
Tensor conv1d_forward(const Tensor& input, const Conv1dParams& params);

int conv1d_output_length(int t, int kernel_size, int stride);

// Numerically stabilized by max subtraction; output sums to 1.
Tensor softmax(const Tensor& logits);

// -ln(dist[target]) with a 1e-12 probability floor.
double cross_entropy_loss(const Tensor& predicted_dist, int target);

enum class DropoutMode { train, infer };

// Inverted dropout: train mode zeroes with probability `rate` and scales
// survivors by 1/(1-rate); infer mode is the identity.
Tensor dropout(const Tensor& input, double rate, DropoutMode mode, Rng& rng);

// Mask of the same shape as `ref`: 0 with probability rate, else 1/(1-rate).
Tensor dropout_mask(const std::vector<int>& shape, double rate, Rng& rng);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Moments are keyed by parameter name and created lazily on first use.
struct AdamState {
    AdamConfig config;
    long long step = 0;
    std::map<std::string, Tensor> first_moment;
    std::map<std::string, Tensor> second_moment;
};

// Standard Adam update with bias correction over a named parameter map.
void adam_step(std::map<std::string, Tensor>& params,
               const std::map<std::string, Tensor>& grads, AdamState& state);

// Scales all gradients so their global L2 norm is at most max_norm.
void clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm);

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Uniform Xavier/Glorot over (fan_in, fan_out).
Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

// Uniform +-1/sqrt(hidden) for recurrent matrices; forget-gate bias 1.
LstmCellParams lstm_init(int input_size, int hidden_size, Rng& rng);

DenseParams dense_init(int input_size, int output_size, Rng& rng);

Conv1dParams conv1d_init(int in_channels, int num_filters, int kernel_size, int stride,
                         Rng& rng);

}  // namespace kernelseer::nn
