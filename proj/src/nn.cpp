// SPDX-License-Identifier: Apache-2.0
#include "kernelseer/nn.hpp"

#include <algorithm>
#include <cmath>

namespace kernelseer::nn {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += x.W for one row; W is (in, out).
void accumulate_row_matmul(const double* x, const Tensor& w, double* y) {
    const int in = w.dim(0);
    const int out = w.dim(1);
    const double* wd = w.data();
    for (int i = 0; i < in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* wrow = wd + static_cast<std::size_t>(i) * out;
        for (int j = 0; j < out; ++j) y[j] += xi * wrow[j];
    }
}

}  // namespace

LstmCellParams LstmCellParams::zeros(int input_size, int hidden_size) {
    LstmCellParams p;
    p.input_size = input_size;
    p.hidden_size = hidden_size;
    std::vector<int> wshape{input_size + hidden_size, hidden_size};
    p.w_input = Tensor(wshape);
    p.w_forget = Tensor(wshape);
    p.w_output = Tensor(wshape);
    p.w_cand = Tensor(wshape);
    std::vector<int> bshape{hidden_size};
    p.b_input = Tensor(bshape);
    p.b_forget = Tensor(bshape);
    p.b_output = Tensor(bshape);
    p.b_cand = Tensor(bshape);
    return p;
}

void LstmCellParams::check() const {
    const int rows = input_size + hidden_size;
    for (const Tensor* w : {&w_input, &w_forget, &w_output, &w_cand}) {
        if (w->rank() != 2 || w->dim(0) != rows || w->dim(1) != hidden_size) {
            throw ShapeError("lstm gate weights " + w->shape_string() +
                             " inconsistent with sizes (" + std::to_string(rows) + "," +
                             std::to_string(hidden_size) + ")");
        }
    }
    for (const Tensor* b : {&b_input, &b_forget, &b_output, &b_cand}) {
        if (b->rank() != 1 || b->dim(0) != hidden_size) {
            throw ShapeError("lstm gate bias " + b->shape_string() +
                             " inconsistent with hidden size " +
                             std::to_string(hidden_size));
        }
    }
}

Tensor dense_forward(const Tensor& input, const DenseParams& params) {
    const int in = params.input_size();
    const int out = params.output_size();
    if (params.bias.rank() != 1 || params.bias.dim(0) != out) {
        throw ShapeError("dense bias " + params.bias.shape_string() +
                         " does not match weights " + params.weights.shape_string());
    }
    const int last = input.dim(input.rank() - 1);
    if (last != in) {
        throw ShapeError("dense input " + input.shape_string() +
                         " does not match weights " + params.weights.shape_string());
    }
    const int rows = input.size() / in;
    std::vector<int> out_shape(input.shape());
    out_shape.back() = out;
    Tensor y(out_shape);
    for (int r = 0; r < rows; ++r) {
        double* yr = y.data() + static_cast<std::size_t>(r) * out;
        for (int j = 0; j < out; ++j) yr[j] = params.bias[j];
        accumulate_row_matmul(input.data() + static_cast<std::size_t>(r) * in,
                              params.weights, yr);
    }
    return y;
}

std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x_t, const Tensor& h_prev,
                                         const Tensor& c_prev,
                                         const LstmCellParams& params) {
    params.check();
    if (x_t.size() != params.input_size) {
        throw ShapeError("lstm input " + x_t.shape_string() + " vs input_size " +
                         std::to_string(params.input_size));
    }
    if (h_prev.size() != params.hidden_size || c_prev.size() != params.hidden_size) {
        throw ShapeError("lstm state " + h_prev.shape_string() + "/" +
                         c_prev.shape_string() + " vs hidden_size " +
                         std::to_string(params.hidden_size));
    }
    const int hidden = params.hidden_size;
    // xh = [x; h]
    std::vector<double> xh(static_cast<std::size_t>(params.input_size) + hidden);
    std::copy(x_t.data(), x_t.data() + x_t.size(), xh.begin());
    std::copy(h_prev.data(), h_prev.data() + hidden, xh.begin() + params.input_size);

    auto gate = [&](const Tensor& w, const Tensor& b) {
        std::vector<double> g(b.values());
        accumulate_row_matmul(xh.data(), w, g.data());
        return g;
    };
    std::vector<double> gi = gate(params.w_input, params.b_input);
    std::vector<double> gf = gate(params.w_forget, params.b_forget);
    std::vector<double> go = gate(params.w_output, params.b_output);
    std::vector<double> gc = gate(params.w_cand, params.b_cand);

    Tensor h({hidden});
    Tensor c({hidden});
    for (int j = 0; j < hidden; ++j) {
        const double i = sigmoid(gi[j]);
        const double f = sigmoid(gf[j]);
        const double o = sigmoid(go[j]);
        const double g = std::tanh(gc[j]);
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * std::tanh(c[j]);
    }
    return {std::move(h), std::move(c)};
}

BilstmResult bilstm_forward(std::span<const Tensor> sequence, const LstmCellParams& fwd,
                            const LstmCellParams& bwd) {
    if (sequence.empty()) {
        throw ParameterError("bilstm_forward: empty input sequence");
    }
    const int steps = static_cast<int>(sequence.size());
    for (int i = 1; i < steps; ++i) {
        require_same_shape(sequence[0], sequence[i], "bilstm_forward");
    }
    std::vector<Tensor> fwd_h(steps), bwd_h(steps);
    Tensor h({fwd.hidden_size}), c({fwd.hidden_size});
    for (int i = 0; i < steps; ++i) {
        std::tie(h, c) = lstm_cell_step(sequence[i], h, c, fwd);
        fwd_h[i] = h;
    }
    BilstmResult out;
    out.last_fwd_h = h;
    out.last_fwd_c = c;
    h = Tensor({bwd.hidden_size});
    c = Tensor({bwd.hidden_size});
    for (int i = steps - 1; i >= 0; --i) {
        std::tie(h, c) = lstm_cell_step(sequence[i], h, c, bwd);
        bwd_h[i] = h;
    }
    out.last_bwd_h = h;
    out.last_bwd_c = c;
    out.activations.resize(steps);
    for (int i = 0; i < steps; ++i) {
        Tensor a({fwd.hidden_size + bwd.hidden_size});
        std::copy(fwd_h[i].data(), fwd_h[i].data() + fwd.hidden_size, a.data());
        std::copy(bwd_h[i].data(), bwd_h[i].data() + bwd.hidden_size,
                  a.data() + fwd.hidden_size);
        out.activations[i] = std::move(a);
    }
    return out;
}

int conv1d_output_length(int t, int kernel_size, int stride) {
    return (t - kernel_size) / stride + 1;
}

Tensor conv1d_forward(const Tensor& input, const Conv1dParams& params) {
    if (params.stride < 1) throw ParameterError("conv1d stride must be >= 1");
    const Tensor& in2d = input;
    int c_in, t;
    if (input.rank() == 1) {
        c_in = 1;
        t = input.dim(0);
    } else if (input.rank() == 2) {
        c_in = input.dim(0);
        t = input.dim(1);
    } else {
        throw ShapeError("conv1d input must be (t) or (c_in, t), got " +
                         input.shape_string());
    }
    if (params.filters.rank() != 3 || params.filters.dim(0) != params.num_filters ||
        params.filters.dim(1) != c_in || params.filters.dim(2) != params.kernel_size) {
        throw ShapeError("conv1d filters " + params.filters.shape_string() +
                         " inconsistent with (f=" + std::to_string(params.num_filters) +
                         ", c_in=" + std::to_string(c_in) +
                         ", k=" + std::to_string(params.kernel_size) + ")");
    }
    if (t < params.kernel_size) {
        throw ShapeError("conv1d input length " + std::to_string(t) +
                         " shorter than kernel size " +
                         std::to_string(params.kernel_size));
    }
    const int o = conv1d_output_length(t, params.kernel_size, params.stride);
    Tensor out({params.num_filters, o});
    for (int f = 0; f < params.num_filters; ++f) {
        for (int j = 0; j < o; ++j) {
            double acc = params.bias[f];
            const int start = j * params.stride;
            for (int ch = 0; ch < c_in; ++ch) {
                const double* row = in2d.data() + static_cast<std::size_t>(ch) * t;
                for (int u = 0; u < params.kernel_size; ++u) {
                    acc += params.filters.at(f, ch, u) * row[start + u];
                }
            }
            out.at(f, j) = acc;
        }
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    if (logits.empty()) throw ParameterError("softmax: empty input");
    Tensor out(logits.shape());
    const double mx = *std::max_element(logits.values().begin(), logits.values().end());
    double sum = 0.0;
    for (int i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (int i = 0; i < out.size(); ++i) out[i] /= sum;
    return out;
}

double cross_entropy_loss(const Tensor& predicted_dist, int target) {
    if (target < 0 || target >= predicted_dist.size()) {
        throw IndexError("cross_entropy_loss: target " + std::to_string(target) +
                         " out of range [0," + std::to_string(predicted_dist.size()) +
                         ")");
    }
    return -std::log(std::max(predicted_dist[target], 1e-12));
}

Tensor dropout_mask(const std::vector<int>& shape, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ParameterError("dropout rate must be in [0,1), got " +
                             std::to_string(rate));
    }
    Tensor mask(shape);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (int i = 0; i < mask.size(); ++i) {
        mask[i] = (rng.uniform() < rate) ? 0.0 : keep_scale;
    }
    return mask;
}

Tensor dropout(const Tensor& input, double rate, DropoutMode mode, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ParameterError("dropout rate must be in [0,1), got " +
                             std::to_string(rate));
    }
    if (mode == DropoutMode::infer || rate == 0.0) return input;
    Tensor mask = dropout_mask(input.shape(), rate, rng);
    Tensor out(input.shape());
    for (int i = 0; i < input.size(); ++i) out[i] = input[i] * mask[i];
    return out;
}

void adam_step(std::map<std::string, Tensor>& params,
               const std::map<std::string, Tensor>& grads, AdamState& state) {
    state.step += 1;
    const AdamConfig& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        require_same_shape(p, g, "adam_step");
        Tensor& m = state.first_moment.try_emplace(name, Tensor(p.shape())).first->second;
        Tensor& v = state.second_moment.try_emplace(name, Tensor(p.shape())).first->second;
        require_same_shape(p, m, "adam_step moment");
        for (int i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    }
}

void clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        for (int i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads) {
        for (int i = 0; i < g.size(); ++i) g[i] *= scale;
    }
}

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
    return t;
}

LstmCellParams lstm_init(int input_size, int hidden_size, Rng& rng) {
    LstmCellParams p = LstmCellParams::zeros(input_size, hidden_size);
    const double limit = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    for (Tensor* w : {&p.w_input, &p.w_forget, &p.w_output, &p.w_cand}) {
        for (int i = 0; i < w->size(); ++i) (*w)[i] = rng.uniform(-limit, limit);
    }
    p.b_forget.fill(1.0);
    return p;
}

DenseParams dense_init(int input_size, int output_size, Rng& rng) {
    DenseParams p;
    p.weights = xavier_uniform({input_size, output_size}, input_size, output_size, rng);
    p.bias = Tensor({output_size});
    return p;
}

Conv1dParams conv1d_init(int in_channels, int num_filters, int kernel_size, int stride,
                         Rng& rng) {
    Conv1dParams p;
    p.num_filters = num_filters;
    p.kernel_size = kernel_size;
    p.stride = stride;
    const int fan_in = in_channels * kernel_size;
    const int fan_out = num_filters * kernel_size;
    p.filters = xavier_uniform({num_filters, in_channels, kernel_size}, fan_in, fan_out, rng);
    p.bias = Tensor({num_filters});
    return p;
}

}  // namespace kernelseer::nn
