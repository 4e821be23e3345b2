// SPDX-License-Identifier: Apache-2.0
#include "kernelseer/models.hpp"

#include <algorithm>
#include <cmath>

#include "kernelseer/autodiff.hpp"
#include "kernelseer/data.hpp"
#include "kernelseer/parallel.hpp"

namespace kernelseer {

using nn::Tensor;

std::string variant_label(ModelVariant v) {
    switch (v) {
        case ModelVariant::enc_dec: return "enc-dec";
        case ModelVariant::attn: return "attn";
        case ModelVariant::attn2: return "attn-2";
        case ModelVariant::hybrid: return "hybrid";
        case ModelVariant::hybrid2: return "hybrid-2";
    }
    throw ParameterError("unknown model variant");
}

ModelVariant variant_from_label(const std::string& s) {
    if (s == "enc-dec") return ModelVariant::enc_dec;
    if (s == "attn") return ModelVariant::attn;
    if (s == "attn-2") return ModelVariant::attn2;
    if (s == "hybrid") return ModelVariant::hybrid;
    if (s == "hybrid-2") return ModelVariant::hybrid2;
    throw ValidationError("unknown model variant '" + s +
                              "' (enc-dec|attn|attn-2|hybrid|hybrid-2)",
                          "variant");
}

void ModelConfig::check() const {
    if (encoder_state_size < 1 || pre_attention_size < 1 || post_attention_size < 1 ||
        attention_dense_nodes < 1 || decoder_cell_size < 1) {
        throw ParameterError("model sizes must be >= 1");
    }
    if (dropout < 0.0 || dropout >= 1.0 || recurrent_dropout < 0.0 ||
        recurrent_dropout >= 1.0) {
        throw ParameterError("dropout rates must be in [0,1)");
    }
    if ((variant == ModelVariant::hybrid || variant == ModelVariant::hybrid2) &&
        conv_layers.empty()) {
        throw ParameterError("hybrid variants need at least one conv layer");
    }
    for (const ConvLayerSpec& l : conv_layers) {
        if (l.filters < 1 || l.kernel_size < 1 || l.stride < 1) {
            throw ParameterError("conv layer sizes must be >= 1");
        }
    }
}

KernelSpec spec_of(const ModelParams& params) {
    KernelSpec spec;
    spec.name = params.kernel;
    for (const FieldVocab& fv : params.vocab.output_params()) {
        spec.params.push_back({fv.name, fv.values});
    }
    spec.check();
    return spec;
}

// ---------------------------------------------------------------------------
// Tensor-name plumbing
// ---------------------------------------------------------------------------

namespace {

using TensorMap = std::map<std::string, Tensor>;

void put_lstm(TensorMap& m, const std::string& prefix, const nn::LstmCellParams& p) {
    m[prefix + ".w_input"] = p.w_input;
    m[prefix + ".w_forget"] = p.w_forget;
    m[prefix + ".w_output"] = p.w_output;
    m[prefix + ".w_cand"] = p.w_cand;
    m[prefix + ".b_input"] = p.b_input;
    m[prefix + ".b_forget"] = p.b_forget;
    m[prefix + ".b_output"] = p.b_output;
    m[prefix + ".b_cand"] = p.b_cand;
}

const Tensor& named(const TensorMap& m, const std::string& name) {
    auto it = m.find(name);
    if (it == m.end()) throw StateError("model tensor '" + name + "' is missing");
    return it->second;
}

nn::LstmCellParams get_lstm(const TensorMap& m, const std::string& prefix) {
    nn::LstmCellParams p;
    p.w_input = named(m, prefix + ".w_input");
    p.w_forget = named(m, prefix + ".w_forget");
    p.w_output = named(m, prefix + ".w_output");
    p.w_cand = named(m, prefix + ".w_cand");
    p.b_input = named(m, prefix + ".b_input");
    p.b_forget = named(m, prefix + ".b_forget");
    p.b_output = named(m, prefix + ".b_output");
    p.b_cand = named(m, prefix + ".b_cand");
    p.hidden_size = p.w_input.dim(1);
    p.input_size = p.w_input.dim(0) - p.hidden_size;
    return p;
}

nn::DenseParams get_dense(const TensorMap& m, const std::string& prefix) {
    return {named(m, prefix + ".weights"), named(m, prefix + ".bias")};
}

// Per-field one-hot columns over the flattened input space.
std::vector<Tensor> input_sequence(const Vocabulary& v, const TokenSequence& input) {
    if (input.length() != kNumInputFields) {
        throw ParameterError("model input must have " + std::to_string(kNumInputFields) +
                             " tokens, got " + std::to_string(input.length()));
    }
    std::vector<Tensor> seq;
    seq.reserve(static_cast<std::size_t>(kNumInputFields));
    for (int f = 0; f < kNumInputFields; ++f) {
        seq.push_back(input_onehot(v, f, input.ids[static_cast<std::size_t>(f)]));
    }
    return seq;
}

// (channels, time) one-hot matrix for the conv encoder.
Tensor input_matrix(const Vocabulary& v, const TokenSequence& input) {
    const std::vector<Tensor> seq = input_sequence(v, input);
    const int width = v.input_onehot_width();
    Tensor m({width, kNumInputFields});
    for (int t = 0; t < kNumInputFields; ++t) {
        for (int ch = 0; ch < width; ++ch) m.at(ch, t) = seq[static_cast<std::size_t>(t)][ch];
    }
    return m;
}

int argmax(const Tensor& t) {
    int best = 0;
    for (int i = 1; i < t.size(); ++i) {
        if (t[i] > t[best]) best = i;
    }
    return best;
}

struct ConvChain {
    std::vector<nn::Conv1dParams> layers;
    int flat_size = 0;
};

ConvChain conv_chain_shapes(const ModelConfig& config, int in_channels, int t) {
    ConvChain chain;
    int ch = in_channels;
    int len = t;
    for (const ConvLayerSpec& l : config.conv_layers) {
        if (len < l.kernel_size) {
            throw ShapeError("conv stack input length " + std::to_string(len) +
                             " shorter than kernel size " + std::to_string(l.kernel_size));
        }
        nn::Conv1dParams p;
        p.num_filters = l.filters;
        p.kernel_size = l.kernel_size;
        p.stride = l.stride;
        p.filters = Tensor({l.filters, ch, l.kernel_size});
        p.bias = Tensor({l.filters});
        chain.layers.push_back(std::move(p));
        len = nn::conv1d_output_length(len, l.kernel_size, l.stride);
        ch = l.filters;
    }
    chain.flat_size = ch * len;
    return chain;
}

}  // namespace

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

ModelParams init_model(const ModelConfig& config, const KernelSpec& spec,
                       const Vocabulary& vocab, Precision precision, std::uint64_t seed) {
    config.check();
    spec.check();
    if (vocab.num_output_positions() != spec.num_params()) {
        throw ParameterError("vocabulary has " +
                             std::to_string(vocab.num_output_positions()) +
                             " output positions, kernel " + spec.name + " has " +
                             std::to_string(spec.num_params()));
    }
    ModelParams mp;
    mp.config = config;
    mp.kernel = spec.name;
    mp.precision = precision;
    mp.vocab = vocab;

    Rng rng = Rng::derive(seed, 0x171);
    const int d_in = vocab.input_onehot_width();
    const int d_fb = vocab.feedback_onehot_width();
    const int t_out = vocab.num_output_positions();

    int head_in = 0;
    switch (config.variant) {
        case ModelVariant::enc_dec: {
            put_lstm(mp.tensors, "encoder",
                     nn::lstm_init(d_in, config.encoder_state_size, rng));
            put_lstm(mp.tensors, "decoder",
                     nn::lstm_init(d_fb, config.encoder_state_size, rng));
            head_in = config.encoder_state_size;
            break;
        }
        case ModelVariant::attn:
        case ModelVariant::attn2: {
            put_lstm(mp.tensors, "pre.fwd",
                     nn::lstm_init(d_in, config.pre_attention_size, rng));
            put_lstm(mp.tensors, "pre.bwd",
                     nn::lstm_init(d_in, config.pre_attention_size, rng));
            const int act = 2 * config.pre_attention_size;
            const int post_in =
                config.variant == ModelVariant::attn ? act + d_fb : act;
            put_lstm(mp.tensors, "post",
                     nn::lstm_init(post_in, config.post_attention_size, rng));
            nn::DenseParams hidden = nn::dense_init(config.post_attention_size + act,
                                                    config.attention_dense_nodes, rng);
            nn::DenseParams out = nn::dense_init(config.attention_dense_nodes, 1, rng);
            mp.tensors["attn.hidden.weights"] = hidden.weights;
            mp.tensors["attn.hidden.bias"] = hidden.bias;
            mp.tensors["attn.out.weights"] = out.weights;
            mp.tensors["attn.out.bias"] = out.bias;
            head_in = config.post_attention_size;
            break;
        }
        case ModelVariant::hybrid:
        case ModelVariant::hybrid2: {
            ConvChain chain = conv_chain_shapes(config, d_in, kNumInputFields);
            int ch = d_in;
            for (std::size_t i = 0; i < chain.layers.size(); ++i) {
                const ConvLayerSpec& l = config.conv_layers[i];
                nn::Conv1dParams p =
                    nn::conv1d_init(ch, l.filters, l.kernel_size, l.stride, rng);
                mp.tensors["conv." + std::to_string(i) + ".filters"] = p.filters;
                mp.tensors["conv." + std::to_string(i) + ".bias"] = p.bias;
                ch = l.filters;
            }
            const int cell = config.decoder_cell_size;
            put_lstm(mp.tensors, "bilstm1.fwd", nn::lstm_init(chain.flat_size, cell, rng));
            put_lstm(mp.tensors, "bilstm1.bwd", nn::lstm_init(chain.flat_size, cell, rng));
            const int b2_in =
                config.variant == ModelVariant::hybrid ? 2 * cell : chain.flat_size;
            put_lstm(mp.tensors, "bilstm2.fwd", nn::lstm_init(b2_in, cell, rng));
            put_lstm(mp.tensors, "bilstm2.bwd", nn::lstm_init(b2_in, cell, rng));
            head_in = 2 * cell;
            break;
        }
    }
    for (int i = 0; i < t_out; ++i) {
        nn::DenseParams head = nn::dense_init(head_in, vocab.output_param(i).size(), rng);
        mp.tensors["head." + std::to_string(i) + ".weights"] = head.weights;
        mp.tensors["head." + std::to_string(i) + ".bias"] = head.bias;
    }
    return mp;
}

// ---------------------------------------------------------------------------
// Attention and hybrid building blocks (plain path)
// ---------------------------------------------------------------------------

nn::Tensor attention_weights(const Tensor& s_prev, std::span<const Tensor> activations,
                             const AttentionScoring& scoring) {
    if (activations.empty()) {
        throw ParameterError("attention_weights: no activations");
    }
    Tensor energies({static_cast<int>(activations.size())});
    for (std::size_t t = 0; t < activations.size(); ++t) {
        const Tensor& a = activations[t];
        Tensor z({s_prev.size() + a.size()});
        std::copy(s_prev.data(), s_prev.data() + s_prev.size(), z.data());
        std::copy(a.data(), a.data() + a.size(), z.data() + s_prev.size());
        Tensor hidden = nn::dense_forward(z, scoring.hidden);
        for (int i = 0; i < hidden.size(); ++i) hidden[i] = std::tanh(hidden[i]);
        energies[static_cast<int>(t)] = nn::dense_forward(hidden, scoring.out)[0];
    }
    return nn::softmax(energies);
}

nn::Tensor context_vector(const Tensor& alpha, std::span<const Tensor> activations) {
    if (static_cast<std::size_t>(alpha.size()) != activations.size()) {
        throw ShapeError("context_vector: alpha " + alpha.shape_string() + " vs " +
                         std::to_string(activations.size()) + " activations");
    }
    Tensor c(activations[0].shape());
    for (int t = 0; t < alpha.size(); ++t) {
        const Tensor& a = activations[static_cast<std::size_t>(t)];
        for (int j = 0; j < c.size(); ++j) c[j] += alpha[t] * a[j];
    }
    return c;
}

nn::Tensor hybrid_encode(const ModelParams& params, const TokenSequence& input) {
    Tensor x = input_matrix(params.vocab, input);
    for (std::size_t i = 0; i < params.config.conv_layers.size(); ++i) {
        const ConvLayerSpec& l = params.config.conv_layers[i];
        nn::Conv1dParams p;
        p.num_filters = l.filters;
        p.kernel_size = l.kernel_size;
        p.stride = l.stride;
        p.filters = named(params.tensors, "conv." + std::to_string(i) + ".filters");
        p.bias = named(params.tensors, "conv." + std::to_string(i) + ".bias");
        x = nn::conv1d_forward(x, p);
    }
    return Tensor({x.size()}, x.values());
}

namespace {

// Seeded bi-LSTM pass used by the layered decoder's second layer.
std::vector<Tensor> bilstm_seeded(std::span<const Tensor> sequence,
                                  const nn::LstmCellParams& fwd,
                                  const nn::LstmCellParams& bwd, const Tensor& fwd_h0,
                                  const Tensor& fwd_c0, const Tensor& bwd_h0,
                                  const Tensor& bwd_c0) {
    const int steps = static_cast<int>(sequence.size());
    std::vector<Tensor> fwd_h(static_cast<std::size_t>(steps));
    std::vector<Tensor> bwd_h(static_cast<std::size_t>(steps));
    Tensor h = fwd_h0, c = fwd_c0;
    for (int i = 0; i < steps; ++i) {
        std::tie(h, c) = nn::lstm_cell_step(sequence[static_cast<std::size_t>(i)], h, c, fwd);
        fwd_h[static_cast<std::size_t>(i)] = h;
    }
    h = bwd_h0;
    c = bwd_c0;
    for (int i = steps - 1; i >= 0; --i) {
        std::tie(h, c) = nn::lstm_cell_step(sequence[static_cast<std::size_t>(i)], h, c, bwd);
        bwd_h[static_cast<std::size_t>(i)] = h;
    }
    std::vector<Tensor> acts(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        Tensor a({fwd.hidden_size + bwd.hidden_size});
        std::copy(fwd_h[static_cast<std::size_t>(i)].data(),
                  fwd_h[static_cast<std::size_t>(i)].data() + fwd.hidden_size, a.data());
        std::copy(bwd_h[static_cast<std::size_t>(i)].data(),
                  bwd_h[static_cast<std::size_t>(i)].data() + bwd.hidden_size,
                  a.data() + fwd.hidden_size);
        acts[static_cast<std::size_t>(i)] = std::move(a);
    }
    return acts;
}

std::vector<Tensor> head_distributions(const ModelParams& params,
                                       std::span<const Tensor> features) {
    std::vector<Tensor> dists;
    dists.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        nn::DenseParams head = get_dense(params.tensors, "head." + std::to_string(i));
        dists.push_back(nn::softmax(nn::dense_forward(features[i], head)));
    }
    return dists;
}

}  // namespace

std::vector<nn::Tensor> hybrid2_decode(const ModelParams& params, const Tensor& encoded) {
    const int t_out = params.num_output_positions();
    const std::vector<Tensor> repeated(static_cast<std::size_t>(t_out), encoded);
    const nn::LstmCellParams b1f = get_lstm(params.tensors, "bilstm1.fwd");
    const nn::LstmCellParams b1b = get_lstm(params.tensors, "bilstm1.bwd");
    const nn::LstmCellParams b2f = get_lstm(params.tensors, "bilstm2.fwd");
    const nn::LstmCellParams b2b = get_lstm(params.tensors, "bilstm2.bwd");
    const nn::BilstmResult r1 = nn::bilstm_forward(repeated, b1f, b1b);
    // Only the final forward/backward states of bi-LSTM-1 carry over.
    const std::vector<Tensor> acts = bilstm_seeded(
        repeated, b2f, b2b, r1.last_fwd_h, r1.last_fwd_c, r1.last_bwd_h, r1.last_bwd_c);
    return head_distributions(params, acts);
}

// ---------------------------------------------------------------------------
// SequencePredictor
// ---------------------------------------------------------------------------

SequencePredictor::SequencePredictor(const ModelParams& params) : params_(&params) {
    params.config.check();
}

int SequencePredictor::num_positions() const { return params_->num_output_positions(); }

int SequencePredictor::vocab_size(int position) const {
    return params_->vocab.output_param(position).size();
}

EncodedInput SequencePredictor::encode(const TokenSequence& input) const {
    const ModelParams& mp = *params_;
    EncodedInput enc;
    switch (mp.config.variant) {
        case ModelVariant::enc_dec: {
            const nn::LstmCellParams encoder = get_lstm(mp.tensors, "encoder");
            Tensor h({encoder.hidden_size}), c({encoder.hidden_size});
            for (const Tensor& x : input_sequence(mp.vocab, input)) {
                std::tie(h, c) = nn::lstm_cell_step(x, h, c, encoder);
            }
            enc.h = std::move(h);
            enc.c = std::move(c);
            break;
        }
        case ModelVariant::attn:
        case ModelVariant::attn2: {
            const nn::LstmCellParams fwd = get_lstm(mp.tensors, "pre.fwd");
            const nn::LstmCellParams bwd = get_lstm(mp.tensors, "pre.bwd");
            const std::vector<Tensor> seq = input_sequence(mp.vocab, input);
            enc.activations = nn::bilstm_forward(seq, fwd, bwd).activations;
            break;
        }
        case ModelVariant::hybrid: {
            const Tensor encoded = hybrid_encode(mp, input);
            const int t_out = mp.num_output_positions();
            const std::vector<Tensor> repeated(static_cast<std::size_t>(t_out), encoded);
            const nn::BilstmResult r1 = nn::bilstm_forward(
                repeated, get_lstm(mp.tensors, "bilstm1.fwd"),
                get_lstm(mp.tensors, "bilstm1.bwd"));
            const nn::BilstmResult r2 = nn::bilstm_forward(
                r1.activations, get_lstm(mp.tensors, "bilstm2.fwd"),
                get_lstm(mp.tensors, "bilstm2.bwd"));
            enc.dists = head_distributions(mp, r2.activations);
            break;
        }
        case ModelVariant::hybrid2: {
            enc.dists = hybrid2_decode(mp, hybrid_encode(mp, input));
            break;
        }
    }
    return enc;
}

DecoderState SequencePredictor::initial_state(const EncodedInput& enc) const {
    DecoderState st;
    switch (params_->config.variant) {
        case ModelVariant::enc_dec:
            st.h = enc.h;
            st.c = enc.c;
            break;
        case ModelVariant::attn:
        case ModelVariant::attn2:
            st.h = Tensor({params_->config.post_attention_size});
            st.c = Tensor({params_->config.post_attention_size});
            break;
        default:
            break;
    }
    return st;
}

nn::Tensor SequencePredictor::step(const EncodedInput& enc, DecoderState& state,
                                   int prev_token) const {
    const ModelParams& mp = *params_;
    const int pos = state.position;
    if (pos < 0 || pos >= num_positions()) {
        throw StateError("decoder stepped past the last output position");
    }
    Tensor feature;
    switch (mp.config.variant) {
        case ModelVariant::enc_dec: {
            const Tensor x = feedback_onehot(mp.vocab, pos - 1, prev_token);
            std::tie(state.h, state.c) =
                nn::lstm_cell_step(x, state.h, state.c, get_lstm(mp.tensors, "decoder"));
            feature = state.h;
            break;
        }
        case ModelVariant::attn:
        case ModelVariant::attn2: {
            AttentionScoring scoring{get_dense(mp.tensors, "attn.hidden"),
                                     get_dense(mp.tensors, "attn.out")};
            const Tensor alpha = attention_weights(state.h, enc.activations, scoring);
            const Tensor ctx = context_vector(alpha, enc.activations);
            Tensor x;
            if (mp.config.variant == ModelVariant::attn) {
                const Tensor fb = feedback_onehot(mp.vocab, pos - 1, prev_token);
                x = Tensor({ctx.size() + fb.size()});
                std::copy(ctx.data(), ctx.data() + ctx.size(), x.data());
                std::copy(fb.data(), fb.data() + fb.size(), x.data() + ctx.size());
            } else {
                x = ctx;  // no output feedback in the modified attention
            }
            std::tie(state.h, state.c) =
                nn::lstm_cell_step(x, state.h, state.c, get_lstm(mp.tensors, "post"));
            feature = state.h;
            break;
        }
        case ModelVariant::hybrid:
        case ModelVariant::hybrid2: {
            state.position = pos + 1;
            return enc.dists[static_cast<std::size_t>(pos)];
        }
    }
    state.position = pos + 1;
    nn::DenseParams head = get_dense(mp.tensors, "head." + std::to_string(pos));
    return nn::softmax(nn::dense_forward(feature, head));
}

std::vector<nn::Tensor> model_forward(const ModelParams& params, const TokenSequence& input,
                                      const std::vector<int>* teacher) {
    const SequencePredictor predictor(params);
    const int t_out = predictor.num_positions();
    if (teacher && static_cast<int>(teacher->size()) != t_out) {
        throw ParameterError("teacher sequence length " + std::to_string(teacher->size()) +
                             " vs " + std::to_string(t_out) + " output positions");
    }
    const EncodedInput enc = predictor.encode(input);
    DecoderState state = predictor.initial_state(enc);
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(t_out));
    int prev = -1;
    for (int i = 0; i < t_out; ++i) {
        Tensor dist = predictor.step(enc, state, prev);
        prev = teacher ? (*teacher)[static_cast<std::size_t>(i)] : argmax(dist);
        out.push_back(std::move(dist));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training graph
// ---------------------------------------------------------------------------

namespace {

using nn::Tape;
using nn::Var;

struct Bound {
    Tape& tape;
    const TensorMap& tensors;
    std::map<std::string, Var> vars;

    Var operator()(const std::string& name) {
        auto it = vars.find(name);
        if (it != vars.end()) return it->second;
        const Var v = tape.param(name, named(tensors, name));
        vars.emplace(name, v);
        return v;
    }
};

struct TapeLstm {
    Var wi, wf, wo, wg, bi, bf, bo, bg;
    int hidden = 0;

    static TapeLstm bind(Bound& b, const std::string& prefix) {
        TapeLstm l;
        l.wi = b(prefix + ".w_input");
        l.wf = b(prefix + ".w_forget");
        l.wo = b(prefix + ".w_output");
        l.wg = b(prefix + ".w_cand");
        l.bi = b(prefix + ".b_input");
        l.bf = b(prefix + ".b_forget");
        l.bo = b(prefix + ".b_output");
        l.bg = b(prefix + ".b_cand");
        l.hidden = b.tape.value(l.bi).size();
        return l;
    }
};

// Per-sequence variational dropout masks for one LSTM direction.
struct LstmMasks {
    bool active = false;
    Tensor input_mask;
    Tensor recurrent_mask;

    static LstmMasks make(int input_size, int hidden_size, double dropout,
                          double recurrent_dropout, Rng* rng) {
        LstmMasks m;
        if (!rng || (dropout == 0.0 && recurrent_dropout == 0.0)) return m;
        m.active = true;
        m.input_mask = nn::dropout_mask({input_size}, dropout, *rng);
        m.recurrent_mask = nn::dropout_mask({hidden_size}, recurrent_dropout, *rng);
        return m;
    }
};

struct TapeLstmState {
    Var h, c;
};

TapeLstmState tape_lstm_step(Tape& tape, const TapeLstm& p, Var x, TapeLstmState st,
                             const LstmMasks& masks) {
    if (masks.active) {
        x = tape.mask(x, masks.input_mask);
        st.h = tape.mask(st.h, masks.recurrent_mask);
    }
    const Var xh = tape.concat(x, st.h);
    const Var i = tape.sigmoid(tape.dense(xh, p.wi, p.bi));
    const Var f = tape.sigmoid(tape.dense(xh, p.wf, p.bf));
    const Var o = tape.sigmoid(tape.dense(xh, p.wo, p.bo));
    const Var g = tape.tanh(tape.dense(xh, p.wg, p.bg));
    TapeLstmState out;
    out.c = tape.add(tape.mul(f, st.c), tape.mul(i, g));
    out.h = tape.mul(o, tape.tanh(out.c));
    return out;
}

struct TapeBilstmResult {
    std::vector<Var> activations;
    TapeLstmState last_fwd, last_bwd;
};

TapeBilstmResult tape_bilstm(Tape& tape, const TapeLstm& fwd, const TapeLstm& bwd,
                             const std::vector<Var>& seq, const LstmMasks& fwd_masks,
                             const LstmMasks& bwd_masks, TapeLstmState fwd_init = {},
                             TapeLstmState bwd_init = {}) {
    const int steps = static_cast<int>(seq.size());
    std::vector<Var> fh(static_cast<std::size_t>(steps)), bh(static_cast<std::size_t>(steps));
    TapeLstmState st = fwd_init;
    if (!st.h.valid()) {
        st.h = tape.input(Tensor({fwd.hidden}));
        st.c = tape.input(Tensor({fwd.hidden}));
    }
    for (int i = 0; i < steps; ++i) {
        st = tape_lstm_step(tape, fwd, seq[static_cast<std::size_t>(i)], st, fwd_masks);
        fh[static_cast<std::size_t>(i)] = st.h;
    }
    TapeBilstmResult out;
    out.last_fwd = st;
    st = bwd_init;
    if (!st.h.valid()) {
        st.h = tape.input(Tensor({bwd.hidden}));
        st.c = tape.input(Tensor({bwd.hidden}));
    }
    for (int i = steps - 1; i >= 0; --i) {
        st = tape_lstm_step(tape, bwd, seq[static_cast<std::size_t>(i)], st, bwd_masks);
        bh[static_cast<std::size_t>(i)] = st.h;
    }
    out.last_bwd = st;
    out.activations.resize(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        out.activations[static_cast<std::size_t>(i)] =
            tape.concat(fh[static_cast<std::size_t>(i)], bh[static_cast<std::size_t>(i)]);
    }
    return out;
}

// Builds the teacher-forced loss graph for any variant. Returns per-position
// logit vars through `logits` when requested (used for batch accuracy).
Var build_loss_graph(Tape& tape, const ModelParams& mp, const TokenSequence& input,
                     const TokenSequence& target, Rng* dropout_rng,
                     std::vector<Var>* logits_out) {
    const Vocabulary& vocab = mp.vocab;
    const int t_out = vocab.num_output_positions();
    if (target.length() != t_out) {
        throw ParameterError("target length " + std::to_string(target.length()) + " vs " +
                             std::to_string(t_out) + " output positions");
    }
    for (int i = 0; i < t_out; ++i) {
        const int id = target.ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= vocab.output_param(i).size()) {
            throw IndexError("target token " + std::to_string(id) +
                             " out of range at position " + std::to_string(i));
        }
    }
    Bound bound{tape, mp.tensors, {}};
    const ModelConfig& cfg = mp.config;
    const double drop = cfg.dropout;
    const double rdrop = cfg.recurrent_dropout;

    std::vector<Var> features(static_cast<std::size_t>(t_out));
    switch (cfg.variant) {
        case ModelVariant::enc_dec: {
            const TapeLstm encoder = TapeLstm::bind(bound, "encoder");
            TapeLstmState st{tape.input(Tensor({encoder.hidden})),
                             tape.input(Tensor({encoder.hidden}))};
            for (const Tensor& x : input_sequence(vocab, input)) {
                st = tape_lstm_step(tape, encoder, tape.input(x), st, {});
            }
            const TapeLstm decoder = TapeLstm::bind(bound, "decoder");
            const LstmMasks masks = LstmMasks::make(vocab.feedback_onehot_width(),
                                                    decoder.hidden, drop, rdrop,
                                                    dropout_rng);
            for (int i = 0; i < t_out; ++i) {
                const int prev = i == 0 ? -1 : target.ids[static_cast<std::size_t>(i - 1)];
                const Var x = tape.input(feedback_onehot(vocab, i - 1, prev));
                st = tape_lstm_step(tape, decoder, x, st, masks);
                features[static_cast<std::size_t>(i)] = st.h;
            }
            break;
        }
        case ModelVariant::attn:
        case ModelVariant::attn2: {
            const TapeLstm pre_fwd = TapeLstm::bind(bound, "pre.fwd");
            const TapeLstm pre_bwd = TapeLstm::bind(bound, "pre.bwd");
            std::vector<Var> seq;
            for (const Tensor& x : input_sequence(vocab, input)) {
                seq.push_back(tape.input(x));
            }
            const TapeBilstmResult pre =
                tape_bilstm(tape, pre_fwd, pre_bwd, seq, {}, {});
            const Var score_w = bound("attn.hidden.weights");
            const Var score_b = bound("attn.hidden.bias");
            const Var out_w = bound("attn.out.weights");
            const Var out_b = bound("attn.out.bias");
            const TapeLstm post = TapeLstm::bind(bound, "post");
            const bool feedback = cfg.variant == ModelVariant::attn;
            const int post_in = 2 * cfg.pre_attention_size +
                                (feedback ? vocab.feedback_onehot_width() : 0);
            const LstmMasks masks =
                LstmMasks::make(post_in, post.hidden, drop, rdrop, dropout_rng);
            TapeLstmState st{tape.input(Tensor({post.hidden})),
                             tape.input(Tensor({post.hidden}))};
            for (int i = 0; i < t_out; ++i) {
                std::vector<Var> energies;
                energies.reserve(pre.activations.size());
                for (const Var a : pre.activations) {
                    const Var z = tape.concat(st.h, a);
                    const Var hid = tape.tanh(tape.dense(z, score_w, score_b));
                    energies.push_back(tape.dense(hid, out_w, out_b));
                }
                const Var alpha = tape.softmax(tape.stack(energies));
                const Var ctx = tape.weighted_sum(alpha, pre.activations);
                Var x = ctx;
                if (feedback) {
                    const int prev =
                        i == 0 ? -1 : target.ids[static_cast<std::size_t>(i - 1)];
                    x = tape.concat(ctx, tape.input(feedback_onehot(vocab, i - 1, prev)));
                }
                st = tape_lstm_step(tape, post, x, st, masks);
                features[static_cast<std::size_t>(i)] = st.h;
            }
            break;
        }
        case ModelVariant::hybrid:
        case ModelVariant::hybrid2: {
            Var x = tape.input(input_matrix(vocab, input));
            for (std::size_t i = 0; i < cfg.conv_layers.size(); ++i) {
                x = tape.conv1d(x, bound("conv." + std::to_string(i) + ".filters"),
                                bound("conv." + std::to_string(i) + ".bias"),
                                cfg.conv_layers[i].stride);
            }
            const Var flat = tape.flatten(x);
            const int flat_size = tape.value(flat).size();
            const std::vector<Var> repeated(static_cast<std::size_t>(t_out), flat);
            const TapeLstm b1f = TapeLstm::bind(bound, "bilstm1.fwd");
            const TapeLstm b1b = TapeLstm::bind(bound, "bilstm1.bwd");
            const TapeLstm b2f = TapeLstm::bind(bound, "bilstm2.fwd");
            const TapeLstm b2b = TapeLstm::bind(bound, "bilstm2.bwd");
            const LstmMasks m1f =
                LstmMasks::make(flat_size, b1f.hidden, drop, rdrop, dropout_rng);
            const LstmMasks m1b =
                LstmMasks::make(flat_size, b1b.hidden, drop, rdrop, dropout_rng);
            const TapeBilstmResult r1 = tape_bilstm(tape, b1f, b1b, repeated, m1f, m1b);
            TapeBilstmResult r2;
            if (cfg.variant == ModelVariant::hybrid) {
                const LstmMasks m2f =
                    LstmMasks::make(2 * cfg.decoder_cell_size, b2f.hidden, drop, rdrop,
                                    dropout_rng);
                const LstmMasks m2b =
                    LstmMasks::make(2 * cfg.decoder_cell_size, b2b.hidden, drop, rdrop,
                                    dropout_rng);
                r2 = tape_bilstm(tape, b2f, b2b, r1.activations, m2f, m2b);
            } else {
                const LstmMasks m2f =
                    LstmMasks::make(flat_size, b2f.hidden, drop, rdrop, dropout_rng);
                const LstmMasks m2b =
                    LstmMasks::make(flat_size, b2b.hidden, drop, rdrop, dropout_rng);
                r2 = tape_bilstm(tape, b2f, b2b, repeated, m2f, m2b, r1.last_fwd,
                                 r1.last_bwd);
            }
            for (int i = 0; i < t_out; ++i) {
                features[static_cast<std::size_t>(i)] =
                    r2.activations[static_cast<std::size_t>(i)];
            }
            break;
        }
    }

    std::vector<Var> losses;
    losses.reserve(static_cast<std::size_t>(t_out));
    for (int i = 0; i < t_out; ++i) {
        const Var logits =
            tape.dense(features[static_cast<std::size_t>(i)],
                       bound("head." + std::to_string(i) + ".weights"),
                       bound("head." + std::to_string(i) + ".bias"));
        if (logits_out) (*logits_out)[static_cast<std::size_t>(i)] = logits;
        losses.push_back(
            tape.cross_entropy_logits(logits, target.ids[static_cast<std::size_t>(i)]));
    }
    return tape.sum_scaled(losses, 1.0 / t_out);
}

}  // namespace

double model_loss(const ModelParams& params, const TokenSequence& input,
                  const TokenSequence& target) {
    Tape tape;
    return tape.scalar(build_loss_graph(tape, params, input, target, nullptr, nullptr));
}

std::pair<double, std::map<std::string, Tensor>> model_loss_gradients(
    const ModelParams& params, const TokenSequence& input, const TokenSequence& target,
    Rng* dropout_rng) {
    Tape tape;
    const Var loss = build_loss_graph(tape, params, input, target, dropout_rng, nullptr);
    tape.backward(loss);
    return {tape.scalar(loss), tape.param_grads()};
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

struct EncodedSample {
    TokenSequence input;
    TokenSequence target;
};

void add_into(TensorMap& acc, const TensorMap& grads) {
    for (const auto& [name, g] : grads) {
        auto it = acc.find(name);
        if (it == acc.end()) {
            acc.emplace(name, g);
        } else {
            Tensor& a = it->second;
            for (int i = 0; i < a.size(); ++i) a[i] += g[i];
        }
    }
}

struct EvalAccumulator {
    double loss_sum = 0.0;
    long long position_matches = 0;
    long long positions = 0;
};

// Teacher-forced loss + per-position argmax accuracy, dropout off.
EvalAccumulator evaluate_set(const ModelParams& params,
                             const std::vector<EncodedSample>& samples, int threads) {
    std::vector<EvalAccumulator> partial(static_cast<std::size_t>(std::max(1, threads)));
    parallel_stripes(static_cast<int>(samples.size()), threads, [&](int w, int stride) {
        EvalAccumulator acc;
        for (std::size_t i = static_cast<std::size_t>(w); i < samples.size();
             i += static_cast<std::size_t>(stride)) {
            Tape tape;
            std::vector<Var> logits(
                static_cast<std::size_t>(params.num_output_positions()));
            const Var loss = build_loss_graph(tape, params, samples[i].input,
                                              samples[i].target, nullptr, &logits);
            acc.loss_sum += tape.scalar(loss);
            for (std::size_t p = 0; p < logits.size(); ++p) {
                acc.positions += 1;
                if (argmax(tape.value(logits[p])) == samples[i].target.ids[p]) {
                    acc.position_matches += 1;
                }
            }
        }
        partial[static_cast<std::size_t>(w)] = acc;
    });
    EvalAccumulator total;
    for (const EvalAccumulator& a : partial) {
        total.loss_sum += a.loss_sum;
        total.position_matches += a.position_matches;
        total.positions += a.positions;
    }
    return total;
}

}  // namespace

TrainResult train_model(const ModelConfig& config, const KernelSpec& spec,
                        const Vocabulary& vocab, Precision precision,
                        const std::vector<Sample>& train_set,
                        const std::vector<Sample>& test_set, const TrainOptions& options,
                        const std::function<void(const EpochStats&)>& on_epoch) {
    if (train_set.empty()) throw ParameterError("train_model: empty training set");
    if (options.epochs < 1 || options.batch_size < 1) {
        throw ParameterError("train_model: epochs and batch size must be >= 1");
    }

    auto encode_all = [&](const std::vector<Sample>& set) {
        std::vector<EncodedSample> out;
        out.reserve(set.size());
        for (const Sample& s : set) {
            out.push_back({encode_problem(s.descriptor, vocab),
                           encode_params(s.params, spec, vocab)});
        }
        return out;
    };
    const std::vector<EncodedSample> train = encode_all(train_set);
    const std::vector<EncodedSample> test = encode_all(test_set);

    TrainResult result;
    result.params = init_model(config, spec, vocab, precision, options.seed);
    ModelParams& mp = result.params;

    nn::AdamState adam;
    adam.config.learning_rate = options.learning_rate;

    const int threads = std::max(1, options.threads);
    const int n = static_cast<int>(train.size());

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        Rng shuffle_rng = Rng::derive(options.seed, 0x3ff000ULL + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
        }

        double epoch_loss = 0.0;
        long long epoch_matches = 0, epoch_positions = 0;
        for (int start = 0; start < n; start += options.batch_size) {
            const int end = std::min(n, start + options.batch_size);
            const int batch = end - start;
            std::vector<TensorMap> partial_grads(static_cast<std::size_t>(threads));
            std::vector<double> partial_loss(static_cast<std::size_t>(threads), 0.0);
            std::vector<long long> partial_match(static_cast<std::size_t>(threads), 0);
            std::vector<long long> partial_pos(static_cast<std::size_t>(threads), 0);
            parallel_stripes(batch, threads, [&](int w, int stride) {
                for (int b = w; b < batch; b += stride) {
                    const int idx = order[static_cast<std::size_t>(start + b)];
                    const EncodedSample& s = train[static_cast<std::size_t>(idx)];
                    Rng drop = Rng::derive(
                        options.seed,
                        (static_cast<std::uint64_t>(epoch) << 32) |
                            static_cast<std::uint64_t>(idx));
                    Tape tape;
                    std::vector<Var> logits(
                        static_cast<std::size_t>(mp.num_output_positions()));
                    const Var loss =
                        build_loss_graph(tape, mp, s.input, s.target, &drop, &logits);
                    tape.backward(loss);
                    partial_loss[static_cast<std::size_t>(w)] += tape.scalar(loss);
                    for (std::size_t p = 0; p < logits.size(); ++p) {
                        partial_pos[static_cast<std::size_t>(w)] += 1;
                        if (argmax(tape.value(logits[p])) == s.target.ids[p]) {
                            partial_match[static_cast<std::size_t>(w)] += 1;
                        }
                    }
                    add_into(partial_grads[static_cast<std::size_t>(w)],
                             tape.param_grads());
                }
            });
            TensorMap grads;
            for (int w = 0; w < threads; ++w) {
                add_into(grads, partial_grads[static_cast<std::size_t>(w)]);
                epoch_loss += partial_loss[static_cast<std::size_t>(w)];
                epoch_matches += partial_match[static_cast<std::size_t>(w)];
                epoch_positions += partial_pos[static_cast<std::size_t>(w)];
            }
            for (auto& [name, g] : grads) {
                for (int i = 0; i < g.size(); ++i) g[i] /= batch;
            }
            nn::clip_global_norm(grads, options.clip_norm);
            nn::adam_step(mp.tensors, grads, adam);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / n;
        stats.train_accuracy =
            epoch_positions > 0
                ? 100.0 * static_cast<double>(epoch_matches) / epoch_positions
                : 0.0;
        if (!test.empty()) {
            const EvalAccumulator acc = evaluate_set(mp, test, threads);
            stats.test_loss = acc.loss_sum / static_cast<double>(test.size());
            stats.test_accuracy =
                acc.positions > 0
                    ? 100.0 * static_cast<double>(acc.position_matches) / acc.positions
                    : 0.0;
        }
        result.log.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return result;
}

}  // namespace kernelseer
