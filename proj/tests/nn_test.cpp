// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kernelseer/nn.hpp"
#include "test_util.hpp"

using namespace kernelseer;
using namespace kernelseer::nn;
using ktest::random_tensor;

namespace {

// Independent oracle: naive triple-loop y = x.W + b.
Tensor naive_dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int rows = x.size() / w.dim(0);
    const int in = w.dim(0);
    const int out = w.dim(1);
    std::vector<int> shape = x.shape();
    shape.back() = out;
    Tensor y(shape);
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < out; ++j) {
            double acc = b[j];
            for (int i = 0; i < in; ++i) acc += x[r * in + i] * w.at(i, j);
            y[r * out + j] = acc;
        }
    }
    return y;
}

// Independent oracle: scalar-loop LSTM step.
std::pair<Tensor, Tensor> scalar_lstm(const Tensor& x, const Tensor& h_prev,
                                      const Tensor& c_prev, const LstmCellParams& p) {
    const int hidden = p.hidden_size;
    const int in = p.input_size;
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    Tensor h({hidden}), c({hidden});
    for (int j = 0; j < hidden; ++j) {
        double zi = p.b_input[j], zf = p.b_forget[j], zo = p.b_output[j], zg = p.b_cand[j];
        for (int i = 0; i < in; ++i) {
            zi += x[i] * p.w_input.at(i, j);
            zf += x[i] * p.w_forget.at(i, j);
            zo += x[i] * p.w_output.at(i, j);
            zg += x[i] * p.w_cand.at(i, j);
        }
        for (int i = 0; i < hidden; ++i) {
            zi += h_prev[i] * p.w_input.at(in + i, j);
            zf += h_prev[i] * p.w_forget.at(in + i, j);
            zo += h_prev[i] * p.w_output.at(in + i, j);
            zg += h_prev[i] * p.w_cand.at(in + i, j);
        }
        c[j] = sig(zf) * c_prev[j] + sig(zi) * std::tanh(zg);
        h[j] = sig(zo) * std::tanh(c[j]);
    }
    return {h, c};
}

LstmCellParams random_lstm(int in, int hidden, Rng& rng) {
    LstmCellParams p = LstmCellParams::zeros(in, hidden);
    for (Tensor* t : {&p.w_input, &p.w_forget, &p.w_output, &p.w_cand, &p.b_input,
                      &p.b_forget, &p.b_output, &p.b_cand}) {
        for (int i = 0; i < t->size(); ++i) (*t)[i] = rng.uniform(-0.8, 0.8);
    }
    return p;
}

}  // namespace

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, -1}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.shape_string() == "(2,3)");
}

TEST_CASE("dense identity weights pass input through") {
    DenseParams p;
    p.weights = Tensor({3, 3});
    for (int i = 0; i < 3; ++i) p.weights.at(i, i) = 1.0;
    p.bias = Tensor({3});
    const Tensor y = dense_forward(Tensor::vec({1, 2, 3}), p);
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 2.0);
    CHECK(y[2] == 3.0);
}

TEST_CASE("dense all-zero weights yield the bias") {
    DenseParams p;
    p.weights = Tensor({4, 1});
    p.bias = Tensor::vec({5.0});
    const Tensor y = dense_forward(Tensor::vec({9, -3, 2, 7}), p);
    CHECK(y.size() == 1);
    CHECK(y[0] == 5.0);
}

TEST_CASE("dense matches the naive matmul oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int in = 1 + static_cast<int>(rng.uniform_int(6));
        const int out = 1 + static_cast<int>(rng.uniform_int(6));
        DenseParams p{random_tensor({in, out}, rng), random_tensor({out}, rng)};
        const Tensor x = random_tensor({in}, rng);
        const Tensor got = dense_forward(x, p);
        const Tensor want = naive_dense(x, p.weights, p.bias);
        for (int i = 0; i < out; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("dense shape mismatch names both shapes") {
    DenseParams p{Tensor({3, 2}), Tensor({2})};
    try {
        dense_forward(Tensor::vec({1, 2}), p);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2)") != std::string::npos);
        CHECK(msg.find("(3,2)") != std::string::npos);
    }
}

TEST_CASE("lstm all-zero params give zero state") {
    LstmCellParams p = LstmCellParams::zeros(3, 2);
    const auto [h, c] = lstm_cell_step(Tensor::vec({1, 2, 3}), Tensor({2}), Tensor({2}), p);
    for (int j = 0; j < 2; ++j) {
        CHECK(h[j] == 0.0);
        CHECK(c[j] == 0.0);
    }
}

TEST_CASE("lstm zero weights halve the carried cell state") {
    LstmCellParams p = LstmCellParams::zeros(2, 3);
    const Tensor c_prev = Tensor::vec({0.5, -1.0, 2.0});
    const auto [h, c] = lstm_cell_step(Tensor::vec({7, -2}), Tensor({3}), c_prev, p);
    for (int j = 0; j < 3; ++j) {
        CHECK(c[j] == doctest::Approx(0.5 * c_prev[j]));
        CHECK(h[j] == doctest::Approx(0.5 * std::tanh(0.5 * c_prev[j])));
    }
}

TEST_CASE("lstm matches the scalar reference within 1e-10") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const int in = 1 + static_cast<int>(rng.uniform_int(5));
        const int hidden = 1 + static_cast<int>(rng.uniform_int(5));
        const LstmCellParams p = random_lstm(in, hidden, rng);
        const Tensor x = random_tensor({in}, rng);
        const Tensor h0 = random_tensor({hidden}, rng);
        const Tensor c0 = random_tensor({hidden}, rng);
        const auto [h, c] = lstm_cell_step(x, h0, c0, p);
        const auto [rh, rc] = scalar_lstm(x, h0, c0, p);
        for (int j = 0; j < hidden; ++j) {
            CHECK(std::fabs(h[j] - rh[j]) < 1e-10);
            CHECK(std::fabs(c[j] - rc[j]) < 1e-10);
        }
    }
}

TEST_CASE("bilstm single-step sequence concatenates one step per direction") {
    Rng rng(31);
    const LstmCellParams fwd = random_lstm(3, 2, rng);
    const LstmCellParams bwd = random_lstm(3, 2, rng);
    const std::vector<Tensor> seq = {random_tensor({3}, rng)};
    const BilstmResult r = bilstm_forward(seq, fwd, bwd);
    REQUIRE(r.activations.size() == 1);
    CHECK(r.activations[0].size() == 4);
    const auto [fh, fc] = lstm_cell_step(seq[0], Tensor({2}), Tensor({2}), fwd);
    const auto [bh, bc] = lstm_cell_step(seq[0], Tensor({2}), Tensor({2}), bwd);
    for (int j = 0; j < 2; ++j) {
        CHECK(r.activations[0][j] == doctest::Approx(fh[j]));
        CHECK(r.activations[0][2 + j] == doctest::Approx(bh[j]));
    }
}

TEST_CASE("bilstm palindrome with equal directions is symmetric") {
    Rng rng(37);
    const LstmCellParams cell = random_lstm(2, 3, rng);
    const Tensor a = random_tensor({2}, rng);
    const Tensor b = random_tensor({2}, rng);
    const std::vector<Tensor> seq = {a, b, a};  // palindrome
    const BilstmResult r = bilstm_forward(seq, cell, cell);
    const int t = static_cast<int>(seq.size());
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(r.activations[static_cast<std::size_t>(i)][j] ==
                  doctest::Approx(
                      r.activations[static_cast<std::size_t>(t - 1 - i)][3 + j]));
        }
    }
}

TEST_CASE("bilstm matches manual composition of cell steps") {
    Rng rng(41);
    const LstmCellParams fwd = random_lstm(3, 4, rng);
    const LstmCellParams bwd = random_lstm(3, 4, rng);
    std::vector<Tensor> seq;
    for (int i = 0; i < 5; ++i) seq.push_back(random_tensor({3}, rng));
    const BilstmResult r = bilstm_forward(seq, fwd, bwd);
    REQUIRE(r.activations.size() == seq.size());

    Tensor h({4}), c({4});
    std::vector<Tensor> fh;
    for (const Tensor& x : seq) {
        std::tie(h, c) = lstm_cell_step(x, h, c, fwd);
        fh.push_back(h);
    }
    for (int j = 0; j < 4; ++j) CHECK(r.last_fwd_h[j] == doctest::Approx(h[j]));
    h = Tensor({4});
    c = Tensor({4});
    std::vector<Tensor> bh(seq.size());
    for (int i = 4; i >= 0; --i) {
        std::tie(h, c) = lstm_cell_step(seq[static_cast<std::size_t>(i)], h, c, bwd);
        bh[static_cast<std::size_t>(i)] = h;
    }
    for (std::size_t i = 0; i < seq.size(); ++i) {
        for (int j = 0; j < 4; ++j) {
            CHECK(r.activations[i][j] == doctest::Approx(fh[i][j]));
            CHECK(r.activations[i][4 + j] == doctest::Approx(bh[i][j]));
        }
    }
}

TEST_CASE("bilstm rejects empty input") {
    Rng rng(43);
    const LstmCellParams cell = random_lstm(2, 2, rng);
    CHECK_THROWS_AS(bilstm_forward(std::vector<Tensor>{}, cell, cell), ParameterError);
}

TEST_CASE("conv1d output lengths follow (t-k)/s + 1") {
    CHECK(conv1d_output_length(7, 3, 1) == 5);
    CHECK(conv1d_output_length(7, 3, 2) == 3);
    Rng rng(47);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + static_cast<int>(rng.uniform_int(5));
        const int t = k + static_cast<int>(rng.uniform_int(20));
        const int s = 1 + static_cast<int>(rng.uniform_int(3));
        Conv1dParams p = conv1d_init(1, 2, k, s, rng);
        const Tensor out = conv1d_forward(random_tensor({t}, rng), p);
        CHECK(out.dim(1) == (t - k) / s + 1);
    }
}

TEST_CASE("conv1d delta filter slices the input") {
    Conv1dParams p;
    p.num_filters = 1;
    p.kernel_size = 3;
    p.stride = 2;
    p.filters = Tensor({1, 1, 3}, {0.0, 1.0, 0.0});  // delta at offset 1
    p.bias = Tensor({1});
    const Tensor x = Tensor::vec({10, 20, 30, 40, 50, 60, 70});
    const Tensor out = conv1d_forward(x, p);
    REQUIRE(out.dim(1) == 3);
    CHECK(out.at(0, 0) == 20.0);
    CHECK(out.at(0, 1) == 40.0);
    CHECK(out.at(0, 2) == 60.0);
}

TEST_CASE("conv1d rejects inputs shorter than the kernel") {
    Rng rng(53);
    Conv1dParams p = conv1d_init(1, 1, 5, 1, rng);
    CHECK_THROWS_AS(conv1d_forward(Tensor::vec({1, 2, 3}), p), ShapeError);
}

TEST_CASE("softmax basics") {
    const Tensor a = softmax(Tensor::vec({0.0, 0.0}));
    CHECK(a[0] == doctest::Approx(0.5));
    CHECK(a[1] == doctest::Approx(0.5));

    const Tensor b = softmax(Tensor::vec({1000.0, 1000.0}));  // stabilization
    CHECK(b[0] == doctest::Approx(0.5));
    CHECK(std::isfinite(b[1]));

    const Tensor c = softmax(Tensor::vec({std::log(1.0), std::log(3.0)}));
    CHECK(c[0] == doctest::Approx(0.25));
    CHECK(c[1] == doctest::Approx(0.75));
}

TEST_CASE("softmax sums to one and shifts are invariant") {
    Rng rng(59);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(8));
        const Tensor logits = random_tensor({n}, rng, 10.0);
        const Tensor p = softmax(logits);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            CHECK(p[i] > 0.0);
            sum += p[i];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
        Tensor shifted = logits;
        const double shift = rng.uniform(-100.0, 100.0);
        for (int i = 0; i < n; ++i) shifted[i] += shift;
        const Tensor q = softmax(shifted);
        for (int i = 0; i < n; ++i) CHECK(std::fabs(p[i] - q[i]) < 1e-9);
    }
}

TEST_CASE("cross entropy values") {
    CHECK(cross_entropy_loss(Tensor::vec({0.25, 0.25, 0.25, 0.25}), 2) ==
          doctest::Approx(std::log(4.0)));
    CHECK(cross_entropy_loss(Tensor::vec({1.0, 0.0, 0.0}), 0) == doctest::Approx(0.0));
    CHECK(cross_entropy_loss(Tensor::vec({0.25, 0.75}), 1) ==
          doctest::Approx(std::log(4.0 / 3.0)));
    CHECK_THROWS_AS(cross_entropy_loss(Tensor::vec({0.5, 0.5}), 2), IndexError);
    // probability floor keeps the loss finite
    CHECK(std::isfinite(cross_entropy_loss(Tensor::vec({1.0, 0.0}), 1)));
}

TEST_CASE("dropout: rate 0 and infer mode are identities") {
    Rng rng(61);
    const Tensor x = random_tensor({64}, rng);
    Rng r1(5), r2(5);
    const Tensor train0 = dropout(x, 0.0, DropoutMode::train, r1);
    const Tensor infer = dropout(x, 0.2, DropoutMode::infer, r2);
    for (int i = 0; i < x.size(); ++i) {
        CHECK(train0[i] == x[i]);
        CHECK(infer[i] == x[i]);
    }
    CHECK_THROWS_AS(dropout(x, 1.0, DropoutMode::train, r1), ParameterError);
}

TEST_CASE("dropout keeps the survivor fraction and mean") {
    const int n = 100000;
    Tensor x({n});
    x.fill(1.0);
    Rng rng(67);
    const Tensor y = dropout(x, 0.5, DropoutMode::train, rng);
    int survivors = 0;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (y[i] != 0.0) ++survivors;
        sum += y[i];
    }
    const double frac = static_cast<double>(survivors) / n;
    CHECK(frac == doctest::Approx(0.5).epsilon(0.02));
    CHECK(sum / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("adam: zero gradient leaves params unchanged") {
    std::map<std::string, Tensor> params{{"w", Tensor::vec({1.0, -2.0})}};
    std::map<std::string, Tensor> grads{{"w", Tensor({2})}};
    AdamState state;
    adam_step(params, grads, state);
    CHECK(state.step == 1);
    CHECK(params.at("w")[0] == 1.0);
    CHECK(params.at("w")[1] == -2.0);
}

TEST_CASE("adam: first step moves by about the learning rate") {
    std::map<std::string, Tensor> params{{"w", Tensor::vec({0.0})}};
    std::map<std::string, Tensor> grads{{"w", Tensor::vec({0.37})}};
    AdamState state;
    adam_step(params, grads, state);
    // bias-corrected update: lr * g/sqrt(g^2) = lr (up to epsilon)
    CHECK(params.at("w")[0] == doctest::Approx(-1e-3).epsilon(1e-4));
}

TEST_CASE("adam: two steps match hand-computed accumulators") {
    const double g1 = 0.5, g2 = -0.25, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::map<std::string, Tensor> params{{"w", Tensor::vec({1.0})}};
    AdamState state;

    double m = 0.0, v = 0.0, w = 1.0;
    auto hand_step = [&](double g, int t) {
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        w -= lr * mhat / (std::sqrt(vhat) + eps);
    };

    std::map<std::string, Tensor> grads{{"w", Tensor::vec({g1})}};
    adam_step(params, grads, state);
    hand_step(g1, 1);
    CHECK(params.at("w")[0] == doctest::Approx(w).epsilon(1e-12));

    grads.at("w")[0] = g2;
    adam_step(params, grads, state);
    hand_step(g2, 2);
    CHECK(params.at("w")[0] == doctest::Approx(w).epsilon(1e-12));
    CHECK(state.step == 2);
}

TEST_CASE("adam rejects shape mismatches") {
    std::map<std::string, Tensor> params{{"w", Tensor({2})}};
    std::map<std::string, Tensor> grads{{"w", Tensor({3})}};
    AdamState state;
    CHECK_THROWS_AS(adam_step(params, grads, state), ShapeError);
}

TEST_CASE("global norm clipping") {
    std::map<std::string, Tensor> grads{{"a", Tensor::vec({3.0})}, {"b", Tensor::vec({4.0})}};
    clip_global_norm(grads, 5.0);  // norm exactly 5, untouched
    CHECK(grads.at("a")[0] == 3.0);
    clip_global_norm(grads, 2.5);
    CHECK(grads.at("a")[0] == doctest::Approx(1.5));
    CHECK(grads.at("b")[0] == doctest::Approx(2.0));
}

TEST_CASE("forward determinism under identical seeds") {
    Rng r1(99), r2(99);
    const LstmCellParams p1 = random_lstm(4, 4, r1);
    const LstmCellParams p2 = random_lstm(4, 4, r2);
    Rng xr1(7), xr2(7);
    const Tensor x1 = random_tensor({4}, xr1);
    const Tensor x2 = random_tensor({4}, xr2);
    const auto [h1, c1] = lstm_cell_step(x1, Tensor({4}), Tensor({4}), p1);
    const auto [h2, c2] = lstm_cell_step(x2, Tensor({4}), Tensor({4}), p2);
    for (int j = 0; j < 4; ++j) {
        CHECK(h1[j] == h2[j]);  // bit identical
        CHECK(c1[j] == c2[j]);
    }
}
