// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "kernelseer/tensor.hpp"

namespace kernelseer::nn {

// Handle into a Tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are tensors; ops append nodes, backward() walks
// the record in reverse. One tape per training example; parents are always
// recorded before children, so creation order is a topological order.
class Tape {
public:
    // Constant leaf (inputs, one-hot tokens, dropout masks baked elsewhere).
    Var input(Tensor value);

    // Named leaf whose gradient is collected by param_grads().
    Var param(const std::string& name, const Tensor& value);

    // y = x.W + b with x (in), W (in,out), b (out).
    Var dense(Var x, Var w, Var b);

    Var add(Var a, Var b);            // elementwise, same shape
    Var mul(Var a, Var b);            // elementwise, same shape
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var concat(Var a, Var b);         // 1-D concatenation
    Var flatten(Var a);               // row-major reshape to rank 1
    Var mask(Var a, Tensor m);        // y = a * m with m constant (dropout)
    Var softmax(Var a);

    // x (c_in,t) or (t); filters (f,c_in,k); bias (f) -> (f, o).
    Var conv1d(Var x, Var filters, Var bias, int stride);

    // out = sum_i alpha[i] * items[i]; alpha (n), items each (d).
    Var weighted_sum(Var alpha, const std::vector<Var>& items);

    // Stacks n scalar (or length-1) vars into one length-n vector.
    Var stack(const std::vector<Var>& scalars);

    // Fused stable softmax + cross entropy on logits; scalar result.
    Var cross_entropy_logits(Var logits, int target);

    // scale * sum of scalar vars; used to average per-position losses.
    Var sum_scaled(const std::vector<Var>& scalars, double scale);

    const Tensor& value(Var v) const;
    double scalar(Var v) const;

    // Seeds d(loss)=1 and propagates. Must be called on a scalar node.
    void backward(Var loss);

    // Gradient of the given node after backward().
    const Tensor& grad(Var v) const;

    // Gradients of all named leaves, keyed by name, after backward().
    std::map<std::string, Tensor> param_grads() const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        leaf,
        dense,
        add,
        mul,
        sigmoid,
        tanh_,
        concat,
        flatten,
        mask,
        softmax_,
        conv1d_,
        weighted_sum_,
        stack_,
        ce_logits,
        sum_scaled_,
    };

    struct Node {
        Op op;
        Tensor value;
        Tensor grad;
        int p0 = -1, p1 = -1, p2 = -1;
        std::vector<int> parents;  // variadic ops
        int aux_int = 0;           // stride / target index
        double aux_scalar = 0.0;   // sum scale
        Tensor aux;                // dropout mask, cached softmax probs
        bool needs_grad = false;   // reachable from a named parameter
    };

    Var push(Node n);
    Node& node(Var v);
    const Node& node(Var v) const;
    void backward_node(int id);

    std::vector<Node> nodes_;
    std::map<std::string, int> param_ids_;
    bool ran_backward_ = false;
};

}  // namespace kernelseer::nn
