// SPDX-License-Identifier: Apache-2.0
#include "kernelseer/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace kernelseer::nn {

Var Tape::push(Node n) {
    if (!n.needs_grad) {
        auto needs = [&](int pid) {
            return pid >= 0 && nodes_[static_cast<std::size_t>(pid)].needs_grad;
        };
        n.needs_grad = needs(n.p0) || needs(n.p1) || needs(n.p2);
        if (!n.needs_grad) {
            for (int pid : n.parents) {
                if (needs(pid)) {
                    n.needs_grad = true;
                    break;
                }
            }
        }
    }
    if (n.needs_grad) n.grad = Tensor(n.value.shape());
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw StateError("tape: invalid var handle");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw StateError("tape: invalid var handle");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::input(Tensor value) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::param(const std::string& name, const Tensor& value) {
    Node n;
    n.op = Op::leaf;
    n.value = value;
    n.needs_grad = true;
    Var v = push(std::move(n));
    param_ids_[name] = v.id;
    return v;
}

Var Tape::dense(Var x, Var w, Var b) {
    const Tensor& xv = node(x).value;
    const Tensor& wv = node(w).value;
    const Tensor& bv = node(b).value;
    if (wv.rank() != 2 || xv.size() != wv.dim(0) || bv.size() != wv.dim(1)) {
        throw ShapeError("tape dense: x " + xv.shape_string() + " W " +
                         wv.shape_string() + " b " + bv.shape_string());
    }
    const int in = wv.dim(0);
    const int out = wv.dim(1);
    Node n;
    n.op = Op::dense;
    n.p0 = x.id;
    n.p1 = w.id;
    n.p2 = b.id;
    n.value = Tensor({out}, bv.values());
    const double* xd = xv.data();
    const double* wd = wv.data();
    double* yd = n.value.data();
    for (int i = 0; i < in; ++i) {
        const double xi = xd[i];
        if (xi == 0.0) continue;
        const double* wrow = wd + static_cast<std::size_t>(i) * out;
        for (int j = 0; j < out; ++j) yd[j] += xi * wrow[j];
    }
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    require_same_shape(av, bv, "tape add");
    Node n;
    n.op = Op::add;
    n.p0 = a.id;
    n.p1 = b.id;
    n.value = Tensor(av.shape());
    for (int i = 0; i < av.size(); ++i) n.value[i] = av[i] + bv[i];
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    require_same_shape(av, bv, "tape mul");
    Node n;
    n.op = Op::mul;
    n.p0 = a.id;
    n.p1 = b.id;
    n.value = Tensor(av.shape());
    for (int i = 0; i < av.size(); ++i) n.value[i] = av[i] * bv[i];
    return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
    const Tensor& av = node(a).value;
    Node n;
    n.op = Op::sigmoid;
    n.p0 = a.id;
    n.value = Tensor(av.shape());
    for (int i = 0; i < av.size(); ++i) n.value[i] = 1.0 / (1.0 + std::exp(-av[i]));
    return push(std::move(n));
}

Var Tape::tanh(Var a) {
    const Tensor& av = node(a).value;
    Node n;
    n.op = Op::tanh_;
    n.p0 = a.id;
    n.value = Tensor(av.shape());
    for (int i = 0; i < av.size(); ++i) n.value[i] = std::tanh(av[i]);
    return push(std::move(n));
}

Var Tape::concat(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    Node n;
    n.op = Op::concat;
    n.p0 = a.id;
    n.p1 = b.id;
    n.aux_int = av.size();
    n.value = Tensor({av.size() + bv.size()});
    std::copy(av.data(), av.data() + av.size(), n.value.data());
    std::copy(bv.data(), bv.data() + bv.size(), n.value.data() + av.size());
    return push(std::move(n));
}

Var Tape::flatten(Var a) {
    const Tensor& av = node(a).value;
    Node n;
    n.op = Op::flatten;
    n.p0 = a.id;
    n.value = Tensor({av.size()}, av.values());
    return push(std::move(n));
}

Var Tape::mask(Var a, Tensor m) {
    const Tensor& av = node(a).value;
    require_same_shape(av, m, "tape mask");
    Node n;
    n.op = Op::mask;
    n.p0 = a.id;
    n.value = Tensor(av.shape());
    for (int i = 0; i < av.size(); ++i) n.value[i] = av[i] * m[i];
    n.aux = std::move(m);
    return push(std::move(n));
}

Var Tape::softmax(Var a) {
    const Tensor& av = node(a).value;
    if (av.empty()) throw ParameterError("tape softmax: empty input");
    Node n;
    n.op = Op::softmax_;
    n.p0 = a.id;
    n.value = Tensor(av.shape());
    const double mx = *std::max_element(av.values().begin(), av.values().end());
    double sum = 0.0;
    for (int i = 0; i < av.size(); ++i) {
        n.value[i] = std::exp(av[i] - mx);
        sum += n.value[i];
    }
    for (int i = 0; i < av.size(); ++i) n.value[i] /= sum;
    return push(std::move(n));
}

Var Tape::conv1d(Var x, Var filters, Var bias, int stride) {
    const Tensor& xv = node(x).value;
    const Tensor& fv = node(filters).value;
    const Tensor& bv = node(bias).value;
    if (fv.rank() != 3) throw ShapeError("tape conv1d: filters must be rank 3");
    const int f = fv.dim(0);
    const int c_in = fv.dim(1);
    const int k = fv.dim(2);
    const int t = xv.rank() == 1 ? xv.dim(0) : xv.dim(1);
    const int x_ch = xv.rank() == 1 ? 1 : xv.dim(0);
    if (x_ch != c_in || bv.size() != f) {
        throw ShapeError("tape conv1d: x " + xv.shape_string() + " filters " +
                         fv.shape_string() + " bias " + bv.shape_string());
    }
    if (t < k) {
        throw ShapeError("tape conv1d: input length " + std::to_string(t) +
                         " shorter than kernel " + std::to_string(k));
    }
    const int o = (t - k) / stride + 1;
    Node n;
    n.op = Op::conv1d_;
    n.p0 = x.id;
    n.p1 = filters.id;
    n.p2 = bias.id;
    n.aux_int = stride;
    n.value = Tensor({f, o});
    for (int fi = 0; fi < f; ++fi) {
        for (int j = 0; j < o; ++j) {
            double acc = bv[fi];
            const int start = j * stride;
            for (int ch = 0; ch < c_in; ++ch) {
                const double* row = xv.data() + static_cast<std::size_t>(ch) * t;
                for (int u = 0; u < k; ++u) acc += fv.at(fi, ch, u) * row[start + u];
            }
            n.value.at(fi, j) = acc;
        }
    }
    return push(std::move(n));
}

Var Tape::weighted_sum(Var alpha, const std::vector<Var>& items) {
    const Tensor& av = node(alpha).value;
    if (static_cast<int>(items.size()) != av.size()) {
        throw ShapeError("tape weighted_sum: " + std::to_string(items.size()) +
                         " items vs alpha " + av.shape_string());
    }
    const Tensor& first = node(items[0]).value;
    Node n;
    n.op = Op::weighted_sum_;
    n.p0 = alpha.id;
    n.parents.reserve(items.size());
    for (Var it : items) {
        require_same_shape(first, node(it).value, "tape weighted_sum");
        n.parents.push_back(it.id);
    }
    n.value = Tensor(first.shape());
    for (int i = 0; i < av.size(); ++i) {
        const Tensor& item = node(items[static_cast<std::size_t>(i)]).value;
        for (int j = 0; j < item.size(); ++j) n.value[j] += av[i] * item[j];
    }
    return push(std::move(n));
}

Var Tape::stack(const std::vector<Var>& scalars) {
    if (scalars.empty()) throw ParameterError("tape stack: empty list");
    Node n;
    n.op = Op::stack_;
    n.value = Tensor({static_cast<int>(scalars.size())});
    n.parents.reserve(scalars.size());
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        const Tensor& sv = node(scalars[i]).value;
        if (sv.size() != 1) throw ShapeError("tape stack: items must be scalars");
        n.value[static_cast<int>(i)] = sv[0];
        n.parents.push_back(scalars[i].id);
    }
    return push(std::move(n));
}

Var Tape::cross_entropy_logits(Var logits, int target) {
    const Tensor& lv = node(logits).value;
    if (target < 0 || target >= lv.size()) {
        throw IndexError("cross_entropy_logits: target " + std::to_string(target) +
                         " out of range [0," + std::to_string(lv.size()) + ")");
    }
    Node n;
    n.op = Op::ce_logits;
    n.p0 = logits.id;
    n.aux_int = target;
    const double mx = *std::max_element(lv.values().begin(), lv.values().end());
    double sum = 0.0;
    n.aux = Tensor(lv.shape());
    for (int i = 0; i < lv.size(); ++i) {
        n.aux[i] = std::exp(lv[i] - mx);
        sum += n.aux[i];
    }
    for (int i = 0; i < lv.size(); ++i) n.aux[i] /= sum;  // cached probs
    n.value = Tensor({1});
    n.value[0] = std::log(sum) + mx - lv[target];
    return push(std::move(n));
}

Var Tape::sum_scaled(const std::vector<Var>& scalars, double scale) {
    if (scalars.empty()) throw ParameterError("tape sum_scaled: empty list");
    Node n;
    n.op = Op::sum_scaled_;
    n.aux_scalar = scale;
    n.value = Tensor({1});
    n.parents.reserve(scalars.size());
    for (Var s : scalars) {
        const Tensor& sv = node(s).value;
        if (sv.size() != 1) throw ShapeError("tape sum_scaled: items must be scalars");
        n.value[0] += sv[0];
        n.parents.push_back(s.id);
    }
    n.value[0] *= scale;
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
    const Tensor& t = node(v).value;
    if (t.size() != 1) throw ShapeError("scalar() on tensor " + t.shape_string());
    return t[0];
}

const Tensor& Tape::grad(Var v) const {
    if (!ran_backward_) throw StateError("grad() before backward()");
    return node(v).grad;
}

std::map<std::string, Tensor> Tape::param_grads() const {
    if (!ran_backward_) throw StateError("param_grads() before backward()");
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : param_ids_) {
        out.emplace(name, nodes_[static_cast<std::size_t>(id)].grad);
    }
    return out;
}

void Tape::backward(Var loss) {
    Node& top = node(loss);
    if (top.value.size() != 1) {
        throw ShapeError("backward() requires a scalar loss, got " +
                         top.value.shape_string());
    }
    if (!top.needs_grad) {
        throw StateError("backward() on a loss with no parameter dependencies");
    }
    top.grad[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        if (nodes_[static_cast<std::size_t>(id)].needs_grad) backward_node(id);
    }
    ran_backward_ = true;
}

void Tape::backward_node(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    auto g = [&](int pid) -> Tensor& { return nodes_[static_cast<std::size_t>(pid)].grad; };
    auto v = [&](int pid) -> const Tensor& {
        return nodes_[static_cast<std::size_t>(pid)].value;
    };
    auto needs = [&](int pid) { return nodes_[static_cast<std::size_t>(pid)].needs_grad; };
    switch (n.op) {
        case Op::leaf:
            break;
        case Op::dense: {
            const Tensor& xv = v(n.p0);
            const Tensor& wv = v(n.p1);
            const int in = wv.dim(0);
            const int out = wv.dim(1);
            const double* dy = n.grad.data();
            if (needs(n.p2)) {
                Tensor& gb = g(n.p2);
                for (int j = 0; j < out; ++j) gb[j] += dy[j];
            }
            const bool xneed = needs(n.p0);
            const bool wneed = needs(n.p1);
            if (xneed && wneed) {
                Tensor& gx = g(n.p0);
                Tensor& gw = g(n.p1);
                for (int i = 0; i < in; ++i) {
                    const double xi = xv[i];
                    const double* wrow = wv.data() + static_cast<std::size_t>(i) * out;
                    double* gwrow = gw.data() + static_cast<std::size_t>(i) * out;
                    double acc = 0.0;
                    for (int j = 0; j < out; ++j) {
                        acc += dy[j] * wrow[j];
                        gwrow[j] += xi * dy[j];
                    }
                    gx[i] += acc;
                }
            } else if (wneed) {
                // x constant (e.g. one-hot token): touch only its nonzero rows.
                Tensor& gw = g(n.p1);
                for (int i = 0; i < in; ++i) {
                    const double xi = xv[i];
                    if (xi == 0.0) continue;
                    double* gwrow = gw.data() + static_cast<std::size_t>(i) * out;
                    for (int j = 0; j < out; ++j) gwrow[j] += xi * dy[j];
                }
            } else if (xneed) {
                Tensor& gx = g(n.p0);
                for (int i = 0; i < in; ++i) {
                    const double* wrow = wv.data() + static_cast<std::size_t>(i) * out;
                    double acc = 0.0;
                    for (int j = 0; j < out; ++j) acc += dy[j] * wrow[j];
                    gx[i] += acc;
                }
            }
            break;
        }
        case Op::add: {
            if (needs(n.p0)) {
                Tensor& ga = g(n.p0);
                for (int i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
            }
            if (needs(n.p1)) {
                Tensor& gb = g(n.p1);
                for (int i = 0; i < n.grad.size(); ++i) gb[i] += n.grad[i];
            }
            break;
        }
        case Op::mul: {
            if (needs(n.p0)) {
                const Tensor& bv = v(n.p1);
                Tensor& ga = g(n.p0);
                for (int i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * bv[i];
            }
            if (needs(n.p1)) {
                const Tensor& av = v(n.p0);
                Tensor& gb = g(n.p1);
                for (int i = 0; i < n.grad.size(); ++i) gb[i] += n.grad[i] * av[i];
            }
            break;
        }
        case Op::sigmoid: {
            if (!needs(n.p0)) break;
            Tensor& ga = g(n.p0);
            for (int i = 0; i < n.grad.size(); ++i) {
                ga[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
            }
            break;
        }
        case Op::tanh_: {
            if (!needs(n.p0)) break;
            Tensor& ga = g(n.p0);
            for (int i = 0; i < n.grad.size(); ++i) {
                ga[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
            }
            break;
        }
        case Op::concat: {
            const int asize = n.aux_int;
            if (needs(n.p0)) {
                Tensor& ga = g(n.p0);
                for (int i = 0; i < asize; ++i) ga[i] += n.grad[i];
            }
            if (needs(n.p1)) {
                Tensor& gb = g(n.p1);
                for (int i = 0; i < gb.size(); ++i) gb[i] += n.grad[asize + i];
            }
            break;
        }
        case Op::flatten: {
            if (!needs(n.p0)) break;
            Tensor& ga = g(n.p0);
            for (int i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
            break;
        }
        case Op::mask: {
            if (!needs(n.p0)) break;
            Tensor& ga = g(n.p0);
            for (int i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * n.aux[i];
            break;
        }
        case Op::softmax_: {
            if (!needs(n.p0)) break;
            Tensor& ga = g(n.p0);
            double dot = 0.0;
            for (int i = 0; i < n.grad.size(); ++i) dot += n.grad[i] * n.value[i];
            for (int i = 0; i < n.grad.size(); ++i) {
                ga[i] += n.value[i] * (n.grad[i] - dot);
            }
            break;
        }
        case Op::conv1d_: {
            const Tensor& xv = v(n.p0);
            const Tensor& fv = v(n.p1);
            const int f = fv.dim(0);
            const int c_in = fv.dim(1);
            const int k = fv.dim(2);
            const int t = xv.rank() == 1 ? xv.dim(0) : xv.dim(1);
            const int o = n.value.dim(1);
            const int stride = n.aux_int;
            const bool xneed = needs(n.p0);
            const bool fneed = needs(n.p1);
            for (int fi = 0; fi < f; ++fi) {
                for (int j = 0; j < o; ++j) {
                    const double dy = n.grad.at(fi, j);
                    if (dy == 0.0) continue;
                    if (needs(n.p2)) g(n.p2)[fi] += dy;
                    const int start = j * stride;
                    for (int ch = 0; ch < c_in; ++ch) {
                        const double* xrow = xv.data() + static_cast<std::size_t>(ch) * t;
                        for (int u = 0; u < k; ++u) {
                            if (fneed) g(n.p1).at(fi, ch, u) += dy * xrow[start + u];
                            if (xneed) {
                                g(n.p0).data()[static_cast<std::size_t>(ch) * t + start + u] +=
                                    dy * fv.at(fi, ch, u);
                            }
                        }
                    }
                }
            }
            break;
        }
        case Op::weighted_sum_: {
            const Tensor& av = v(n.p0);
            for (int i = 0; i < av.size(); ++i) {
                const int pid = n.parents[static_cast<std::size_t>(i)];
                const Tensor& item = v(pid);
                if (needs(n.p0)) {
                    double dot = 0.0;
                    for (int j = 0; j < item.size(); ++j) dot += n.grad[j] * item[j];
                    g(n.p0)[i] += dot;
                }
                if (needs(pid)) {
                    Tensor& gitem = g(pid);
                    for (int j = 0; j < item.size(); ++j) gitem[j] += n.grad[j] * av[i];
                }
            }
            break;
        }
        case Op::stack_: {
            for (std::size_t i = 0; i < n.parents.size(); ++i) {
                if (needs(n.parents[i])) g(n.parents[i])[0] += n.grad[static_cast<int>(i)];
            }
            break;
        }
        case Op::ce_logits: {
            if (!needs(n.p0)) break;
            Tensor& ga = g(n.p0);
            const double dy = n.grad[0];
            for (int i = 0; i < ga.size(); ++i) {
                const double onehot = (i == n.aux_int) ? 1.0 : 0.0;
                ga[i] += dy * (n.aux[i] - onehot);
            }
            break;
        }
        case Op::sum_scaled_: {
            const double dy = n.grad[0] * n.aux_scalar;
            for (int pid : n.parents) {
                if (needs(pid)) g(pid)[0] += dy;
            }
            break;
        }
    }
}

}  // namespace kernelseer::nn
