// SPDX-License-Identifier: Apache-2.0
#include "kernelseer/tensor.hpp"

#include <numeric>

namespace kernelseer::nn {

namespace {

std::size_t checked_size(const std::vector<int>& shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must have at least one dimension");
    }
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 1) {
            throw ShapeError("tensor dimensions must be >= 1, got shape " +
                             kernelseer::nn::shape_string(shape));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + kernelseer::nn::shape_string(shape_));
    }
}

Tensor Tensor::vec(std::vector<double> data) {
    const int n = static_cast<int>(data.size());
    return Tensor({n}, std::move(data));
}

std::string Tensor::shape_string() const { return kernelseer::nn::shape_string(shape_); }

std::string shape_string(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_string() +
                         " vs " + b.shape_string());
    }
}

}  // namespace kernelseer::nn
