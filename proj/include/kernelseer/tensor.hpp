// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "kernelseer/errors.hpp"

namespace kernelseer::nn {

// Dense row-major tensor of 64-bit reals. Rank is usually 1 or 2; conv
// filters use rank 3.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor vec(std::vector<double> data);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int size() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }

    double& at(int i, int j, int k) {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_string() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<int>& shape);

// Throws ShapeError naming both shapes unless they are equal.
void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace kernelseer::nn
