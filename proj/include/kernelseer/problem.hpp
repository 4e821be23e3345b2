// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "kernelseer/errors.hpp"

namespace kernelseer {

enum class Precision { full, half };

std::string precision_label(Precision p);          // "fp32" / "fp16"
Precision precision_from_label(const std::string&);

// Convolution problem configuration: the dimensions of the input and weight
// tensors, plus numeric precision. These seven integers are the model's
// input language.
struct ProblemDescriptor {
    std::int64_t n = 1;    // batch size
    std::int64_t c = 1;    // input channels
    std::int64_t h_i = 1;  // input height
    std::int64_t w_i = 1;  // input width
    std::int64_t k = 1;    // output channels
    std::int64_t y = 1;    // filter height
    std::int64_t x = 1;    // filter width
    Precision precision = Precision::full;

    bool operator==(const ProblemDescriptor&) const = default;
    void check() const;  // all dimension fields >= 1
};

// Fixed input-field order used everywhere tokens are involved.
inline constexpr int kNumInputFields = 7;
inline constexpr std::array<const char*, kNumInputFields> kInputFieldNames = {
    "n", "c", "h", "w", "k", "y", "x"};

std::int64_t descriptor_field(const ProblemDescriptor& d, int field);
void set_descriptor_field(ProblemDescriptor& d, int field, std::int64_t value);

// Named kernel tuning parameters with concrete values.
using ParamMap = std::map<std::string, std::int64_t>;

}  // namespace kernelseer
