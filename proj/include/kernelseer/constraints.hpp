// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kernelseer/problem.hpp"

namespace kernelseer {

// A kernel's tuning-parameter schema: ordered parameter names and their
// legal value sets. The order defines output token positions.
struct KernelSpec {
    struct Param {
        std::string name;
        std::vector<std::int64_t> values;
    };

    std::string name;
    std::vector<Param> params;

    int num_params() const { return static_cast<int>(params.size()); }
    int param_index(std::string_view param_name) const;  // -1 if unknown
    const Param& param(std::string_view param_name) const;
    bool value_legal(std::string_view param_name, std::int64_t value) const;
    void check() const;
};

// The four built-in kernel schemas.
const std::vector<KernelSpec>& builtin_specs();
const KernelSpec& builtin_spec(std::string_view name);  // throws, listing known names

// Product of value-set cardinalities.
std::uint64_t search_space_size(const KernelSpec& spec);

// Pure boolean feasibility test over (descriptor, partial parameter map).
// Contract: true on the empty map; monotone (false on a partial map implies
// false on every extension). Non-monotone checks must be registered with
// full_sequence_only so they are evaluated only on complete maps.
struct ConstraintPredicate {
    std::string name;
    std::vector<std::string> reads;  // parameter names the predicate inspects
    bool full_sequence_only = false;
    std::function<bool(const ProblemDescriptor&, const ParamMap&)> fn;

    bool evaluate(const ProblemDescriptor& d, const ParamMap& assigned) const {
        return fn(d, assigned);
    }
};

// True iff every assigned parameter's value is in its legal set.
ConstraintPredicate membership_predicate(const KernelSpec& spec);

// True iff sum of weight[p] * value[p] over assigned params <= budget.
// Weights must be nonnegative, which keeps the predicate monotone.
ConstraintPredicate resource_budget_predicate(std::map<std::string, double> weights,
                                              double budget,
                                              std::string name = "resource_budget");

struct Violation {
    std::string predicate;
    std::vector<std::string> params;  // the parameters the predicate reads
};

// Evaluates predicates in order on a complete map; nullopt means valid.
std::optional<Violation> validate_sequence(const KernelSpec& spec,
                                           const ProblemDescriptor& descriptor,
                                           const ParamMap& params,
                                           std::span<const ConstraintPredicate> predicates);

// Text schema, one spec per line:
//   <kernel>|<param>=<values>|<param>=<values>...
// where <values> is a comma list of integers, a lo-hi range, or a 2^lo-hi
// power range. '#' starts a comment.
KernelSpec parse_kernel_spec_line(const std::string& line, int line_number = 1);
std::vector<KernelSpec> load_kernel_specs(const std::string& path);
std::string format_kernel_spec(const KernelSpec& spec);

// Expands a single value-set expression ("1-4", "2^0-8", "1,2,4").
std::vector<std::int64_t> parse_value_set(const std::string& text, int line_number = 1,
                                          int column = 1);

}  // namespace kernelseer
