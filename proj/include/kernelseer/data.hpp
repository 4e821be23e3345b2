// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kernelseer/constraints.hpp"
#include "kernelseer/models.hpp"
#include "kernelseer/problem.hpp"

namespace kernelseer {

// One tuning record: a problem and the optimal parameter set found for it.
struct Sample {
    ProblemDescriptor descriptor;
    ParamMap params;
    std::string kernel;
    Precision precision = Precision::full;

    bool operator==(const Sample&) const = default;
};

// Homogeneous collection (one kernel, one precision, unique descriptors).
struct Dataset {
    std::string kernel;
    Precision precision = Precision::full;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    void check(const KernelSpec& spec) const;
};

// ---------------------------------------------------------------------------
// Record text format
// ---------------------------------------------------------------------------
// One sample per line:
//   <kernel>,<fp32|fp16>|n=INT,c=INT,h=INT,w=INT,k=INT,y=INT,x=INT|<name>=<value>,...
// Whitespace around separators is ignored; '#' starts a comment line.

Sample parse_record(const std::string& line, const KernelSpec& spec, int line_number = 1);
std::string format_record(const Sample& sample);

Dataset load_dataset(const std::string& path, const KernelSpec& spec);
void save_dataset(const Dataset& dataset, const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

enum class Difficulty { easy, moderate };

Difficulty difficulty_from_label(const std::string& s);
std::string difficulty_label(Difficulty d);

// Deterministic dataset whose parameters are a hidden function of the
// descriptor: easy couples each parameter to a single field through
// threshold buckets; moderate mixes bucketed products/ratios of fields and
// couples adjacent parameters. Values are always legal for the spec and
// descriptors are unique.
Dataset generate_synthetic(const KernelSpec& spec, int count, std::uint64_t seed,
                           Difficulty difficulty, Precision precision = Precision::full);

// Disjoint seeded split; sizes within 1 of the exact fractions.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
// Layout: UTF-8 'key: value' header (format version, variant, config,
// kernel schema, vocabulary, ordered tensor list), one blank line, then all
// tensor payloads as little-endian float32 in header order.

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace kernelseer
