// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "kernelseer/data.hpp"
#include "kernelseer/decoding.hpp"

namespace kernelseer {

struct EvalReport {
    int beam_width = 1;
    bool constrained = false;
    int sample_count = 0;
    std::vector<double> per_param_accuracy;  // percent, per output position
    double average_accuracy = 0.0;           // percent
    double perfect_prediction = 0.0;         // percent
};

// (1/n) * sum_i (C_i / S) * 100 with C_i the per-position exact matches.
double average_accuracy(const std::vector<TokenSequence>& predictions,
                        const std::vector<TokenSequence>& actuals);

// count(prediction == actual) / S * 100 over whole sequences.
double perfect_prediction(const std::vector<TokenSequence>& predictions,
                          const std::vector<TokenSequence>& actuals);

EvalReport compute_metrics(const std::vector<TokenSequence>& predictions,
                           const std::vector<TokenSequence>& actuals);

// Beam metrics per k: a sample is perfect when ANY of the k beams equals
// the truth; average accuracy scores the best-matching beam (most position
// matches, ties resolved toward the higher-ranked beam). A sample whose
// constrained search empties counts as zero matches.
std::vector<EvalReport> topk_metrics(const ModelParams& params,
                                     const std::vector<Sample>& test,
                                     const std::vector<int>& k_values,
                                     std::span<const ConstraintPredicate> predicates = {},
                                     int threads = 1);

// Aligned text table (rows Avg/Pft, one column per k) and CSV with header
//   k,constrained,samples,avg_accuracy,perfect_prediction[,<param>...]
std::string format_report_table(const std::vector<EvalReport>& reports);
std::string format_report_csv(const std::vector<EvalReport>& reports,
                              const std::vector<std::string>& param_names = {});

// ---------------------------------------------------------------------------
// Classical baselines over raw numeric descriptor fields
// ---------------------------------------------------------------------------

struct KnnModel {
    int k_neighbors = 1;
    std::vector<std::string> param_names;
    std::vector<double> feature_mean, feature_scale;     // z-scoring
    std::vector<std::vector<double>> features;           // standardized train rows
    std::vector<std::vector<std::int64_t>> param_values; // per row, per param
};

KnnModel knn_fit(const std::vector<Sample>& train, int k_neighbors);
ParamMap knn_predict(const KnnModel& model, const ProblemDescriptor& query);

struct DtreeNode {
    int feature = -1;        // -1 marks a leaf
    double threshold = 0.0;  // go left when x[feature] <= threshold
    std::int64_t value = 0;  // leaf prediction
    int left = -1, right = -1;
};

struct DtreeModel {
    std::vector<std::string> param_names;
    std::vector<std::vector<DtreeNode>> trees;  // one tree per parameter
};

DtreeModel dtree_fit(const std::vector<Sample>& train, int max_depth);
ParamMap dtree_predict(const DtreeModel& model, const ProblemDescriptor& query);

struct GnbModel {
    struct PerParam {
        std::vector<std::int64_t> classes;
        std::vector<double> log_prior;
        std::vector<std::vector<double>> mean;      // class x feature
        std::vector<std::vector<double>> variance;  // class x feature
    };
    std::vector<std::string> param_names;
    std::vector<PerParam> params;
};

GnbModel gnb_fit(const std::vector<Sample>& train);
ParamMap gnb_predict(const GnbModel& model, const ProblemDescriptor& query);

// Average accuracy of a baseline's predictions over a test set, percent.
template <typename Model, typename PredictFn>
double baseline_average_accuracy(const Model& model, PredictFn predict,
                                 const std::vector<Sample>& test) {
    if (test.empty()) throw ParameterError("empty test set");
    long long matches = 0, total = 0;
    for (const Sample& s : test) {
        const ParamMap predicted = predict(model, s.descriptor);
        for (const auto& [name, value] : s.params) {
            ++total;
            auto it = predicted.find(name);
            if (it != predicted.end() && it->second == value) ++matches;
        }
    }
    return 100.0 * static_cast<double>(matches) / static_cast<double>(total);
}

}  // namespace kernelseer
