// SPDX-License-Identifier: Apache-2.0
#include "kernelseer/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "kernelseer/parallel.hpp"

namespace kernelseer {

namespace {

void check_prediction_sets(const std::vector<TokenSequence>& predictions,
                           const std::vector<TokenSequence>& actuals) {
    if (actuals.empty()) throw ParameterError("metrics: empty test set");
    if (predictions.size() != actuals.size()) {
        throw ParameterError("metrics: " + std::to_string(predictions.size()) +
                             " predictions vs " + std::to_string(actuals.size()) +
                             " actuals");
    }
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        if (predictions[i].ids.size() != actuals[0].ids.size() ||
            actuals[i].ids.size() != actuals[0].ids.size()) {
            throw ParameterError("metrics: sequences must have uniform arity");
        }
    }
}

}  // namespace

EvalReport compute_metrics(const std::vector<TokenSequence>& predictions,
                           const std::vector<TokenSequence>& actuals) {
    check_prediction_sets(predictions, actuals);
    const int arity = static_cast<int>(actuals[0].ids.size());
    const double s_test = static_cast<double>(actuals.size());
    EvalReport report;
    report.sample_count = static_cast<int>(actuals.size());
    report.per_param_accuracy.assign(static_cast<std::size_t>(arity), 0.0);
    int perfect = 0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        bool all = true;
        for (int p = 0; p < arity; ++p) {
            if (predictions[i].ids[static_cast<std::size_t>(p)] ==
                actuals[i].ids[static_cast<std::size_t>(p)]) {
                report.per_param_accuracy[static_cast<std::size_t>(p)] += 1.0;
            } else {
                all = false;
            }
        }
        if (all) ++perfect;
    }
    double sum = 0.0;
    for (double& acc : report.per_param_accuracy) {
        acc = acc / s_test * 100.0;
        sum += acc;
    }
    report.average_accuracy = sum / arity;
    report.perfect_prediction = static_cast<double>(perfect) / s_test * 100.0;
    return report;
}

double average_accuracy(const std::vector<TokenSequence>& predictions,
                        const std::vector<TokenSequence>& actuals) {
    return compute_metrics(predictions, actuals).average_accuracy;
}

double perfect_prediction(const std::vector<TokenSequence>& predictions,
                          const std::vector<TokenSequence>& actuals) {
    return compute_metrics(predictions, actuals).perfect_prediction;
}

std::vector<EvalReport> topk_metrics(const ModelParams& params,
                                     const std::vector<Sample>& test,
                                     const std::vector<int>& k_values,
                                     std::span<const ConstraintPredicate> predicates,
                                     int threads) {
    if (test.empty()) throw ParameterError("topk_metrics: empty test set");
    for (int k : k_values) {
        if (k < 1) throw ParameterError("topk_metrics: k must be >= 1");
    }
    const KernelSpec spec = spec_of(params);
    const SequencePredictor predictor(params);
    const int arity = predictor.num_positions();

    struct Encoded {
        TokenSequence input;
        TokenSequence truth;
        ProblemDescriptor descriptor;
    };
    std::vector<Encoded> enc;
    enc.reserve(test.size());
    for (const Sample& s : test) {
        enc.push_back({encode_problem(s.descriptor, params.vocab),
                       encode_params(s.params, spec, params.vocab), s.descriptor});
    }

    std::vector<EvalReport> reports;
    for (int k : k_values) {
        // best-matching beam per sample, chosen by position matches with
        // ties going to the higher-ranked (higher log-prob) beam
        std::vector<TokenSequence> best(enc.size());
        std::vector<char> perfect(enc.size(), 0);
        parallel_stripes(static_cast<int>(enc.size()), threads, [&](int w, int stride) {
            for (std::size_t i = static_cast<std::size_t>(w); i < enc.size();
                 i += static_cast<std::size_t>(stride)) {
                std::vector<ScoredSequence> beams;
                try {
                    beams = predicates.empty()
                                ? beam_search(predictor, enc[i].input, k)
                                : constrained_beam_search(predictor, enc[i].input, k,
                                                          predicates, enc[i].descriptor);
                } catch (const BeamExhaustedError&) {
                    beams.clear();
                }
                int best_matches = -1;
                TokenSequence best_seq;
                best_seq.role = TokenSequence::Role::output;
                best_seq.ids.assign(static_cast<std::size_t>(arity), -1);
                for (const ScoredSequence& beam : beams) {
                    int matches = 0;
                    for (int p = 0; p < arity; ++p) {
                        if (beam.tokens.ids[static_cast<std::size_t>(p)] ==
                            enc[i].truth.ids[static_cast<std::size_t>(p)]) {
                            ++matches;
                        }
                    }
                    if (matches == arity) perfect[i] = 1;
                    if (matches > best_matches) {
                        best_matches = matches;
                        best_seq = beam.tokens;
                    }
                }
                best[i] = std::move(best_seq);
            }
        });
        std::vector<TokenSequence> truths;
        truths.reserve(enc.size());
        for (const Encoded& e : enc) truths.push_back(e.truth);
        EvalReport report = compute_metrics(best, truths);
        // perfect prediction counts any-of-k hits, not just the best beam
        int hits = 0;
        for (char p : perfect) hits += p;
        report.perfect_prediction =
            100.0 * static_cast<double>(hits) / static_cast<double>(enc.size());
        report.beam_width = k;
        report.constrained = !predicates.empty();
        reports.push_back(std::move(report));
    }
    return reports;
}

std::string format_report_table(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << std::left << std::setw(8) << "Metric";
    for (const EvalReport& r : reports) {
        out << std::right << std::setw(10) << ("k=" + std::to_string(r.beam_width));
    }
    out << "\n";
    out << std::left << std::setw(8) << "Avg";
    for (const EvalReport& r : reports) {
        out << std::right << std::setw(10) << r.average_accuracy;
    }
    out << "\n";
    out << std::left << std::setw(8) << "Pft";
    for (const EvalReport& r : reports) {
        out << std::right << std::setw(10) << r.perfect_prediction;
    }
    out << "\n";
    return out.str();
}

std::string format_report_csv(const std::vector<EvalReport>& reports,
                              const std::vector<std::string>& param_names) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "k,constrained,samples,avg_accuracy,perfect_prediction";
    for (const std::string& name : param_names) out << "," << name;
    out << "\n";
    for (const EvalReport& r : reports) {
        out << r.beam_width << "," << (r.constrained ? 1 : 0) << "," << r.sample_count
            << "," << r.average_accuracy << "," << r.perfect_prediction;
        if (!param_names.empty()) {
            for (double acc : r.per_param_accuracy) out << "," << acc;
        }
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

namespace {

std::vector<double> descriptor_features(const ProblemDescriptor& d) {
    std::vector<double> f(static_cast<std::size_t>(kNumInputFields));
    for (int i = 0; i < kNumInputFields; ++i) {
        f[static_cast<std::size_t>(i)] = static_cast<double>(descriptor_field(d, i));
    }
    return f;
}

std::vector<std::string> collect_param_names(const std::vector<Sample>& train) {
    if (train.empty()) throw ParameterError("baseline fit: empty training set");
    std::vector<std::string> names;
    for (const auto& [name, value] : train[0].params) names.push_back(name);
    return names;
}

}  // namespace

KnnModel knn_fit(const std::vector<Sample>& train, int k_neighbors) {
    if (k_neighbors < 1) throw ParameterError("knn_fit: k must be >= 1");
    KnnModel m;
    m.k_neighbors = k_neighbors;
    m.param_names = collect_param_names(train);
    m.feature_mean.assign(static_cast<std::size_t>(kNumInputFields), 0.0);
    m.feature_scale.assign(static_cast<std::size_t>(kNumInputFields), 1.0);
    for (const Sample& s : train) {
        const auto f = descriptor_features(s.descriptor);
        for (int i = 0; i < kNumInputFields; ++i) {
            m.feature_mean[static_cast<std::size_t>(i)] += f[static_cast<std::size_t>(i)];
        }
    }
    for (double& v : m.feature_mean) v /= static_cast<double>(train.size());
    std::vector<double> var(static_cast<std::size_t>(kNumInputFields), 0.0);
    for (const Sample& s : train) {
        const auto f = descriptor_features(s.descriptor);
        for (int i = 0; i < kNumInputFields; ++i) {
            const double d = f[static_cast<std::size_t>(i)] -
                             m.feature_mean[static_cast<std::size_t>(i)];
            var[static_cast<std::size_t>(i)] += d * d;
        }
    }
    for (int i = 0; i < kNumInputFields; ++i) {
        const double sd = std::sqrt(var[static_cast<std::size_t>(i)] /
                                    static_cast<double>(train.size()));
        m.feature_scale[static_cast<std::size_t>(i)] = sd > 0.0 ? sd : 1.0;
    }
    for (const Sample& s : train) {
        auto f = descriptor_features(s.descriptor);
        for (int i = 0; i < kNumInputFields; ++i) {
            f[static_cast<std::size_t>(i)] =
                (f[static_cast<std::size_t>(i)] - m.feature_mean[static_cast<std::size_t>(i)]) /
                m.feature_scale[static_cast<std::size_t>(i)];
        }
        m.features.push_back(std::move(f));
        std::vector<std::int64_t> values;
        for (const std::string& name : m.param_names) values.push_back(s.params.at(name));
        m.param_values.push_back(std::move(values));
    }
    return m;
}

ParamMap knn_predict(const KnnModel& m, const ProblemDescriptor& query) {
    if (m.features.empty()) throw ParameterError("knn_predict: empty model");
    auto q = descriptor_features(query);
    for (int i = 0; i < kNumInputFields; ++i) {
        q[static_cast<std::size_t>(i)] =
            (q[static_cast<std::size_t>(i)] - m.feature_mean[static_cast<std::size_t>(i)]) /
            m.feature_scale[static_cast<std::size_t>(i)];
    }
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(m.features.size());
    for (std::size_t r = 0; r < m.features.size(); ++r) {
        double d2 = 0.0;
        for (int i = 0; i < kNumInputFields; ++i) {
            const double d = q[static_cast<std::size_t>(i)] -
                             m.features[r][static_cast<std::size_t>(i)];
            d2 += d * d;
        }
        dist.emplace_back(d2, r);
    }
    const std::size_t k = std::min(static_cast<std::size_t>(m.k_neighbors), dist.size());
    std::stable_sort(dist.begin(), dist.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    ParamMap out;
    for (std::size_t p = 0; p < m.param_names.size(); ++p) {
        std::map<std::int64_t, int> votes;
        for (std::size_t j = 0; j < k; ++j) {
            votes[m.param_values[dist[j].second][p]] += 1;
        }
        std::int64_t best = 0;
        int best_votes = -1;
        for (const auto& [value, count] : votes) {  // map order: smaller value first
            if (count > best_votes) {
                best = value;
                best_votes = count;
            }
        }
        out[m.param_names[p]] = best;
    }
    return out;
}

namespace {

double gini(const std::map<std::int64_t, int>& counts, int total) {
    double g = 1.0;
    for (const auto& [value, count] : counts) {
        const double p = static_cast<double>(count) / total;
        g -= p * p;
    }
    return g;
}

std::int64_t majority(const std::map<std::int64_t, int>& counts) {
    std::int64_t best = 0;
    int best_count = -1;
    for (const auto& [value, count] : counts) {
        if (count > best_count) {
            best = value;
            best_count = count;
        }
    }
    return best;
}

int grow_tree(std::vector<DtreeNode>& nodes, const std::vector<std::vector<double>>& x,
              const std::vector<std::int64_t>& y, std::vector<std::size_t> rows,
              int depth_left) {
    std::map<std::int64_t, int> counts;
    for (std::size_t r : rows) counts[y[r]] += 1;
    const int node_id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[static_cast<std::size_t>(node_id)].value = majority(counts);
    if (depth_left <= 0 || counts.size() <= 1) return node_id;

    const int total = static_cast<int>(rows.size());
    double best_score = gini(counts, total);
    int best_feature = -1;
    double best_threshold = 0.0;
    for (int f = 0; f < kNumInputFields; ++f) {
        std::vector<double> vals;
        vals.reserve(rows.size());
        for (std::size_t r : rows) vals.push_back(x[r][static_cast<std::size_t>(f)]);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            const double thr = (vals[i] + vals[i + 1]) / 2.0;
            std::map<std::int64_t, int> lc, rc;
            int ln = 0, rn = 0;
            for (std::size_t r : rows) {
                if (x[r][static_cast<std::size_t>(f)] <= thr) {
                    lc[y[r]] += 1;
                    ++ln;
                } else {
                    rc[y[r]] += 1;
                    ++rn;
                }
            }
            const double score = (ln * gini(lc, ln) + rn * gini(rc, rn)) / total;
            if (score + 1e-12 < best_score) {
                best_score = score;
                best_feature = f;
                best_threshold = thr;
            }
        }
    }
    if (best_feature < 0) return node_id;

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
        (x[r][static_cast<std::size_t>(best_feature)] <= best_threshold ? left_rows
                                                                        : right_rows)
            .push_back(r);
    }
    const int left = grow_tree(nodes, x, y, std::move(left_rows), depth_left - 1);
    const int right = grow_tree(nodes, x, y, std::move(right_rows), depth_left - 1);
    DtreeNode& node = nodes[static_cast<std::size_t>(node_id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left;
    node.right = right;
    return node_id;
}

}  // namespace

DtreeModel dtree_fit(const std::vector<Sample>& train, int max_depth) {
    if (max_depth < 0) throw ParameterError("dtree_fit: max depth must be >= 0");
    DtreeModel m;
    m.param_names = collect_param_names(train);
    std::vector<std::vector<double>> x;
    x.reserve(train.size());
    for (const Sample& s : train) x.push_back(descriptor_features(s.descriptor));
    for (const std::string& name : m.param_names) {
        std::vector<std::int64_t> y;
        y.reserve(train.size());
        for (const Sample& s : train) y.push_back(s.params.at(name));
        std::vector<std::size_t> rows(train.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        std::vector<DtreeNode> nodes;
        grow_tree(nodes, x, y, std::move(rows), max_depth);
        m.trees.push_back(std::move(nodes));
    }
    return m;
}

ParamMap dtree_predict(const DtreeModel& m, const ProblemDescriptor& query) {
    const auto f = descriptor_features(query);
    ParamMap out;
    for (std::size_t p = 0; p < m.param_names.size(); ++p) {
        const std::vector<DtreeNode>& tree = m.trees[p];
        int node = 0;
        while (tree[static_cast<std::size_t>(node)].feature >= 0) {
            const DtreeNode& nd = tree[static_cast<std::size_t>(node)];
            node = f[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left
                                                                           : nd.right;
        }
        out[m.param_names[p]] = tree[static_cast<std::size_t>(node)].value;
    }
    return out;
}

GnbModel gnb_fit(const std::vector<Sample>& train) {
    GnbModel m;
    m.param_names = collect_param_names(train);
    std::vector<std::vector<double>> x;
    x.reserve(train.size());
    for (const Sample& s : train) x.push_back(descriptor_features(s.descriptor));

    // Variance floor scaled to the widest feature.
    std::vector<double> overall_mean(static_cast<std::size_t>(kNumInputFields), 0.0);
    for (const auto& row : x) {
        for (int i = 0; i < kNumInputFields; ++i) {
            overall_mean[static_cast<std::size_t>(i)] += row[static_cast<std::size_t>(i)];
        }
    }
    for (double& v : overall_mean) v /= static_cast<double>(x.size());
    double max_var = 0.0;
    for (int i = 0; i < kNumInputFields; ++i) {
        double var = 0.0;
        for (const auto& row : x) {
            const double d =
                row[static_cast<std::size_t>(i)] - overall_mean[static_cast<std::size_t>(i)];
            var += d * d;
        }
        max_var = std::max(max_var, var / static_cast<double>(x.size()));
    }
    const double floor = std::max(1e-9 * max_var, 1e-12);

    for (const std::string& name : m.param_names) {
        GnbModel::PerParam pp;
        std::map<std::int64_t, std::vector<std::size_t>> by_class;
        for (std::size_t r = 0; r < train.size(); ++r) {
            by_class[train[r].params.at(name)].push_back(r);
        }
        for (const auto& [value, rows] : by_class) {
            pp.classes.push_back(value);
            pp.log_prior.push_back(std::log(static_cast<double>(rows.size()) /
                                            static_cast<double>(train.size())));
            std::vector<double> mean(static_cast<std::size_t>(kNumInputFields), 0.0);
            for (std::size_t r : rows) {
                for (int i = 0; i < kNumInputFields; ++i) {
                    mean[static_cast<std::size_t>(i)] += x[r][static_cast<std::size_t>(i)];
                }
            }
            for (double& v : mean) v /= static_cast<double>(rows.size());
            std::vector<double> var(static_cast<std::size_t>(kNumInputFields), 0.0);
            for (std::size_t r : rows) {
                for (int i = 0; i < kNumInputFields; ++i) {
                    const double d =
                        x[r][static_cast<std::size_t>(i)] - mean[static_cast<std::size_t>(i)];
                    var[static_cast<std::size_t>(i)] += d * d;
                }
            }
            for (double& v : var) {
                v = std::max(v / static_cast<double>(rows.size()), floor);
            }
            pp.mean.push_back(std::move(mean));
            pp.variance.push_back(std::move(var));
        }
        m.params.push_back(std::move(pp));
    }
    return m;
}

ParamMap gnb_predict(const GnbModel& m, const ProblemDescriptor& query) {
    const auto f = descriptor_features(query);
    ParamMap out;
    for (std::size_t p = 0; p < m.param_names.size(); ++p) {
        const GnbModel::PerParam& pp = m.params[p];
        double best_score = 0.0;
        std::int64_t best = 0;
        bool have = false;
        for (std::size_t c = 0; c < pp.classes.size(); ++c) {
            double score = pp.log_prior[c];
            for (int i = 0; i < kNumInputFields; ++i) {
                const double var = pp.variance[c][static_cast<std::size_t>(i)];
                const double d =
                    f[static_cast<std::size_t>(i)] - pp.mean[c][static_cast<std::size_t>(i)];
                score += -0.5 * std::log(2.0 * 3.141592653589793 * var) -
                         d * d / (2.0 * var);
            }
            // classes are stored ascending, so ties keep the smaller value
            if (!have || score > best_score) {
                best_score = score;
                best = pp.classes[c];
                have = true;
            }
        }
        out[m.param_names[p]] = best;
    }
    return out;
}

}  // namespace kernelseer
