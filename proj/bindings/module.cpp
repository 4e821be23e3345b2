// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the kernelseer core: kernel schemas, datasets,
// model training, (constrained) beam-search prediction, and metrics.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kernelseer/data.hpp"
#include "kernelseer/decoding.hpp"
#include "kernelseer/eval.hpp"

namespace py = pybind11;
using namespace kernelseer;

namespace {

ProblemDescriptor descriptor_from_dict(const py::dict& d) {
    ProblemDescriptor out;
    for (auto item : d) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "precision") {
            out.precision = precision_from_label(py::cast<std::string>(item.second));
            continue;
        }
        bool known = false;
        for (int f = 0; f < kNumInputFields; ++f) {
            if (key == kInputFieldNames[static_cast<std::size_t>(f)]) {
                set_descriptor_field(out, f, py::cast<std::int64_t>(item.second));
                known = true;
            }
        }
        if (!known) {
            throw ValidationError("unknown descriptor field '" + key + "'", key);
        }
    }
    out.check();
    return out;
}

py::dict descriptor_to_dict(const ProblemDescriptor& d) {
    py::dict out;
    for (int f = 0; f < kNumInputFields; ++f) {
        out[kInputFieldNames[static_cast<std::size_t>(f)]] = descriptor_field(d, f);
    }
    out["precision"] = precision_label(d.precision);
    return out;
}

ConstraintPredicate python_predicate(
    const std::string& name,
    const std::function<bool(py::dict, py::dict)>& fn) {
    ConstraintPredicate pred;
    pred.name = name;
    pred.fn = [fn](const ProblemDescriptor& d, const ParamMap& partial) {
        py::gil_scoped_acquire gil;
        py::dict params;
        for (const auto& [k, v] : partial) params[py::str(k)] = v;
        return fn(descriptor_to_dict(d), params);
    };
    return pred;
}

std::vector<ScoredSequence> run_search(const ModelParams& params, const py::dict& desc,
                                       int beam_width,
                                       const std::vector<ConstraintPredicate>& predicates,
                                       bool snap) {
    const ProblemDescriptor d = descriptor_from_dict(desc);
    const TokenSequence input = encode_problem(d, params.vocab, snap);
    const SequencePredictor predictor(params);
    if (predicates.empty()) return beam_search(predictor, input, beam_width);
    return constrained_beam_search(predictor, input, beam_width, predicates, d);
}

py::list predictions_to_python(const ModelParams& params,
                               const std::vector<ScoredSequence>& beams) {
    const KernelSpec spec = spec_of(params);
    py::list out;
    for (const ScoredSequence& s : beams) {
        py::dict entry;
        py::dict values;
        for (const auto& [k, v] : decode_params(s.tokens, spec, params.vocab)) {
            values[py::str(k)] = v;
        }
        entry["params"] = values;
        entry["log_prob"] = s.log_prob;
        out.append(entry);
    }
    return out;
}

py::dict report_to_python(const EvalReport& r) {
    py::dict out;
    out["beam_width"] = r.beam_width;
    out["constrained"] = r.constrained;
    out["samples"] = r.sample_count;
    out["average_accuracy"] = r.average_accuracy;
    out["perfect_prediction"] = r.perfect_prediction;
    out["per_param_accuracy"] = r.per_param_accuracy;
    return out;
}

}  // namespace

PYBIND11_MODULE(_kernelseer, m) {
    m.doc() = "GPU kernel tuning-parameter prediction with sequence models";

    py::register_exception<Error>(m, "KernelseerError");

    py::class_<KernelSpec>(m, "KernelSpec")
        .def_readonly("name", &KernelSpec::name)
        .def_property_readonly("params",
                               [](const KernelSpec& s) {
                                   py::list out;
                                   for (const auto& p : s.params) {
                                       out.append(py::make_tuple(p.name, p.values));
                                   }
                                   return out;
                               })
        .def("__repr__", [](const KernelSpec& s) {
            return "<KernelSpec " + s.name + " (" + std::to_string(s.num_params()) +
                   " params)>";
        });

    m.def("builtin_specs", [] { return builtin_specs(); });
    m.def("builtin_spec", [](const std::string& name) { return builtin_spec(name); },
          py::arg("name"));
    m.def("search_space_size",
          [](const KernelSpec& spec) { return search_space_size(spec); },
          py::arg("spec"));
    m.def("load_kernel_specs", &load_kernel_specs, py::arg("path"));
    m.def("parse_kernel_spec", [](const std::string& line) {
        return parse_kernel_spec_line(line);
    });

    py::class_<Sample>(m, "Sample")
        .def_property_readonly(
            "descriptor", [](const Sample& s) { return descriptor_to_dict(s.descriptor); })
        .def_readonly("params", &Sample::params)
        .def_readonly("kernel", &Sample::kernel)
        .def_property_readonly(
            "precision", [](const Sample& s) { return precision_label(s.precision); });

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("kernel", &Dataset::kernel)
        .def_readonly("samples", &Dataset::samples)
        .def_property_readonly(
            "precision", [](const Dataset& d) { return precision_label(d.precision); })
        .def("__len__", [](const Dataset& d) { return d.size(); });

    m.def("generate_synthetic",
          [](const KernelSpec& spec, int count, std::uint64_t seed,
             const std::string& difficulty, const std::string& precision) {
              return generate_synthetic(spec, count, seed,
                                        difficulty_from_label(difficulty),
                                        precision_from_label(precision));
          },
          py::arg("spec"), py::arg("count"), py::arg("seed"),
          py::arg("difficulty") = "moderate", py::arg("precision") = "fp32");
    m.def("load_dataset", &load_dataset, py::arg("path"), py::arg("spec"));
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
    m.def("split",
          [](const Dataset& ds, double fraction, std::uint64_t seed) {
              return split(ds, fraction, seed);
          },
          py::arg("dataset"), py::arg("test_fraction"), py::arg("seed"));
    m.def("parse_record",
          [](const std::string& line, const KernelSpec& spec) {
              return parse_record(line, spec);
          },
          py::arg("line"), py::arg("spec"));
    m.def("format_record", &format_record, py::arg("sample"));

    py::class_<Vocabulary>(m, "Vocabulary")
        .def_property_readonly("num_output_positions", &Vocabulary::num_output_positions);
    m.def("build_vocab",
          [](const KernelSpec& spec, const std::vector<Sample>& samples) {
              return build_vocab(spec, samples);
          },
          py::arg("spec"), py::arg("samples"));

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](const std::string& variant, int encoder_state_size,
                         int pre_attention_size, int post_attention_size,
                         int attention_dense_nodes,
                         const std::vector<std::tuple<int, int, int>>& conv_layers,
                         int decoder_cell_size, double dropout, double recurrent_dropout) {
                 ModelConfig c;
                 c.variant = variant_from_label(variant);
                 c.encoder_state_size = encoder_state_size;
                 c.pre_attention_size = pre_attention_size;
                 c.post_attention_size = post_attention_size;
                 c.attention_dense_nodes = attention_dense_nodes;
                 c.conv_layers.clear();
                 for (const auto& [f, k, s] : conv_layers) c.conv_layers.push_back({f, k, s});
                 c.decoder_cell_size = decoder_cell_size;
                 c.dropout = dropout;
                 c.recurrent_dropout = recurrent_dropout;
                 c.check();
                 return c;
             }),
             py::arg("variant") = "hybrid-2", py::arg("encoder_state_size") = 256,
             py::arg("pre_attention_size") = 256, py::arg("post_attention_size") = 512,
             py::arg("attention_dense_nodes") = 2,
             py::arg("conv_layers") =
                 std::vector<std::tuple<int, int, int>>{{64, 3, 1}, {32, 3, 1}},
             py::arg("decoder_cell_size") = 256, py::arg("dropout") = 0.2,
             py::arg("recurrent_dropout") = 0.2)
        .def_property_readonly(
            "variant", [](const ModelConfig& c) { return variant_label(c.variant); });

    py::class_<ModelParams>(m, "ModelParams")
        .def_readonly("kernel", &ModelParams::kernel)
        .def_property_readonly(
            "precision",
            [](const ModelParams& p) { return precision_label(p.precision); })
        .def_property_readonly(
            "variant", [](const ModelParams& p) { return variant_label(p.config.variant); })
        .def_property_readonly("spec", [](const ModelParams& p) { return spec_of(p); })
        .def("__repr__", [](const ModelParams& p) {
            return "<ModelParams " + variant_label(p.config.variant) + " for " + p.kernel +
                   ">";
        });

    m.def("train",
          [](const ModelConfig& config, const KernelSpec& spec,
             const std::vector<Sample>& train_set, const std::vector<Sample>& test_set,
             int epochs, int batch_size, std::uint64_t seed, int threads,
             double learning_rate) {
              const std::vector<Sample> all = [&] {
                  std::vector<Sample> v = train_set;
                  v.insert(v.end(), test_set.begin(), test_set.end());
                  return v;
              }();
              const Vocabulary vocab = build_vocab(spec, all);
              const Precision precision =
                  train_set.empty() ? Precision::full : train_set[0].precision;
              TrainOptions options;
              options.epochs = epochs;
              options.batch_size = batch_size;
              options.seed = seed;
              options.threads = threads;
              options.learning_rate = learning_rate;
              TrainResult result;
              {
                  py::gil_scoped_release release;
                  result = train_model(config, spec, vocab, precision, train_set,
                                       test_set, options);
              }
              py::list log;
              for (const EpochStats& e : result.log) {
                  py::dict row;
                  row["epoch"] = e.epoch;
                  row["train_loss"] = e.train_loss;
                  row["train_avg_acc"] = e.train_accuracy;
                  row["test_loss"] = e.test_loss;
                  row["test_avg_acc"] = e.test_accuracy;
                  log.append(row);
              }
              return py::make_tuple(result.params, log);
          },
          py::arg("config"), py::arg("spec"), py::arg("train_set"), py::arg("test_set"),
          py::arg("epochs") = 30, py::arg("batch_size") = 32, py::arg("seed") = 1,
          py::arg("threads") = 1, py::arg("learning_rate") = 1e-3);

    m.def("save_checkpoint", &save_checkpoint, py::arg("params"), py::arg("path"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    py::class_<ConstraintPredicate>(m, "ConstraintPredicate")
        .def_readonly("name", &ConstraintPredicate::name);
    m.def("membership_predicate", &membership_predicate, py::arg("spec"));
    m.def("resource_budget_predicate",
          [](const std::map<std::string, double>& weights, double budget,
             const std::string& name) {
              return resource_budget_predicate(weights, budget, name);
          },
          py::arg("weights"), py::arg("budget"), py::arg("name") = "resource_budget");
    m.def("predicate", &python_predicate, py::arg("name"), py::arg("fn"),
          "Wrap a python callable (descriptor_dict, partial_params_dict) -> bool");

    m.def("validate",
          [](const KernelSpec& spec, const py::dict& descriptor, const ParamMap& params,
             const std::vector<ConstraintPredicate>& predicates) -> py::object {
              const auto v = validate_sequence(spec, descriptor_from_dict(descriptor),
                                               params, predicates);
              if (!v.has_value()) return py::none();
              py::dict out;
              out["predicate"] = v->predicate;
              out["params"] = v->params;
              return out;
          },
          py::arg("spec"), py::arg("descriptor"), py::arg("params"),
          py::arg("predicates"));

    m.def("predict",
          [](const ModelParams& params, const py::dict& descriptor, int beam_width,
             const std::vector<ConstraintPredicate>& predicates, bool snap) {
              return predictions_to_python(
                  params, run_search(params, descriptor, beam_width, predicates, snap));
          },
          py::arg("params"), py::arg("descriptor"), py::arg("beam_width") = 1,
          py::arg("predicates") = std::vector<ConstraintPredicate>{},
          py::arg("snap") = false);

    m.def("greedy_predict",
          [](const ModelParams& params, const py::dict& descriptor, bool snap) {
              const ProblemDescriptor d = descriptor_from_dict(descriptor);
              const TokenSequence input = encode_problem(d, params.vocab, snap);
              const SequencePredictor predictor(params);
              const TokenSequence out = greedy_decode(predictor, input);
              py::dict values;
              for (const auto& [k, v] : decode_params(out, spec_of(params), params.vocab)) {
                  values[py::str(k)] = v;
              }
              return values;
          },
          py::arg("params"), py::arg("descriptor"), py::arg("snap") = false);

    m.def("topk_metrics",
          [](const ModelParams& params, const std::vector<Sample>& test,
             const std::vector<int>& k_values,
             const std::vector<ConstraintPredicate>& predicates, int threads) {
              const auto reports = topk_metrics(params, test, k_values, predicates, threads);
              py::list out;
              for (const EvalReport& r : reports) out.append(report_to_python(r));
              return out;
          },
          py::arg("params"), py::arg("test"), py::arg("k_values"),
          py::arg("predicates") = std::vector<ConstraintPredicate>{},
          py::arg("threads") = 1);

    // classical baselines
    py::class_<KnnModel>(m, "KnnModel");
    py::class_<DtreeModel>(m, "DtreeModel");
    py::class_<GnbModel>(m, "GnbModel");
    m.def("knn_fit", &knn_fit, py::arg("train"), py::arg("k_neighbors"));
    m.def("knn_predict",
          [](const KnnModel& model, const py::dict& descriptor) {
              return knn_predict(model, descriptor_from_dict(descriptor));
          },
          py::arg("model"), py::arg("descriptor"));
    m.def("dtree_fit", &dtree_fit, py::arg("train"), py::arg("max_depth"));
    m.def("dtree_predict",
          [](const DtreeModel& model, const py::dict& descriptor) {
              return dtree_predict(model, descriptor_from_dict(descriptor));
          },
          py::arg("model"), py::arg("descriptor"));
    m.def("gnb_fit", &gnb_fit, py::arg("train"));
    m.def("gnb_predict",
          [](const GnbModel& model, const py::dict& descriptor) {
              return gnb_predict(model, descriptor_from_dict(descriptor));
          },
          py::arg("model"), py::arg("descriptor"));
}
