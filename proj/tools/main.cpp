// SPDX-License-Identifier: Apache-2.0
//
// kernelseer: learns convolution kernel tuning parameters from problem
// descriptors and predicts them through (constrained) beam search.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "kernelseer/data.hpp"
#include "kernelseer/decoding.hpp"
#include "kernelseer/eval.hpp"

using namespace kernelseer;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

int default_threads() {
    if (const char* env = std::getenv("KERNELSEER_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

KernelSpec resolve_spec(const std::string& kernel, const std::string& spec_file) {
    if (!spec_file.empty()) {
        for (const KernelSpec& s : load_kernel_specs(spec_file)) {
            if (s.name == kernel) return s;
        }
        throw ValidationError("kernel '" + kernel + "' not found in " + spec_file,
                              "kernel");
    }
    return builtin_spec(kernel);
}

void require_writable(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot write to " + path);
}

std::vector<int> parse_beam_list(const std::string& text) {
    std::vector<int> ks;
    std::stringstream ss(text);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
        const int k = std::stoi(piece);
        if (k < 1) throw ParameterError("beam width must be >= 1, got " + piece);
        ks.push_back(k);
    }
    if (ks.empty()) throw ParameterError("empty beam width list");
    return ks;
}

ProblemDescriptor parse_descriptor(const std::string& text, Precision precision) {
    ProblemDescriptor d;
    d.precision = precision;
    bool seen[kNumInputFields] = {};
    std::stringstream ss(text);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
        const auto eq = piece.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("descriptor entries must be name=value, got '" + piece +
                                      "'",
                                  "descriptor");
        }
        std::string name = piece.substr(0, eq);
        name.erase(0, name.find_first_not_of(" \t"));
        name.erase(name.find_last_not_of(" \t") + 1);
        int field = -1;
        for (int f = 0; f < kNumInputFields; ++f) {
            if (name == kInputFieldNames[static_cast<std::size_t>(f)]) field = f;
        }
        if (field < 0) {
            throw ValidationError("unknown descriptor field '" + name + "'", name);
        }
        set_descriptor_field(d, field, std::stoll(piece.substr(eq + 1)));
        seen[field] = true;
    }
    for (int f = 0; f < kNumInputFields; ++f) {
        if (!seen[f]) {
            throw ValidationError(std::string("descriptor is missing field '") +
                                      kInputFieldNames[static_cast<std::size_t>(f)] + "'",
                                  kInputFieldNames[static_cast<std::size_t>(f)]);
        }
    }
    return d;
}

// "<p>=<w>[,<p>=<w>...]<=<limit>", e.g. "chunk_size=1,k_mult=0.5<=96"
ConstraintPredicate parse_budget(const std::string& text, int index) {
    const auto le = text.rfind("<=");
    if (le == std::string::npos) {
        throw ParameterError("budget must look like p=w[,p=w...]<=limit, got '" + text +
                             "'");
    }
    const double limit = std::stod(text.substr(le + 2));
    std::map<std::string, double> weights;
    std::stringstream ss(text.substr(0, le));
    std::string piece;
    while (std::getline(ss, piece, ',')) {
        const auto eq = piece.find('=');
        if (eq == std::string::npos) {
            throw ParameterError("bad budget term '" + piece + "'");
        }
        weights[piece.substr(0, eq)] = std::stod(piece.substr(eq + 1));
    }
    return resource_budget_predicate(std::move(weights), limit,
                                     "budget" + std::to_string(index));
}

struct TrainCli {
    std::string kernel;
    std::string precision = "fp32";
    std::string variant = "hybrid-2";
    std::string data_path;
    std::string spec_file;
    std::string out_path;
    std::string log_path;
    int epochs = 30;
    int batch = 32;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
    double learning_rate = 1e-3;
    int threads = 0;
    int state_size = 256;
    int cell_size = 256;
    int na = 256, ns = 512, nd = 2;
    std::string conv = "64,3,1;32,3,1";
    double dropout = 0.2;
    double recurrent_dropout = 0.2;
};

std::vector<ConvLayerSpec> parse_conv(const std::string& text) {
    std::vector<ConvLayerSpec> layers;
    std::stringstream ss(text);
    std::string layer;
    while (std::getline(ss, layer, ';')) {
        int f = 0, k = 0, s = 0;
        if (std::sscanf(layer.c_str(), "%d,%d,%d", &f, &k, &s) != 3) {
            throw ParameterError("conv layers must be f,k,s;f,k,s..., got '" + text + "'");
        }
        layers.push_back({f, k, s});
    }
    if (layers.empty()) throw ParameterError("empty conv layer list");
    return layers;
}

int run_gen(const std::string& kernel, int samples, std::uint64_t seed,
            const std::string& difficulty, const std::string& out,
            const std::string& precision, const std::string& spec_file) {
    const KernelSpec spec = resolve_spec(kernel, spec_file);
    require_writable(out);
    const Dataset ds = generate_synthetic(spec, samples, seed,
                                          difficulty_from_label(difficulty),
                                          precision_from_label(precision));
    save_dataset(ds, out);
    std::cout << "samples: " << ds.size() << "\n";
    std::cout << "search_space_size: " << search_space_size(spec) << "\n";
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_train(const TrainCli& cli) {
    const KernelSpec spec = resolve_spec(cli.kernel, cli.spec_file);
    require_writable(cli.out_path);
    if (!cli.log_path.empty()) require_writable(cli.log_path);

    Dataset ds = load_dataset(cli.data_path, spec);
    const Precision precision = precision_from_label(cli.precision);
    if (ds.precision != precision) {
        throw ValidationError("dataset is " + precision_label(ds.precision) +
                                  " but --precision says " + cli.precision,
                              "precision");
    }
    const Vocabulary vocab = build_vocab(spec, ds.samples);
    const auto [train, test] = split(ds, cli.test_fraction, cli.seed);

    ModelConfig config;
    config.variant = variant_from_label(cli.variant);
    config.encoder_state_size = cli.state_size;
    config.pre_attention_size = cli.na;
    config.post_attention_size = cli.ns;
    config.attention_dense_nodes = cli.nd;
    config.decoder_cell_size = cli.cell_size;
    config.conv_layers = parse_conv(cli.conv);
    config.dropout = cli.dropout;
    config.recurrent_dropout = cli.recurrent_dropout;

    TrainOptions options;
    options.epochs = cli.epochs;
    options.batch_size = cli.batch;
    options.seed = cli.seed;
    options.threads = cli.threads > 0 ? cli.threads : default_threads();
    options.learning_rate = cli.learning_rate;

    std::ofstream log;
    if (!cli.log_path.empty()) {
        log.open(cli.log_path, std::ios::trunc);
        log << "epoch,train_loss,train_avg_acc,test_loss,test_avg_acc\n";
    }
    const TrainResult result = train_model(
        config, spec, vocab, precision, train.samples, test.samples, options,
        [&](const EpochStats& e) {
            std::cout << "epoch " << e.epoch << ": train_loss=" << std::fixed
                      << std::setprecision(4) << e.train_loss
                      << " train_acc=" << std::setprecision(2) << e.train_accuracy
                      << " test_loss=" << std::setprecision(4) << e.test_loss
                      << " test_acc=" << std::setprecision(2) << e.test_accuracy
                      << std::defaultfloat << "\n";
            if (log.is_open()) {
                log << e.epoch << "," << std::setprecision(10) << e.train_loss << ","
                    << e.train_accuracy << "," << e.test_loss << "," << e.test_accuracy
                    << "\n";
            }
        });
    save_checkpoint(result.params, cli.out_path);
    std::cout << "wrote checkpoint " << cli.out_path << "\n";
    return 0;
}

int run_eval(const std::string& model_path, const std::string& data_path,
             const std::string& beam, const std::string& constraints,
             const std::vector<std::string>& budgets, const std::string& csv_path,
             int threads) {
    const ModelParams params = load_checkpoint(model_path);
    const KernelSpec spec = spec_of(params);
    const Dataset ds = load_dataset(data_path, spec);
    if (ds.kernel != params.kernel) {
        throw ValidationError("checkpoint kernel " + params.kernel +
                                  " does not match dataset kernel " + ds.kernel,
                              "kernel");
    }
    if (ds.precision != params.precision) {
        throw ValidationError("checkpoint precision " + precision_label(params.precision) +
                                  " does not match dataset precision " +
                                  precision_label(ds.precision),
                              "precision");
    }
    std::vector<ConstraintPredicate> preds;
    if (constraints == "on") {
        preds.push_back(membership_predicate(spec));
        int i = 0;
        for (const std::string& b : budgets) preds.push_back(parse_budget(b, i++));
    } else if (constraints != "off") {
        throw ParameterError("--constraints must be on or off");
    }
    const std::vector<int> ks = parse_beam_list(beam);
    const auto reports = topk_metrics(params, ds.samples, ks, preds,
                                      threads > 0 ? threads : default_threads());
    std::cout << "kernel: " << params.kernel << " precision: "
              << precision_label(params.precision) << " samples: " << ds.size()
              << " constraints: " << constraints << "\n";
    std::cout << format_report_table(reports);
    if (!csv_path.empty()) {
        std::vector<std::string> names;
        for (const auto& p : spec.params) names.push_back(p.name);
        std::ofstream out(csv_path, std::ios::trunc);
        if (!out) throw Error("cannot write " + csv_path);
        out << format_report_csv(reports, names);
        std::cout << "wrote " << csv_path << "\n";
    }
    return 0;
}

int run_predict(const std::string& model_path, const std::string& descriptor_text,
                int beam, const std::string& constraints,
                const std::vector<std::string>& budgets, bool snap) {
    const ModelParams params = load_checkpoint(model_path);
    const KernelSpec spec = spec_of(params);
    const ProblemDescriptor d = parse_descriptor(descriptor_text, params.precision);
    const TokenSequence input = encode_problem(d, params.vocab, snap);

    std::vector<ConstraintPredicate> preds;
    if (constraints == "on") {
        preds.push_back(membership_predicate(spec));
        int i = 0;
        for (const std::string& b : budgets) preds.push_back(parse_budget(b, i++));
    } else if (constraints != "off") {
        throw ParameterError("--constraints must be on or off");
    }

    const SequencePredictor predictor(params);
    const std::vector<ScoredSequence> beams =
        preds.empty() ? beam_search(predictor, input, beam)
                      : constrained_beam_search(predictor, input, beam, preds, d);
    int rank = 1;
    for (const ScoredSequence& s : beams) {
        const ParamMap m = decode_params(s.tokens, spec, params.vocab);
        std::cout << rank++ << " logprob=" << std::fixed << std::setprecision(6)
                  << s.log_prob << std::defaultfloat;
        for (const auto& p : spec.params) {
            std::cout << " " << p.name << "=" << m.at(p.name);
        }
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel tuning parameter prediction via sequence models"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-synthetic",
                                   "generate a synthetic tuning dataset");
    std::string gen_kernel, gen_out, gen_difficulty = "moderate", gen_precision = "fp32";
    std::string gen_spec_file;
    int gen_samples = 0;
    std::uint64_t gen_seed = 0;
    gen->add_option("--kernel", gen_kernel, "kernel name")->required();
    gen->add_option("--samples", gen_samples, "number of samples")
        ->required()
        ->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "generator seed")->required();
    gen->add_option("--difficulty", gen_difficulty, "easy|moderate");
    gen->add_option("--precision", gen_precision, "fp32|fp16");
    gen->add_option("--spec-file", gen_spec_file, "custom kernel spec file");
    gen->add_option("--out", gen_out, "output record file")->required();

    auto* train = app.add_subcommand("train", "train a model on a record dataset");
    TrainCli tc;
    train->add_option("--kernel", tc.kernel, "kernel name")->required();
    train->add_option("--precision", tc.precision, "fp32|fp16");
    train->add_option("--variant", tc.variant,
                      "enc-dec|attn|attn-2|hybrid|hybrid-2");
    train->add_option("--data", tc.data_path, "record dataset file")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--spec-file", tc.spec_file, "custom kernel spec file");
    train->add_option("--epochs", tc.epochs)->check(CLI::PositiveNumber);
    train->add_option("--batch", tc.batch)->check(CLI::PositiveNumber);
    train->add_option("--seed", tc.seed, "training seed")->required();
    train->add_option("--test-fraction", tc.test_fraction);
    train->add_option("--lr", tc.learning_rate);
    train->add_option("--threads", tc.threads, "0 = KERNELSEER_THREADS or all cores");
    train->add_option("--state-size", tc.state_size, "enc-dec state size |e|");
    train->add_option("--cell-size", tc.cell_size, "hybrid bi-LSTM cell size");
    train->add_option("--na", tc.na, "pre-attention bi-LSTM size");
    train->add_option("--ns", tc.ns, "post-attention LSTM size");
    train->add_option("--nd", tc.nd, "attention dense nodes");
    train->add_option("--conv", tc.conv, "conv layers f,k,s;f,k,s...");
    train->add_option("--dropout", tc.dropout);
    train->add_option("--recurrent-dropout", tc.recurrent_dropout);
    train->add_option("--out", tc.out_path, "checkpoint output path")->required();
    train->add_option("--log", tc.log_path, "per-epoch CSV log path");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_model, ev_data, ev_beam = "1", ev_constraints = "off", ev_csv;
    std::vector<std::string> ev_budgets;
    int ev_threads = 0;
    eval->add_option("--model", ev_model, "checkpoint path")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--data", ev_data, "record dataset file")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--beam", ev_beam, "beam widths, e.g. 1 or 10,30,50,100");
    eval->add_option("--constraints", ev_constraints, "on|off");
    eval->add_option("--budget", ev_budgets,
                     "extra budget predicate p=w[,p=w...]<=limit (repeatable)");
    eval->add_option("--csv", ev_csv, "write machine-readable report here");
    eval->add_option("--threads", ev_threads, "0 = KERNELSEER_THREADS or all cores");

    auto* predict = app.add_subcommand("predict", "predict parameters for one problem");
    std::string pr_model, pr_descriptor, pr_constraints = "off";
    std::vector<std::string> pr_budgets;
    int pr_beam = 1;
    bool pr_snap = false;
    predict->add_option("--model", pr_model, "checkpoint path")
        ->required()
        ->check(CLI::ExistingFile);
    predict
        ->add_option("--descriptor", pr_descriptor,
                     "problem, e.g. \"n=64,c=256,h=56,w=56,k=128,y=1,x=1\"")
        ->required();
    predict->add_option("--beam", pr_beam)->check(CLI::PositiveNumber);
    predict->add_option("--constraints", pr_constraints, "on|off");
    predict->add_option("--budget", pr_budgets,
                        "extra budget predicate p=w[,p=w...]<=limit (repeatable)");
    predict->add_flag("--snap", pr_snap,
                      "snap unseen descriptor values to the nearest known value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            return run_gen(gen_kernel, gen_samples, gen_seed, gen_difficulty, gen_out,
                           gen_precision, gen_spec_file);
        }
        if (train->parsed()) return run_train(tc);
        if (eval->parsed()) {
            return run_eval(ev_model, ev_data, ev_beam, ev_constraints, ev_budgets,
                            ev_csv, ev_threads);
        }
        if (predict->parsed()) {
            return run_predict(pr_model, pr_descriptor, pr_beam, pr_constraints,
                               pr_budgets, pr_snap);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const BeamExhaustedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
