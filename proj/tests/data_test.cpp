// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "kernelseer/data.hpp"
#include "kernelseer/decoding.hpp"
#include "kernelseer/eval.hpp"
#include "test_util.hpp"

using namespace kernelseer;

namespace {

const char* kExemplarLine =
    "ConvAsm1x1U,fp16|n=64,c=256,h=56,w=56,k=128,y=1,x=1|read_size=2,k_mult=16,"
    "chunks_per_wave=2,chunk_size=16,n_mult=1,c_mult=2,waves_c_in_group=1,"
    "waves_k_in_group=4";

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("parse_record accepts the grammar exemplar") {
    const KernelSpec& spec = builtin_spec("ConvAsm1x1U");
    const Sample s = parse_record(kExemplarLine, spec);
    CHECK(s.kernel == "ConvAsm1x1U");
    CHECK(s.precision == Precision::half);
    CHECK(s.descriptor.n == 64);
    CHECK(s.descriptor.c == 256);
    CHECK(s.descriptor.h_i == 56);
    CHECK(s.descriptor.w_i == 56);
    CHECK(s.descriptor.k == 128);
    CHECK(s.descriptor.y == 1);
    CHECK(s.descriptor.x == 1);
    CHECK(s.params.at("read_size") == 2);
    CHECK(s.params.at("k_mult") == 16);
    CHECK(s.params.at("waves_k_in_group") == 4);
}

TEST_CASE("parse_record is whitespace-insensitive around separators") {
    const KernelSpec& spec = builtin_spec("ConvAsmBwdWrW3x3");
    const std::string line =
        "ConvAsmBwdWrW3x3 , fp32 | n=1 , c=16, h=7 ,w=7, k=16, y=3, x=3 | "
        "limit_wave_cnt = 0, reverse_inout=1,chunk_size = 8, k_per_wave=4, "
        "pipe_lines_depth=2, n_per_group=3";
    const Sample s = parse_record(line, spec);
    CHECK(s.params.at("reverse_inout") == 1);
    CHECK(s.params.at("chunk_size") == 8);
}

TEST_CASE("parse_record rejects illegal values with the field name") {
    const KernelSpec& spec = builtin_spec("ConvAsm1x1U");
    std::string bad = kExemplarLine;
    const auto pos = bad.find("read_size=2");
    bad.replace(pos, 11, "read_size=9");
    try {
        parse_record(bad, spec);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "read_size");
    }
}

TEST_CASE("parse errors carry line and column") {
    const KernelSpec& spec = builtin_spec("ConvAsm1x1U");
    try {
        parse_record("ConvAsm1x1U,fp16|n=64;c=1", spec, 12);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 12);
        CHECK(e.column() > 1);
    }
    CHECK_THROWS_AS(parse_record("ConvAsm1x1U,fp64|n=1", spec), ParseError);
    CHECK_THROWS_AS(parse_record("SomethingElse,fp16|n=1", spec), ParseError);
}

TEST_CASE("format then parse is the identity") {
    const KernelSpec& spec = builtin_spec("ConvAsm1x1U");
    const Sample s = parse_record(kExemplarLine, spec);
    const Sample again = parse_record(format_record(s), spec);
    CHECK(again == s);
}

TEST_CASE("dataset files round trip, skipping comments") {
    const KernelSpec& spec = builtin_spec("ConvAsm1x1U");
    const std::string path = temp_path("kseer_data_test.txt");
    {
        std::ofstream out(path);
        out << "# header comment\n";
        out << kExemplarLine << "\n";
        out << "\n";
        out << "  # indented comment\n";
    }
    const Dataset ds = load_dataset(path, spec);
    REQUIRE(ds.size() == 1);
    CHECK(ds.precision == Precision::half);
    save_dataset(ds, path);
    const Dataset ds2 = load_dataset(path, spec);
    CHECK(ds2.samples == ds.samples);
    std::remove(path.c_str());
}

TEST_CASE("synthetic datasets are deterministic and constraint-valid") {
    const KernelSpec& spec = builtin_spec("ConvAsm1x1U");
    const Dataset a = generate_synthetic(spec, 300, 42, Difficulty::moderate);
    const Dataset b = generate_synthetic(spec, 300, 42, Difficulty::moderate);
    REQUIRE(a.size() == 300);
    CHECK(a.samples == b.samples);

    const Dataset c = generate_synthetic(spec, 300, 43, Difficulty::moderate);
    CHECK(a.samples != c.samples);

    const ProblemDescriptor d0 = a.samples[0].descriptor;
    std::vector<ConstraintPredicate> preds{membership_predicate(spec)};
    for (const Sample& s : a.samples) {
        CHECK(!validate_sequence(spec, s.descriptor, s.params, preds).has_value());
    }
    (void)d0;

    // filter size follows the kernel name
    const Dataset w3 =
        generate_synthetic(builtin_spec("ConvAsmBwdWrW3x3"), 50, 1, Difficulty::easy);
    for (const Sample& s : w3.samples) {
        CHECK(s.descriptor.y == 3);
        CHECK(s.descriptor.x == 3);
    }
    CHECK_THROWS_AS(generate_synthetic(spec, 0, 1, Difficulty::easy), ParameterError);
}

TEST_CASE("easy synthetic data is learnable by 1-nearest-neighbor") {
    const KernelSpec& spec = builtin_spec("ConvAsm1x1U");
    const Dataset ds = generate_synthetic(spec, 1500, 7, Difficulty::easy);
    const auto [train, test] = split(ds, 0.2, 11);
    const KnnModel knn = knn_fit(train.samples, 1);
    const double acc = baseline_average_accuracy(
        knn, [](const KnnModel& m, const ProblemDescriptor& d) { return knn_predict(m, d); },
        test.samples);
    CHECK(acc >= 99.0);
}

TEST_CASE("split is seeded, disjoint, and near-exact") {
    const KernelSpec& spec = builtin_spec("ConvAsm1x1U");
    const Dataset ds = generate_synthetic(spec, 100, 5, Difficulty::easy);
    const auto [train, test] = split(ds, 0.2, 9);
    CHECK(train.size() == 80);
    CHECK(test.size() == 20);

    std::set<std::string> train_keys, test_keys;
    for (const Sample& s : train.samples) train_keys.insert(format_record(s));
    for (const Sample& s : test.samples) test_keys.insert(format_record(s));
    for (const std::string& k : test_keys) CHECK(train_keys.count(k) == 0);

    const auto [train2, test2] = split(ds, 0.2, 9);
    CHECK(train2.samples == train.samples);
    CHECK(test2.samples == test.samples);

    CHECK_THROWS_AS(split(ds, 0.0, 1), ParameterError);
    CHECK_THROWS_AS(split(ds, 1.0, 1), ParameterError);
}

TEST_CASE("checkpoint round trip preserves greedy outputs") {
    const KernelSpec spec = ktest::tiny_spec(3, {3, 4, 2});
    ModelParams mp = ktest::tiny_model(ModelVariant::hybrid2, spec, 77);
    const std::string path = temp_path("kseer_ckpt_test.bin");
    save_checkpoint(mp, path);
    const ModelParams loaded = load_checkpoint(path);

    CHECK(loaded.kernel == mp.kernel);
    CHECK(loaded.config == mp.config);
    CHECK(loaded.precision == mp.precision);

    // quantizing to f32 is idempotent: a second round trip is bit-exact
    const std::string path2 = temp_path("kseer_ckpt_test2.bin");
    save_checkpoint(loaded, path2);
    const ModelParams loaded2 = load_checkpoint(path2);
    for (const auto& [name, t] : loaded.tensors) {
        const nn::Tensor& u = loaded2.tensors.at(name);
        REQUIRE(t.same_shape(u));
        for (int i = 0; i < t.size(); ++i) CHECK(t[i] == u[i]);
    }

    // greedy outputs agree between the original and the loaded model
    const SequencePredictor orig(mp);
    const SequencePredictor back(loaded);
    for (int trial = 0; trial < 100; ++trial) {
        const TokenSequence input = ktest::tiny_input(1000 + trial);
        CHECK(greedy_decode(orig, input).ids == greedy_decode(back, input).ids);
    }
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint error kinds are distinct") {
    const KernelSpec spec = ktest::tiny_spec(2, {2, 2});
    ModelParams mp = ktest::tiny_model(ModelVariant::enc_dec, spec, 3);
    const std::string path = temp_path("kseer_ckpt_err.bin");
    save_checkpoint(mp, path);

    // truncated payload
    {
        std::ifstream in(path, std::ios::binary);
        std::string all(std::istreambuf_iterator<char>(in), {});
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(all.data(), static_cast<std::streamsize>(all.size() - 10));
    }
    try {
        load_checkpoint(path);
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(e.kind() == CheckpointError::Kind::truncated);
    }

    // version mismatch
    save_checkpoint(mp, path);
    {
        std::ifstream in(path, std::ios::binary);
        std::string all(std::istreambuf_iterator<char>(in), {});
        const auto pos = all.find("kernelseer-checkpoint/1");
        all.replace(pos, 23, "kernelseer-checkpoint/9");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(all.data(), static_cast<std::streamsize>(all.size()));
    }
    try {
        load_checkpoint(path);
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(e.kind() == CheckpointError::Kind::version);
    }

    // header shape vs payload disagreement (extra payload bytes)
    save_checkpoint(mp, path);
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        const char extra[8] = {0};
        out.write(extra, 8);
    }
    try {
        load_checkpoint(path);
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(e.kind() == CheckpointError::Kind::shape);
    }
    std::remove(path.c_str());
}

TEST_CASE("record format fuzz: format-parse identity over synthetic samples") {
    const KernelSpec& spec = builtin_spec("ConvAsmBwdWrW1x1");
    const Dataset ds = generate_synthetic(spec, 250, 13, Difficulty::moderate,
                                          Precision::half);
    for (const Sample& s : ds.samples) {
        CHECK(parse_record(format_record(s), spec) == s);
    }
}
