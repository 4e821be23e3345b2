// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "kernelseer/constraints.hpp"
#include "test_util.hpp"

using namespace kernelseer;

#ifndef KSEER_FIXTURE_DIR
#define KSEER_FIXTURE_DIR "tests/fixtures"
#endif

namespace {

ParamMap all_minimum(const KernelSpec& spec) {
    ParamMap m;
    for (const auto& p : spec.params) m[p.name] = p.values.front();
    return m;
}

ProblemDescriptor some_descriptor() {
    ProblemDescriptor d;
    d.n = 64;
    d.c = 256;
    d.h_i = 56;
    d.w_i = 56;
    d.k = 128;
    return d;
}

}  // namespace

TEST_CASE("builtin specs carry the documented parameter sets") {
    const KernelSpec& asm1x1 = builtin_spec("ConvAsm1x1U");
    CHECK(asm1x1.num_params() == 8);
    CHECK(asm1x1.param("k_mult").values == std::vector<std::int64_t>{1, 4, 8, 16, 32});
    CHECK(asm1x1.param("read_size").values == std::vector<std::int64_t>{1, 2, 3, 4});
    CHECK(asm1x1.param("chunk_size").values ==
          std::vector<std::int64_t>{1, 2, 4, 8, 16, 32, 64});

    const KernelSpec& ocl = builtin_spec("ConvOclDirectFwd1x1");
    CHECK(ocl.num_params() == 9);
    CHECK(ocl.param("n_in_data_tiles").values.size() == 12);
    CHECK(ocl.param("n_in_data_tiles").values.front() == 1);
    CHECK(ocl.param("n_in_data_tiles").values.back() == 2048);
    CHECK(ocl.param("out_pix_tile1").values == std::vector<std::int64_t>{0, 1});
    CHECK(ocl.param("n_stacks").values == std::vector<std::int64_t>{0, 1});

    const KernelSpec& wrw1x1 = builtin_spec("ConvAsmBwdWrW1x1");
    CHECK(wrw1x1.num_params() == 10);
    CHECK(wrw1x1.param("data_prefetch").values == std::vector<std::int64_t>{0, 1, 2, 3, 4});

    const KernelSpec& wrw3x3 = builtin_spec("ConvAsmBwdWrW3x3");
    CHECK(wrw3x3.num_params() == 6);
    CHECK(wrw3x3.param("chunk_size").values == std::vector<std::int64_t>{8, 16});
    CHECK(wrw3x3.param("limit_wave_cnt").values.size() == 10);
}

TEST_CASE("builtin specs match the transcription fixture field for field") {
    const std::string path = std::string(KSEER_FIXTURE_DIR) + "/table1.txt";
    const std::vector<KernelSpec> fixture = load_kernel_specs(path);
    REQUIRE(fixture.size() == builtin_specs().size());
    for (std::size_t i = 0; i < fixture.size(); ++i) {
        const KernelSpec& a = fixture[i];
        const KernelSpec& b = builtin_specs()[i];
        CHECK(a.name == b.name);
        REQUIRE(a.params.size() == b.params.size());
        for (std::size_t j = 0; j < a.params.size(); ++j) {
            CHECK(a.params[j].name == b.params[j].name);
            CHECK(a.params[j].values == b.params[j].values);
        }
    }
}

TEST_CASE("unknown kernels list the builtin names") {
    try {
        builtin_spec("NoSuchKernel");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("ConvAsm1x1U") != std::string::npos);
        CHECK(msg.find("ConvAsmBwdWrW3x3") != std::string::npos);
    }
}

TEST_CASE("search space sizes") {
    // 10*2*2*4*16*8: the product the documented value sets force
    CHECK(search_space_size(builtin_spec("ConvAsmBwdWrW3x3")) == 20480);
    CHECK(search_space_size(builtin_spec("ConvAsm1x1U")) == 3440640);
    KernelSpec one{"One", {{"p", {3, 5, 9}}}};
    CHECK(search_space_size(one) == 3);
}

TEST_CASE("membership predicate") {
    const KernelSpec& spec = builtin_spec("ConvAsm1x1U");
    const ConstraintPredicate pred = membership_predicate(spec);
    const ProblemDescriptor d = some_descriptor();

    CHECK(pred.evaluate(d, {}));  // empty partial map
    CHECK(pred.evaluate(d, all_minimum(spec)));
    CHECK_FALSE(pred.evaluate(d, {{"read_size", 5}}));
    CHECK(pred.evaluate(d, {{"read_size", 2}, {"k_mult", 16}}));
    CHECK_FALSE(pred.evaluate(d, {{"chunk_size", 3}}));
    CHECK_THROWS_AS(pred.evaluate(d, {{"bogus", 1}}), ValidationError);
}

TEST_CASE("resource budget predicate") {
    const ProblemDescriptor d = some_descriptor();
    const ConstraintPredicate zero =
        resource_budget_predicate({{"a", 0.0}, {"b", 0.0}}, 0.0);
    CHECK(zero.evaluate(d, {{"a", 100}, {"b", 100}}));

    const ConstraintPredicate tight = resource_budget_predicate({{"a", 1.0}}, 0.0);
    CHECK(tight.evaluate(d, {}));
    CHECK_FALSE(tight.evaluate(d, {{"a", 1}}));

    CHECK_THROWS_AS(resource_budget_predicate({{"a", -1.0}}, 5.0), ParameterError);
}

TEST_CASE("budget equal to the sum of minima admits only the minimum sequence") {
    const KernelSpec spec = ktest::tiny_spec(3, {2, 3, 2});
    // values are 0..size-1, so shift weights onto value+1 via per-param maps
    std::map<std::string, double> weights{{"p0", 1.0}, {"p1", 1.0}, {"p2", 1.0}};
    const ConstraintPredicate budget = resource_budget_predicate(weights, 0.0);
    const ProblemDescriptor d = some_descriptor();
    int admitted = 0;
    for (std::int64_t v0 : spec.params[0].values) {
        for (std::int64_t v1 : spec.params[1].values) {
            for (std::int64_t v2 : spec.params[2].values) {
                ParamMap m{{"p0", v0}, {"p1", v1}, {"p2", v2}};
                if (budget.evaluate(d, m)) ++admitted;
            }
        }
    }
    CHECK(admitted == 1);  // only the all-zero (minimum) assignment
}

TEST_CASE("validate_sequence reports the first violation") {
    const KernelSpec& spec = builtin_spec("ConvAsm1x1U");
    const ProblemDescriptor d = some_descriptor();
    std::vector<ConstraintPredicate> preds{membership_predicate(spec)};

    ParamMap ok = all_minimum(spec);
    CHECK(!validate_sequence(spec, d, ok, preds).has_value());

    ParamMap bad = ok;
    bad["chunk_size"] = 3;
    const auto violation = validate_sequence(spec, d, bad, preds);
    REQUIRE(violation.has_value());
    CHECK(violation->predicate == "membership:ConvAsm1x1U");

    // second predicate failing is the one reported
    std::vector<ConstraintPredicate> two{
        membership_predicate(spec),
        resource_budget_predicate({{"waves_k_in_group", 1.0}}, 0.0, "budget")};
    const auto v2 = validate_sequence(spec, d, ok, two);
    REQUIRE(v2.has_value());
    CHECK(v2->predicate == "budget");

    ParamMap incomplete = ok;
    incomplete.erase("read_size");
    CHECK_THROWS_AS(validate_sequence(spec, d, incomplete, preds), ParameterError);
}

TEST_CASE("builtin predicates are monotone under extension") {
    ktest::Rng rng(101);
    for (int trial = 0; trial < 10000; ++trial) {
        const KernelSpec& spec =
            builtin_specs()[rng.uniform_int(builtin_specs().size())];
        std::vector<ConstraintPredicate> preds{membership_predicate(spec)};
        std::map<std::string, double> weights;
        for (const auto& p : spec.params) {
            weights[p.name] = static_cast<double>(rng.uniform_int(3));
        }
        preds.push_back(resource_budget_predicate(weights, rng.uniform(0.0, 50.0)));

        // random partial map, possibly with out-of-set values
        ParamMap partial;
        for (const auto& p : spec.params) {
            if (rng.uniform() < 0.4) continue;
            if (rng.uniform() < 0.15) {
                partial[p.name] = 999;  // out of every builtin set
            } else {
                partial[p.name] = p.values[rng.uniform_int(p.values.size())];
            }
        }
        const ProblemDescriptor d = some_descriptor();
        for (const ConstraintPredicate& pred : preds) {
            if (pred.evaluate(d, partial)) continue;
            // extend with legal values for unassigned parameters
            ParamMap extended = partial;
            for (const auto& p : spec.params) {
                if (!extended.contains(p.name)) {
                    extended[p.name] = p.values[rng.uniform_int(p.values.size())];
                }
            }
            CHECK_FALSE(pred.evaluate(d, extended));
        }
    }
}

TEST_CASE("kernel spec lines parse and round trip") {
    const std::string line = "MyKernel|tile=1-3|mode=0,1|depth=2^0-3";
    const KernelSpec spec = parse_kernel_spec_line(line);
    CHECK(spec.name == "MyKernel");
    CHECK(spec.params[0].values == std::vector<std::int64_t>{1, 2, 3});
    CHECK(spec.params[1].values == std::vector<std::int64_t>{0, 1});
    CHECK(spec.params[2].values == std::vector<std::int64_t>{1, 2, 4, 8});
    const KernelSpec again = parse_kernel_spec_line(format_kernel_spec(spec));
    CHECK(again.name == spec.name);
    REQUIRE(again.params.size() == spec.params.size());
    for (std::size_t i = 0; i < spec.params.size(); ++i) {
        CHECK(again.params[i].values == spec.params[i].values);
    }
}

TEST_CASE("kernel spec parse errors carry line and column") {
    CHECK_THROWS_AS(parse_kernel_spec_line("K|novalue", 3), ParseError);
    CHECK_THROWS_AS(parse_kernel_spec_line("K|p=", 1), ParseError);
    CHECK_THROWS_AS(parse_kernel_spec_line("K|p=5-2", 1), ParseError);
    try {
        parse_kernel_spec_line("K|p=x", 7);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 7);
    }
}

TEST_CASE("precision labels round trip") {
    CHECK(precision_label(Precision::full) == "fp32");
    CHECK(precision_label(Precision::half) == "fp16");
    CHECK(precision_from_label("fp32") == Precision::full);
    CHECK(precision_from_label("half") == Precision::half);
    CHECK_THROWS_AS(precision_from_label("fp64"), ValidationError);
}
