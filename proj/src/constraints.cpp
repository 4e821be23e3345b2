// SPDX-License-Identifier: Apache-2.0
#include "kernelseer/constraints.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace kernelseer {

std::string precision_label(Precision p) {
    return p == Precision::full ? "fp32" : "fp16";
}

Precision precision_from_label(const std::string& s) {
    if (s == "fp32" || s == "full") return Precision::full;
    if (s == "fp16" || s == "half") return Precision::half;
    throw ValidationError("unknown precision label '" + s + "' (expected fp32 or fp16)",
                          "precision");
}

void ProblemDescriptor::check() const {
    const std::int64_t fields[] = {n, c, h_i, w_i, k, y, x};
    for (int i = 0; i < kNumInputFields; ++i) {
        if (fields[i] < 1) {
            throw ValidationError(std::string("descriptor field ") + kInputFieldNames[i] +
                                      " must be >= 1, got " + std::to_string(fields[i]),
                                  kInputFieldNames[i]);
        }
    }
}

std::int64_t descriptor_field(const ProblemDescriptor& d, int field) {
    switch (field) {
        case 0: return d.n;
        case 1: return d.c;
        case 2: return d.h_i;
        case 3: return d.w_i;
        case 4: return d.k;
        case 5: return d.y;
        case 6: return d.x;
        default: throw IndexError("descriptor field index " + std::to_string(field));
    }
}

void set_descriptor_field(ProblemDescriptor& d, int field, std::int64_t value) {
    switch (field) {
        case 0: d.n = value; break;
        case 1: d.c = value; break;
        case 2: d.h_i = value; break;
        case 3: d.w_i = value; break;
        case 4: d.k = value; break;
        case 5: d.y = value; break;
        case 6: d.x = value; break;
        default: throw IndexError("descriptor field index " + std::to_string(field));
    }
}

int KernelSpec::param_index(std::string_view param_name) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name == param_name) return static_cast<int>(i);
    }
    return -1;
}

const KernelSpec::Param& KernelSpec::param(std::string_view param_name) const {
    const int i = param_index(param_name);
    if (i < 0) {
        throw ValidationError("kernel " + name + " has no parameter named '" +
                                  std::string(param_name) + "'",
                              std::string(param_name));
    }
    return params[static_cast<std::size_t>(i)];
}

bool KernelSpec::value_legal(std::string_view param_name, std::int64_t value) const {
    const Param& p = param(param_name);
    return std::find(p.values.begin(), p.values.end(), value) != p.values.end();
}

void KernelSpec::check() const {
    if (params.empty()) throw ValidationError("kernel spec has no parameters", name);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].values.empty()) {
            throw ValidationError("parameter " + params[i].name + " has an empty value set",
                                  params[i].name);
        }
        for (std::size_t j = i + 1; j < params.size(); ++j) {
            if (params[i].name == params[j].name) {
                throw ValidationError("duplicate parameter name " + params[i].name,
                                      params[i].name);
            }
        }
    }
}

namespace {

std::vector<std::int64_t> range_values(std::int64_t lo, std::int64_t hi) {
    std::vector<std::int64_t> out;
    for (std::int64_t v = lo; v <= hi; ++v) out.push_back(v);
    return out;
}

std::vector<std::int64_t> pow2_values(std::int64_t lo, std::int64_t hi) {
    std::vector<std::int64_t> out;
    for (std::int64_t e = lo; e <= hi; ++e) out.push_back(std::int64_t{1} << e);
    return out;
}

std::vector<KernelSpec> make_builtin_specs() {
    std::vector<KernelSpec> specs;

    specs.push_back(KernelSpec{
        "ConvAsm1x1U",
        {
            {"read_size", range_values(1, 4)},
            {"k_mult", {1, 4, 8, 16, 32}},
            {"chunks_per_wave", range_values(1, 16)},
            {"chunk_size", {1, 2, 4, 8, 16, 32, 64}},
            {"n_mult", range_values(1, 8)},
            {"c_mult", {1, 2, 4, 8, 16, 32}},
            {"waves_c_in_group", range_values(1, 8)},
            {"waves_k_in_group", {1, 2, 4, 8}},
        }});

    specs.push_back(KernelSpec{
        "ConvOclDirectFwd1x1",
        {
            {"grp_tile1", pow2_values(0, 4)},
            {"grp_tile0", pow2_values(0, 8)},
            {"in_tile1", pow2_values(0, 5)},
            {"in_tile_0", pow2_values(0, 5)},
            {"out_pix_tile1", {0, 1}},
            {"out_pix_tile0", {0, 1, 2, 4}},
            {"n_out_pix_tiles", pow2_values(0, 6)},
            {"n_in_data_tiles", pow2_values(0, 11)},
            {"n_stacks", {0, 1}},
        }});

    specs.push_back(KernelSpec{
        "ConvAsmBwdWrW1x1",
        {
            {"read_size", range_values(1, 4)},
            {"c_per_gpr", {1, 2, 4, 8, 16}},
            {"c_mult", {1, 2, 4, 8, 16}},
            {"k_per_gpr", {1, 2, 4, 8, 16}},
            {"k_mult", {1, 2, 4, 8, 16}},
            {"n_per_gpr", {1, 2, 4, 8, 16}},
            {"n_part_cnt", range_values(1, 8)},
            {"chunk_size", {1, 2, 4, 8, 16}},
            {"short_store", {0, 1}},
            {"data_prefetch", range_values(0, 4)},
        }});

    specs.push_back(KernelSpec{
        "ConvAsmBwdWrW3x3",
        {
            {"limit_wave_cnt", range_values(0, 9)},
            {"reverse_inout", {0, 1}},
            {"chunk_size", {8, 16}},
            {"k_per_wave", {1, 2, 4, 8}},
            {"pipe_lines_depth", range_values(1, 16)},
            {"n_per_group", range_values(1, 8)},
        }});

    for (const auto& s : specs) s.check();
    return specs;
}

}  // namespace

const std::vector<KernelSpec>& builtin_specs() {
    static const std::vector<KernelSpec> specs = make_builtin_specs();
    return specs;
}

const KernelSpec& builtin_spec(std::string_view name) {
    for (const KernelSpec& s : builtin_specs()) {
        if (s.name == name) return s;
    }
    std::string known;
    for (const KernelSpec& s : builtin_specs()) {
        if (!known.empty()) known += ", ";
        known += s.name;
    }
    throw ValidationError("unknown kernel '" + std::string(name) + "' (built-in: " +
                              known + ")",
                          "kernel");
}

std::uint64_t search_space_size(const KernelSpec& spec) {
    std::uint64_t n = 1;
    for (const auto& p : spec.params) n *= p.values.size();
    return n;
}

ConstraintPredicate membership_predicate(const KernelSpec& spec) {
    ConstraintPredicate pred;
    pred.name = "membership:" + spec.name;
    for (const auto& p : spec.params) pred.reads.push_back(p.name);
    pred.fn = [spec](const ProblemDescriptor&, const ParamMap& assigned) {
        for (const auto& [name, value] : assigned) {
            const int idx = spec.param_index(name);
            if (idx < 0) {
                throw ValidationError("membership predicate: unknown parameter '" + name +
                                          "' for kernel " + spec.name,
                                      name);
            }
            const auto& values = spec.params[static_cast<std::size_t>(idx)].values;
            if (std::find(values.begin(), values.end(), value) == values.end()) {
                return false;
            }
        }
        return true;
    };
    return pred;
}

ConstraintPredicate resource_budget_predicate(std::map<std::string, double> weights,
                                              double budget, std::string name) {
    for (const auto& [pname, w] : weights) {
        if (w < 0.0) {
            throw ParameterError("resource budget weight for " + pname +
                                 " must be nonnegative, got " + std::to_string(w));
        }
    }
    if (budget < 0.0) throw ParameterError("resource budget must be nonnegative");
    ConstraintPredicate pred;
    pred.name = std::move(name);
    for (const auto& [pname, w] : weights) pred.reads.push_back(pname);
    pred.fn = [weights = std::move(weights), budget](const ProblemDescriptor&,
                                                     const ParamMap& assigned) {
        double cost = 0.0;
        for (const auto& [pname, w] : weights) {
            auto it = assigned.find(pname);
            if (it != assigned.end()) cost += w * static_cast<double>(it->second);
        }
        return cost <= budget;
    };
    return pred;
}

std::optional<Violation> validate_sequence(const KernelSpec& spec,
                                           const ProblemDescriptor& descriptor,
                                           const ParamMap& params,
                                           std::span<const ConstraintPredicate> predicates) {
    if (static_cast<int>(params.size()) != spec.num_params()) {
        throw ParameterError("validate_sequence: map has " +
                             std::to_string(params.size()) + " entries, kernel " +
                             spec.name + " has " + std::to_string(spec.num_params()) +
                             " parameters");
    }
    for (const auto& p : spec.params) {
        if (!params.contains(p.name)) {
            throw ParameterError("validate_sequence: map missing parameter " + p.name);
        }
    }
    for (const ConstraintPredicate& pred : predicates) {
        if (!pred.evaluate(descriptor, params)) {
            return Violation{pred.name, pred.reads};
        }
    }
    return std::nullopt;
}

namespace {

void skip_spaces(const std::string& s, std::size_t& pos) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
}

std::int64_t parse_int(const std::string& text, int line, int col) {
    try {
        std::size_t used = 0;
        const std::int64_t v = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ParseError("expected integer, got '" + text + "'", line, col);
    }
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

std::vector<std::int64_t> parse_value_set(const std::string& text, int line, int col) {
    std::vector<std::int64_t> out;
    std::stringstream ss(text);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
        piece = trim(piece);
        if (piece.empty()) throw ParseError("empty value in value set", line, col);
        if (piece.rfind("2^", 0) == 0) {
            const std::string range = piece.substr(2);
            const auto dash = range.find('-');
            if (dash == std::string::npos) {
                out.push_back(std::int64_t{1} << parse_int(range, line, col));
            } else {
                const std::int64_t lo = parse_int(range.substr(0, dash), line, col);
                const std::int64_t hi = parse_int(range.substr(dash + 1), line, col);
                if (lo > hi) throw ParseError("descending power range " + piece, line, col);
                for (std::int64_t e = lo; e <= hi; ++e) out.push_back(std::int64_t{1} << e);
            }
            continue;
        }
        // Plain range lo-hi; a leading '-' would be a negative number, which
        // no parameter set uses, so '-' at position > 0 means a range.
        const auto dash = piece.find('-', 1);
        if (dash != std::string::npos) {
            const std::int64_t lo = parse_int(piece.substr(0, dash), line, col);
            const std::int64_t hi = parse_int(piece.substr(dash + 1), line, col);
            if (lo > hi) throw ParseError("descending range " + piece, line, col);
            for (std::int64_t v = lo; v <= hi; ++v) out.push_back(v);
        } else {
            out.push_back(parse_int(piece, line, col));
        }
    }
    if (out.empty()) throw ParseError("empty value set", line, col);
    return out;
}

KernelSpec parse_kernel_spec_line(const std::string& line, int line_number) {
    KernelSpec spec;
    std::stringstream ss(line);
    std::string section;
    int col = 1;
    bool first = true;
    while (std::getline(ss, section, '|')) {
        const std::string body = trim(section);
        if (first) {
            if (body.empty()) throw ParseError("missing kernel name", line_number, col);
            spec.name = body;
            first = false;
        } else {
            const auto eq = body.find('=');
            if (eq == std::string::npos) {
                throw ParseError("expected <param>=<values>, got '" + body + "'",
                                 line_number, col);
            }
            KernelSpec::Param p;
            p.name = trim(body.substr(0, eq));
            if (p.name.empty()) throw ParseError("empty parameter name", line_number, col);
            p.values = parse_value_set(body.substr(eq + 1), line_number,
                                       col + static_cast<int>(eq) + 1);
            spec.params.push_back(std::move(p));
        }
        col += static_cast<int>(section.size()) + 1;
    }
    if (first) throw ParseError("empty kernel spec line", line_number, 1);
    spec.check();
    return spec;
}

std::vector<KernelSpec> load_kernel_specs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open kernel spec file " + path);
    std::vector<KernelSpec> specs;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::string body = trim(line);
        if (body.empty() || body[0] == '#') continue;
        specs.push_back(parse_kernel_spec_line(body, line_number));
    }
    return specs;
}

std::string format_kernel_spec(const KernelSpec& spec) {
    std::string out = spec.name;
    for (const auto& p : spec.params) {
        out += "|" + p.name + "=";
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(p.values[i]);
        }
    }
    return out;
}

}  // namespace kernelseer
