// SPDX-License-Identifier: Apache-2.0
#include "kernelseer/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "kernelseer/rng.hpp"

namespace kernelseer {

void Dataset::check(const KernelSpec& spec) const {
    std::set<std::array<std::int64_t, 7>> seen;
    for (const Sample& s : samples) {
        if (s.kernel != kernel) {
            throw ValidationError("dataset mixes kernels " + kernel + " and " + s.kernel,
                                  "kernel");
        }
        if (s.precision != precision) {
            throw ValidationError("dataset mixes precisions", "precision");
        }
        for (const auto& p : spec.params) {
            auto it = s.params.find(p.name);
            if (it == s.params.end() || !spec.value_legal(p.name, it->second)) {
                throw ValidationError("illegal value for parameter " + p.name, p.name);
            }
        }
        std::array<std::int64_t, 7> key{};
        for (int f = 0; f < kNumInputFields; ++f) key[static_cast<std::size_t>(f)] =
            descriptor_field(s.descriptor, f);
        if (!seen.insert(key).second) {
            throw ValidationError("duplicate descriptor in dataset", "descriptor");
        }
    }
}

// ---------------------------------------------------------------------------
// Record parsing
// ---------------------------------------------------------------------------

namespace {

struct Cursor {
    const std::string& line;
    int line_number;
    std::size_t pos = 0;

    int column() const { return static_cast<int>(pos) + 1; }

    void skip_ws() {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    }

    bool at_end() {
        skip_ws();
        return pos >= line.size();
    }

    char peek() {
        skip_ws();
        return pos < line.size() ? line[pos] : '\0';
    }

    void expect(char c) {
        skip_ws();
        if (pos >= line.size() || line[pos] != c) {
            throw ParseError(std::string("expected '") + c + "'", line_number, column());
        }
        ++pos;
    }

    std::string token() {
        skip_ws();
        const std::size_t start = pos;
        while (pos < line.size() && line[pos] != ',' && line[pos] != '|' &&
               line[pos] != '=' && line[pos] != ' ' && line[pos] != '\t') {
            ++pos;
        }
        if (pos == start) {
            throw ParseError("expected a token", line_number, column());
        }
        return line.substr(start, pos - start);
    }

    std::int64_t integer() {
        skip_ws();
        const int col = column();
        const std::string t = token();
        try {
            std::size_t used = 0;
            const std::int64_t v = std::stoll(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
            return v;
        } catch (const std::exception&) {
            throw ParseError("expected integer, got '" + t + "'", line_number, col);
        }
    }
};

}  // namespace

Sample parse_record(const std::string& line, const KernelSpec& spec, int line_number) {
    Cursor cur{line, line_number};
    Sample s;

    const int kernel_col = cur.column();
    s.kernel = cur.token();
    if (s.kernel != spec.name) {
        throw ParseError("record kernel '" + s.kernel + "' does not match spec '" +
                             spec.name + "'",
                         line_number, kernel_col);
    }
    cur.expect(',');
    const int prec_col = cur.column();
    const std::string prec = cur.token();
    try {
        s.precision = precision_from_label(prec);
    } catch (const ValidationError&) {
        throw ParseError("expected fp32 or fp16, got '" + prec + "'", line_number,
                         prec_col);
    }
    s.descriptor.precision = s.precision;
    cur.expect('|');

    for (int f = 0; f < kNumInputFields; ++f) {
        if (f > 0) cur.expect(',');
        const int col = cur.column();
        const std::string name = cur.token();
        if (name != kInputFieldNames[static_cast<std::size_t>(f)]) {
            throw ParseError(std::string("expected field '") +
                                 kInputFieldNames[static_cast<std::size_t>(f)] +
                                 "', got '" + name + "'",
                             line_number, col);
        }
        cur.expect('=');
        const std::int64_t value = cur.integer();
        if (value < 1) {
            throw ValidationError("field " + name + " must be >= 1, got " +
                                      std::to_string(value),
                                  name);
        }
        set_descriptor_field(s.descriptor, f, value);
    }
    cur.expect('|');

    bool first = true;
    while (!cur.at_end()) {
        if (!first) cur.expect(',');
        first = false;
        const int col = cur.column();
        const std::string name = cur.token();
        if (spec.param_index(name) < 0) {
            throw ParseError("unknown parameter '" + name + "' for kernel " + spec.name,
                             line_number, col);
        }
        if (s.params.contains(name)) {
            throw ParseError("duplicate parameter '" + name + "'", line_number, col);
        }
        cur.expect('=');
        s.params[name] = cur.integer();
    }
    for (const auto& p : spec.params) {
        auto it = s.params.find(p.name);
        if (it == s.params.end()) {
            throw ParseError("missing parameter '" + p.name + "'", line_number,
                             cur.column());
        }
        if (!spec.value_legal(p.name, it->second)) {
            throw ValidationError("value " + std::to_string(it->second) +
                                      " of parameter " + p.name +
                                      " is outside the legal set for kernel " + spec.name,
                                  p.name);
        }
    }
    return s;
}

std::string format_record(const Sample& sample) {
    std::ostringstream out;
    out << sample.kernel << ',' << precision_label(sample.precision) << '|';
    for (int f = 0; f < kNumInputFields; ++f) {
        if (f > 0) out << ',';
        out << kInputFieldNames[static_cast<std::size_t>(f)] << '='
            << descriptor_field(sample.descriptor, f);
    }
    out << '|';
    bool first = true;
    for (const auto& [name, value] : sample.params) {
        if (!first) out << ',';
        first = false;
        out << name << '=' << value;
    }
    return out.str();
}

Dataset load_dataset(const std::string& path, const KernelSpec& spec) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset file " + path);
    Dataset ds;
    ds.kernel = spec.name;
    std::string line;
    int line_number = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_number;
        std::size_t i = 0;
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size() || line[i] == '#') continue;
        Sample s = parse_record(line, spec, line_number);
        if (first) {
            ds.precision = s.precision;
            first = false;
        } else if (s.precision != ds.precision) {
            throw ValidationError("dataset mixes precisions at line " +
                                      std::to_string(line_number),
                                  "precision");
        }
        ds.samples.push_back(std::move(s));
    }
    ds.check(spec);
    return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write dataset file " + path);
    for (const Sample& s : dataset.samples) out << format_record(s) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

Difficulty difficulty_from_label(const std::string& s) {
    if (s == "easy") return Difficulty::easy;
    if (s == "moderate") return Difficulty::moderate;
    throw ValidationError("unknown difficulty '" + s + "' (easy|moderate)", "difficulty");
}

std::string difficulty_label(Difficulty d) {
    return d == Difficulty::easy ? "easy" : "moderate";
}

namespace {

int ilog2(std::int64_t v) {
    int e = 0;
    while (v > 1) {
        v >>= 1;
        ++e;
    }
    return e;
}

// Descriptor grids cluster each field into blobs separated by one wide
// central gap; blob_index buckets a value by that gap. Easy hidden
// functions read only blob indices, so nearby descriptors share labels.
int blob_index(int field, std::int64_t v) {
    switch (field) {
        case 0: return v < 128 ? 0 : 1;   // n: gap 64 -> 192
        case 2:
        case 3: return v < 128 ? 0 : 1;   // h, w: gap 64 -> 192
        default: return v < 512 ? 0 : 1;  // c, k: gap 320 -> 768
    }
}

// Deterministic parameter choice for one descriptor. The mixing constants
// come from the dataset seed, so different seeds pose different (but
// structurally similar) learning problems.
ParamMap hidden_function(const KernelSpec& spec, const ProblemDescriptor& d,
                         Difficulty difficulty, std::uint64_t seed) {
    const int m = spec.num_params();
    Rng mix = Rng::derive(seed, 0xf00d);
    std::vector<int> field_of(static_cast<std::size_t>(m));
    std::vector<int> scale_of(static_cast<std::size_t>(m));
    std::vector<int> offset_of(static_cast<std::size_t>(m));
    std::vector<int> couple(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
        field_of[static_cast<std::size_t>(j)] = static_cast<int>(mix.uniform_int(5));  // n,c,h,w,k
        scale_of[static_cast<std::size_t>(j)] = 1 + static_cast<int>(mix.uniform_int(2));
        offset_of[static_cast<std::size_t>(j)] = static_cast<int>(mix.uniform_int(16));
        couple[static_cast<std::size_t>(j)] = static_cast<int>(mix.uniform_int(2));
    }

    ParamMap out;
    int prev_idx = 0;
    for (int j = 0; j < m; ++j) {
        const auto& param = spec.params[static_cast<std::size_t>(j)];
        const int nvals = static_cast<int>(param.values.size());
        int idx;
        if (difficulty == Difficulty::easy) {
            // One field, thresholds on the grid's blob gaps.
            const int field = field_of[static_cast<std::size_t>(j)];
            const int bucket = blob_index(field, descriptor_field(d, field)) +
                               offset_of[static_cast<std::size_t>(j)];
            idx = bucket % nvals;
        } else {
            // Bucketed products/ratios with cross-parameter coupling:
            // saturating staircases of a volume measure, the way tile
            // sizes track problem volume.
            std::int64_t prod;
            int base, span;
            switch (j % 3) {
                case 0:
                    prod = d.n * d.c * d.h_i * d.w_i;
                    base = 9;
                    span = 24;
                    break;
                case 1:
                    prod = d.c * d.k;
                    base = 8;
                    span = 12;
                    break;
                default:
                    prod = d.h_i * d.w_i * d.k / std::max<std::int64_t>(d.c, 1);
                    base = 0;
                    span = 21;
                    break;
            }
            // steepness varies per parameter; a handful of levels spread
            // across the whole value set
            span += 3 * scale_of[static_cast<std::size_t>(j)];
            const int bucket = ilog2(std::max<std::int64_t>(prod, 1)) - base;
            const int phase = offset_of[static_cast<std::size_t>(j)] % 3 - 1;
            const int levels =
                std::min(nvals, 4 + scale_of[static_cast<std::size_t>(j)]);
            int level = bucket * levels / span + phase +
                        couple[static_cast<std::size_t>(j)] * prev_idx;
            level = std::clamp(level, 0, levels - 1);
            idx = levels == 1 ? 0 : level * (nvals - 1) / (levels - 1);
            prev_idx = level;
            out[param.name] = param.values[static_cast<std::size_t>(idx)];
            continue;
        }
        out[param.name] = param.values[static_cast<std::size_t>(idx)];
        prev_idx = idx;
    }
    return out;
}

}  // namespace

Dataset generate_synthetic(const KernelSpec& spec, int count, std::uint64_t seed,
                           Difficulty difficulty, Precision precision) {
    if (count < 1) throw ParameterError("generate_synthetic: count must be >= 1");

    // Realistic descriptor grids: power-of-two-ish batch sizes and channel
    // counts, common image sizes, clustered into low/mid/high blobs (see
    // blob_index). Filter size follows the kernel name.
    const std::vector<std::int64_t> n_grid = {1, 2, 4, 32, 48, 64, 192, 224, 256};
    const std::vector<std::int64_t> ck_grid = {16, 24, 32, 192, 256, 320,
                                               768, 896, 1024};
    const std::vector<std::int64_t> hw_grid = {7, 10, 14, 48, 56, 64, 192, 224};
    const std::int64_t filter = spec.name.find("3x3") != std::string::npos ? 3 : 1;

    const std::uint64_t total = static_cast<std::uint64_t>(n_grid.size()) *
                                ck_grid.size() * hw_grid.size() * hw_grid.size() *
                                ck_grid.size();
    if (static_cast<std::uint64_t>(count) > total) {
        throw ParameterError("generate_synthetic: requested " + std::to_string(count) +
                             " samples but the descriptor grid only has " +
                             std::to_string(total) + " distinct points");
    }

    Rng rng = Rng::derive(seed, 0x5eed);
    Dataset ds;
    ds.kernel = spec.name;
    ds.precision = precision;
    std::set<std::array<std::int64_t, 5>> used;
    while (static_cast<int>(ds.samples.size()) < count) {
        ProblemDescriptor d;
        d.n = n_grid[rng.uniform_int(n_grid.size())];
        d.c = ck_grid[rng.uniform_int(ck_grid.size())];
        d.h_i = hw_grid[rng.uniform_int(hw_grid.size())];
        d.w_i = hw_grid[rng.uniform_int(hw_grid.size())];
        d.k = ck_grid[rng.uniform_int(ck_grid.size())];
        d.y = filter;
        d.x = filter;
        d.precision = precision;
        if (!used.insert({d.n, d.c, d.h_i, d.w_i, d.k}).second) continue;
        Sample s;
        s.descriptor = d;
        s.kernel = spec.name;
        s.precision = precision;
        s.params = hidden_function(spec, d, difficulty, seed);
        ds.samples.push_back(std::move(s));
    }
    ds.check(spec);
    return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ParameterError("split: test fraction must be in (0,1), got " +
                             std::to_string(test_fraction));
    }
    std::vector<std::size_t> order(dataset.samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::derive(seed, 0x51917);
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(order[i - 1], order[j]);
    }
    const std::size_t test_count = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(order.size())));
    Dataset train{dataset.kernel, dataset.precision, {}};
    Dataset test{dataset.kernel, dataset.precision, {}};
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < test_count ? test : train).samples.push_back(dataset.samples[order[i]]);
    }
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "kernelseer-checkpoint/1";

std::string join_ints(const std::vector<std::int64_t>& vs) {
    std::string out;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(vs[i]);
    }
    return out;
}

std::vector<std::int64_t> split_ints(const std::string& s) {
    std::vector<std::int64_t> out;
    std::stringstream ss(s);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
        if (!piece.empty()) out.push_back(std::stoll(piece));
    }
    return out;
}

void write_f32_le(std::ostream& out, const std::vector<double>& values) {
    for (double v : values) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        const unsigned char bytes[4] = {
            static_cast<unsigned char>(bits & 0xff),
            static_cast<unsigned char>((bits >> 8) & 0xff),
            static_cast<unsigned char>((bits >> 16) & 0xff),
            static_cast<unsigned char>((bits >> 24) & 0xff),
        };
        out.write(reinterpret_cast<const char*>(bytes), 4);
    }
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot write " + path);

    out << "format: " << kCheckpointFormat << "\n";
    out << "variant: " << variant_label(params.config.variant) << "\n";
    out << "kernel: " << params.kernel << "\n";
    out << "precision: " << precision_label(params.precision) << "\n";
    const ModelConfig& c = params.config;
    out << "encoder_state_size: " << c.encoder_state_size << "\n";
    out << "pre_attention_size: " << c.pre_attention_size << "\n";
    out << "post_attention_size: " << c.post_attention_size << "\n";
    out << "attention_dense_nodes: " << c.attention_dense_nodes << "\n";
    out << "decoder_cell_size: " << c.decoder_cell_size << "\n";
    out << "dropout: " << c.dropout << "\n";
    out << "recurrent_dropout: " << c.recurrent_dropout << "\n";
    std::string convs;
    for (std::size_t i = 0; i < c.conv_layers.size(); ++i) {
        if (i) convs += ";";
        convs += std::to_string(c.conv_layers[i].filters) + "," +
                 std::to_string(c.conv_layers[i].kernel_size) + "," +
                 std::to_string(c.conv_layers[i].stride);
    }
    out << "conv_layers: " << convs << "\n";
    for (int f = 0; f < kNumInputFields; ++f) {
        out << "input_vocab." << params.vocab.input_field(f).name << ": "
            << join_ints(params.vocab.input_field(f).values) << "\n";
    }
    out << "output_params: " << params.vocab.num_output_positions() << "\n";
    for (int i = 0; i < params.vocab.num_output_positions(); ++i) {
        const FieldVocab& fv = params.vocab.output_param(i);
        out << "param." << i << ": " << fv.name << " = " << join_ints(fv.values) << "\n";
    }
    for (const auto& [name, tensor] : params.tensors) {
        out << "tensor: " << name << " ";
        const auto& shape = tensor.shape();
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) out << "x";
            out << shape[i];
        }
        out << "\n";
    }
    out << "\n";
    for (const auto& [name, tensor] : params.tensors) {
        write_f32_le(out, tensor.values());
    }
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path);

    ModelParams params;
    std::vector<FieldVocab> input_fields(kNumInputFields);
    std::vector<FieldVocab> output_params;
    std::vector<std::pair<std::string, std::vector<int>>> tensor_order;
    bool saw_format = false;

    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) break;  // header/payload separator
        const auto colon = line.find(": ");
        if (colon == std::string::npos) {
            throw CheckpointError(CheckpointError::Kind::malformed,
                                  "malformed header line: " + line);
        }
        const std::string key = line.substr(0, colon);
        const std::string value = line.substr(colon + 2);
        if (key == "format") {
            if (value != kCheckpointFormat) {
                throw CheckpointError(CheckpointError::Kind::version,
                                      "unsupported checkpoint format '" + value +
                                          "' (expected " + kCheckpointFormat + ")");
            }
            saw_format = true;
        } else if (key == "variant") {
            params.config.variant = variant_from_label(value);
        } else if (key == "kernel") {
            params.kernel = value;
        } else if (key == "precision") {
            params.precision = precision_from_label(value);
        } else if (key == "encoder_state_size") {
            params.config.encoder_state_size = std::stoi(value);
        } else if (key == "pre_attention_size") {
            params.config.pre_attention_size = std::stoi(value);
        } else if (key == "post_attention_size") {
            params.config.post_attention_size = std::stoi(value);
        } else if (key == "attention_dense_nodes") {
            params.config.attention_dense_nodes = std::stoi(value);
        } else if (key == "decoder_cell_size") {
            params.config.decoder_cell_size = std::stoi(value);
        } else if (key == "dropout") {
            params.config.dropout = std::stod(value);
        } else if (key == "recurrent_dropout") {
            params.config.recurrent_dropout = std::stod(value);
        } else if (key == "conv_layers") {
            params.config.conv_layers.clear();
            std::stringstream ss(value);
            std::string layer;
            while (std::getline(ss, layer, ';')) {
                const auto ints = split_ints(layer);
                if (ints.size() != 3) {
                    throw CheckpointError(CheckpointError::Kind::malformed,
                                          "bad conv layer spec: " + layer);
                }
                params.config.conv_layers.push_back(
                    {static_cast<int>(ints[0]), static_cast<int>(ints[1]),
                     static_cast<int>(ints[2])});
            }
        } else if (key.rfind("input_vocab.", 0) == 0) {
            const std::string field = key.substr(12);
            for (int f = 0; f < kNumInputFields; ++f) {
                if (field == kInputFieldNames[static_cast<std::size_t>(f)]) {
                    input_fields[static_cast<std::size_t>(f)] =
                        FieldVocab{field, split_ints(value)};
                }
            }
        } else if (key == "output_params") {
            output_params.resize(static_cast<std::size_t>(std::stoi(value)));
        } else if (key.rfind("param.", 0) == 0) {
            const std::size_t idx = static_cast<std::size_t>(std::stoi(key.substr(6)));
            const auto eq = value.find(" = ");
            if (eq == std::string::npos || idx >= output_params.size()) {
                throw CheckpointError(CheckpointError::Kind::malformed,
                                      "bad param header line: " + line);
            }
            output_params[idx] = FieldVocab{value.substr(0, eq), split_ints(value.substr(eq + 3))};
        } else if (key == "tensor") {
            const auto space = value.rfind(' ');
            if (space == std::string::npos) {
                throw CheckpointError(CheckpointError::Kind::malformed,
                                      "bad tensor header line: " + line);
            }
            const std::string name = value.substr(0, space);
            std::vector<int> shape;
            std::stringstream ss(value.substr(space + 1));
            std::string dim;
            while (std::getline(ss, dim, 'x')) shape.push_back(std::stoi(dim));
            if (shape.empty()) {
                throw CheckpointError(CheckpointError::Kind::shape,
                                      "tensor " + name + " has no shape");
            }
            tensor_order.emplace_back(name, std::move(shape));
        } else {
            throw CheckpointError(CheckpointError::Kind::malformed,
                                  "unknown header key '" + key + "'");
        }
    }
    if (!saw_format) {
        throw CheckpointError(CheckpointError::Kind::version, "missing format header");
    }
    for (int f = 0; f < kNumInputFields; ++f) {
        if (input_fields[static_cast<std::size_t>(f)].values.empty()) {
            throw CheckpointError(CheckpointError::Kind::malformed,
                                  std::string("missing input vocabulary for field ") +
                                      kInputFieldNames[static_cast<std::size_t>(f)]);
        }
    }
    params.vocab = Vocabulary(std::move(input_fields), std::move(output_params));

    // Payload: little-endian float32, concatenated in header order.
    std::vector<char> payload(std::istreambuf_iterator<char>(in), {});
    std::size_t expected = 0;
    for (const auto& [name, shape] : tensor_order) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        expected += n * 4;
    }
    if (payload.size() < expected) {
        throw CheckpointError(CheckpointError::Kind::truncated,
                              "payload has " + std::to_string(payload.size()) +
                                  " bytes, header declares " + std::to_string(expected));
    }
    if (payload.size() > expected) {
        throw CheckpointError(CheckpointError::Kind::shape,
                              "payload has " + std::to_string(payload.size()) +
                                  " bytes, header shapes account for " +
                                  std::to_string(expected));
    }
    std::size_t offset = 0;
    for (const auto& [name, shape] : tensor_order) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = 0;
            for (int b = 3; b >= 0; --b) {
                bits = (bits << 8) |
                       static_cast<unsigned char>(payload[offset + i * 4 +
                                                          static_cast<std::size_t>(b)]);
            }
            float f;
            std::memcpy(&f, &bits, 4);
            values[i] = static_cast<double>(f);
        }
        offset += n * 4;
        params.tensors.emplace(name, nn::Tensor(shape, std::move(values)));
    }
    return params;
}

}  // namespace kernelseer
