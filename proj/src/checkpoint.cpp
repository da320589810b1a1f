#include "mhf/checkpoint.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "mhf/errors.hpp"

namespace mhf {

namespace {

constexpr const char* magic = "mhf-checkpoint";
constexpr int format_version = 1;

std::size_t parse_count(const std::string& text, const std::string& field) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ParseError("checkpoint: field '" + field + "' is not a count: '" + text + "'");
    }
}

}  // namespace

std::string hex_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double parse_double(const std::string& text) {
    if (text.empty()) throw ParseError("expected a number, got an empty field");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() || errno == ERANGE) {
        throw ParseError("not a number: '" + text + "'");
    }
    return v;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    const ModelConfig& c = ckpt.config;
    out << magic << ' ' << format_version << '\n';
    out << "L " << c.context_length << '\n';
    out << "H " << c.horizon << '\n';
    out << "D " << c.channels << '\n';
    out << "K " << c.hypotheses << '\n';
    out << "head_hidden " << c.head_hidden << '\n';
    out << "norm " << norm_kind_name(c.norm.kind) << '\n';
    out << "trim_ratio " << hex_double(c.norm.trim_ratio) << '\n';
    out << "var_epsilon " << hex_double(c.norm.var_epsilon) << '\n';
    out << "group_count " << c.norm.group_count << '\n';
    out << "init_seed " << c.init_seed << '\n';
    out << "init_scale " << hex_double(c.init_scale) << '\n';

    const auto names = ckpt.params.tensor_names();
    const auto tensors = ckpt.params.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const Matrix& m = *tensors[i];
        out << "tensor " << names[i] << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t col = 0; col < m.cols(); ++col) {
                if (col) out << ' ';
                out << hex_double(m(r, col));
            }
            out << '\n';
        }
    }
    out << "end\n";
    if (!out) throw IoError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != magic) throw ParseError("checkpoint: missing magic line");
    if (version != format_version) {
        throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
    }

    std::map<std::string, std::string> header;
    std::string key;
    while (in >> key && key != "tensor") {
        std::string value;
        if (!(in >> value)) throw ParseError("checkpoint: header key '" + key + "' has no value");
        header[key] = value;
    }
    auto field = [&](const std::string& k) -> const std::string& {
        auto it = header.find(k);
        if (it == header.end()) throw ParseError("checkpoint: header lacks '" + k + "'");
        return it->second;
    };

    Checkpoint ckpt;
    ModelConfig& c = ckpt.config;
    c.context_length = parse_count(field("L"), "L");
    c.horizon = parse_count(field("H"), "H");
    c.channels = parse_count(field("D"), "D");
    c.hypotheses = parse_count(field("K"), "K");
    c.head_hidden = parse_count(field("head_hidden"), "head_hidden");
    const auto kind = parse_norm_kind(field("norm"));
    if (!kind) throw ParseError("checkpoint: unknown norm kind '" + field("norm") + "'");
    c.norm.kind = *kind;
    c.norm.trim_ratio = parse_double(field("trim_ratio"));
    c.norm.var_epsilon = parse_double(field("var_epsilon"));
    c.norm.group_count = parse_count(field("group_count"), "group_count");
    c.init_seed = parse_count(field("init_seed"), "init_seed");
    c.init_scale = parse_double(field("init_scale"));
    c.validate();

    // Shapes come from a freshly initialized parameter set; values from the file.
    ModelConfig shape_cfg = c;
    shape_cfg.init_scale = 0.0;
    ckpt.params = init_params(shape_cfg);
    const auto names = ckpt.params.tensor_names();
    auto tensors = ckpt.params.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (i > 0 && !(in >> key && key == "tensor")) {
            throw ParseError("checkpoint: expected tensor block for '" + names[i] + "'");
        }
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(in >> name >> rows >> cols)) throw ParseError("checkpoint: malformed tensor header");
        if (name != names[i]) {
            throw ParseError("checkpoint: expected tensor '" + names[i] + "', found '" + name + "'");
        }
        Matrix& m = *tensors[i];
        if (rows != m.rows() || cols != m.cols()) {
            throw ParseError("checkpoint: tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", configuration implies " + m.shape_string());
        }
        for (double& v : m.values()) {
            std::string tok;
            if (!(in >> tok)) throw ParseError("checkpoint: tensor '" + name + "' is truncated");
            v = parse_double(tok);
        }
    }
    if (!(in >> key) || key != "end") throw ParseError("checkpoint: missing end marker");
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    return read_checkpoint(in);
}

}  // namespace mhf
