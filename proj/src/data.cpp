#include "mhf/data.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "mhf/checkpoint.hpp"
#include "mhf/errors.hpp"

namespace mhf {

std::pair<std::size_t, std::size_t> TimeSeriesDataset::segment(Split split) const {
    switch (split) {
        case Split::train: return {0, train_end};
        case Split::validation: return {train_end, val_end};
        case Split::test: return {val_end, length()};
        case Split::all: return {0, length()};
    }
    return {0, 0};
}

void TimeSeriesDataset::validate() const {
    if (!(train_end > 0 && train_end < val_end && val_end <= length())) {
        throw DataError("invalid split boundaries: train_end=" + std::to_string(train_end) +
                        ", val_end=" + std::to_string(val_end) + ", T=" + std::to_string(length()));
    }
    if (!values.all_finite()) throw DataError("dataset contains non-finite values");
}

std::pair<std::size_t, std::size_t> default_split(std::size_t length) {
    return {length * 7 / 10, length * 8 / 10};
}

TimeSeriesDataset make_dataset(Matrix values, std::string freq_label) {
    TimeSeriesDataset ds;
    ds.values = std::move(values);
    ds.freq_label = std::move(freq_label);
    std::tie(ds.train_end, ds.val_end) = default_split(ds.length());
    return ds;
}

WindowPair extract_window(const TimeSeriesDataset& ds, std::size_t origin, std::size_t context,
                          std::size_t horizon) {
    if (origin + context + horizon > ds.length()) {
        throw DataError("window at origin " + std::to_string(origin) + " needs " +
                        std::to_string(context + horizon) + " steps but the series has " +
                        std::to_string(ds.length()));
    }
    const std::size_t D = ds.channels();
    WindowPair w{Matrix(context, D), Matrix(horizon, D), origin};
    for (std::size_t t = 0; t < context; ++t)
        for (std::size_t d = 0; d < D; ++d) w.x(t, d) = ds.values(origin + t, d);
    for (std::size_t t = 0; t < horizon; ++t)
        for (std::size_t d = 0; d < D; ++d) w.y(t, d) = ds.values(origin + context + t, d);
    return w;
}

namespace {

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
        case Split::all: return "all";
    }
    return "?";
}

std::pair<std::size_t, std::size_t> checked_segment(const TimeSeriesDataset& ds, std::size_t context,
                                                    std::size_t horizon, Split split) {
    const auto [begin, end] = ds.segment(split);
    if (end < begin || end - begin < context + horizon) {
        throw DataError(std::string(split_name(split)) + " split has " + std::to_string(end - begin) +
                        " steps; windows need at least L + H = " + std::to_string(context + horizon));
    }
    return {begin, end};
}

}  // namespace

std::vector<WindowPair> eval_windows(const TimeSeriesDataset& ds, std::size_t context, std::size_t horizon,
                                     Split split) {
    const auto [begin, end] = checked_segment(ds, context, horizon, split);
    const std::size_t span = context + horizon;
    std::vector<WindowPair> out;
    for (std::size_t o = begin; o + span <= end; o += span) out.push_back(extract_window(ds, o, context, horizon));
    return out;
}

WindowSampler::WindowSampler(const TimeSeriesDataset& ds, std::size_t context, std::size_t horizon,
                             Split split, std::uint64_t seed)
    : ds_(&ds), context_(context), horizon_(horizon), rng_(seed) {
    const auto [begin, end] = checked_segment(ds, context, horizon, split);
    origin_ = std::uniform_int_distribution<std::size_t>(begin, end - context - horizon);
}

std::size_t WindowSampler::next_origin() { return origin_(rng_); }

WindowPair WindowSampler::next() { return extract_window(*ds_, next_origin(), context_, horizon_); }

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    for (std::string& f : fields) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return fields;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

TimeSeriesDataset parse_csv(std::istream& in, bool has_header, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<double> data;
    std::size_t cols = 0, rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        if (has_header && line_no == 1) continue;
        const auto fields = split_fields(line);
        if (rows == 0) cols = fields.size();
        if (fields.size() != cols) {
            throw ParseError(source + ": row " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, expected " + std::to_string(cols));
        }
        for (std::size_t c = 0; c < fields.size(); ++c) {
            double v = 0.0;
            try {
                v = parse_double(fields[c]);
            } catch (const ParseError&) {
                throw ParseError(source + ": non-numeric cell at row " + std::to_string(line_no) +
                                 ", column " + std::to_string(c + 1) + ": '" + fields[c] + "'");
            }
            if (!std::isfinite(v)) {
                throw ParseError(source + ": non-finite cell at row " + std::to_string(line_no) +
                                 ", column " + std::to_string(c + 1));
            }
            data.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw DataError(source + ": no data rows");
    return make_dataset(Matrix(rows, cols, std::move(data)));
}

TimeSeriesDataset load_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);
    TimeSeriesDataset ds = parse_csv(in, has_header, path);

    const std::string meta_path = sidecar_path(path);
    if (std::filesystem::exists(meta_path)) {
        std::ifstream meta_in(meta_path);
        ds.metadata = read_metadata(meta_in);
        auto count = [&](const char* key, std::size_t fallback) {
            auto it = ds.metadata.find(key);
            if (it == ds.metadata.end()) return fallback;
            std::size_t used = 0;
            unsigned long long v = 0;
            try {
                v = std::stoull(it->second, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != it->second.size() || it->second[0] == '-') {
                throw ParseError(meta_path + ": " + key + " is not a count: '" + it->second + "'");
            }
            return static_cast<std::size_t>(v);
        };
        ds.train_end = count("train_end", ds.train_end);
        ds.val_end = count("val_end", ds.val_end);
        if (auto it = ds.metadata.find("freq"); it != ds.metadata.end()) ds.freq_label = it->second;
    }
    return ds;
}

void write_csv(std::ostream& out, const Matrix& values) {
    for (std::size_t r = 0; r < values.rows(); ++r) {
        for (std::size_t c = 0; c < values.cols(); ++c) {
            if (c) out << ',';
            out << format_double(values(r, c));
        }
        out << '\n';
    }
}

void save_csv(const std::string& path, const Matrix& values) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_csv(out, values);
    if (!out) throw IoError("write failed: " + path);
}

std::string sidecar_path(const std::string& csv_path) { return csv_path + ".meta"; }

void write_metadata(std::ostream& out, const Metadata& meta) {
    for (const auto& [k, v] : meta) out << k << '=' << v << '\n';
}

Metadata read_metadata(std::istream& in) {
    Metadata meta;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("metadata line " + std::to_string(line_no) + " is not key=value: '" + line + "'");
        }
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

void save_dataset(const std::string& csv_path, const TimeSeriesDataset& ds) {
    save_csv(csv_path, ds.values);
    Metadata meta = ds.metadata;
    meta["T"] = std::to_string(ds.length());
    meta["D"] = std::to_string(ds.channels());
    meta["train_end"] = std::to_string(ds.train_end);
    meta["val_end"] = std::to_string(ds.val_end);
    if (!ds.freq_label.empty()) meta["freq"] = ds.freq_label;
    std::ofstream out(sidecar_path(csv_path));
    if (!out) throw IoError("cannot open for writing: " + sidecar_path(csv_path));
    write_metadata(out, meta);
}

// ---------------------------------------------------------------------------
// Generators

TimeSeriesDataset synth_bimodal(std::size_t length, std::uint64_t seed, const BimodalOptions& opts) {
    if (length < 200) throw ConfigError("synth_bimodal: T must be at least 200, got " + std::to_string(length));
    if (opts.context == 0 || opts.horizon == 0) throw ConfigError("synth_bimodal: segment parts must be non-empty");
    const double amp = opts.amplitude;
    const double noise_sigma = 0.05 * std::abs(amp);
    const std::size_t seg = opts.context + opts.horizon;

    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> noise(0.0, 1.0);

    Matrix values(length, 1);
    double sign = 1.0;
    std::size_t positive = 0, segments = 0;
    for (std::size_t t = 0; t < length; ++t) {
        const std::size_t j = t % seg;
        if (j == 0) {
            sign = coin(rng) ? 1.0 : -1.0;
            positive += sign > 0.0;
            ++segments;
        }
        double base;
        if (j < opts.context) {
            base = amp * (2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(opts.context) - 1.0);
        } else {
            const double phase = static_cast<double>(j - opts.context) / static_cast<double>(opts.horizon);
            base = sign * amp * std::sin(2.0 * std::numbers::pi * phase);
        }
        values(t, 0) = base + noise_sigma * noise(rng);
    }

    TimeSeriesDataset ds = make_dataset(std::move(values), "synthetic");
    const std::size_t aligned_train = ds.train_end / seg * seg;
    const std::size_t aligned_val = ds.val_end / seg * seg;
    if (aligned_train > 0 && aligned_train < aligned_val) {
        ds.train_end = aligned_train;
        ds.val_end = aligned_val;
    }
    ds.metadata = {
        {"kind", "bimodal"},
        {"seed", std::to_string(seed)},
        {"amplitude", hex_double(amp)},
        {"noise_sigma", hex_double(noise_sigma)},
        {"context_length", std::to_string(opts.context)},
        {"horizon_length", std::to_string(opts.horizon)},
        {"segment_length", std::to_string(seg)},
        {"segments", std::to_string(segments)},
        {"positive_segments", std::to_string(positive)},
    };
    return ds;
}

TimeSeriesDataset synth_scale_imbalance(std::size_t length, const std::vector<double>& scales,
                                        std::uint64_t seed) {
    if (scales.empty()) throw ConfigError("synth_scale_imbalance: at least one scale is required");
    for (std::size_t d = 0; d < scales.size(); ++d) {
        if (!(scales[d] > 0.0) || !std::isfinite(scales[d])) {
            throw ConfigError("synth_scale_imbalance: scale " + std::to_string(d) + " must be positive, got " +
                              std::to_string(scales[d]));
        }
    }
    if (length < 2) throw ConfigError("synth_scale_imbalance: T must be at least 2");
    constexpr double phi = 0.9;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> innovation(0.0, 1.0);
    const std::size_t D = scales.size();
    Matrix values(length, D);
    std::vector<double> state(D);
    for (std::size_t d = 0; d < D; ++d) state[d] = innovation(rng) / std::sqrt(1.0 - phi * phi);
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t d = 0; d < D; ++d) {
            if (t > 0) state[d] = phi * state[d] + innovation(rng);
            values(t, d) = scales[d] * state[d];
        }
    }
    TimeSeriesDataset ds = make_dataset(std::move(values), "synthetic");
    std::string joined;
    for (std::size_t d = 0; d < D; ++d) joined += (d ? ";" : "") + hex_double(scales[d]);
    ds.metadata = {
        {"kind", "scale-imbalance"},
        {"seed", std::to_string(seed)},
        {"ar_coefficient", hex_double(phi)},
        {"scales", joined},
    };
    return ds;
}

TimeSeriesDataset synth_spiky(std::size_t length, double spike_prob, double spike_mag, std::uint64_t seed,
                              std::size_t period) {
    if (!(spike_prob >= 0.0 && spike_prob <= 0.2)) {
        throw ConfigError("synth_spiky: spike_prob must lie in [0, 0.2], got " + std::to_string(spike_prob));
    }
    if (period == 0) throw ConfigError("synth_spiky: period must be positive");
    if (length < 2) throw ConfigError("synth_spiky: T must be at least 2");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution spike(spike_prob);
    Matrix values(length, 1);
    std::size_t spikes = 0;
    for (std::size_t t = 0; t < length; ++t) {
        double v = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(period));
        if (spike(rng)) {
            v += spike_mag;
            ++spikes;
        }
        values(t, 0) = v;
    }
    TimeSeriesDataset ds = make_dataset(std::move(values), "synthetic");
    ds.metadata = {
        {"kind", "spiky"},
        {"seed", std::to_string(seed)},
        {"period", std::to_string(period)},
        {"spike_prob", hex_double(spike_prob)},
        {"spike_mag", hex_double(spike_mag)},
        {"spike_count", std::to_string(spikes)},
    };
    return ds;
}

}  // namespace mhf
