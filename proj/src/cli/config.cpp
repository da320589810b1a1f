#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <sstream>

#include "mhf/cli.hpp"
#include "mhf/errors.hpp"

namespace mhf::cli {

namespace {

std::size_t to_count(const std::string& key, const std::string& text) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (text.empty() || used != text.size() || text.find('-') != std::string::npos) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
    }
    return static_cast<std::size_t>(v);
}

double to_real(const std::string& key, const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (text.empty() || used != text.size() || !std::isfinite(v)) {
        throw ConfigError(key + ": expected a finite number, got '" + text + "'");
    }
    return v;
}

bool to_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::string> to_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"L", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.context_length = to_count(k, v); }},
        {"H", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.horizon = to_count(k, v); }},
        {"K", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.hypotheses = to_count(k, v); }},
        {"hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.head_hidden = to_count(k, v); }},
        {"init_scale", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.init_scale = to_real(k, v); }},
        {"norm",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             auto kind = parse_norm_kind(v);
             if (!kind) {
                 throw ConfigError(k + ": unknown normalization '" + v +
                                   "' (expected sin, instance, mean-scaler, identity, batch, layer, group)");
             }
             c.model.norm.kind = *kind;
         }},
        {"trim_ratio", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.norm.trim_ratio = to_real(k, v); }},
        {"var_epsilon", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.norm.var_epsilon = to_real(k, v); }},
        {"group_count", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.norm.group_count = to_count(k, v); }},
        {"epsilon", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.relax_epsilon = to_real(k, v); }},
        {"beta", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.beta = to_real(k, v); }},
        {"lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.learning_rate = to_real(k, v); }},
        {"epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.epochs = to_count(k, v); }},
        {"batches_per_epoch", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batches_per_epoch = to_count(k, v); }},
        {"batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = to_count(k, v); }},
        {"patience", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.patience = to_count(k, v); }},
        {"seed",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.seeds.clear();
             for (const auto& s : to_list(v)) c.seeds.push_back(to_count(k, s));
             if (c.seeds.empty()) throw ConfigError(k + ": at least one seed is required");
         }},
        {"data", [](RunConfig& c, const std::string&, const std::string& v) { c.data_path = v; }},
        {"header", [](RunConfig& c, const std::string& k, const std::string& v) { c.data_header = to_bool(k, v); }},
        {"out", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
        {"checkpoint", [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint_path = v; }},
        {"context", [](RunConfig& c, const std::string&, const std::string& v) { c.context_path = v; }},
        {"split",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v != "train" && v != "validation" && v != "test" && v != "all") {
                 throw ConfigError(k + ": expected train, validation, test or all, got '" + v + "'");
             }
             c.split = v;
         }},
        {"crps_raw", [](RunConfig& c, const std::string& k, const std::string& v) { c.crps_raw = to_bool(k, v); }},
        {"crps_weighted", [](RunConfig& c, const std::string& k, const std::string& v) { c.crps_weighted = to_bool(k, v); }},
        {"plot", [](RunConfig& c, const std::string& k, const std::string& v) { c.plot = to_bool(k, v); }},
        {"latency_repeats", [](RunConfig& c, const std::string& k, const std::string& v) { c.latency_repeats = to_count(k, v); }},
        {"axis", [](RunConfig& c, const std::string&, const std::string& v) { c.axis = v; }},
        {"values", [](RunConfig& c, const std::string&, const std::string& v) { c.axis_values = to_list(v); }},
        {"kind", [](RunConfig& c, const std::string&, const std::string& v) { c.synth_kind = v; }},
        {"T", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_length = to_count(k, v); }},
        {"scales",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.scales.clear();
             for (const auto& s : to_list(v)) c.scales.push_back(to_real(k, s));
         }},
        {"spike_prob", [](RunConfig& c, const std::string& k, const std::string& v) { c.spike_prob = to_real(k, v); }},
        {"spike_mag", [](RunConfig& c, const std::string& k, const std::string& v) { c.spike_mag = to_real(k, v); }},
    };
    return table;
}

std::string canonical_key(std::string key) {
    for (char& ch : key)
        if (ch == '-') ch = '_';
    if (key == "seeds") key = "seed";
    return key;
}

}  // namespace

const std::vector<std::string>& setting_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [k, _] : setters()) out.push_back(k);
        return out;
    }();
    return keys;
}

void apply_settings(RunConfig& cfg, const Settings& settings, const std::string& source) {
    for (const auto& [raw_key, value] : settings) {
        const std::string key = canonical_key(raw_key);
        auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError(source + ": unknown setting '" + raw_key + "'");
        try {
            it->second(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(source + ": " + e.what());
        }
    }
}

Settings load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    Settings out;
    for (auto& [k, v] : parse_key_values(in, path)) out[canonical_key(k)] = v;
    return out;
}

RunConfig resolve_config(const Settings& file, const Settings& flags) {
    RunConfig cfg;
    apply_settings(cfg, file, "config file");
    apply_settings(cfg, flags, "command line");
    // D is only known once a dataset is loaded; check everything else now.
    ModelConfig probe = cfg.model;
    probe.channels = probe.norm.group_count == 0 ? 1 : probe.norm.group_count;
    probe.validate();
    cfg.train.validate();
    if (cfg.latency_repeats < 3) throw ConfigError("latency_repeats must be at least 3");
    return cfg;
}

int exit_code_for(Error::Kind kind) {
    switch (kind) {
        case Error::Kind::config:
        case Error::Kind::shape:
        case Error::Kind::contract: return 2;
        case Error::Kind::data:
        case Error::Kind::parse:
        case Error::Kind::io: return 3;
        case Error::Kind::numeric: return 4;
    }
    return 1;
}

}  // namespace mhf::cli
