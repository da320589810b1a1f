#include <exception>
#include <filesystem>
#include <ostream>

#include "CLI11.hpp"
#include "mhf/cli.hpp"

namespace mhf::cli {

namespace {

struct FlagSpec {
    const char* key;
    const char* help;
    const char* commands;  // letters: t(rain) e(val) f(orecast) a(blate) s(ynth)
};

constexpr FlagSpec value_flags[] = {
    {"data", "dataset CSV (rows are time steps)", "tea"},
    {"out", "output directory (synth: directory or .csv path)", "tefas"},
    {"checkpoint", "model checkpoint", "ef"},
    {"context", "context CSV with L rows", "f"},
    {"L", "context length", "tas"},
    {"H", "horizon", "tas"},
    {"K", "number of hypotheses", "ta"},
    {"hidden", "hidden width of every head", "ta"},
    {"init-scale", "trajectory output layer scale at init", "ta"},
    {"norm", "sin, instance, mean-scaler, identity, batch, layer, group", "ta"},
    {"trim-ratio", "trimmed fraction per tail", "ta"},
    {"var-epsilon", "variance floor", "ta"},
    {"group-count", "channel groups for group normalization", "ta"},
    {"epsilon", "relaxation of the winner-takes-all loss", "ta"},
    {"beta", "weight of the confidence loss", "ta"},
    {"lr", "Adam learning rate", "ta"},
    {"epochs", "maximum epochs", "ta"},
    {"batches-per-epoch", "batches per epoch", "ta"},
    {"batch-size", "windows per batch", "ta"},
    {"patience", "early-stopping patience in epochs", "ta"},
    {"split", "evaluation split: train, validation, test, all", "e"},
    {"latency-repeats", "timed forward passes", "e"},
    {"axis", "norm-kind, K-sweep or epsilon-sweep", "a"},
    {"values", "comma-separated axis values", "a"},
    {"kind", "bimodal, scale-imbalance or spiky", "s"},
    {"T", "series length", "s"},
    {"scales", "comma-separated channel scales", "s"},
    {"spike-prob", "spike probability", "s"},
    {"spike-mag", "spike height", "s"},
};

constexpr FlagSpec bool_flags[] = {
    {"header", "CSV inputs have a header row", "tefa"},
    {"plot", "also write an SVG chart", "f"},
    {"crps-raw", "report unnormalized CRPS-Sum", "e"},
    {"crps-weighted", "weight hypotheses by confidence in CRPS", "e"},
};

std::string key_of(const char* flag) {
    std::string k(flag);
    for (char& ch : k)
        if (ch == '-') ch = '_';
    return k;
}

struct Subcommand {
    CLI::App* app = nullptr;
    char letter = 0;
    std::map<std::string, std::string> values;
    std::map<std::string, bool> bools;
    std::vector<std::string> seeds;
    std::string config_path;
};

void add_flags(Subcommand& sc) {
    sc.app->add_option("--config", sc.config_path, "key = value config file");
    sc.app->add_option("--seed", sc.seeds, "seed; repeat for multi-seed runs");
    for (const FlagSpec& f : value_flags) {
        if (std::string(f.commands).find(sc.letter) == std::string::npos) continue;
        sc.app->add_option(std::string("--") + f.key, sc.values[key_of(f.key)], f.help);
    }
    for (const FlagSpec& f : bool_flags) {
        if (std::string(f.commands).find(sc.letter) == std::string::npos) continue;
        sc.app->add_flag(std::string("--") + f.key, sc.bools[key_of(f.key)], f.help);
    }
}

Settings flag_settings(const Subcommand& sc) {
    Settings s;
    for (const auto& [key, value] : sc.values) {
        std::string flag = key;
        for (char& ch : flag)
            if (ch == '_') ch = '-';
        if (sc.app->count("--" + flag) > 0) s[key] = value;
    }
    for (const auto& [key, value] : sc.bools)
        if (value) s[key] = "true";
    if (!sc.seeds.empty()) {
        std::string joined;
        for (std::size_t i = 0; i < sc.seeds.size(); ++i) joined += (i ? "," : "") + sc.seeds[i];
        s["seed"] = joined;
    }
    return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app("Multi-hypothesis forecasting with robust instance normalization", "mhf");
    app.require_subcommand(1);

    const std::pair<const char*, const char*> names[] = {
        {"train", "train a model and write checkpoint, report and per-epoch CSV"},
        {"eval", "score a checkpoint on a dataset split"},
        {"forecast", "forecast every hypothesis from one context window"},
        {"ablate", "train and compare models along one axis over several seeds"},
        {"synth", "generate a synthetic dataset with its metadata sidecar"},
    };
    std::vector<Subcommand> subs(std::size(names));
    for (std::size_t i = 0; i < subs.size(); ++i) {
        subs[i].app = app.add_subcommand(names[i].first, names[i].second);
        subs[i].letter = names[i].first[0];
        add_flags(subs[i]);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        for (const Subcommand& sc : subs) {
            if (!sc.app->parsed()) continue;
            const Settings file = sc.config_path.empty() ? Settings{} : load_config_file(sc.config_path);
            const RunConfig cfg = resolve_config(file, flag_settings(sc));
            const std::string name = sc.app->get_name();
            if (name == "train") cmd_train(cfg, out);
            if (name == "eval") cmd_eval(cfg, out);
            if (name == "forecast") cmd_forecast(cfg, out);
            if (name == "ablate") cmd_ablate(cfg, out);
            if (name == "synth") cmd_synth(cfg, out);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace mhf::cli
