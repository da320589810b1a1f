#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mhf/errors.hpp"
#include "mhf/metrics.hpp"
#include "mhf/model.hpp"
#include "mhf/report.hpp"
#include "mhf/training.hpp"

namespace mhf::cli {

/// Everything a command needs. Every field has a default; a config file
/// overrides defaults and command-line flags override the file.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;

    std::string data_path;
    bool data_header = false;
    std::string out_dir = "mhf-out";
    std::vector<std::uint64_t> seeds{3141, 3142, 3143, 42, 43};

    // eval / forecast
    std::string checkpoint_path;
    std::string context_path;
    std::string split = "test";
    bool crps_raw = false;
    bool crps_weighted = false;
    bool plot = false;
    std::size_t latency_repeats = 5;

    // ablate
    std::string axis = "norm-kind";
    std::vector<std::string> axis_values;  // empty: the axis default

    // synth
    std::string synth_kind = "bimodal";
    std::size_t synth_length = 5000;
    std::vector<double> scales{1.0, 1000.0};
    double spike_prob = 0.05;
    double spike_mag = 10.0;
};

/// key -> textual value. Keys use underscores (`trim_ratio`); flags use
/// dashes (`--trim-ratio`) and map onto the same keys.
using Settings = std::map<std::string, std::string>;

/// Every recognised settings key.
const std::vector<std::string>& setting_keys();

/// Applies settings in key order. Unknown keys and unparsable values throw
/// ConfigError naming the key and `source`.
void apply_settings(RunConfig& cfg, const Settings& settings, const std::string& source);

/// Reads a `key = value` config file (dashes in keys are accepted too).
Settings load_config_file(const std::string& path);

/// defaults, then `file`, then `flags`; validates the result.
RunConfig resolve_config(const Settings& file, const Settings& flags);

/// Exit status for a library error: 2 config/usage, 3 data/IO, 4 numeric.
int exit_code_for(Error::Kind kind);

// Commands. `log` receives human-readable progress and summaries.

struct TrainArtifacts {
    std::string checkpoint;
    std::string report;
    std::string epochs_csv;
};

TrainArtifacts cmd_train(const RunConfig& cfg, std::ostream& log);
ReportTree cmd_eval(const RunConfig& cfg, std::ostream& log);
/// Returns the path of the hypotheses CSV.
std::string cmd_forecast(const RunConfig& cfg, std::ostream& log);
/// Returns the path of the comparison table.
std::string cmd_ablate(const RunConfig& cfg, std::ostream& log);
/// Returns the path of the generated CSV.
std::string cmd_synth(const RunConfig& cfg, std::ostream& log);

/// Per-epoch CSV: epoch, losses, validation distortion, entropy and the
/// per-head winner counts.
void write_epoch_csv(std::ostream& out, const TrainReport& report);

/// A stacked line chart, one panel per channel: the context followed by
/// every hypothesis over the horizon.
std::string forecast_svg(const Matrix& context, const ForecastSet& forecast);

/// Full command-line entry point; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mhf::cli
