#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mhf/matrix.hpp"

namespace mhf {

enum class Split { train, validation, test, all };

/// Text key=value pairs in insertion-independent (sorted) order.
using Metadata = std::map<std::string, std::string>;

struct TimeSeriesDataset {
    Matrix values;  // T x D, rows are time steps
    std::string freq_label;
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    Metadata metadata;

    std::size_t length() const noexcept { return values.rows(); }
    std::size_t channels() const noexcept { return values.cols(); }
    /// Half-open row range [begin, end) covered by a split.
    std::pair<std::size_t, std::size_t> segment(Split split) const;
    /// Throws DataError unless 0 < train_end < val_end <= T and values are finite.
    void validate() const;
};

/// Chronological 70/10/20 boundaries for a series of length T.
std::pair<std::size_t, std::size_t> default_split(std::size_t length);

TimeSeriesDataset make_dataset(Matrix values, std::string freq_label = {});

struct WindowPair {
    Matrix x;  // L x D context
    Matrix y;  // H x D continuation, starting right after x
    std::size_t origin = 0;
};

WindowPair extract_window(const TimeSeriesDataset& ds, std::size_t origin, std::size_t context,
                          std::size_t horizon);

/// Evaluation mode: non-overlapping windows tiling the split from its start.
/// Throws DataError when the split is shorter than L + H.
std::vector<WindowPair> eval_windows(const TimeSeriesDataset& ds, std::size_t context,
                                     std::size_t horizon, Split split);

/// Training mode: uniformly random window origins inside the split, drawn
/// with replacement from a seeded generator.
class WindowSampler {
public:
    WindowSampler(const TimeSeriesDataset& ds, std::size_t context, std::size_t horizon, Split split,
                  std::uint64_t seed);

    std::size_t next_origin();
    WindowPair next();

private:
    const TimeSeriesDataset* ds_;
    std::size_t context_;
    std::size_t horizon_;
    std::mt19937_64 rng_;
    std::uniform_int_distribution<std::size_t> origin_;
};

// CSV: rows are time steps, columns channels, comma separated.

TimeSeriesDataset parse_csv(std::istream& in, bool has_header, const std::string& source = "<stream>");
/// Loads a CSV. If `<path>.meta` exists, split boundaries and metadata are
/// taken from it; otherwise the default chronological split applies.
TimeSeriesDataset load_csv(const std::string& path, bool has_header);
void write_csv(std::ostream& out, const Matrix& values);
void save_csv(const std::string& path, const Matrix& values);

std::string sidecar_path(const std::string& csv_path);
void write_metadata(std::ostream& out, const Metadata& meta);
Metadata read_metadata(std::istream& in);

/// Writes the CSV plus its metadata sidecar (which records the split).
void save_dataset(const std::string& csv_path, const TimeSeriesDataset& ds);

// Synthetic generators

struct BimodalOptions {
    std::size_t context = 16;  // ramp length per segment
    std::size_t horizon = 16;  // sine length per segment
    double amplitude = 1.0;
};

/// Repeating segments: a fixed ramp over `context` steps followed by
/// +-A*sin over `horizon` steps, sign drawn fairly per segment, plus
/// N(0, (0.05 A)^2) noise everywhere. D = 1. Split boundaries are aligned
/// to segment starts so evaluation tiles line up with segments.
TimeSeriesDataset synth_bimodal(std::size_t length, std::uint64_t seed, const BimodalOptions& opts = {});

/// Independent AR(1) channels (coefficient 0.9, unit innovations, stationary
/// start), channel d multiplied by scales[d].
TimeSeriesDataset synth_scale_imbalance(std::size_t length, const std::vector<double>& scales,
                                        std::uint64_t seed);

/// sin(2 pi t / period) plus Bernoulli(spike_prob) spikes of height spike_mag.
TimeSeriesDataset synth_spiky(std::size_t length, double spike_prob, double spike_mag, std::uint64_t seed,
                              std::size_t period = 24);

}  // namespace mhf
