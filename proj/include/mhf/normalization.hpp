#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mhf/matrix.hpp"

namespace mhf {

enum class NormKind {
    sin,          // trimmed per-instance, per-channel moments
    instance,     // untrimmed per-instance, per-channel moments
    mean_scaler,  // divide by mean |x| per channel, no centering
    identity,
    batch_stat,   // per-channel moments pooled over the batch
    layer_stat,   // per-instance moments pooled over all channels
    group_stat,   // per-instance moments pooled within channel groups
};

std::string_view norm_kind_name(NormKind kind);
/// Accepts the CLI spellings: sin, instance, mean-scaler, identity, batch, layer, group
/// (and the long forms batch-stat, layer-stat, group-stat).
std::optional<NormKind> parse_norm_kind(std::string_view text);
/// True for kinds whose statistics depend on other instances in the batch.
bool is_batch_kind(NormKind kind);

struct NormConfig {
    NormKind kind = NormKind::sin;
    double trim_ratio = 0.1;
    double var_epsilon = 1e-5;
    std::size_t group_count = 1;

    /// Throws ConfigError on an out-of-range field. `channels` enables the
    /// group_count divisibility check.
    void validate(std::optional<std::size_t> channels = std::nullopt) const;
};

/// Per-channel location and scale captured from one context window.
struct NormStats {
    std::vector<double> mu;
    std::vector<double> sigma;

    std::size_t channels() const noexcept { return mu.size(); }
    friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Number of order statistics dropped from each tail: floor(p * L).
std::size_t trim_count(std::size_t length, double trim_ratio);

/// Trimmed mean and population variance of one channel. Sorting uses a
/// stable sort over a copy; the input order is untouched.
struct TrimmedMoments {
    double mean = 0.0;
    double variance = 0.0;
};
TrimmedMoments trimmed_moments(std::span<const double> values, std::size_t trim);

/// Per-instance statistics of an L x D window for the kinds sin, instance,
/// mean-scaler and identity. Batch-pooled kinds fall back to their
/// single-instance reduction (a batch of one).
NormStats robust_stats(const Matrix& window, const NormConfig& cfg);

/// Statistics for each instance of a batch, for every kind. Batch-pooled
/// kinds share one set of statistics across instances.
std::vector<NormStats> ablation_stats(std::span<const Matrix> batch, const NormConfig& cfg);

/// Channel-wise (x - mu) / sigma on any number of rows.
Matrix normalize(const Matrix& x, const NormStats& stats);
/// Exact inverse of normalize: y * sigma + mu.
Matrix denormalize(const Matrix& y, const NormStats& stats);

}  // namespace mhf
