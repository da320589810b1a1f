#include "mhf/normalization.hpp"

#include <algorithm>
#include <cmath>

#include "mhf/errors.hpp"

namespace mhf {

std::string_view norm_kind_name(NormKind kind) {
    switch (kind) {
        case NormKind::sin: return "sin";
        case NormKind::instance: return "instance";
        case NormKind::mean_scaler: return "mean-scaler";
        case NormKind::identity: return "identity";
        case NormKind::batch_stat: return "batch";
        case NormKind::layer_stat: return "layer";
        case NormKind::group_stat: return "group";
    }
    return "unknown";
}

std::optional<NormKind> parse_norm_kind(std::string_view text) {
    if (text == "sin") return NormKind::sin;
    if (text == "instance") return NormKind::instance;
    if (text == "mean-scaler") return NormKind::mean_scaler;
    if (text == "identity") return NormKind::identity;
    if (text == "batch" || text == "batch-stat") return NormKind::batch_stat;
    if (text == "layer" || text == "layer-stat") return NormKind::layer_stat;
    if (text == "group" || text == "group-stat") return NormKind::group_stat;
    return std::nullopt;
}

bool is_batch_kind(NormKind kind) { return kind == NormKind::batch_stat; }

void NormConfig::validate(std::optional<std::size_t> channels) const {
    if (!(trim_ratio >= 0.0 && trim_ratio < 0.5)) {
        throw ConfigError("trim_ratio must lie in [0, 0.5), got " + std::to_string(trim_ratio));
    }
    if (!(var_epsilon >= 0.0) || !std::isfinite(var_epsilon)) {
        throw ConfigError("var_epsilon must be non-negative, got " + std::to_string(var_epsilon));
    }
    if (kind == NormKind::group_stat) {
        if (group_count == 0) throw ConfigError("group_count must be positive");
        if (channels && *channels % group_count != 0) {
            throw ConfigError("group_count " + std::to_string(group_count) +
                              " does not divide channel count " + std::to_string(*channels));
        }
    }
}

std::size_t trim_count(std::size_t length, double trim_ratio) {
    return static_cast<std::size_t>(std::floor(trim_ratio * static_cast<double>(length)));
}

TrimmedMoments trimmed_moments(std::span<const double> values, std::size_t trim) {
    if (values.size() < 2 * trim + 1) throw ConfigError("trim ratio leaves no samples");
    std::vector<double> sorted(values.begin(), values.end());
    std::stable_sort(sorted.begin(), sorted.end());
    const std::size_t first = trim;
    const std::size_t last = sorted.size() - trim;
    const double n = static_cast<double>(last - first);

    double sum = 0.0;
    for (std::size_t i = first; i < last; ++i) sum += sorted[i];
    const double mean = sum / n;
    double ss = 0.0;
    for (std::size_t i = first; i < last; ++i) {
        const double d = sorted[i] - mean;
        ss += d * d;
    }
    return {mean, ss / n};
}

namespace {

void require_window(const Matrix& window) {
    if (window.rows() == 0 || window.cols() == 0) {
        throw ShapeError("normalization window must be non-empty, got " + window.shape_string());
    }
}

// Untrimmed moments over a set of columns of several windows.
TrimmedMoments pooled_moments(std::span<const Matrix> batch, std::size_t col_begin,
                              std::size_t col_end) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const Matrix& w : batch)
        for (std::size_t r = 0; r < w.rows(); ++r)
            for (std::size_t c = col_begin; c < col_end; ++c) {
                sum += w(r, c);
                ++n;
            }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const Matrix& w : batch)
        for (std::size_t r = 0; r < w.rows(); ++r)
            for (std::size_t c = col_begin; c < col_end; ++c) {
                const double d = w(r, c) - mean;
                ss += d * d;
            }
    return {mean, ss / static_cast<double>(n)};
}

NormStats grouped_stats(std::span<const Matrix> batch, std::size_t groups, double eps) {
    const std::size_t channels = batch.front().cols();
    const std::size_t width = channels / groups;
    NormStats stats{std::vector<double>(channels), std::vector<double>(channels)};
    for (std::size_t g = 0; g < groups; ++g) {
        const TrimmedMoments m = pooled_moments(batch, g * width, (g + 1) * width);
        const double sigma = std::sqrt(m.variance + eps);
        for (std::size_t c = g * width; c < (g + 1) * width; ++c) {
            stats.mu[c] = m.mean;
            stats.sigma[c] = sigma;
        }
    }
    return stats;
}

}  // namespace

NormStats robust_stats(const Matrix& window, const NormConfig& cfg) {
    require_window(window);
    cfg.validate(window.cols());
    const std::size_t length = window.rows();
    const std::size_t channels = window.cols();
    NormStats stats{std::vector<double>(channels), std::vector<double>(channels)};

    switch (cfg.kind) {
        case NormKind::sin:
        case NormKind::instance: {
            const std::size_t trim = cfg.kind == NormKind::sin ? trim_count(length, cfg.trim_ratio) : 0;
            for (std::size_t d = 0; d < channels; ++d) {
                const std::vector<double> col = window.column_values(d);
                const TrimmedMoments m = trimmed_moments(col, trim);
                stats.mu[d] = m.mean;
                stats.sigma[d] = std::sqrt(m.variance + cfg.var_epsilon);
            }
            break;
        }
        case NormKind::mean_scaler:
            for (std::size_t d = 0; d < channels; ++d) {
                double s = 0.0;
                for (std::size_t t = 0; t < length; ++t) s += std::abs(window(t, d));
                stats.mu[d] = 0.0;
                stats.sigma[d] = s / static_cast<double>(length) + cfg.var_epsilon;
            }
            break;
        case NormKind::identity:
            std::fill(stats.sigma.begin(), stats.sigma.end(), 1.0);
            break;
        case NormKind::batch_stat:
        case NormKind::layer_stat:
        case NormKind::group_stat: {
            const Matrix one[] = {window};
            return ablation_stats(one, cfg).front();
        }
    }
    return stats;
}

std::vector<NormStats> ablation_stats(std::span<const Matrix> batch, const NormConfig& cfg) {
    if (batch.empty()) throw DataError("ablation_stats: empty batch");
    const std::size_t channels = batch.front().cols();
    const std::size_t length = batch.front().rows();
    for (const Matrix& w : batch) {
        require_window(w);
        if (w.cols() != channels || w.rows() != length) {
            throw ShapeError("ablation_stats: batch mixes window shapes " +
                             batch.front().shape_string() + " and " + w.shape_string());
        }
    }
    cfg.validate(channels);

    std::vector<NormStats> out;
    out.reserve(batch.size());
    switch (cfg.kind) {
        case NormKind::batch_stat:
            out.assign(batch.size(), grouped_stats(batch, channels, cfg.var_epsilon));
            break;
        case NormKind::layer_stat:
            for (const Matrix& w : batch) out.push_back(grouped_stats({&w, 1}, 1, cfg.var_epsilon));
            break;
        case NormKind::group_stat:
            for (const Matrix& w : batch)
                out.push_back(grouped_stats({&w, 1}, cfg.group_count, cfg.var_epsilon));
            break;
        default:
            for (const Matrix& w : batch) out.push_back(robust_stats(w, cfg));
            break;
    }
    return out;
}

namespace {

void check_stats(const Matrix& x, const NormStats& stats, const char* who) {
    if (stats.mu.size() != x.cols() || stats.sigma.size() != x.cols()) {
        throw ShapeError(std::string(who) + ": statistics for " + std::to_string(stats.mu.size()) +
                         " channels applied to " + x.shape_string());
    }
}

}  // namespace

Matrix normalize(const Matrix& x, const NormStats& stats) {
    check_stats(x, stats, "normalize");
    for (std::size_t d = 0; d < stats.sigma.size(); ++d) {
        if (!(stats.sigma[d] > 0.0)) {
            throw NumericError("normalize: zero scale on channel " + std::to_string(d) +
                               " (constant window with var_epsilon = 0)");
        }
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t t = 0; t < x.rows(); ++t)
        for (std::size_t d = 0; d < x.cols(); ++d) out(t, d) = (x(t, d) - stats.mu[d]) / stats.sigma[d];
    return out;
}

Matrix denormalize(const Matrix& y, const NormStats& stats) {
    check_stats(y, stats, "denormalize");
    Matrix out(y.rows(), y.cols());
    for (std::size_t t = 0; t < y.rows(); ++t)
        for (std::size_t d = 0; d < y.cols(); ++d) out(t, d) = y(t, d) * stats.sigma[d] + stats.mu[d];
    return out;
}

}  // namespace mhf
