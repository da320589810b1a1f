#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mhf/data.hpp"
#include "mhf/matrix.hpp"
#include "mhf/model.hpp"

namespace mhf {

/// Mean over windows of the Euclidean distance from the target to its
/// nearest hypothesis (original scale).
double distortion(std::span<const ForecastSet> forecasts, std::span<const Matrix> targets);

/// Energy-form sample estimator of CRPS:
/// (1/K) sum |s_k - y| - (1/(2K^2)) sum_j sum_k |s_j - s_k|.
double crps_empirical(std::span<const double> samples, double y);

/// Same estimator with per-sample weights (normalized to sum to one).
double crps_weighted(std::span<const double> samples, std::span<const double> weights, double y);

struct CrpsOptions {
    bool normalize = true;   // divide by sum_t |y_t| + 1e-12
    bool weighted = false;   // weight hypotheses by their confidences
};

/// CRPS of the channel-summed series accumulated over the horizon, averaged
/// over windows.
double crps_sum(std::span<const ForecastSet> forecasts, std::span<const Matrix> targets,
                const CrpsOptions& opts = {});

/// Sample covariance (1/(T-1)) of the columns of a T x D matrix.
Matrix covariance_matrix(const Matrix& x);

/// Linear CKA after column centering: ||A^T B||_F^2 / (||A^T A||_F ||B^T B||_F).
double linear_cka(const Matrix& a, const Matrix& b);

/// Analytic per-forward-pass operation count for one window, one
/// multiply-add = 2 FLOPs. Per term:
///   normalization    4 L D                  (statistics 2 L D, apply 2 L D)
///   encoder          D (2 H L + H)
///   trajectory head  4 HD h + 2 h + 2 HD    (two layers with biases, ReLU, residual add)
///   confidence head  2 HD h + 4 h + 2       (two layers with biases, ReLU, sigmoid)
///   denormalization  2 K HD
/// with HD = H * D and h = head_hidden; head terms are summed over K heads.
struct FlopBreakdown {
    std::uint64_t normalization = 0;
    std::uint64_t encoder = 0;
    std::uint64_t trajectory_heads = 0;
    std::uint64_t confidence_heads = 0;
    std::uint64_t denormalization = 0;

    std::uint64_t total() const noexcept {
        return normalization + encoder + trajectory_heads + confidence_heads + denormalization;
    }
};

FlopBreakdown count_flops(const ModelConfig& cfg);

/// Median wall-clock seconds of `repeats` full-batch forward passes after one
/// warm-up pass. Only the forward call is timed. Requires repeats >= 3.
double measure_latency(const ModelParams& params, const ModelConfig& cfg, std::span<const Matrix> batch,
                       std::size_t repeats);

struct EvalResult {
    double distortion = 0.0;
    double crps_sum = 0.0;      // per CrpsOptions
    double crps_sum_raw = 0.0;  // unnormalized, same weighting
    std::vector<double> per_window_distortion;
    std::vector<double> per_channel_crps;  // normalized per channel
    std::vector<std::uint64_t> utilization;  // winner counts per head
    std::size_t n_windows = 0;
};

/// Forecasts every window (as one batch) and scores it.
EvalResult evaluate(const ModelParams& params, const ModelConfig& cfg, std::span<const WindowPair> windows,
                    const CrpsOptions& opts = {});

}  // namespace mhf
