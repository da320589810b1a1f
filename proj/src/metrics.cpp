#include "mhf/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mhf/errors.hpp"
#include "mhf/training.hpp"

namespace mhf {

namespace {

void check_pairs(std::span<const ForecastSet> forecasts, std::span<const Matrix> targets, const char* who) {
    if (forecasts.empty()) throw DataError(std::string(who) + ": no windows to evaluate");
    if (forecasts.size() != targets.size()) {
        throw ShapeError(std::string(who) + ": " + std::to_string(forecasts.size()) + " forecasts for " +
                         std::to_string(targets.size()) + " targets");
    }
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        if (forecasts[i].hypotheses.empty()) throw ShapeError(std::string(who) + ": empty hypothesis set");
        for (const Matrix& h : forecasts[i].hypotheses) {
            if (!h.same_shape(targets[i])) {
                throw ShapeError(std::string(who) + ": hypothesis " + h.shape_string() + " vs target " +
                                 targets[i].shape_string());
            }
        }
    }
}

double window_distortion(const ForecastSet& fs, const Matrix& target) {
    double best = 0.0;
    for (std::size_t k = 0; k < fs.hypotheses.size(); ++k) {
        double s = 0.0;
        const Matrix& h = fs.hypotheses[k];
        for (std::size_t i = 0; i < h.size(); ++i) {
            const double d = h[i] - target[i];
            s += d * d;
        }
        const double dist = std::sqrt(s);
        if (k == 0 || dist < best) best = dist;
    }
    return best;
}

std::vector<double> confidence_weights(const ForecastSet& fs) {
    double total = 0.0;
    for (double g : fs.confidences) total += g;
    std::vector<double> w(fs.confidences.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = total > 0.0 ? fs.confidences[k] / total : 1.0 / w.size();
    return w;
}

// Sum over t of CRPS at step t for the series picked out by `value(matrix, t)`.
template <typename Value>
double accumulated_crps(const ForecastSet& fs, const Matrix& target, bool weighted, Value value,
                        double* abs_target) {
    const std::size_t K = fs.hypotheses.size();
    const std::vector<double> w = weighted ? confidence_weights(fs) : std::vector<double>{};
    std::vector<double> samples(K);
    double total = 0.0, abs_sum = 0.0;
    for (std::size_t t = 0; t < target.rows(); ++t) {
        for (std::size_t k = 0; k < K; ++k) samples[k] = value(fs.hypotheses[k], t);
        const double y = value(target, t);
        total += weighted ? crps_weighted(samples, w, y) : crps_empirical(samples, y);
        abs_sum += std::abs(y);
    }
    *abs_target = abs_sum;
    return total;
}

}  // namespace

double distortion(std::span<const ForecastSet> forecasts, std::span<const Matrix> targets) {
    check_pairs(forecasts, targets, "distortion");
    double total = 0.0;
    for (std::size_t i = 0; i < forecasts.size(); ++i) total += window_distortion(forecasts[i], targets[i]);
    return total / static_cast<double>(forecasts.size());
}

double crps_empirical(std::span<const double> samples, double y) {
    if (samples.empty()) throw ContractError("crps_empirical: no samples");
    const double K = static_cast<double>(samples.size());
    double spread_to_target = 0.0, spread_between = 0.0;
    for (double s : samples) spread_to_target += std::abs(s - y);
    for (double a : samples)
        for (double b : samples) spread_between += std::abs(a - b);
    return spread_to_target / K - spread_between / (2.0 * K * K);
}

double crps_weighted(std::span<const double> samples, std::span<const double> weights, double y) {
    if (samples.empty() || samples.size() != weights.size()) {
        throw ContractError("crps_weighted: samples and weights must be non-empty and equally long");
    }
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw ContractError("crps_weighted: weights must have a positive sum");
    double to_target = 0.0, between = 0.0;
    for (std::size_t j = 0; j < samples.size(); ++j) {
        to_target += weights[j] / total * std::abs(samples[j] - y);
        for (std::size_t k = 0; k < samples.size(); ++k)
            between += weights[j] / total * weights[k] / total * std::abs(samples[j] - samples[k]);
    }
    return to_target - 0.5 * between;
}

double crps_sum(std::span<const ForecastSet> forecasts, std::span<const Matrix> targets, const CrpsOptions& opts) {
    check_pairs(forecasts, targets, "crps_sum");
    auto channel_sum = [](const Matrix& m, std::size_t t) {
        double s = 0.0;
        for (std::size_t d = 0; d < m.cols(); ++d) s += m(t, d);
        return s;
    };
    double total = 0.0;
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        double abs_target = 0.0;
        const double c = accumulated_crps(forecasts[i], targets[i], opts.weighted, channel_sum, &abs_target);
        total += opts.normalize ? c / (abs_target + 1e-12) : c;
    }
    return total / static_cast<double>(forecasts.size());
}

Matrix covariance_matrix(const Matrix& x) {
    const std::size_t T = x.rows(), D = x.cols();
    if (T < 2) throw DataError("covariance_matrix: needs at least 2 rows, got " + std::to_string(T));
    Matrix centered = x;
    for (std::size_t d = 0; d < D; ++d) {
        double mean = 0.0;
        for (std::size_t t = 0; t < T; ++t) mean += x(t, d);
        mean /= static_cast<double>(T);
        for (std::size_t t = 0; t < T; ++t) centered(t, d) -= mean;
    }
    Matrix cov = matmul_at(centered, centered);
    for (double& v : cov.values()) v /= static_cast<double>(T - 1);
    // Exact symmetry regardless of accumulation order.
    for (std::size_t i = 0; i < D; ++i)
        for (std::size_t j = i + 1; j < D; ++j) cov(j, i) = cov(i, j);
    return cov;
}

double linear_cka(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("linear_cka: row counts differ, " + a.shape_string() + " vs " + b.shape_string());
    }
    if (a.rows() < 2) throw DataError("linear_cka: needs at least 2 rows");
    auto center = [](const Matrix& m) {
        Matrix c = m;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < m.rows(); ++i) mean += m(i, j);
            mean /= static_cast<double>(m.rows());
            for (std::size_t i = 0; i < m.rows(); ++i) c(i, j) -= mean;
        }
        return c;
    };
    const Matrix ac = center(a), bc = center(b);
    const double norm_aa = frobenius_norm(matmul_at(ac, ac));
    const double norm_bb = frobenius_norm(matmul_at(bc, bc));
    if (!(norm_aa > 0.0) || !(norm_bb > 0.0)) throw DataError("linear_cka: input has zero variance");
    const double cross = frobenius_norm(matmul_at(ac, bc));
    return std::clamp(cross * cross / (norm_aa * norm_bb), 0.0, 1.0);
}

FlopBreakdown count_flops(const ModelConfig& cfg) {
    const std::uint64_t L = cfg.context_length, H = cfg.horizon, D = cfg.channels, K = cfg.hypotheses;
    const std::uint64_t HD = H * D, h = cfg.head_hidden;
    FlopBreakdown f;
    f.normalization = 4 * L * D;
    f.encoder = D * (2 * H * L + H);
    f.trajectory_heads = K * (4 * HD * h + 2 * h + 2 * HD);
    f.confidence_heads = K * (2 * HD * h + 4 * h + 2);
    f.denormalization = 2 * K * HD;
    return f;
}

double measure_latency(const ModelParams& params, const ModelConfig& cfg, std::span<const Matrix> batch,
                       std::size_t repeats) {
    if (repeats < 3) throw ContractError("measure_latency: repeats must be at least 3");
    if (batch.empty()) throw DataError("measure_latency: empty batch");
    using clock = std::chrono::steady_clock;
    volatile double sink = 0.0;
    sink = sink + forward_batch(batch, params, cfg).front().confidences.front();
    std::vector<double> times;
    times.reserve(repeats);
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto start = clock::now();
        const auto out = forward_batch(batch, params, cfg);
        const auto stop = clock::now();
        sink = sink + out.front().confidences.front();
        times.push_back(std::chrono::duration<double>(stop - start).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

EvalResult evaluate(const ModelParams& params, const ModelConfig& cfg, std::span<const WindowPair> windows,
                    const CrpsOptions& opts) {
    if (windows.empty()) throw DataError("evaluate: no windows");
    std::vector<Matrix> xs, ys;
    xs.reserve(windows.size());
    ys.reserve(windows.size());
    for (const WindowPair& w : windows) {
        xs.push_back(w.x);
        ys.push_back(w.y);
    }
    const std::vector<ForecastSet> forecasts = forward_batch(xs, params, cfg);

    EvalResult r;
    r.n_windows = windows.size();
    r.distortion = distortion(forecasts, ys);
    r.crps_sum = crps_sum(forecasts, ys, opts);
    CrpsOptions raw = opts;
    raw.normalize = false;
    r.crps_sum_raw = crps_sum(forecasts, ys, raw);

    r.utilization.assign(cfg.hypotheses, 0);
    r.per_channel_crps.assign(cfg.channels, 0.0);
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        r.per_window_distortion.push_back(window_distortion(forecasts[i], ys[i]));
        // Winners are picked in normalized space, as during training.
        std::vector<Matrix> hyp_norm;
        for (const Matrix& h : forecasts[i].hypotheses) hyp_norm.push_back(normalize(h, forecasts[i].stats));
        ++r.utilization[select_winner(per_head_loss(hyp_norm, normalize(ys[i], forecasts[i].stats)))];
        for (std::size_t d = 0; d < cfg.channels; ++d) {
            double abs_target = 0.0;
            const double c = accumulated_crps(
                forecasts[i], ys[i], opts.weighted, [d](const Matrix& m, std::size_t t) { return m(t, d); },
                &abs_target);
            r.per_channel_crps[d] += c / (abs_target + 1e-12);
        }
    }
    for (double& c : r.per_channel_crps) c /= static_cast<double>(forecasts.size());
    return r;
}

}  // namespace mhf
