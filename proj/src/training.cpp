#include "mhf/training.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mhf/errors.hpp"
#include "mhf/metrics.hpp"

namespace mhf {

void TrainConfig::validate() const {
    if (!(relax_epsilon >= 0.0 && relax_epsilon < 1.0)) {
        throw ConfigError("epsilon must lie in [0, 1), got " + std::to_string(relax_epsilon));
    }
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be non-negative");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (batches_per_epoch == 0) throw ConfigError("batches_per_epoch must be at least 1");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (patience == 0) throw ConfigError("patience must be at least 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

std::vector<double> per_head_loss(std::span<const Matrix> hypotheses, const Matrix& target) {
    std::vector<double> out;
    out.reserve(hypotheses.size());
    for (const Matrix& h : hypotheses) {
        if (!h.same_shape(target)) {
            throw ShapeError("per_head_loss: hypothesis " + h.shape_string() + " vs target " +
                             target.shape_string());
        }
        double s = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) {
            const double d = h[i] - target[i];
            s += d * d;
        }
        out.push_back(s / static_cast<double>(target.size()));
    }
    return out;
}

std::size_t select_winner(std::span<const double> losses) {
    if (losses.empty()) throw ContractError("select_winner: no hypotheses");
    std::size_t best = 0;
    for (std::size_t k = 0; k < losses.size(); ++k) {
        if (std::isnan(losses[k])) throw NumericError("select_winner: loss of head " + std::to_string(k) + " is NaN");
        if (losses[k] < losses[best]) best = k;
    }
    return best;
}

double rwta_loss(std::span<const double> losses, double relax_epsilon) {
    const std::size_t K = losses.size();
    if (K == 0) throw ContractError("rwta_loss: no hypotheses");
    if (K == 1 && relax_epsilon > 0.0) throw ConfigError("rwta_loss: epsilon > 0 needs at least 2 hypotheses");
    const std::size_t win = select_winner(losses);
    if (K == 1) return losses[0];
    double others = 0.0;
    for (std::size_t k = 0; k < K; ++k)
        if (k != win) others += losses[k];
    return (1.0 - relax_epsilon) * losses[win] + relax_epsilon / static_cast<double>(K - 1) * others;
}

double score_loss(std::span<const double> confidences, std::size_t winner) {
    const std::size_t K = confidences.size();
    if (winner >= K) throw ContractError("score_loss: winner index out of range");
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double g = std::clamp(confidences[k], log_clamp, 1.0 - log_clamp);
        s += k == winner ? std::log(g) : std::log(1.0 - g);
    }
    return -s / static_cast<double>(K);
}

double utilization_entropy(std::span<const std::uint64_t> histogram) {
    std::uint64_t total = 0;
    for (auto c : histogram) total += c;
    if (total == 0) throw DataError("utilization_entropy: histogram is empty");
    double h = 0.0;
    for (auto c : histogram) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log(p);
    }
    return std::max(h, 0.0);
}

LossGraph build_loss_graph(Tape& tape, const ParamNodes& nodes, std::span<const WindowPair> batch,
                           const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
    const std::size_t B = batch.size();
    const std::size_t K = model_cfg.hypotheses;
    const std::size_t HD = model_cfg.latent_size();
    const double eps = train_cfg.relax_epsilon;
    if (B == 0) throw DataError("build_loss_graph: empty batch");
    if (K == 1 && eps > 0.0) throw ConfigError("epsilon > 0 needs at least 2 hypotheses (K = 1)");

    std::vector<Matrix> xs;
    xs.reserve(B);
    for (const WindowPair& w : batch) {
        if (w.y.rows() != model_cfg.horizon || w.y.cols() != model_cfg.channels) {
            throw ShapeError("build_loss_graph: target " + w.y.shape_string() + " does not match horizon " +
                             std::to_string(model_cfg.horizon) + " x " + std::to_string(model_cfg.channels));
        }
        xs.push_back(w.x);
    }
    const std::vector<NormStats> stats = ablation_stats(xs, model_cfg.norm);
    std::vector<Matrix> x_norm;
    x_norm.reserve(B);
    Matrix targets(B, HD);
    for (std::size_t b = 0; b < B; ++b) {
        x_norm.push_back(normalize(xs[b], stats[b]));
        const Matrix y = normalize(batch[b].y, stats[b]);
        std::copy(y.values().begin(), y.values().end(), targets.row_span(b).begin());
    }

    LossGraph g;
    g.outputs = build_forward_graph(tape, nodes, x_norm, model_cfg);
    const NodeId target = tape.constant(std::move(targets));
    const NodeId row_mean = tape.constant(Matrix(HD, 1, 1.0 / static_cast<double>(HD)));

    g.head_losses = Matrix(B, K);
    std::vector<NodeId> row_losses;
    for (std::size_t k = 0; k < K; ++k) {
        const NodeId sq = tape.square(tape.sub(g.outputs.trajectories[k], target));
        row_losses.push_back(tape.matmul(sq, row_mean));
        const Matrix& sqv = tape.value(sq);
        for (std::size_t b = 0; b < B; ++b) {
            double s = 0.0;
            for (double v : sqv.row_span(b)) s += v;
            g.head_losses(b, k) = s / static_cast<double>(HD);
        }
    }

    g.winners.resize(B);
    for (std::size_t b = 0; b < B; ++b) g.winners[b] = select_winner(g.head_losses.row_span(b));

    const double loser_weight = K > 1 ? eps / static_cast<double>(K - 1) : 0.0;
    const NodeId ones = tape.constant(Matrix(B, 1, 1.0));
    NodeId rwta_sum{};
    NodeId score_sum{};
    for (std::size_t k = 0; k < K; ++k) {
        Matrix weight(B, 1), is_winner(B, 1), is_loser(B, 1);
        for (std::size_t b = 0; b < B; ++b) {
            const bool win = g.winners[b] == k;
            weight(b, 0) = K == 1 ? 1.0 : (win ? 1.0 - eps : loser_weight);
            is_winner(b, 0) = win ? 1.0 : 0.0;
            is_loser(b, 0) = win ? 0.0 : 1.0;
        }
        const NodeId weighted = tape.sum_all(tape.mul(row_losses[k], tape.constant(std::move(weight))));
        rwta_sum = k == 0 ? weighted : tape.add(rwta_sum, weighted);

        const NodeId gamma = g.outputs.confidences[k];
        const NodeId log_pos = tape.mul(tape.log(gamma), tape.constant(std::move(is_winner)));
        const NodeId log_neg = tape.mul(tape.log(tape.sub(ones, gamma)), tape.constant(std::move(is_loser)));
        const NodeId term = tape.sum_all(tape.add(log_pos, log_neg));
        score_sum = k == 0 ? term : tape.add(score_sum, term);
    }

    const double inv_b = 1.0 / static_cast<double>(B);
    const NodeId rwta_mean = tape.scale(rwta_sum, inv_b);
    const NodeId score_mean = tape.scale(score_sum, -inv_b / static_cast<double>(K));
    g.root = tape.add(rwta_mean, tape.scale(score_mean, train_cfg.beta));
    g.rwta = tape.value(rwta_mean)(0, 0);
    g.score = tape.value(score_mean)(0, 0);
    return g;
}

NodeId total_loss(Tape& tape, const ParamNodes& nodes, const Matrix& x_raw, const Matrix& y_raw,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
    const WindowPair w{x_raw, y_raw, 0};
    return build_loss_graph(tape, nodes, {&w, 1}, model_cfg, train_cfg).root;
}

AdamState AdamState::zeros_like(const ModelParams& params) {
    AdamState s;
    for (const Matrix* m : params.tensors()) {
        s.first.emplace_back(m->rows(), m->cols());
        s.second.emplace_back(m->rows(), m->cols());
    }
    return s;
}

void adam_step(ModelParams& params, std::span<const Matrix> grads, AdamState& state, double learning_rate,
               double beta1, double beta2, double eps) {
    auto tensors = params.tensors();
    if (grads.size() != tensors.size() || state.first.size() != tensors.size() ||
        state.second.size() != tensors.size()) {
        throw ShapeError("adam_step: gradient/state count does not match parameters");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        Matrix& p = *tensors[i];
        const Matrix& g = grads[i];
        Matrix& m = state.first[i];
        Matrix& v = state.second[i];
        if (!g.same_shape(p) || !m.same_shape(p) || !v.same_shape(p)) {
            throw ShapeError("adam_step: shape mismatch at tensor " + std::to_string(i));
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            p[j] -= learning_rate * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

std::uint64_t TrainReport::total_selections() const {
    std::uint64_t n = 0;
    for (const EpochStats& e : epochs)
        for (auto c : e.utilization) n += c;
    return n;
}

FitResult fit(const TimeSeriesDataset& dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
              Validator validator, EpochCallback on_epoch) {
    model_cfg.validate();
    train_cfg.validate();
    if (dataset.length() == 0) throw DataError("fit: empty dataset");
    dataset.validate();
    if (dataset.channels() != model_cfg.channels) {
        throw ConfigError("fit: dataset has D=" + std::to_string(dataset.channels()) + " channels, model expects D=" +
                          std::to_string(model_cfg.channels));
    }
    if (model_cfg.hypotheses == 1 && train_cfg.relax_epsilon > 0.0) {
        throw ConfigError("epsilon > 0 needs at least 2 hypotheses (K = 1)");
    }
    const std::size_t L = model_cfg.context_length, H = model_cfg.horizon, K = model_cfg.hypotheses;

    WindowSampler sampler(dataset, L, H, Split::train, train_cfg.seed);
    if (!validator) {
        auto windows = std::make_shared<std::vector<WindowPair>>(eval_windows(dataset, L, H, Split::validation));
        validator = [windows, model_cfg](const ModelParams& p) {
            return evaluate(p, model_cfg, *windows).distortion;
        };
    }

    FitResult result{init_params(model_cfg), {}};
    ModelParams params = result.params;
    AdamState adam = AdamState::zeros_like(params);
    std::size_t since_best = 0;
    bool have_best = false;

    std::vector<WindowPair> batch(train_cfg.batch_size);
    for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        EpochStats stats;
        stats.epoch = epoch;
        stats.utilization.assign(K, 0);
        double rwta_total = 0.0, score_total = 0.0;

        for (std::size_t step = 0; step < train_cfg.batches_per_epoch; ++step) {
            for (WindowPair& w : batch) w = sampler.next();
            Tape tape;
            const ParamNodes nodes = bind_params(tape, params);
            const LossGraph graph = build_loss_graph(tape, nodes, batch, model_cfg, train_cfg);
            const double loss = tape.value(graph.root)(0, 0);
            if (!std::isfinite(loss)) {
                throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(step + 1));
            }
            const std::vector<Matrix> grads = gather_grads(backward(tape, graph.root), nodes);
            adam_step(params, grads, adam, train_cfg.learning_rate, train_cfg.adam_beta1, train_cfg.adam_beta2,
                      train_cfg.adam_eps);
            for (std::size_t w : graph.winners) ++stats.utilization[w];
            rwta_total += graph.rwta;
            score_total += graph.score;
        }

        const double batches = static_cast<double>(train_cfg.batches_per_epoch);
        stats.rwta_loss = rwta_total / batches;
        stats.score_loss = score_total / batches;
        stats.entropy = utilization_entropy(stats.utilization);
        stats.val_distortion = validator(params);
        if (std::isnan(stats.val_distortion)) {
            throw NumericError("fit: validation metric is NaN at epoch " + std::to_string(epoch));
        }
        result.report.epochs.push_back(stats);
        if (on_epoch) on_epoch(stats);

        if (!have_best || stats.val_distortion < result.report.best_val_distortion) {
            have_best = true;
            result.report.best_val_distortion = stats.val_distortion;
            result.report.best_epoch = epoch;
            result.params = params;
            since_best = 0;
        } else if (++since_best >= train_cfg.patience) {
            result.report.stopped_early = epoch < train_cfg.epochs;
            break;
        }
    }
    return result;
}

}  // namespace mhf
