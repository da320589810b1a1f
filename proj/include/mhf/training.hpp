#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mhf/data.hpp"
#include "mhf/model.hpp"
#include "mhf/tape.hpp"

namespace mhf {

struct TrainConfig {
    double relax_epsilon = 0.1;
    double beta = 0.5;
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::size_t batches_per_epoch = 30;
    std::size_t batch_size = 200;
    std::size_t patience = 10;
    std::uint64_t seed = 3141;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

// Scalar forms of the objective. The tape graph below computes the same
// quantities; these are used for reporting and as test oracles.

/// ||Y_k - Y||_F^2 / (H D) for each hypothesis.
std::vector<double> per_head_loss(std::span<const Matrix> hypotheses, const Matrix& target);

/// Index of the smallest loss, lowest index on ties. NaN -> NumericError.
std::size_t select_winner(std::span<const double> losses);

/// (1 - eps) L_win + eps / (K - 1) * sum of the other losses.
double rwta_loss(std::span<const double> losses, double relax_epsilon);

/// -(1/K) [log g_win + sum_{k != win} log(1 - g_k)], confidences clamped to
/// [1e-12, 1 - 1e-12].
double score_loss(std::span<const double> confidences, std::size_t winner);

/// Shannon entropy (nats) of a winner histogram. All-zero -> DataError.
double utilization_entropy(std::span<const std::uint64_t> histogram);

/// Objective graph over a batch of windows: the mean over windows of
/// R-WTA + beta * score, in normalized space. Winners are chosen per window
/// from the loss values and are constants of the graph.
struct LossGraph {
    NodeId root;
    GraphOutputs outputs;
    std::vector<std::size_t> winners;
    Matrix head_losses;  // B x K
    double rwta = 0.0;   // batch means
    double score = 0.0;
};

LossGraph build_loss_graph(Tape& tape, const ParamNodes& nodes, std::span<const WindowPair> batch,
                           const ModelConfig& model_cfg, const TrainConfig& train_cfg);

/// Single-window objective, as a scalar node on the tape.
NodeId total_loss(Tape& tape, const ParamNodes& nodes, const Matrix& x_raw, const Matrix& y_raw,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg);

struct AdamState {
    std::vector<Matrix> first;
    std::vector<Matrix> second;
    std::uint64_t step = 0;

    static AdamState zeros_like(const ModelParams& params);
};

/// Bias-corrected Adam update applied in place, tensor by tensor in
/// canonical order.
void adam_step(ModelParams& params, std::span<const Matrix> grads, AdamState& state, double learning_rate,
               double beta1, double beta2, double eps);

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double rwta_loss = 0.0;
    double score_loss = 0.0;
    double val_distortion = 0.0;
    std::vector<std::uint64_t> utilization;
    double entropy = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;
    double best_val_distortion = 0.0;
    bool stopped_early = false;

    std::uint64_t total_selections() const;
};

struct FitResult {
    ModelParams params;
    TrainReport report;
};

/// Scores a parameter set for early stopping; lower is better.
using Validator = std::function<double(const ModelParams&)>;

/// Epoch hook, called after each epoch with its statistics.
using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains from init_params(model_cfg). Each epoch draws batches_per_epoch
/// batches of batch_size random training windows, steps Adam on the batch
/// mean objective, then validates (distortion on the validation split by
/// default). Returns the best-validation parameters.
FitResult fit(const TimeSeriesDataset& dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
              Validator validator = {}, EpochCallback on_epoch = {});

}  // namespace mhf
