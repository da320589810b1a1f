#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mhf/matrix.hpp"
#include "mhf/normalization.hpp"
#include "mhf/tape.hpp"

namespace mhf {

struct ModelConfig {
    std::size_t context_length = 16;  // L
    std::size_t horizon = 16;         // H
    std::size_t channels = 1;         // D
    std::size_t hypotheses = 4;       // K
    std::size_t head_hidden = 64;
    NormConfig norm;
    std::uint64_t init_seed = 3141;
    double init_scale = 0.1;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    std::size_t latent_size() const noexcept { return horizon * channels; }
};

/// y = x * weight + bias for row vectors x; weight is in x out, bias 1 x out.
struct DenseLayer {
    Matrix weight;
    Matrix bias;
};

/// One hidden ReLU layer followed by a linear output layer.
struct HeadParams {
    DenseLayer hidden;
    DenseLayer output;
};

struct ModelParams {
    std::vector<Matrix> encoder_weight;  // per channel, H x L
    std::vector<Matrix> encoder_bias;    // per channel, 1 x H
    std::vector<HeadParams> trajectory;  // K heads, H*D -> hidden -> H*D
    std::vector<HeadParams> confidence;  // K heads, H*D -> hidden -> 1

    /// Every learnable matrix in a fixed canonical order, with stable names
    /// (used by the optimizer, the checkpoint codec and gradient checks).
    std::vector<Matrix*> tensors();
    std::vector<const Matrix*> tensors() const;
    std::vector<std::string> tensor_names() const;
    std::size_t parameter_count() const;
};

/// Closed-form parameter count for a configuration.
std::size_t parameter_count(const ModelConfig& cfg);

/// Encoder weights and biases ~ U(+-1/sqrt(L)); head hidden layers
/// ~ U(+-1/sqrt(fan_in)); trajectory output layers additionally scaled by
/// init_scale so every head starts as a small perturbation of the latent.
ModelParams init_params(const ModelConfig& cfg);

/// Throws ShapeError unless every tensor matches the configuration.
void check_params(const ModelParams& params, const ModelConfig& cfg);

/// Counts floating-point operations executed by the direct inference path.
/// One multiply-add counts as 2.
struct FlopCounter {
    std::uint64_t flops = 0;
};

/// Channel-independent temporal projection: Z[:, d] = W_d x[:, d] + b_d.
Matrix encode(const Matrix& x_norm, const ModelParams& params, FlopCounter* counter = nullptr);

struct Decoded {
    std::vector<Matrix> trajectories;  // K matrices H x D, normalized scale
    std::vector<double> confidences;   // K sigmoid outputs
};

/// Trajectory head k: Z + reshape(MLP_k(vec Z)); confidence head k:
/// sigmoid(MLP_k(vec Z)). vec is row-major (time-major) flattening.
Decoded decode(const Matrix& latent, const ModelParams& params, FlopCounter* counter = nullptr);

struct ForecastSet {
    std::vector<Matrix> hypotheses;  // K matrices H x D, original scale
    std::vector<double> confidences;
    Matrix latent;                   // H x D, normalized scale
    NormStats stats;
};

/// Single window: statistics, normalize, encode, decode, denormalize.
/// Normalization is charged 4*L*D operations on the counter.
ForecastSet forward(const Matrix& x_raw, const ModelParams& params, const ModelConfig& cfg,
                    FlopCounter* counter = nullptr);

/// Forward over a batch. Identical to per-window forward except for the
/// batch-pooled normalization kind, whose statistics span the batch.
std::vector<ForecastSet> forward_batch(std::span<const Matrix> windows, const ModelParams& params,
                                       const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Differentiable graph

struct DenseNodes {
    NodeId weight;
    NodeId bias;
};

struct HeadNodes {
    DenseNodes hidden;
    DenseNodes output;
};

/// Tape nodes for every parameter, mirroring ModelParams.
struct ParamNodes {
    std::vector<NodeId> encoder_weight;
    std::vector<NodeId> encoder_bias;
    std::vector<HeadNodes> trajectory;
    std::vector<HeadNodes> confidence;

    /// Same canonical order as ModelParams::tensors().
    std::vector<NodeId> flat() const;
};

/// Records every parameter as a variable. When `replace` is set, the tensor
/// at that canonical index is taken from `replacement` instead (used to
/// differentiate with respect to one tensor from an outer graph).
ParamNodes bind_params(Tape& tape, const ModelParams& params,
                       std::optional<std::size_t> replace = std::nullopt, NodeId replacement = {});

/// Gradients in the canonical tensor order.
std::vector<Matrix> gather_grads(const Grad& grad, const ParamNodes& nodes);

struct GraphOutputs {
    NodeId latent;                     // B x (H*D), row b = vec(Z) of window b
    std::vector<NodeId> trajectories;  // K nodes, B x (H*D), normalized scale
    std::vector<NodeId> logits;        // K nodes, B x 1
    std::vector<NodeId> confidences;   // K nodes, B x 1
};

/// Batched forward on the tape over already-normalized L x D windows.
GraphOutputs build_forward_graph(Tape& tape, const ParamNodes& nodes,
                                 std::span<const Matrix> normalized_windows, const ModelConfig& cfg);

}  // namespace mhf
