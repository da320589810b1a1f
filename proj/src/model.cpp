#include "mhf/model.hpp"

#include <cmath>
#include <random>

#include "mhf/errors.hpp"

namespace mhf {

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string(name) + " must be at least 1");
    };
    positive(context_length, "L");
    positive(horizon, "H");
    positive(channels, "D");
    positive(hypotheses, "K");
    positive(head_hidden, "head_hidden");
    if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
        throw ConfigError("init_scale must be non-negative, got " + std::to_string(init_scale));
    }
    norm.validate(channels);
    if (norm.kind == NormKind::sin &&
        context_length < 2 * trim_count(context_length, norm.trim_ratio) + 1) {
        throw ConfigError("trim ratio leaves no samples");
    }
}

std::vector<Matrix*> ModelParams::tensors() {
    std::vector<Matrix*> out;
    for (auto& w : encoder_weight) out.push_back(&w);
    for (auto& b : encoder_bias) out.push_back(&b);
    for (auto* heads : {&trajectory, &confidence})
        for (auto& h : *heads) {
            out.push_back(&h.hidden.weight);
            out.push_back(&h.hidden.bias);
            out.push_back(&h.output.weight);
            out.push_back(&h.output.bias);
        }
    return out;
}

std::vector<const Matrix*> ModelParams::tensors() const {
    auto mutable_view = const_cast<ModelParams*>(this)->tensors();
    return {mutable_view.begin(), mutable_view.end()};
}

std::vector<std::string> ModelParams::tensor_names() const {
    std::vector<std::string> out;
    for (std::size_t d = 0; d < encoder_weight.size(); ++d) out.push_back("encoder.weight." + std::to_string(d));
    for (std::size_t d = 0; d < encoder_bias.size(); ++d) out.push_back("encoder.bias." + std::to_string(d));
    auto heads = [&](const char* prefix, std::size_t count) {
        for (std::size_t k = 0; k < count; ++k) {
            const std::string p = std::string(prefix) + "." + std::to_string(k);
            out.push_back(p + ".hidden.weight");
            out.push_back(p + ".hidden.bias");
            out.push_back(p + ".output.weight");
            out.push_back(p + ".output.bias");
        }
    };
    heads("trajectory", trajectory.size());
    heads("confidence", confidence.size());
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const Matrix* m : tensors()) n += m->size();
    return n;
}

std::size_t parameter_count(const ModelConfig& cfg) {
    const std::size_t L = cfg.context_length, H = cfg.horizon, D = cfg.channels;
    const std::size_t HD = H * D, hid = cfg.head_hidden;
    const std::size_t encoder = D * (H * L + H);
    const std::size_t traj = HD * hid + hid + hid * HD + HD;
    const std::size_t conf = HD * hid + hid + hid + 1;
    return encoder + cfg.hypotheses * (traj + conf);
}

namespace {

Matrix uniform(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = dist(rng);
    return m;
}

HeadParams make_head(std::mt19937_64& rng, std::size_t in, std::size_t hidden, std::size_t out,
                     double output_scale) {
    HeadParams h;
    const double b1 = 1.0 / std::sqrt(static_cast<double>(in));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    h.hidden.weight = uniform(rng, in, hidden, b1);
    h.hidden.bias = uniform(rng, 1, hidden, b1);
    h.output.weight = uniform(rng, hidden, out, b2);
    h.output.bias = uniform(rng, 1, out, b2);
    for (double& v : h.output.weight.values()) v *= output_scale;
    for (double& v : h.output.bias.values()) v *= output_scale;
    return h;
}

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(name + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + m.shape_string());
    }
}

// out = x * W + b for a single row vector x.
std::vector<double> dense(std::span<const double> x, const DenseLayer& layer, FlopCounter* counter) {
    const std::size_t in = layer.weight.rows(), out = layer.weight.cols();
    std::vector<double> y(layer.bias.values().begin(), layer.bias.values().end());
    for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        const double* wi = &layer.weight.values()[i * out];
        for (std::size_t j = 0; j < out; ++j) y[j] += xi * wi[j];
    }
    if (counter) counter->flops += 2 * in * out + out;
    return y;
}

void relu_inplace(std::vector<double>& v, FlopCounter* counter) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
    if (counter) counter->flops += v.size();
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.init_seed);
    const std::size_t L = cfg.context_length, H = cfg.horizon, D = cfg.channels;
    const std::size_t HD = H * D, hid = cfg.head_hidden;
    const double enc_bound = 1.0 / std::sqrt(static_cast<double>(L));

    ModelParams p;
    for (std::size_t d = 0; d < D; ++d) p.encoder_weight.push_back(uniform(rng, H, L, enc_bound));
    for (std::size_t d = 0; d < D; ++d) p.encoder_bias.push_back(uniform(rng, 1, H, enc_bound));
    for (std::size_t k = 0; k < cfg.hypotheses; ++k)
        p.trajectory.push_back(make_head(rng, HD, hid, HD, cfg.init_scale));
    for (std::size_t k = 0; k < cfg.hypotheses; ++k)
        p.confidence.push_back(make_head(rng, HD, hid, 1, 1.0));
    return p;
}

void check_params(const ModelParams& params, const ModelConfig& cfg) {
    const std::size_t L = cfg.context_length, H = cfg.horizon, D = cfg.channels;
    const std::size_t HD = H * D, hid = cfg.head_hidden, K = cfg.hypotheses;
    if (params.encoder_weight.size() != D || params.encoder_bias.size() != D ||
        params.trajectory.size() != K || params.confidence.size() != K) {
        throw ShapeError("parameter set does not match D=" + std::to_string(D) +
                         ", K=" + std::to_string(K));
    }
    for (std::size_t d = 0; d < D; ++d) {
        expect_shape(params.encoder_weight[d], H, L, "encoder.weight");
        expect_shape(params.encoder_bias[d], 1, H, "encoder.bias");
    }
    for (std::size_t k = 0; k < K; ++k) {
        const HeadParams& t = params.trajectory[k];
        expect_shape(t.hidden.weight, HD, hid, "trajectory.hidden.weight");
        expect_shape(t.hidden.bias, 1, hid, "trajectory.hidden.bias");
        expect_shape(t.output.weight, hid, HD, "trajectory.output.weight");
        expect_shape(t.output.bias, 1, HD, "trajectory.output.bias");
        const HeadParams& c = params.confidence[k];
        expect_shape(c.hidden.weight, HD, hid, "confidence.hidden.weight");
        expect_shape(c.hidden.bias, 1, hid, "confidence.hidden.bias");
        expect_shape(c.output.weight, hid, 1, "confidence.output.weight");
        expect_shape(c.output.bias, 1, 1, "confidence.output.bias");
    }
}

Matrix encode(const Matrix& x_norm, const ModelParams& params, FlopCounter* counter) {
    const std::size_t D = params.encoder_weight.size();
    if (D == 0 || x_norm.cols() != D || x_norm.rows() != params.encoder_weight.front().cols()) {
        throw ShapeError("encode: input " + x_norm.shape_string() + " does not match encoder for " +
                         std::to_string(D) + " channels");
    }
    const std::size_t H = params.encoder_weight.front().rows();
    const std::size_t L = x_norm.rows();
    Matrix z(H, D);
    for (std::size_t d = 0; d < D; ++d) {
        const Matrix& w = params.encoder_weight[d];
        const Matrix& b = params.encoder_bias[d];
        for (std::size_t h = 0; h < H; ++h) {
            double s = b(0, h);
            for (std::size_t t = 0; t < L; ++t) s += w(h, t) * x_norm(t, d);
            z(h, d) = s;
        }
    }
    if (counter) counter->flops += D * (2 * H * L + H);
    return z;
}

Decoded decode(const Matrix& latent, const ModelParams& params, FlopCounter* counter) {
    if (params.trajectory.empty() || params.trajectory.size() != params.confidence.size()) {
        throw ShapeError("decode: malformed head set");
    }
    const std::size_t HD = latent.size();
    if (params.trajectory.front().hidden.weight.rows() != HD) {
        throw ShapeError("decode: latent " + latent.shape_string() + " does not match head input " +
                         std::to_string(params.trajectory.front().hidden.weight.rows()));
    }
    const std::span<const double> v = latent.values();
    Decoded out;
    for (const HeadParams& head : params.trajectory) {
        std::vector<double> h = dense(v, head.hidden, counter);
        relu_inplace(h, counter);
        std::vector<double> o = dense(h, head.output, counter);
        for (std::size_t i = 0; i < HD; ++i) o[i] += v[i];
        if (counter) counter->flops += HD;
        out.trajectories.emplace_back(latent.rows(), latent.cols(), std::move(o));
    }
    for (const HeadParams& head : params.confidence) {
        std::vector<double> h = dense(v, head.hidden, counter);
        relu_inplace(h, counter);
        const std::vector<double> s = dense(h, head.output, counter);
        out.confidences.push_back(sigmoid(s[0]));
        if (counter) counter->flops += 1;
    }
    return out;
}

namespace {

ForecastSet forward_with_stats(const Matrix& x_raw, NormStats stats, const ModelParams& params,
                               const ModelConfig& cfg, FlopCounter* counter) {
    const Matrix x_norm = normalize(x_raw, stats);
    if (counter) counter->flops += 4 * cfg.context_length * cfg.channels;
    ForecastSet fs;
    fs.latent = encode(x_norm, params, counter);
    Decoded dec = decode(fs.latent, params, counter);
    for (const Matrix& traj : dec.trajectories) {
        fs.hypotheses.push_back(denormalize(traj, stats));
        if (counter) counter->flops += 2 * traj.size();
    }
    fs.confidences = std::move(dec.confidences);
    fs.stats = std::move(stats);
    return fs;
}

void check_window(const Matrix& x_raw, const ModelConfig& cfg) {
    if (x_raw.rows() != cfg.context_length || x_raw.cols() != cfg.channels) {
        throw ShapeError("forward: context window " + x_raw.shape_string() + " but model expects " +
                         std::to_string(cfg.context_length) + "x" + std::to_string(cfg.channels));
    }
    if (!x_raw.all_finite()) throw NumericError("forward: context window has non-finite entries");
}

}  // namespace

ForecastSet forward(const Matrix& x_raw, const ModelParams& params, const ModelConfig& cfg,
                    FlopCounter* counter) {
    check_window(x_raw, cfg);
    return forward_with_stats(x_raw, robust_stats(x_raw, cfg.norm), params, cfg, counter);
}

std::vector<ForecastSet> forward_batch(std::span<const Matrix> windows, const ModelParams& params,
                                       const ModelConfig& cfg) {
    for (const Matrix& w : windows) check_window(w, cfg);
    std::vector<NormStats> stats = ablation_stats(windows, cfg.norm);
    std::vector<ForecastSet> out;
    out.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i)
        out.push_back(forward_with_stats(windows[i], std::move(stats[i]), params, cfg, nullptr));
    return out;
}

std::vector<NodeId> ParamNodes::flat() const {
    std::vector<NodeId> out(encoder_weight.begin(), encoder_weight.end());
    out.insert(out.end(), encoder_bias.begin(), encoder_bias.end());
    for (const auto* heads : {&trajectory, &confidence})
        for (const HeadNodes& h : *heads) {
            out.push_back(h.hidden.weight);
            out.push_back(h.hidden.bias);
            out.push_back(h.output.weight);
            out.push_back(h.output.bias);
        }
    return out;
}

ParamNodes bind_params(Tape& tape, const ModelParams& params, std::optional<std::size_t> replace,
                       NodeId replacement) {
    std::size_t index = 0;
    auto bind = [&](const Matrix& m) {
        const bool swap = replace && *replace == index;
        ++index;
        return swap ? replacement : tape.variable(m);
    };
    ParamNodes nodes;
    for (const Matrix& w : params.encoder_weight) nodes.encoder_weight.push_back(bind(w));
    for (const Matrix& b : params.encoder_bias) nodes.encoder_bias.push_back(bind(b));
    auto bind_heads = [&](const std::vector<HeadParams>& heads, std::vector<HeadNodes>& out) {
        for (const HeadParams& h : heads) {
            HeadNodes hn;
            hn.hidden.weight = bind(h.hidden.weight);
            hn.hidden.bias = bind(h.hidden.bias);
            hn.output.weight = bind(h.output.weight);
            hn.output.bias = bind(h.output.bias);
            out.push_back(hn);
        }
    };
    bind_heads(params.trajectory, nodes.trajectory);
    bind_heads(params.confidence, nodes.confidence);
    if (replace && *replace >= index) {
        throw ContractError("bind_params: replacement index " + std::to_string(*replace) +
                            " out of range");
    }
    return nodes;
}

std::vector<Matrix> gather_grads(const Grad& grad, const ParamNodes& nodes) {
    std::vector<Matrix> out;
    for (NodeId id : nodes.flat()) out.push_back(grad[id]);
    return out;
}

GraphOutputs build_forward_graph(Tape& tape, const ParamNodes& nodes,
                                 std::span<const Matrix> normalized_windows, const ModelConfig& cfg) {
    const std::size_t B = normalized_windows.size();
    const std::size_t L = cfg.context_length, H = cfg.horizon, D = cfg.channels;
    if (B == 0) throw ShapeError("build_forward_graph: empty batch");

    // Z_d: B x H, row b holds channel d of window b projected to the horizon.
    std::vector<NodeId> z;
    for (std::size_t d = 0; d < D; ++d) {
        Matrix xd(B, L);
        for (std::size_t b = 0; b < B; ++b) {
            const Matrix& w = normalized_windows[b];
            if (w.rows() != L || w.cols() != D) {
                throw ShapeError("build_forward_graph: window " + w.shape_string() + " but model expects " +
                                 std::to_string(L) + "x" + std::to_string(D));
            }
            for (std::size_t t = 0; t < L; ++t) xd(b, t) = w(t, d);
        }
        const NodeId x = tape.constant(std::move(xd));
        const NodeId proj = tape.matmul(x, tape.transpose(nodes.encoder_weight[d]));
        z.push_back(tape.add(proj, nodes.encoder_bias[d]));
    }

    // Row-major vec(Z): column t*D + d.
    std::vector<NodeId> columns;
    columns.reserve(H * D);
    for (std::size_t t = 0; t < H; ++t)
        for (std::size_t d = 0; d < D; ++d) columns.push_back(tape.slice_cols(z[d], t, t + 1));
    GraphOutputs out;
    out.latent = columns.size() == 1 ? columns.front() : tape.concat_cols(columns);

    auto mlp = [&](const HeadNodes& head) {
        const NodeId hidden = tape.relu(tape.add(tape.matmul(out.latent, head.hidden.weight), head.hidden.bias));
        return tape.add(tape.matmul(hidden, head.output.weight), head.output.bias);
    };
    for (const HeadNodes& head : nodes.trajectory) out.trajectories.push_back(tape.add(out.latent, mlp(head)));
    for (const HeadNodes& head : nodes.confidence) {
        const NodeId logit = mlp(head);
        out.logits.push_back(logit);
        out.confidences.push_back(tape.sigmoid(logit));
    }
    return out;
}

}  // namespace mhf
