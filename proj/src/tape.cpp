#include "mhf/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mhf/errors.hpp"

namespace mhf {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::string dims(const Matrix& m) { return m.shape_string(); }

void require_inputs(Op op, std::span<const NodeId> inputs, std::size_t n) {
    if (inputs.size() != n) {
        throw ShapeError(std::string(op_name(op)) + ": expected " + std::to_string(n) +
                         " inputs, got " + std::to_string(inputs.size()));
    }
}

bool is_row_broadcast(const Matrix& a, const Matrix& b) {
    return b.rows() == 1 && a.cols() == b.cols() && a.rows() > 1;
}

Matrix elementwise(const Matrix& a, const Matrix& b, Op op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + dims(a) + " vs " + dims(b));
    }
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        switch (op) {
            case Op::sub: out[i] = a[i] - b[i]; break;
            case Op::mul: out[i] = a[i] * b[i]; break;
            default: out[i] = a[i] + b[i]; break;
        }
    }
    return out;
}

Matrix map(const Matrix& a, double (*f)(double)) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

void accumulate(Matrix& target, const Matrix& delta) {
    if (target.empty() && !delta.empty()) {
        target = delta;
        return;
    }
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += delta[i];
}

}  // namespace

std::string_view op_name(Op op) {
    switch (op) {
        case Op::variable: return "variable";
        case Op::constant: return "constant";
        case Op::matmul: return "matmul";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::scale: return "scale";
        case Op::sum_all: return "sum_all";
        case Op::mean_all: return "mean_all";
        case Op::relu: return "relu";
        case Op::sigmoid: return "sigmoid";
        case Op::log: return "log";
        case Op::square: return "square";
        case Op::reshape: return "reshape";
        case Op::concat_cols: return "concat_cols";
        case Op::slice_cols: return "slice_cols";
        case Op::transpose: return "transpose";
    }
    return "unknown";
}

NodeId Tape::push(Op op, std::vector<NodeId> inputs, const Payload& payload, Matrix value) {
    nodes_.push_back(Node{op, std::move(inputs), payload, std::move(value)});
    return NodeId{nodes_.size() - 1};
}

NodeId Tape::variable(Matrix value) { return push(Op::variable, {}, {}, std::move(value)); }

NodeId Tape::constant(Matrix value) { return push(Op::constant, {}, {}, std::move(value)); }

NodeId Tape::unary(Op op, NodeId a) {
    const NodeId in[] = {a};
    return record(op, in);
}

NodeId Tape::binary(Op op, NodeId a, NodeId b) {
    const NodeId in[] = {a, b};
    return record(op, in);
}

NodeId Tape::scale(NodeId a, double factor) {
    const NodeId in[] = {a};
    Payload p;
    p.factor = factor;
    return record(Op::scale, in, p);
}

NodeId Tape::reshape(NodeId a, std::size_t rows, std::size_t cols) {
    const NodeId in[] = {a};
    Payload p;
    p.rows = rows;
    p.cols = cols;
    return record(Op::reshape, in, p);
}

NodeId Tape::slice_cols(NodeId a, std::size_t begin, std::size_t end) {
    const NodeId in[] = {a};
    Payload p;
    p.begin = begin;
    p.end = end;
    return record(Op::slice_cols, in, p);
}

NodeId Tape::concat_cols(std::span<const NodeId> parts) { return record(Op::concat_cols, parts); }

NodeId Tape::record(Op op, std::span<const NodeId> inputs, const Payload& payload) {
    for (NodeId id : inputs) {
        if (id.index >= nodes_.size()) {
            throw ContractError(std::string(op_name(op)) + ": input node " +
                                std::to_string(id.index) + " is not on the tape");
        }
    }
    auto val = [&](std::size_t i) -> const Matrix& { return nodes_[inputs[i].index].value; };
    Matrix out;
    switch (op) {
        case Op::variable:
        case Op::constant:
            throw ContractError("record: leaves are created with variable() or constant()");
        case Op::matmul:
            require_inputs(op, inputs, 2);
            out = mhf::matmul(val(0), val(1));
            break;
        case Op::add: {
            require_inputs(op, inputs, 2);
            const Matrix& a = val(0);
            const Matrix& b = val(1);
            if (is_row_broadcast(a, b)) {
                out = a;
                for (std::size_t r = 0; r < a.rows(); ++r)
                    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) += b(0, c);
            } else {
                out = elementwise(a, b, op);
            }
            break;
        }
        case Op::sub:
        case Op::mul:
            require_inputs(op, inputs, 2);
            out = elementwise(val(0), val(1), op);
            break;
        case Op::scale: {
            require_inputs(op, inputs, 1);
            out = val(0);
            for (double& v : out.values()) v *= payload.factor;
            break;
        }
        case Op::sum_all:
        case Op::mean_all: {
            require_inputs(op, inputs, 1);
            const Matrix& a = val(0);
            if (a.empty()) throw ShapeError(std::string(op_name(op)) + ": empty input");
            double s = 0.0;
            for (double v : a.values()) s += v;
            if (op == Op::mean_all) s /= static_cast<double>(a.size());
            out = Matrix(1, 1, s);
            break;
        }
        case Op::relu:
            require_inputs(op, inputs, 1);
            out = map(val(0), [](double x) { return x > 0.0 ? x : 0.0; });
            break;
        case Op::sigmoid:
            require_inputs(op, inputs, 1);
            out = map(val(0), stable_sigmoid);
            break;
        case Op::log:
            require_inputs(op, inputs, 1);
            out = map(val(0), [](double x) { return std::log(std::max(x, log_clamp)); });
            break;
        case Op::square:
            require_inputs(op, inputs, 1);
            out = map(val(0), [](double x) { return x * x; });
            break;
        case Op::transpose:
            require_inputs(op, inputs, 1);
            out = val(0).transposed();
            break;
        case Op::reshape: {
            require_inputs(op, inputs, 1);
            const Matrix& a = val(0);
            if (payload.rows * payload.cols != a.size()) {
                throw ShapeError("reshape: cannot view " + dims(a) + " as " +
                                 std::to_string(payload.rows) + "x" + std::to_string(payload.cols));
            }
            out = Matrix(payload.rows, payload.cols,
                         std::vector<double>(a.values().begin(), a.values().end()));
            break;
        }
        case Op::slice_cols: {
            require_inputs(op, inputs, 1);
            const Matrix& a = val(0);
            if (payload.begin >= payload.end || payload.end > a.cols()) {
                throw ShapeError("slice_cols: range [" + std::to_string(payload.begin) + ", " +
                                 std::to_string(payload.end) + ") out of " + dims(a));
            }
            const std::size_t w = payload.end - payload.begin;
            out = Matrix(a.rows(), w);
            for (std::size_t r = 0; r < a.rows(); ++r)
                for (std::size_t c = 0; c < w; ++c) out(r, c) = a(r, payload.begin + c);
            break;
        }
        case Op::concat_cols: {
            if (inputs.empty()) throw ShapeError("concat_cols: no inputs");
            const std::size_t rows = val(0).rows();
            std::size_t cols = 0;
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                if (val(i).rows() != rows) {
                    throw ShapeError("concat_cols: row mismatch " + dims(val(0)) + " vs " +
                                     dims(val(i)));
                }
                cols += val(i).cols();
            }
            out = Matrix(rows, cols);
            std::size_t offset = 0;
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                const Matrix& part = val(i);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < part.cols(); ++c) out(r, offset + c) = part(r, c);
                offset += part.cols();
            }
            break;
        }
    }
    return push(op, std::vector<NodeId>(inputs.begin(), inputs.end()), payload, std::move(out));
}

Grad backward(const Tape& tape, NodeId root) {
    if (root.index >= tape.size()) throw ContractError("backward: root is not on the tape");
    const Matrix& root_value = tape.value(root);
    if (root_value.rows() != 1 || root_value.cols() != 1) {
        throw ContractError("backward: root must be 1x1, got " + root_value.shape_string());
    }

    std::vector<Matrix> adj(tape.size());
    adj[root.index] = Matrix(1, 1, 1.0);

    for (std::size_t n = root.index + 1; n-- > 0;) {
        const Tape::Node& node = tape.node(NodeId{n});
        if (adj[n].empty() || node.inputs.empty()) continue;
        const Matrix& g = adj[n];
        auto in_val = [&](std::size_t i) -> const Matrix& { return tape.value(node.inputs[i]); };
        auto in_adj = [&](std::size_t i) -> Matrix& { return adj[node.inputs[i].index]; };

        switch (node.op) {
            case Op::variable:
            case Op::constant:
                break;
            case Op::matmul:
                accumulate(in_adj(0), matmul_bt(g, in_val(1)));
                accumulate(in_adj(1), matmul_at(in_val(0), g));
                break;
            case Op::add: {
                accumulate(in_adj(0), g);
                if (is_row_broadcast(in_val(0), in_val(1))) {
                    Matrix col_sums(1, g.cols());
                    for (std::size_t r = 0; r < g.rows(); ++r)
                        for (std::size_t c = 0; c < g.cols(); ++c) col_sums(0, c) += g(r, c);
                    accumulate(in_adj(1), col_sums);
                } else {
                    accumulate(in_adj(1), g);
                }
                break;
            }
            case Op::sub: {
                accumulate(in_adj(0), g);
                Matrix neg = g;
                for (double& v : neg.values()) v = -v;
                accumulate(in_adj(1), neg);
                break;
            }
            case Op::mul: {
                const Matrix& a = in_val(0);
                const Matrix& b = in_val(1);
                Matrix da(g.rows(), g.cols()), db(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.size(); ++i) {
                    da[i] = g[i] * b[i];
                    db[i] = g[i] * a[i];
                }
                accumulate(in_adj(0), da);
                accumulate(in_adj(1), db);
                break;
            }
            case Op::scale: {
                Matrix d = g;
                for (double& v : d.values()) v *= node.payload.factor;
                accumulate(in_adj(0), d);
                break;
            }
            case Op::sum_all:
            case Op::mean_all: {
                const Matrix& a = in_val(0);
                double v = g[0];
                if (node.op == Op::mean_all) v /= static_cast<double>(a.size());
                accumulate(in_adj(0), Matrix(a.rows(), a.cols(), v));
                break;
            }
            case Op::relu: {
                const Matrix& a = in_val(0);
                Matrix d(a.rows(), a.cols());
                for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] > 0.0 ? g[i] : 0.0;
                accumulate(in_adj(0), d);
                break;
            }
            case Op::sigmoid: {
                const Matrix& s = node.value;
                Matrix d(s.rows(), s.cols());
                for (std::size_t i = 0; i < s.size(); ++i) d[i] = g[i] * s[i] * (1.0 - s[i]);
                accumulate(in_adj(0), d);
                break;
            }
            case Op::log: {
                const Matrix& a = in_val(0);
                Matrix d(a.rows(), a.cols());
                for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] > log_clamp ? g[i] / a[i] : 0.0;
                accumulate(in_adj(0), d);
                break;
            }
            case Op::square: {
                const Matrix& a = in_val(0);
                Matrix d(a.rows(), a.cols());
                for (std::size_t i = 0; i < a.size(); ++i) d[i] = 2.0 * a[i] * g[i];
                accumulate(in_adj(0), d);
                break;
            }
            case Op::transpose:
                accumulate(in_adj(0), g.transposed());
                break;
            case Op::reshape: {
                const Matrix& a = in_val(0);
                accumulate(in_adj(0), Matrix(a.rows(), a.cols(),
                                             std::vector<double>(g.values().begin(), g.values().end())));
                break;
            }
            case Op::slice_cols: {
                const Matrix& a = in_val(0);
                Matrix& target = in_adj(0);
                if (target.empty()) target = Matrix(a.rows(), a.cols());
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c) target(r, node.payload.begin + c) += g(r, c);
                break;
            }
            case Op::concat_cols: {
                std::size_t offset = 0;
                for (std::size_t i = 0; i < node.inputs.size(); ++i) {
                    const Matrix& part = in_val(i);
                    Matrix d(part.rows(), part.cols());
                    for (std::size_t r = 0; r < part.rows(); ++r)
                        for (std::size_t c = 0; c < part.cols(); ++c) d(r, c) = g(r, offset + c);
                    accumulate(in_adj(i), d);
                    offset += part.cols();
                }
                break;
            }
        }
    }

    for (std::size_t n = 0; n < tape.size(); ++n) {
        if (adj[n].empty()) {
            const Matrix& v = tape.value(NodeId{n});
            adj[n] = Matrix(v.rows(), v.cols());
        }
    }
    return Grad(std::move(adj));
}

double finite_diff_check(const ScalarGraph& f, const Matrix& x, double h) {
    if (!(h > 0.0)) throw ContractError("finite_diff_check: step must be positive");

    auto evaluate = [&](const Matrix& at) {
        Tape tape;
        const NodeId leaf = tape.variable(at);
        const NodeId root = f(tape, leaf);
        const double v = tape.value(root)(0, 0);
        if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite function value");
        return v;
    };

    Tape tape;
    const NodeId leaf = tape.variable(x);
    const NodeId root = f(tape, leaf);
    if (!std::isfinite(tape.value(root)(0, 0))) {
        throw NumericError("finite_diff_check: non-finite function value");
    }
    const Matrix analytic = backward(tape, root)[leaf];

    double worst = 0.0;
    Matrix probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = evaluate(probe);
        probe[i] = orig - h;
        const double down = evaluate(probe);
        probe[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-12));
    }
    return worst;
}

}  // namespace mhf
