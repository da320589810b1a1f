#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "mhf/matrix.hpp"

namespace mhf {

/// Primitive operations the tape knows how to differentiate.
enum class Op {
    variable,  // differentiable leaf
    constant,  // non-differentiable leaf
    matmul,
    add,  // same shape, or rows x n + 1 x n (row-vector broadcast)
    sub,
    mul,  // elementwise
    scale,
    sum_all,
    mean_all,
    relu,
    sigmoid,
    log,  // argument clamped at log_clamp
    square,
    reshape,
    concat_cols,
    slice_cols,
    transpose,
};

std::string_view op_name(Op op);

inline constexpr double log_clamp = 1e-12;

struct NodeId {
    std::size_t index = 0;
    friend bool operator==(NodeId, NodeId) = default;
};

/// Non-matrix arguments of a primitive: the factor for `scale`, the target
/// shape for `reshape`, the half-open column range for `slice_cols`.
struct Payload {
    double factor = 1.0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Append-only record of primitive evaluations. Nodes are stored in
/// creation order, which is a topological order by construction.
class Tape {
public:
    struct Node {
        Op op;
        std::vector<NodeId> inputs;
        Payload payload;
        Matrix value;
    };

    NodeId variable(Matrix value);
    NodeId constant(Matrix value);

    /// Evaluates `op` on the cached input values and appends the result.
    /// Throws ShapeError when the input shapes do not fit the primitive.
    NodeId record(Op op, std::span<const NodeId> inputs, const Payload& payload = {});

    NodeId matmul(NodeId a, NodeId b) { return binary(Op::matmul, a, b); }
    NodeId add(NodeId a, NodeId b) { return binary(Op::add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary(Op::sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::mul, a, b); }
    NodeId scale(NodeId a, double factor);
    NodeId sum_all(NodeId a) { return unary(Op::sum_all, a); }
    NodeId mean_all(NodeId a) { return unary(Op::mean_all, a); }
    NodeId relu(NodeId a) { return unary(Op::relu, a); }
    NodeId sigmoid(NodeId a) { return unary(Op::sigmoid, a); }
    NodeId log(NodeId a) { return unary(Op::log, a); }
    NodeId square(NodeId a) { return unary(Op::square, a); }
    NodeId transpose(NodeId a) { return unary(Op::transpose, a); }
    NodeId reshape(NodeId a, std::size_t rows, std::size_t cols);
    NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end);
    NodeId concat_cols(std::span<const NodeId> parts);

    const Matrix& value(NodeId id) const { return nodes_.at(id.index).value; }
    const Node& node(NodeId id) const { return nodes_.at(id.index); }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    NodeId unary(Op op, NodeId a);
    NodeId binary(Op op, NodeId a, NodeId b);
    NodeId push(Op op, std::vector<NodeId> inputs, const Payload& payload, Matrix value);

    std::vector<Node> nodes_;
};

/// Adjoints for every node of a tape, each shaped like its node's value.
class Grad {
public:
    explicit Grad(std::vector<Matrix> adjoints) : adjoints_(std::move(adjoints)) {}

    const Matrix& operator[](NodeId id) const { return adjoints_.at(id.index); }
    std::size_t size() const noexcept { return adjoints_.size(); }

private:
    std::vector<Matrix> adjoints_;
};

/// Reverse sweep from a 1x1 root. Nodes the root does not depend on get
/// zero adjoints. Throws ContractError for a non-scalar root.
Grad backward(const Tape& tape, NodeId root);

/// Builds a scalar graph on the tape from the node holding `x`.
using ScalarGraph = std::function<NodeId(Tape&, NodeId)>;

/// Compares the tape gradient of `f` at `x` with central differences of step
/// `h`. Returns max over entries of |analytic - numeric| / (|numeric| + 1e-12).
/// Throws NumericError if any evaluation of f is non-finite.
double finite_diff_check(const ScalarGraph& f, const Matrix& x, double h);

}  // namespace mhf
