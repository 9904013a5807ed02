#pragma once

#include "pgdpo/linalg.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace pgdpo {

struct NodeId {
    std::uint32_t index = 0;
};

/// Append-only record of batched matrix operations with a reverse sweep.
///
/// Every node holds a (rows x cols) matrix; batched code uses one row per
/// simulated path. Nodes are appended in evaluation order, so the record is a
/// DAG in topological order by construction.
///
/// When constructed with `with_tangents`, every node additionally carries a
/// forward tangent and the backward sweep propagates the tangent of the
/// adjoints (forward-over-reverse). Seeding the tangent of a leaf with a unit
/// direction then yields second derivatives of the root in that direction.
class Tape {
public:
    explicit Tape(bool with_tangents = false) : with_tangents_(with_tangents) {}

    bool has_tangents() const noexcept { return with_tangents_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

    // Leaves. Constants and variables are both leaves; the distinction is only
    // documentary, both receive adjoints.
    NodeId variable(Matrix value);
    NodeId constant(Matrix value);
    NodeId scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

    /// Sets the forward tangent of a leaf. Must be called before the leaf is used.
    void set_tangent(NodeId leaf, Matrix tangent);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    /// a (r x c) + bias (1 x c) broadcast over rows.
    NodeId add_row(NodeId a, NodeId bias);
    /// a (r x k) * w (k x c).
    NodeId matmul(NodeId a, NodeId w);
    NodeId matmul_const(NodeId a, std::shared_ptr<const Matrix> m);
    NodeId mul_const(NodeId a, std::shared_ptr<const Matrix> c);
    NodeId scale(NodeId a, double c);
    NodeId add_scalar(NodeId a, double c);

    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId pow(NodeId a, double p);
    NodeId leaky_relu(NodeId a, double negative_slope = 0.01);
    NodeId softplus(NodeId a);
    NodeId sigmoid(NodeId a);
    /// Row-wise softmax with max subtraction.
    NodeId softmax_rows(NodeId a);

    /// (r x c), (r x c) -> (r x 1) with y_i = sum_j a_ij b_ij.
    NodeId row_dot(NodeId a, NodeId b);
    NodeId row_sum(NodeId a);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId sum_all(NodeId a);
    NodeId mean_all(NodeId a);

    const Matrix& value(NodeId id) const { return nodes_[id.index].value; }
    const Matrix& tangent(NodeId id) const { return nodes_[id.index].tangent; }
    const Matrix& adjoint(NodeId id) const { return nodes_[id.index].adjoint; }
    /// Directional derivative of the adjoint along the seeded tangents.
    const Matrix& adjoint_tangent(NodeId id) const { return nodes_[id.index].adjoint_tangent; }

    /// Reverse sweep from a 1x1 root seeded with 1.
    void backward(NodeId root);
    /// Reverse sweep seeded with an explicit adjoint of the root's shape.
    void backward(NodeId root, const Matrix& seed);

private:
    enum class Op : std::uint8_t {
        Leaf, Add, Sub, Mul, AddRow, MatMul, MatMulConst, MulConst, Scale, AddScalar,
        Exp, Log, Pow, LeakyRelu, Softplus, Sigmoid, SoftmaxRows,
        RowDot, RowSum, ConcatCols, SumAll, MeanAll,
    };

    struct Node {
        Op op = Op::Leaf;
        std::uint32_t a = 0;
        std::uint32_t b = 0;
        double param = 0.0;
        std::shared_ptr<const Matrix> constant;
        Matrix value;
        Matrix tangent;
        Matrix adjoint;
        Matrix adjoint_tangent;
    };

    NodeId push(Node node);
    NodeId unary(Op op, NodeId a, double param, Matrix value, Matrix tangent);
    const Node& at(NodeId id) const { return nodes_[id.index]; }
    void check_same_shape(NodeId a, NodeId b, const char* what) const;
    void propagate(std::size_t i);

    bool with_tangents_;
    std::vector<Node> nodes_;
};

}  // namespace pgdpo
