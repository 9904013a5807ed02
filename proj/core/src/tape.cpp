#include "pgdpo/tape.hpp"

#include "pgdpo/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace pgdpo {

namespace {

using Array = Eigen::ArrayXXd;

// Floored at the smallest normal double so that the output stays strictly
// positive where exp underflows.
Array softplus_of(const Array& a) {
    return (a.max(0.0) + (-a.abs()).exp().log1p()).max(std::numeric_limits<double>::min());
}

Array sigmoid_of(const Array& a) {
    return a.unaryExpr([](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
}

Matrix softmax_rows_of(const Matrix& a) {
    Matrix y(a.rows(), a.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        const double m = a.row(i).maxCoeff();
        y.row(i) = (a.row(i).array() - m).exp().matrix();
        y.row(i) /= y.row(i).sum();
    }
    return y;
}

}  // namespace

NodeId Tape::push(Node node) {
    if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::InvalidArgument, "tape overflow");
    }
    nodes_.push_back(std::move(node));
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check_same_shape(NodeId a, NodeId b, const char* what) const {
    const auto& va = at(a).value;
    const auto& vb = at(b).value;
    if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(what) + ": " + std::to_string(va.rows()) + "x" + std::to_string(va.cols()) +
                        " vs " + std::to_string(vb.rows()) + "x" + std::to_string(vb.cols()));
    }
}

NodeId Tape::variable(Matrix value) {
    Node n;
    n.op = Op::Leaf;
    if (with_tangents_) n.tangent = Matrix::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Tape::constant(Matrix value) { return variable(std::move(value)); }

void Tape::set_tangent(NodeId leaf, Matrix tangent) {
    auto& n = nodes_.at(leaf.index);
    if (!with_tangents_) throw Error(ErrorCode::InvalidArgument, "tape was built without tangents");
    if (n.op != Op::Leaf) throw Error(ErrorCode::InvalidArgument, "tangents can only be seeded on leaves");
    if (tangent.rows() != n.value.rows() || tangent.cols() != n.value.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "tangent shape");
    }
    n.tangent = std::move(tangent);
}

NodeId Tape::unary(Op op, NodeId a, double param, Matrix value, Matrix tangent) {
    Node n;
    n.op = op;
    n.a = a.index;
    n.param = param;
    n.value = std::move(value);
    n.tangent = std::move(tangent);
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    check_same_shape(a, b, "add");
    Matrix t;
    if (with_tangents_) t = at(a).tangent + at(b).tangent;
    Node n{Op::Add, a.index, b.index, 0.0, nullptr, at(a).value + at(b).value, std::move(t), {}, {}};
    return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check_same_shape(a, b, "sub");
    Matrix t;
    if (with_tangents_) t = at(a).tangent - at(b).tangent;
    Node n{Op::Sub, a.index, b.index, 0.0, nullptr, at(a).value - at(b).value, std::move(t), {}, {}};
    return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    check_same_shape(a, b, "mul");
    const auto& va = at(a).value;
    const auto& vb = at(b).value;
    Matrix t;
    if (with_tangents_) {
        t = (at(a).tangent.array() * vb.array() + va.array() * at(b).tangent.array()).matrix();
    }
    Node n{Op::Mul, a.index, b.index, 0.0, nullptr, (va.array() * vb.array()).matrix(), std::move(t), {}, {}};
    return push(std::move(n));
}

NodeId Tape::add_row(NodeId a, NodeId bias) {
    const auto& va = at(a).value;
    const auto& vb = at(bias).value;
    if (vb.rows() != 1 || vb.cols() != va.cols()) throw Error(ErrorCode::ShapeMismatch, "add_row");
    Matrix v = va.rowwise() + vb.row(0);
    Matrix t;
    if (with_tangents_) t = at(a).tangent.rowwise() + at(bias).tangent.row(0);
    Node n{Op::AddRow, a.index, bias.index, 0.0, nullptr, std::move(v), std::move(t), {}, {}};
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId w) {
    const auto& va = at(a).value;
    const auto& vw = at(w).value;
    if (va.cols() != vw.rows()) throw Error(ErrorCode::ShapeMismatch, "matmul");
    Matrix v = va * vw;
    Matrix t;
    if (with_tangents_) t = at(a).tangent * vw + va * at(w).tangent;
    Node n{Op::MatMul, a.index, w.index, 0.0, nullptr, std::move(v), std::move(t), {}, {}};
    return push(std::move(n));
}

NodeId Tape::matmul_const(NodeId a, std::shared_ptr<const Matrix> m) {
    const auto& va = at(a).value;
    if (!m || va.cols() != m->rows()) throw Error(ErrorCode::ShapeMismatch, "matmul_const");
    Matrix v = va * (*m);
    Matrix t;
    if (with_tangents_) t = at(a).tangent * (*m);
    Node n{Op::MatMulConst, a.index, 0, 0.0, std::move(m), std::move(v), std::move(t), {}, {}};
    return push(std::move(n));
}

NodeId Tape::mul_const(NodeId a, std::shared_ptr<const Matrix> c) {
    const auto& va = at(a).value;
    if (!c || va.rows() != c->rows() || va.cols() != c->cols()) throw Error(ErrorCode::ShapeMismatch, "mul_const");
    Matrix v = (va.array() * c->array()).matrix();
    Matrix t;
    if (with_tangents_) t = (at(a).tangent.array() * c->array()).matrix();
    Node n{Op::MulConst, a.index, 0, 0.0, std::move(c), std::move(v), std::move(t), {}, {}};
    return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
    Matrix t;
    if (with_tangents_) t = c * at(a).tangent;
    return unary(Op::Scale, a, c, c * at(a).value, std::move(t));
}

NodeId Tape::add_scalar(NodeId a, double c) {
    Matrix t;
    if (with_tangents_) t = at(a).tangent;
    return unary(Op::AddScalar, a, c, (at(a).value.array() + c).matrix(), std::move(t));
}

NodeId Tape::exp(NodeId a) {
    Matrix v = at(a).value.array().exp().matrix();
    Matrix t;
    if (with_tangents_) t = (v.array() * at(a).tangent.array()).matrix();
    return unary(Op::Exp, a, 0.0, std::move(v), std::move(t));
}

NodeId Tape::log(NodeId a) {
    const auto& va = at(a).value;
    Matrix t;
    if (with_tangents_) t = (at(a).tangent.array() / va.array()).matrix();
    return unary(Op::Log, a, 0.0, va.array().log().matrix(), std::move(t));
}

NodeId Tape::pow(NodeId a, double p) {
    const auto& va = at(a).value;
    Matrix t;
    if (with_tangents_) t = (p * va.array().pow(p - 1.0) * at(a).tangent.array()).matrix();
    return unary(Op::Pow, a, p, va.array().pow(p).matrix(), std::move(t));
}

NodeId Tape::leaky_relu(NodeId a, double negative_slope) {
    const Array va = at(a).value.array();
    const Array slope = (va > 0.0).select(Array::Ones(va.rows(), va.cols()), negative_slope);
    Matrix t;
    if (with_tangents_) t = (slope * at(a).tangent.array()).matrix();
    return unary(Op::LeakyRelu, a, negative_slope, (va * slope).matrix(), std::move(t));
}

NodeId Tape::softplus(NodeId a) {
    const Array va = at(a).value.array();
    Matrix t;
    if (with_tangents_) t = (sigmoid_of(va) * at(a).tangent.array()).matrix();
    return unary(Op::Softplus, a, 0.0, softplus_of(va).matrix(), std::move(t));
}

NodeId Tape::sigmoid(NodeId a) {
    const Array s = sigmoid_of(at(a).value.array());
    Matrix t;
    if (with_tangents_) t = (s * (1.0 - s) * at(a).tangent.array()).matrix();
    return unary(Op::Sigmoid, a, 0.0, s.matrix(), std::move(t));
}

NodeId Tape::softmax_rows(NodeId a) {
    Matrix y = softmax_rows_of(at(a).value);
    Matrix t;
    if (with_tangents_) {
        const Matrix& ta = at(a).tangent;
        const Vector inner = (y.array() * ta.array()).rowwise().sum().matrix();
        t = (y.array() * (ta.colwise() - inner).array()).matrix();
    }
    return unary(Op::SoftmaxRows, a, 0.0, std::move(y), std::move(t));
}

NodeId Tape::row_dot(NodeId a, NodeId b) {
    check_same_shape(a, b, "row_dot");
    const auto& va = at(a).value;
    const auto& vb = at(b).value;
    Matrix v = (va.array() * vb.array()).rowwise().sum().matrix();
    Matrix t;
    if (with_tangents_) {
        t = (at(a).tangent.array() * vb.array() + va.array() * at(b).tangent.array()).rowwise().sum().matrix();
    }
    Node n{Op::RowDot, a.index, b.index, 0.0, nullptr, std::move(v), std::move(t), {}, {}};
    return push(std::move(n));
}

NodeId Tape::row_sum(NodeId a) {
    Matrix t;
    if (with_tangents_) t = at(a).tangent.rowwise().sum();
    return unary(Op::RowSum, a, 0.0, at(a).value.rowwise().sum(), std::move(t));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
    const auto& va = at(a).value;
    const auto& vb = at(b).value;
    if (va.rows() != vb.rows()) throw Error(ErrorCode::ShapeMismatch, "concat_cols");
    Matrix v(va.rows(), va.cols() + vb.cols());
    v << va, vb;
    Matrix t;
    if (with_tangents_) {
        t.resize(va.rows(), va.cols() + vb.cols());
        t << at(a).tangent, at(b).tangent;
    }
    Node n{Op::ConcatCols, a.index, b.index, 0.0, nullptr, std::move(v), std::move(t), {}, {}};
    return push(std::move(n));
}

NodeId Tape::sum_all(NodeId a) {
    Matrix t;
    if (with_tangents_) t = Matrix::Constant(1, 1, at(a).tangent.sum());
    return unary(Op::SumAll, a, 0.0, Matrix::Constant(1, 1, at(a).value.sum()), std::move(t));
}

NodeId Tape::mean_all(NodeId a) {
    const double count = static_cast<double>(at(a).value.size());
    Matrix t;
    if (with_tangents_) t = Matrix::Constant(1, 1, at(a).tangent.sum() / count);
    return unary(Op::MeanAll, a, 0.0, Matrix::Constant(1, 1, at(a).value.sum() / count), std::move(t));
}

void Tape::backward(NodeId root) {
    const auto& v = at(root).value;
    if (v.rows() != 1 || v.cols() != 1) throw Error(ErrorCode::ShapeMismatch, "backward root must be scalar");
    backward(root, Matrix::Ones(1, 1));
}

void Tape::backward(NodeId root, const Matrix& seed) {
    if (root.index >= nodes_.size()) throw Error(ErrorCode::InvalidArgument, "root not on tape");
    const auto& rv = at(root).value;
    if (seed.rows() != rv.rows() || seed.cols() != rv.cols()) throw Error(ErrorCode::ShapeMismatch, "seed shape");
    for (std::size_t i = 0; i <= root.index; ++i) {
        auto& n = nodes_[i];
        n.adjoint.setZero(n.value.rows(), n.value.cols());
        if (with_tangents_) n.adjoint_tangent.setZero(n.value.rows(), n.value.cols());
    }
    for (std::size_t i = root.index + 1; i < nodes_.size(); ++i) {
        nodes_[i].adjoint.resize(0, 0);
        nodes_[i].adjoint_tangent.resize(0, 0);
    }
    nodes_[root.index].adjoint = seed;
    for (std::size_t i = root.index + 1; i-- > 0;) propagate(i);
}

void Tape::propagate(std::size_t i) {
    Node& n = nodes_[i];
    if (n.op == Op::Leaf) return;
    const Matrix& ybar = n.adjoint;
    const bool tg = with_tangents_;
    const Matrix* ydot_bar = tg ? &n.adjoint_tangent : nullptr;
    Node& a = nodes_[n.a];

    switch (n.op) {
        case Op::Leaf: break;
        case Op::Add: {
            Node& b = nodes_[n.b];
            a.adjoint += ybar;
            b.adjoint += ybar;
            if (tg) {
                a.adjoint_tangent += *ydot_bar;
                b.adjoint_tangent += *ydot_bar;
            }
            break;
        }
        case Op::Sub: {
            Node& b = nodes_[n.b];
            a.adjoint += ybar;
            b.adjoint -= ybar;
            if (tg) {
                a.adjoint_tangent += *ydot_bar;
                b.adjoint_tangent -= *ydot_bar;
            }
            break;
        }
        case Op::Mul: {
            Node& b = nodes_[n.b];
            // Copies guard the a == b aliasing case.
            const Matrix va = a.value, vb = b.value;
            if (tg) {
                const Matrix ta = a.tangent, tb = b.tangent;
                a.adjoint_tangent += (ydot_bar->array() * vb.array() + ybar.array() * tb.array()).matrix();
                b.adjoint_tangent += (ydot_bar->array() * va.array() + ybar.array() * ta.array()).matrix();
            }
            a.adjoint += (ybar.array() * vb.array()).matrix();
            b.adjoint += (ybar.array() * va.array()).matrix();
            break;
        }
        case Op::AddRow: {
            Node& b = nodes_[n.b];
            a.adjoint += ybar;
            b.adjoint += ybar.colwise().sum();
            if (tg) {
                a.adjoint_tangent += *ydot_bar;
                b.adjoint_tangent += ydot_bar->colwise().sum();
            }
            break;
        }
        case Op::MatMul: {
            Node& w = nodes_[n.b];
            if (tg) {
                a.adjoint_tangent += *ydot_bar * w.value.transpose() + ybar * w.tangent.transpose();
                w.adjoint_tangent += a.tangent.transpose() * ybar + a.value.transpose() * (*ydot_bar);
            }
            a.adjoint += ybar * w.value.transpose();
            w.adjoint += a.value.transpose() * ybar;
            break;
        }
        case Op::MatMulConst: {
            a.adjoint += ybar * n.constant->transpose();
            if (tg) a.adjoint_tangent += *ydot_bar * n.constant->transpose();
            break;
        }
        case Op::MulConst: {
            a.adjoint += (ybar.array() * n.constant->array()).matrix();
            if (tg) a.adjoint_tangent += (ydot_bar->array() * n.constant->array()).matrix();
            break;
        }
        case Op::Scale: {
            a.adjoint += n.param * ybar;
            if (tg) a.adjoint_tangent += n.param * (*ydot_bar);
            break;
        }
        case Op::AddScalar:
        case Op::RowSum: {
            if (n.op == Op::AddScalar) {
                a.adjoint += ybar;
                if (tg) a.adjoint_tangent += *ydot_bar;
            } else {
                a.adjoint += ybar.replicate(1, a.value.cols());
                if (tg) a.adjoint_tangent += ydot_bar->replicate(1, a.value.cols());
            }
            break;
        }
        case Op::Exp:
        case Op::Log:
        case Op::Pow:
        case Op::LeakyRelu:
        case Op::Softplus:
        case Op::Sigmoid: {
            const Array x = a.value.array();
            Array d1, d2;
            switch (n.op) {
                case Op::Exp:
                    d1 = n.value.array();
                    d2 = d1;
                    break;
                case Op::Log:
                    d1 = x.inverse();
                    d2 = -d1.square();
                    break;
                case Op::Pow:
                    d1 = n.param * x.pow(n.param - 1.0);
                    d2 = n.param * (n.param - 1.0) * x.pow(n.param - 2.0);
                    break;
                case Op::LeakyRelu:
                    d1 = (x > 0.0).select(Array::Ones(x.rows(), x.cols()), n.param);
                    d2 = Array::Zero(x.rows(), x.cols());
                    break;
                case Op::Softplus: {
                    d1 = sigmoid_of(x);
                    d2 = d1 * (1.0 - d1);
                    break;
                }
                case Op::Sigmoid: {
                    const Array s = n.value.array();
                    d1 = s * (1.0 - s);
                    d2 = d1 * (1.0 - 2.0 * s);
                    break;
                }
                default: break;
            }
            if (tg) {
                a.adjoint_tangent += (ydot_bar->array() * d1 + ybar.array() * d2 * a.tangent.array()).matrix();
            }
            a.adjoint += (ybar.array() * d1).matrix();
            break;
        }
        case Op::SoftmaxRows: {
            const Matrix& y = n.value;
            const Vector s = (ybar.array() * y.array()).rowwise().sum().matrix();
            if (tg) {
                const Matrix& ydot = n.tangent;
                const Vector sdot =
                    ((ydot_bar->array() * y.array()) + (ybar.array() * ydot.array())).rowwise().sum().matrix();
                a.adjoint_tangent += (ydot.array() * (ybar.colwise() - s).array() +
                                      y.array() * (ydot_bar->colwise() - sdot).array())
                                         .matrix();
            }
            a.adjoint += (y.array() * (ybar.colwise() - s).array()).matrix();
            break;
        }
        case Op::RowDot: {
            Node& b = nodes_[n.b];
            const Matrix va = a.value, vb = b.value;
            const Index c = va.cols();
            const Matrix yb = ybar.replicate(1, c);
            if (tg) {
                const Matrix ta = a.tangent, tb = b.tangent;
                const Matrix ydb = ydot_bar->replicate(1, c);
                a.adjoint_tangent += (ydb.array() * vb.array() + yb.array() * tb.array()).matrix();
                b.adjoint_tangent += (ydb.array() * va.array() + yb.array() * ta.array()).matrix();
            }
            a.adjoint += (yb.array() * vb.array()).matrix();
            b.adjoint += (yb.array() * va.array()).matrix();
            break;
        }
        case Op::ConcatCols: {
            Node& b = nodes_[n.b];
            const Index ca = a.value.cols();
            const Index cb = b.value.cols();
            a.adjoint += ybar.leftCols(ca);
            b.adjoint += ybar.rightCols(cb);
            if (tg) {
                a.adjoint_tangent += ydot_bar->leftCols(ca);
                b.adjoint_tangent += ydot_bar->rightCols(cb);
            }
            break;
        }
        case Op::SumAll:
        case Op::MeanAll: {
            const double scale = n.op == Op::SumAll ? 1.0 : 1.0 / static_cast<double>(a.value.size());
            a.adjoint.array() += scale * ybar(0, 0);
            if (tg) a.adjoint_tangent.array() += scale * (*ydot_bar)(0, 0);
            break;
        }
    }
}

}  // namespace pgdpo
