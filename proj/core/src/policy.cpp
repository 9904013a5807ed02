#include "pgdpo/policy.hpp"

#include "pgdpo/errors.hpp"

#include <cmath>
#include <limits>

namespace pgdpo {

namespace {

constexpr double kLeakySlope = 0.01;

// Bias so that softplus(bias) = 0.5.
const double kConsumptionBias = std::log(std::expm1(0.5));

Matrix leaky(const Matrix& a) {
    return a.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
}

}  // namespace

const char* to_string(HeadKind kind) noexcept {
    switch (kind) {
        case HeadKind::Identity: return "identity";
        case HeadKind::Simplex: return "simplex";
        case HeadKind::Positive: return "positive";
        case HeadKind::Bounded: return "bounded";
    }
    return "unknown";
}

HeadKind head_from_string(const std::string& name) {
    if (name == "identity") return HeadKind::Identity;
    if (name == "simplex") return HeadKind::Simplex;
    if (name == "positive") return HeadKind::Positive;
    if (name == "bounded") return HeadKind::Bounded;
    throw Error(ErrorCode::InvalidArgument, "unknown head kind '" + name + "'");
}

Index NetShape::output_dim() const {
    switch (head) {
        case HeadKind::Identity: return assets;
        case HeadKind::Simplex: return assets + 1;
        case HeadKind::Positive:
        case HeadKind::Bounded: return 1;
    }
    return 1;
}

Index NetShape::param_count() const {
    const Index out = output_dim();
    return 2 * hidden1 + hidden1 + hidden1 * hidden2 + hidden2 + hidden2 * out + out;
}

PolicyNet::PolicyNet(const NetShape& shape) : shape_(shape) {
    if (shape.hidden1 < 1 || shape.hidden2 < 1) throw Error(ErrorCode::InvalidArgument, "hidden width must be >= 1");
    if ((shape.head == HeadKind::Identity || shape.head == HeadKind::Simplex) && shape.assets < 1) {
        throw Error(ErrorCode::InvalidArgument, "investment head needs at least one asset");
    }
    if (!(shape.horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    if (shape.head == HeadKind::Bounded && !(shape.c_max > shape.c_min && shape.c_min >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "bounded head needs 0 <= c_min < c_max");
    }
    params_ = Vector::Zero(shape.param_count());
}

std::array<PolicyNet::Layout, 6> PolicyNet::layout() const {
    const Index h1 = shape_.hidden1, h2 = shape_.hidden2, out = shape_.output_dim();
    std::array<Layout, 6> l{{{2, h1, 0}, {1, h1, 0}, {h1, h2, 0}, {1, h2, 0}, {h2, out, 0}, {1, out, 0}}};
    Index offset = 0;
    for (auto& b : l) {
        b.offset = offset;
        offset += b.rows * b.cols;
    }
    return l;
}

Matrix PolicyNet::block(int i) const {
    const auto b = layout()[static_cast<std::size_t>(i)];
    return Eigen::Map<const Matrix>(params_.data() + b.offset, b.rows, b.cols);
}

void PolicyNet::set_params(const Vector& p) {
    if (p.size() != params_.size()) throw Error(ErrorCode::ShapeMismatch, "parameter vector size");
    params_ = p;
}

void PolicyNet::init_params(std::uint64_t seed, std::uint32_t role) {
    Stream rng(seed, StreamTag::PolicyInit, role);
    const auto l = layout();
    params_.setZero();
    for (int i = 0; i < 6; i += 2) {
        const auto& w = l[static_cast<std::size_t>(i)];
        const double fan_in = static_cast<double>(w.rows);
        const double scale = i < 4 ? std::sqrt(2.0 / fan_in) : std::sqrt(1.0 / fan_in);
        for (Index k = 0; k < w.rows * w.cols; ++k) params_(w.offset + k) = scale * rng.normal();
    }
    if (shape_.head == HeadKind::Positive) params_(l[5].offset) = kConsumptionBias;
}

Matrix PolicyNet::forward(const Vector& t, const Vector& x) const {
    if (t.size() != x.size()) throw Error(ErrorCode::ShapeMismatch, "forward: t and x sizes differ");
    Matrix in(t.size(), 2);
    in.col(0) = t / shape_.horizon;
    in.col(1) = x;
    Matrix h = leaky((in * block(0)).rowwise() + block(1).row(0));
    h = leaky((h * block(2)).rowwise() + block(3).row(0));
    Matrix z = (h * block(4)).rowwise() + block(5).row(0);
    switch (shape_.head) {
        case HeadKind::Identity: return z;
        case HeadKind::Simplex: {
            for (Index i = 0; i < z.rows(); ++i) {
                const double mx = z.row(i).maxCoeff();
                z.row(i) = (z.row(i).array() - mx).exp().matrix();
                z.row(i) /= z.row(i).sum();
            }
            return z;
        }
        case HeadKind::Positive:
            return z.unaryExpr([](double v) {
                return std::max(std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))),
                                std::numeric_limits<double>::min());
            });
        case HeadKind::Bounded: {
            const double lo = shape_.c_min, span = shape_.c_max - shape_.c_min;
            return z.unaryExpr([lo, span](double v) {
                const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                return lo + span * s;
            });
        }
    }
    return z;
}

Matrix PolicyNet::forward(double t, double x) const {
    return forward(Vector::Constant(1, t), Vector::Constant(1, x));
}

ParamNodes PolicyNet::bind(Tape& tape) const {
    ParamNodes p;
    for (int i = 0; i < 6; ++i) p.nodes[static_cast<std::size_t>(i)] = tape.variable(block(i));
    return p;
}

NodeId PolicyNet::forward(Tape& tape, const ParamNodes& p, const Vector& t, NodeId x) const {
    const auto t_node = tape.constant(t / shape_.horizon);
    const auto in = tape.concat_cols(t_node, x);
    auto h = tape.leaky_relu(tape.add_row(tape.matmul(in, p.nodes[0]), p.nodes[1]), kLeakySlope);
    h = tape.leaky_relu(tape.add_row(tape.matmul(h, p.nodes[2]), p.nodes[3]), kLeakySlope);
    const auto z = tape.add_row(tape.matmul(h, p.nodes[4]), p.nodes[5]);
    switch (shape_.head) {
        case HeadKind::Identity: return z;
        case HeadKind::Simplex: return tape.softmax_rows(z);
        case HeadKind::Positive: return tape.softplus(z);
        case HeadKind::Bounded:
            return tape.add_scalar(tape.scale(tape.sigmoid(z), shape_.c_max - shape_.c_min), shape_.c_min);
    }
    return z;
}

Vector PolicyNet::gradient(const Tape& tape, const ParamNodes& p) const {
    Vector g(params_.size());
    const auto l = layout();
    for (std::size_t i = 0; i < 6; ++i) {
        const Matrix& a = tape.adjoint(p.nodes[i]);
        g.segment(l[i].offset, l[i].rows * l[i].cols) = Eigen::Map<const Vector>(a.data(), a.size());
    }
    return g;
}

}  // namespace pgdpo
