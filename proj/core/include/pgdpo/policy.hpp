#pragma once

#include "pgdpo/linalg.hpp"
#include "pgdpo/random.hpp"
#include "pgdpo/tape.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace pgdpo {

enum class HeadKind {
    Identity,  // n raw outputs; risk-free weight implied as 1 - sum
    Simplex,   // n + 1 softmax outputs, index 0 is the risk-free weight
    Positive,  // softplus scalar
    Bounded,   // c_min + (c_max - c_min) * sigmoid
};

const char* to_string(HeadKind kind) noexcept;
HeadKind head_from_string(const std::string& name);

struct NetShape {
    HeadKind head = HeadKind::Positive;
    Index assets = 1;
    Index hidden1 = 200;
    Index hidden2 = 200;
    double horizon = 1.0;  // inputs are scaled as (t / horizon, X)
    double c_min = 0.0;
    double c_max = 1.0;

    Index output_dim() const;
    Index param_count() const;
    bool operator==(const NetShape&) const = default;
};

/// Leaf nodes holding one network's parameters on a tape.
struct ParamNodes {
    std::array<NodeId, 6> nodes{};  // W1, b1, W2, b2, W3, b3
};

/// Two-hidden-layer leaky-ReLU network with a constraint-enforcing head.
/// Parameters are stored flat in layer order W1, b1, W2, b2, W3, b3, each weight
/// matrix column-major with shape (fan_in x fan_out).
class PolicyNet {
public:
    PolicyNet() = default;
    explicit PolicyNet(const NetShape& shape);

    /// He-scaled normal weights, zero biases, consumption heads biased to output ~0.5.
    void init_params(std::uint64_t seed, std::uint32_t role);

    const NetShape& shape() const noexcept { return shape_; }
    Index param_count() const noexcept { return params_.size(); }
    const Vector& params() const noexcept { return params_; }
    Vector& params() noexcept { return params_; }
    void set_params(const Vector& p);

    /// Batch forward without recording: t and x have one entry per row.
    Matrix forward(const Vector& t, const Vector& x) const;
    Matrix forward(double t, double x) const;

    ParamNodes bind(Tape& tape) const;
    /// Records the forward pass; `t` is treated as a constant, `x` is a tape node (B x 1).
    NodeId forward(Tape& tape, const ParamNodes& p, const Vector& t, NodeId x) const;
    /// Flattens the adjoints of bound parameters into a vector matching params().
    Vector gradient(const Tape& tape, const ParamNodes& p) const;

private:
    struct Layout {
        Index rows, cols, offset;
    };
    std::array<Layout, 6> layout() const;
    Matrix block(int i) const;

    NetShape shape_;
    Vector params_;
};

}  // namespace pgdpo
