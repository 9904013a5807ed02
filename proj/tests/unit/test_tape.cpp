#include "pgdpo/tape.hpp"

#include "pgdpo/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

using namespace pgdpo;

namespace {

// A recorded computation mapping leaf matrices to a non-scalar output.
using Builder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

struct Case {
    std::string name;
    std::vector<std::pair<Index, Index>> shapes;
    Builder build;
    bool positive_inputs = false;
};

Matrix random_matrix(Stream& rng, Index r, Index c, bool positive) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = positive ? rng.uniform(0.3, 2.0) : rng.uniform(-2.0, 2.0);
    return m;
}

// Reduces the output to a scalar with fixed random weights so every output
// entry contributes to the root.
double evaluate(const Case& c, const std::vector<Matrix>& inputs, const Matrix& weights, Tape* keep = nullptr,
                std::vector<NodeId>* leaves = nullptr, const std::vector<Matrix>* tangents = nullptr) {
    Tape local(tangents != nullptr);
    Tape& tape = keep ? *keep : local;
    std::vector<NodeId> ids;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        ids.push_back(tape.variable(inputs[i]));
        if (tangents) tape.set_tangent(ids.back(), (*tangents)[i]);
    }
    const NodeId out = c.build(tape, ids);
    const NodeId root = tape.sum_all(tape.mul_const(out, std::make_shared<Matrix>(weights)));
    if (leaves) *leaves = ids;
    if (keep) tape.backward(root);
    return tape.value(root)(0, 0);
}

std::vector<Case> cases() {
    return {
        {"add", {{3, 4}, {3, 4}}, [](Tape& t, const auto& v) { return t.add(v[0], v[1]); }},
        {"sub", {{3, 4}, {3, 4}}, [](Tape& t, const auto& v) { return t.sub(v[0], v[1]); }},
        {"mul", {{3, 4}, {3, 4}}, [](Tape& t, const auto& v) { return t.mul(v[0], v[1]); }},
        {"square", {{3, 4}}, [](Tape& t, const auto& v) { return t.mul(v[0], v[0]); }},
        {"exp", {{3, 4}}, [](Tape& t, const auto& v) { return t.exp(v[0]); }},
        {"log", {{3, 4}}, [](Tape& t, const auto& v) { return t.log(v[0]); }, true},
        {"pow", {{3, 4}}, [](Tape& t, const auto& v) { return t.pow(v[0], -1.7); }, true},
        {"leaky_relu", {{3, 4}}, [](Tape& t, const auto& v) { return t.leaky_relu(v[0]); }},
        {"softplus", {{3, 4}}, [](Tape& t, const auto& v) { return t.softplus(v[0]); }},
        {"sigmoid", {{3, 4}}, [](Tape& t, const auto& v) { return t.sigmoid(v[0]); }},
        {"softmax", {{3, 5}}, [](Tape& t, const auto& v) { return t.softmax_rows(v[0]); }},
        {"row_dot", {{3, 4}, {3, 4}}, [](Tape& t, const auto& v) { return t.row_dot(v[0], v[1]); }},
        {"matvec", {{3, 4}, {4, 1}}, [](Tape& t, const auto& v) { return t.matmul(v[0], v[1]); }},
        {"matmul", {{3, 4}, {4, 2}}, [](Tape& t, const auto& v) { return t.matmul(v[0], v[1]); }},
        {"add_row", {{3, 4}, {1, 4}}, [](Tape& t, const auto& v) { return t.add_row(v[0], v[1]); }},
        {"row_sum", {{3, 4}}, [](Tape& t, const auto& v) { return t.row_sum(v[0]); }},
        {"concat", {{3, 2}, {3, 1}}, [](Tape& t, const auto& v) { return t.concat_cols(v[0], v[1]); }},
        {"mean_all", {{3, 4}}, [](Tape& t, const auto& v) { return t.mean_all(v[0]); }},
        {"scale_shift", {{3, 4}}, [](Tape& t, const auto& v) { return t.add_scalar(t.scale(v[0], -1.3), 0.4); }},
        {"matmul_const", {{3, 4}},
         [](Tape& t, const auto& v) {
             auto m = std::make_shared<Matrix>(4, 2);
             *m << 1, -2, 0.5, 3, -1, 0.25, 2, 1;
             return t.matmul_const(v[0], m);
         }},
        {"composite", {{3, 2}, {2, 5}, {1, 5}},
         [](Tape& t, const auto& v) {
             const NodeId h = t.leaky_relu(t.add_row(t.matmul(v[0], v[1]), v[2]));
             return t.mul(t.softmax_rows(h), t.exp(t.scale(h, 0.3)));
         }},
    };
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

}  // namespace

TEST(TapeBasics, ProductRule) {
    Tape tape;
    const NodeId x = tape.scalar(3.0);
    const NodeId y = tape.scalar(4.0);
    const NodeId z = tape.mul(x, y);
    tape.backward(z);
    EXPECT_EQ(tape.adjoint(x)(0, 0), 4.0);
    EXPECT_EQ(tape.adjoint(y)(0, 0), 3.0);
    EXPECT_EQ(tape.adjoint(z)(0, 0), 1.0);
}

TEST(TapeBasics, ExpAtZero) {
    Tape tape;
    const NodeId x = tape.scalar(0.0);
    tape.backward(tape.exp(x));
    EXPECT_EQ(tape.adjoint(x)(0, 0), 1.0);
}

TEST(TapeBasics, SoftmaxSurvivesLargeLogits) {
    Tape tape;
    Matrix logits(1, 3);
    logits << 1000.0, 999.0, -1000.0;
    const NodeId y = tape.softmax_rows(tape.variable(logits));
    EXPECT_TRUE(tape.value(y).allFinite());
    EXPECT_NEAR(tape.value(y).sum(), 1.0, 1e-15);
}

TEST(TapeBasics, ShapeMismatchThrows) {
    Tape tape;
    const NodeId a = tape.variable(Matrix::Ones(2, 2));
    const NodeId b = tape.variable(Matrix::Ones(3, 2));
    EXPECT_ANY_THROW(tape.add(a, b));
    EXPECT_ANY_THROW(tape.matmul(a, b));
}

TEST(TapeGradients, PrimitivesMatchCentralDifferences) {
    const double h = 1e-6;
    for (const auto& c : cases()) {
        Stream rng(11, StreamTag::Eval, 1, static_cast<std::uint32_t>(std::hash<std::string>{}(c.name) & 0xffff));
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<Matrix> inputs;
            for (auto [r, col] : c.shapes) inputs.push_back(random_matrix(rng, r, col, c.positive_inputs));
            Tape probe;
            std::vector<NodeId> ids;
            for (auto& in : inputs) ids.push_back(probe.variable(in));
            const Matrix& out = probe.value(c.build(probe, ids));
            const Matrix weights = random_matrix(rng, out.rows(), out.cols(), false);

            Tape tape;
            std::vector<NodeId> leaves;
            evaluate(c, inputs, weights, &tape, &leaves);
            for (std::size_t k = 0; k < inputs.size(); ++k) {
                for (Index e = 0; e < inputs[k].size(); ++e) {
                    auto plus = inputs, minus = inputs;
                    plus[k].data()[e] += h;
                    minus[k].data()[e] -= h;
                    const double fd = (evaluate(c, plus, weights) - evaluate(c, minus, weights)) / (2 * h);
                    worst = std::max(worst, rel_err(tape.adjoint(leaves[k]).data()[e], fd));
                }
            }
        }
        EXPECT_LE(worst, 1e-5) << c.name;
    }
}

TEST(TapeGradients, ForwardOverReverseMatchesDifferencedAdjoints) {
    const double h = 1e-6;
    for (const auto& c : cases()) {
        Stream rng(12, StreamTag::Eval, 2, static_cast<std::uint32_t>(std::hash<std::string>{}(c.name) & 0xffff));
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<Matrix> inputs, dirs;
            for (auto [r, col] : c.shapes) {
                inputs.push_back(random_matrix(rng, r, col, c.positive_inputs));
                dirs.push_back(random_matrix(rng, r, col, false) * 0.1);
            }
            Tape probe;
            std::vector<NodeId> ids;
            for (auto& in : inputs) ids.push_back(probe.variable(in));
            const Matrix& out = probe.value(c.build(probe, ids));
            const Matrix weights = random_matrix(rng, out.rows(), out.cols(), false);

            Tape tape(true);
            std::vector<NodeId> leaves;
            evaluate(c, inputs, weights, &tape, &leaves, &dirs);

            auto shifted = [&](double s) {
                auto moved = inputs;
                for (std::size_t k = 0; k < moved.size(); ++k) moved[k] += s * dirs[k];
                Tape t2;
                std::vector<NodeId> l2;
                evaluate(c, moved, weights, &t2, &l2);
                std::vector<Matrix> adj;
                for (auto id : l2) adj.push_back(t2.adjoint(id));
                return adj;
            };
            const auto up = shifted(h);
            const auto down = shifted(-h);
            for (std::size_t k = 0; k < inputs.size(); ++k) {
                for (Index e = 0; e < inputs[k].size(); ++e) {
                    const double fd = (up[k].data()[e] - down[k].data()[e]) / (2 * h);
                    worst = std::max(worst, rel_err(tape.adjoint_tangent(leaves[k]).data()[e], fd));
                }
            }
        }
        EXPECT_LE(worst, 1e-5) << c.name;
    }
}

TEST(TapeGradients, BackwardIsDeterministic) {
    const auto all = cases();
    const auto& c = all.back();
    Stream rng(5, StreamTag::Eval, 3);
    std::vector<Matrix> inputs;
    for (auto [r, col] : c.shapes) inputs.push_back(random_matrix(rng, r, col, false));
    const Matrix weights = Matrix::Constant(3, 5, 0.7);
    Tape a, b;
    std::vector<NodeId> la, lb;
    evaluate(c, inputs, weights, &a, &la);
    evaluate(c, inputs, weights, &b, &lb);
    for (std::size_t k = 0; k < la.size(); ++k) {
        EXPECT_TRUE((a.adjoint(la[k]).array() == b.adjoint(lb[k]).array()).all());
        EXPECT_TRUE(a.adjoint(la[k]).allFinite());
    }
}
