#include "pgdpo/linalg.hpp"

#include "pgdpo/errors.hpp"

#include <cmath>
#include <string>

namespace pgdpo {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::DegenerateMarket: return "DegenerateMarket";
        case ErrorCode::HorizonExhausted: return "HorizonExhausted";
        case ErrorCode::OracleDiverged: return "OracleDiverged";
        case ErrorCode::DomainError: return "DomainError";
        case ErrorCode::SingularJacobian: return "SingularJacobian";
        case ErrorCode::NoFeasibleCertificate: return "NoFeasibleCertificate";
        case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
        case ErrorCode::UtilityOverflow: return "UtilityOverflow";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
    }
    return "Unknown";
}

SpdMatrix::SpdMatrix(const Matrix& entries) {
    if (entries.rows() != entries.cols() || entries.rows() < 1) {
        throw Error(ErrorCode::ShapeMismatch, "SpdMatrix requires a non-empty square matrix");
    }
    entries_ = entries;
    const Index n = entries_.rows();
    for (Index j = 0; j < n; ++j) {
        for (Index i = j + 1; i < n; ++i) entries_(i, j) = entries_(j, i);
    }
}

SpdMatrix SpdMatrix::identity(Index n) { return SpdMatrix(Matrix::Identity(n, n)); }

SpdMatrix SpdMatrix::diagonal(const Vector& d) { return SpdMatrix(Matrix(d.asDiagonal())); }

const Matrix& SpdMatrix::factor() const {
    auto cached = std::atomic_load(&factor_);
    if (!cached) {
        cached = std::make_shared<const Matrix>(cholesky_factor(entries_));
        std::atomic_store(&factor_, cached);
    }
    return *cached;
}

Matrix cholesky_factor(const Matrix& a) {
    const Index n = a.rows();
    if (n < 1 || a.cols() != n) {
        throw Error(ErrorCode::ShapeMismatch, "cholesky_factor requires a non-empty square matrix");
    }
    const double pivot_floor = 1e-14 * a.diagonal().cwiseAbs().maxCoeff();
    Matrix lower = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        const double d = a(j, j) - lower.row(j).head(j).squaredNorm();
        if (!(d > pivot_floor)) {
            throw Error(ErrorCode::NotPositiveDefinite,
                        "pivot " + std::to_string(d) + " at column " + std::to_string(j));
        }
        const double ljj = std::sqrt(d);
        lower(j, j) = ljj;
        const Index rest = n - j - 1;
        if (rest > 0) {
            lower.col(j).tail(rest) =
                (a.col(j).tail(rest) - lower.bottomLeftCorner(rest, j) * lower.row(j).head(j).transpose()) / ljj;
        }
    }
    return lower;
}

Matrix cholesky_factor(const SpdMatrix& a) { return a.factor(); }

Vector solve_with_factor(const Matrix& lower, const Vector& b) {
    if (b.size() != lower.rows()) throw Error(ErrorCode::ShapeMismatch, "solve: rhs size mismatch");
    Vector y = lower.triangularView<Eigen::Lower>().solve(b);
    return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

Vector solve_spd(const SpdMatrix& a, const Vector& b) { return solve_with_factor(a.factor(), b); }

std::optional<Vector> solve_dense(const Matrix& a, const Vector& b) {
    Eigen::PartialPivLU<Matrix> lu(a);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-15)) return std::nullopt;
    Vector x = lu.solve(b);
    if (!x.allFinite()) return std::nullopt;
    return x;
}

double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

}  // namespace pgdpo
