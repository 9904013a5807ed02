#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>

namespace pgdpo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Symmetric positive-definite matrix. Only the upper triangle of the input is
/// read; the lower triangle is mirrored so that A(i,j) == A(j,i) bit-exactly.
/// The Cholesky factor is computed on first use and cached.
class SpdMatrix {
public:
    SpdMatrix() = default;
    explicit SpdMatrix(const Matrix& entries);

    static SpdMatrix identity(Index n);
    static SpdMatrix diagonal(const Vector& d);

    Index dim() const noexcept { return entries_.rows(); }
    const Matrix& entries() const noexcept { return entries_; }
    double operator()(Index i, Index j) const { return entries_(i, j); }

    /// Lower-triangular L with L L^T = A. Throws Error(NotPositiveDefinite).
    const Matrix& factor() const;

private:
    Matrix entries_;
    mutable std::shared_ptr<const Matrix> factor_;
};

/// Cholesky factorization. A pivot <= 1e-14 * max|diag(A)| is rejected.
Matrix cholesky_factor(const Matrix& a);
Matrix cholesky_factor(const SpdMatrix& a);

/// Solves A x = b using the cached factor of A.
Vector solve_spd(const SpdMatrix& a, const Vector& b);

/// Solves L L^T x = b for a precomputed lower-triangular factor.
Vector solve_with_factor(const Matrix& lower, const Vector& b);

/// Dense LU solve with partial pivoting; empty when the matrix is numerically singular.
std::optional<Vector> solve_dense(const Matrix& a, const Vector& b);

double max_abs(const Matrix& a);

}  // namespace pgdpo
