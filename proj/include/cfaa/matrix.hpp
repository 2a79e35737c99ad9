#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cfaa::nd {

using Index = Eigen::Index;

/// Dense 64-bit real matrix. Construction from external data rejects
/// non-finite entries, so everything downstream can assume finite values.
class Matrix {
public:
    Matrix() = default;

    /// Zero-initialized rows x cols.
    Matrix(Index rows, Index cols) : m_(Eigen::MatrixXd::Zero(rows, cols)) {}

    /// Row-major data, checked for shape and finiteness.
    Matrix(Index rows, Index cols, std::span<const double> row_major);
    Matrix(Index rows, Index cols, std::initializer_list<double> row_major);

    /// Adopts an Eigen matrix, checked for finiteness.
    static Matrix from_eigen(Eigen::MatrixXd m);

    static Matrix zeros(Index rows, Index cols) { return Matrix(rows, cols); }
    static Matrix identity(Index n) { return unchecked(Eigen::MatrixXd::Identity(n, n)); }
    static Matrix constant(Index rows, Index cols, double v);

    Index rows() const { return m_.rows(); }
    Index cols() const { return m_.cols(); }
    Index size() const { return m_.size(); }

    double operator()(Index i, Index j) const { return m_(i, j); }
    double& operator()(Index i, Index j) { return m_(i, j); }

    const Eigen::MatrixXd& mat() const { return m_; }
    Eigen::MatrixXd& mat() { return m_; }

    /// Row-major copy of the payload (serialization order).
    std::vector<double> row_major() const;

    bool all_finite() const { return m_.allFinite(); }

private:
    // Internal results of checked arithmetic skip revalidation.
    static Matrix unchecked(Eigen::MatrixXd m) {
        Matrix r;
        r.m_ = std::move(m);
        return r;
    }

    Eigen::MatrixXd m_;
};

/// Eigendecomposition of a symmetric matrix: ascending eigenvalues (D x 1)
/// and the matching orthonormal eigenvectors as columns (D x D).
struct EigPair {
    Matrix eigenvalues;
    Matrix eigenvectors;
};

/// Factor a symmetric matrix. The input must be symmetric within `sym_tol`
/// (relative, floored at 1); it is symmetrized as (S + S^T)/2 before
/// factoring. Reconstruction V diag(l) V^T matches the symmetrized input to
/// 1e-10 relative Frobenius error.
EigPair sym_eig(const Matrix& s, double sym_tol = 1e-10);

enum class PsdFn : std::uint8_t { Sqrt, Pinv, PinvSqrt };

/// Spectral map of a symmetric PSD matrix: V f(clamp(l)) V^T.
/// Eigenvalues below -tol*max(l_max, 1) raise a domain error; small
/// negatives are clamped to zero. Under Pinv/PinvSqrt, eigenvalues at or
/// below tol relative to the largest are mapped to zero.
Matrix psd_function(const Matrix& s, PsdFn fn, double tol = 1e-8);

std::string shape_string(const Matrix& m);

} // namespace cfaa::nd
