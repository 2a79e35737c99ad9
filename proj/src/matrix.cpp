#include "cfaa/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace cfaa::nd {

namespace {

void require_finite(const Eigen::MatrixXd& m) {
    if (!m.allFinite()) {
        throw std::invalid_argument("matrix construction: non-finite entry");
    }
}

} // namespace

Matrix::Matrix(Index rows, Index cols, std::span<const double> row_major) {
    if (rows < 0 || cols < 0 ||
        static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != row_major.size()) {
        throw std::invalid_argument("matrix construction: rows*cols does not match data length");
    }
    m_.resize(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m_(i, j) = row_major[static_cast<std::size_t>(i * cols + j)];
        }
    }
    require_finite(m_);
}

Matrix::Matrix(Index rows, Index cols, std::initializer_list<double> row_major)
    : Matrix(rows, cols, std::span<const double>(row_major.begin(), row_major.size())) {}

Matrix Matrix::from_eigen(Eigen::MatrixXd m) {
    require_finite(m);
    return unchecked(std::move(m));
}

Matrix Matrix::constant(Index rows, Index cols, double v) {
    if (!std::isfinite(v)) {
        throw std::invalid_argument("matrix construction: non-finite entry");
    }
    return unchecked(Eigen::MatrixXd::Constant(rows, cols, v));
}

std::vector<double> Matrix::row_major() const {
    std::vector<double> out(static_cast<std::size_t>(m_.size()));
    for (Index i = 0; i < m_.rows(); ++i) {
        for (Index j = 0; j < m_.cols(); ++j) {
            out[static_cast<std::size_t>(i * m_.cols() + j)] = m_(i, j);
        }
    }
    return out;
}

std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

EigPair sym_eig(const Matrix& s, double sym_tol) {
    const Eigen::MatrixXd& a = s.mat();
    if (a.rows() != a.cols()) {
        throw std::invalid_argument("sym_eig: matrix is not square (" + shape_string(s) + ")");
    }
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (asym > sym_tol * scale) {
        throw std::invalid_argument("sym_eig: matrix asymmetry " + std::to_string(asym) +
                                    " exceeds tolerance");
    }
    Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("sym_eig: eigensolver failed to converge");
    }
    EigPair out;
    out.eigenvalues = Matrix::from_eigen(solver.eigenvalues());
    out.eigenvectors = Matrix::from_eigen(solver.eigenvectors());
    return out;
}

Matrix psd_function(const Matrix& s, PsdFn fn, double tol) {
    EigPair eig = sym_eig(s);
    Eigen::VectorXd lam = eig.eigenvalues.mat().col(0);
    const Index n = lam.size();
    const double lam_max = (n > 0) ? lam.maxCoeff() : 0.0;
    const double neg_tol = tol * std::max(lam_max, 1.0);
    if (n > 0 && lam.minCoeff() < -neg_tol) {
        throw std::domain_error("psd_function: eigenvalue " + std::to_string(lam.minCoeff()) +
                                " below PSD tolerance");
    }
    const double cut = tol * std::max(lam_max, 0.0);
    Eigen::VectorXd mapped(n);
    for (Index i = 0; i < n; ++i) {
        const double l = std::max(lam(i), 0.0);
        switch (fn) {
        case PsdFn::Sqrt:
            mapped(i) = std::sqrt(l);
            break;
        case PsdFn::Pinv:
            mapped(i) = (l > cut && l > 0.0) ? 1.0 / l : 0.0;
            break;
        case PsdFn::PinvSqrt:
            mapped(i) = (l > cut && l > 0.0) ? 1.0 / std::sqrt(l) : 0.0;
            break;
        }
    }
    const Eigen::MatrixXd& v = eig.eigenvectors.mat();
    return Matrix::from_eigen(v * mapped.asDiagonal() * v.transpose());
}

} // namespace cfaa::nd
