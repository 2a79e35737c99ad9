#include "cfaa/subspace.hpp"

#include <cmath>
#include <stdexcept>

namespace cfaa::subspace {

namespace {

// Inverse with a residual check; on failure the diagonal is jittered by
// 1e-10 and the inversion retried once.
Eigen::MatrixXd invert_checked(const Eigen::MatrixXd& a) {
    auto attempt = [](const Eigen::MatrixXd& m) -> std::pair<Eigen::MatrixXd, double> {
        Eigen::MatrixXd inv = m.inverse();
        if (!inv.allFinite()) {
            return {inv, std::numeric_limits<double>::infinity()};
        }
        const nd::Index d = m.rows();
        double resid = (m * inv - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
        return {inv, resid};
    };
    auto [inv, resid] = attempt(a);
    if (resid <= 1e-6) {
        return inv;
    }
    Eigen::MatrixXd jittered = a;
    jittered.diagonal().array() += 1e-10;
    auto [inv2, resid2] = attempt(jittered);
    if (resid2 <= 1e-6) {
        return inv2;
    }
    throw std::runtime_error("solve_self_expression: gram matrix is numerically singular");
}

Eigen::MatrixXd inverse_sqrt_spd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("solve_self_expression: eigensolver failed");
    }
    Eigen::VectorXd lam = solver.eigenvalues().cwiseMax(1e-15);
    Eigen::VectorXd mapped = lam.array().rsqrt();
    return solver.eigenvectors() * mapped.asDiagonal() * solver.eigenvectors().transpose();
}

// Minimizer of 0.5||Z - Z B||_F^2 + nu Tr(B^T Phi B) over zero-diagonal B at
// fixed Phi. With P = Theta C and Theta = (C + nu Xi)^-1, the diagonal
// multipliers gamma_j = P_jj / Theta_jj give B = P - Theta diagMat(gamma).
// When Xi is diagonal this reduces to B_ij = -Theta_ij / Theta_jj.
Eigen::MatrixXd coeffs_at_fixed_phi(const Eigen::MatrixXd& c, const Eigen::MatrixXd& theta) {
    Eigen::MatrixXd p = theta * c;
    Eigen::VectorXd gamma = p.diagonal().cwiseQuotient(theta.diagonal());
    Eigen::MatrixXd b = p - theta * gamma.asDiagonal();
    b.diagonal().setZero();
    return b;
}

} // namespace

SelfExpression solve_self_expression(const nd::Matrix& z, double nu, double delta, double tol,
                                     int max_iter) {
    const nd::Index n = z.rows();
    const nd::Index d = z.cols();
    if (nu <= 0.0) {
        throw std::invalid_argument("solve_self_expression: nu must be positive");
    }
    if (n < 2 || d < 2) {
        throw std::invalid_argument("solve_self_expression: need N >= 2 and D >= 2");
    }

    const Eigen::MatrixXd c = z.mat().transpose() * z.mat();
    Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd xi;
    Eigen::MatrixXd theta;

    SelfExpression out;
    out.nu = nu;
    out.delta = delta;
    for (int it = 1; it <= max_iter; ++it) {
        xi = phi + phi.transpose();
        theta = invert_checked(c + nu * xi);
        Eigen::MatrixXd b_new = coeffs_at_fixed_phi(c, theta);
        const double diff = (b_new - b).cwiseAbs().maxCoeff();
        b = b_new;
        out.iterations_used = it;
        if (diff < tol) {
            out.converged = true;
            break;
        }
        if (it < max_iter) {
            phi = inverse_sqrt_spd(b * b.transpose() +
                                   delta * Eigen::MatrixXd::Identity(d, d));
        }
    }
    out.coeffs = nd::Matrix::from_eigen(b);
    out.theta = nd::Matrix::from_eigen(theta);
    out.phi = nd::Matrix::from_eigen(phi);
    out.xi = nd::Matrix::from_eigen(xi);
    return out;
}

double stationarity_residual(const nd::Matrix& z, const SelfExpression& se) {
    const Eigen::MatrixXd c = z.mat().transpose() * z.mat();
    const Eigen::MatrixXd& b = se.coeffs.mat();
    Eigen::MatrixXd r = c * b - c + se.nu * se.xi.mat() * b;
    r.diagonal().setZero();  // gamma absorbs the diagonal
    return r.norm();
}

AttributionGraph build_attribution_graph(const nd::Matrix& coeffs, double pinv_tol) {
    const Eigen::MatrixXd& b = coeffs.mat();
    if (b.rows() != b.cols()) {
        throw std::invalid_argument("build_attribution_graph: coefficients not square");
    }
    if ((b.diagonal().array() != 0.0).any()) {
        throw std::invalid_argument("build_attribution_graph: coefficient diagonal not zero");
    }
    AttributionGraph g;
    Eigen::MatrixXd a = 0.5 * (b.cwiseAbs() + b.transpose().cwiseAbs());
    Eigen::MatrixXd deg = Eigen::MatrixXd(a.rowwise().sum().asDiagonal());
    g.adjacency = nd::Matrix::from_eigen(a);
    g.degree = nd::Matrix::from_eigen(deg);
    g.laplacian = nd::Matrix::from_eigen(deg - a);
    g.laplacian_pinv = nd::psd_function(g.laplacian, nd::PsdFn::Pinv, pinv_tol);
    return g;
}

double bures_distance(const nd::Matrix& cov_src, const nd::Matrix& cov_tgt) {
    const nd::Index d = cov_src.rows();
    if (cov_tgt.rows() != d || cov_src.cols() != d || cov_tgt.cols() != d) {
        throw std::invalid_argument("bures_distance: covariance shape mismatch");
    }
    constexpr double tol = 1e-8;
    // psd_function validates the source factor; the target only needs the
    // PSD check before entering the trace terms
    nd::Matrix root_src = nd::psd_function(cov_src, nd::PsdFn::Sqrt, tol);
    {
        nd::EigPair eig_tgt = nd::sym_eig(cov_tgt);
        const Eigen::VectorXd lam = eig_tgt.eigenvalues.mat().col(0);
        const double lam_max = lam.maxCoeff();
        if (lam.minCoeff() < -tol * std::max(lam_max, 1.0)) {
            throw std::domain_error("bures_distance: target covariance is indefinite");
        }
    }
    Eigen::MatrixXd inner =
        root_src.mat() * cov_tgt.mat() * root_src.mat();
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(inner);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("bures_distance: eigensolver failed");
    }
    const double trace_root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double dist = cov_src.mat().trace() + cov_tgt.mat().trace() - 2.0 * trace_root;
    return std::max(dist, 0.0);
}

double horizontal_loss_from_pinvs(const nd::Matrix& lp_src_user, const nd::Matrix& lp_tgt_user,
                                  const nd::Matrix& lp_src_item, const nd::Matrix& lp_tgt_item) {
    return bures_distance(lp_src_user, lp_tgt_user) + bures_distance(lp_src_item, lp_tgt_item);
}

double horizontal_loss(const nd::Matrix& u_src, const nd::Matrix& u_tgt,
                       const nd::Matrix& v_src, const nd::Matrix& v_tgt, double nu,
                       double delta, double tol, int max_iter, double pinv_tol) {
    const nd::Index d = u_src.cols();
    if (u_tgt.cols() != d || v_src.cols() != d || v_tgt.cols() != d) {
        throw std::invalid_argument("horizontal_loss: attribution width mismatch");
    }
    auto pinv_of = [&](const nd::Matrix& z) {
        SelfExpression se = solve_self_expression(z, nu, delta, tol, max_iter);
        return build_attribution_graph(se.coeffs, pinv_tol).laplacian_pinv;
    };
    return horizontal_loss_from_pinvs(pinv_of(u_src), pinv_of(u_tgt), pinv_of(v_src),
                                      pinv_of(v_tgt));
}

nd::Var self_expression_graph(const nd::Var& z, const SelfExpression& solved) {
    const nd::Index d = z->value.cols();
    nd::Var c = nd::matmul(nd::transpose(z), z);
    nd::Var gram = nd::add(c, nd::constant(Eigen::MatrixXd(solved.nu * solved.xi.mat())));
    nd::Var theta = nd::inverse(gram);
    nd::Var p = nd::matmul(theta, c);
    nd::Var gamma = nd::velemdiv(nd::diag_vec(p), nd::diag_vec(theta));
    nd::Var b = nd::sub(p, nd::matmul(theta, nd::make_diag(gamma)));
    Eigen::MatrixXd off_diag_mask =
        Eigen::MatrixXd::Ones(d, d) - Eigen::MatrixXd::Identity(d, d);
    return nd::hadamard(b, nd::constant(std::move(off_diag_mask)));
}

nd::Var laplacian_pinv_graph(const nd::Var& coeffs, double pinv_tol) {
    nd::Var babs = nd::vabs(coeffs);
    nd::Var adj = nd::scale(nd::add(babs, nd::transpose(babs)), 0.5);
    nd::Var deg = nd::make_diag(nd::row_sums(adj));
    nd::Var lap = nd::sub(deg, adj);
    nd::EigVars eig = nd::sym_eig_g(lap);
    const Eigen::MatrixXd& lam = eig.eigenvalues->value;
    const double lam_max = lam.maxCoeff();
    const double cut = pinv_tol * std::max(lam_max, 0.0);
    Eigen::MatrixXd mask(lam.rows(), 1);
    for (nd::Index i = 0; i < lam.rows(); ++i) {
        mask(i, 0) = (lam(i, 0) > cut && lam(i, 0) > 0.0) ? 1.0 : 0.0;
    }
    nd::Var inv_lam = nd::recip_masked(eig.eigenvalues, mask);
    return nd::matmul(nd::matmul(eig.eigenvectors, nd::make_diag(inv_lam)),
                      nd::transpose(eig.eigenvectors));
}

nd::Var bures_graph(const nd::Var& cov_src, const nd::Var& cov_tgt) {
    nd::EigVars eig_src = nd::sym_eig_g(cov_src);
    nd::Var root_src = nd::matmul(
        nd::matmul(eig_src.eigenvectors, nd::make_diag(nd::vsqrt_floor(eig_src.eigenvalues))),
        nd::transpose(eig_src.eigenvectors));
    nd::Var inner = nd::matmul(nd::matmul(root_src, cov_tgt), root_src);
    nd::EigVars eig_inner = nd::sym_eig_g(inner);
    nd::Var trace_root = nd::sum(nd::vsqrt_floor(eig_inner.eigenvalues));
    return nd::sub(nd::add(nd::trace(cov_src), nd::trace(cov_tgt)), nd::scale(trace_root, 2.0));
}

nd::Var horizontal_loss_graph(const nd::Var& u_src, const nd::Var& u_tgt,
                              const nd::Var& v_src, const nd::Var& v_tgt, double nu,
                              double delta, double tol, int max_iter, double pinv_tol) {
    const nd::Index d = u_src->value.cols();
    for (const nd::Var& z : {u_tgt, v_src, v_tgt}) {
        if (z->value.cols() != d) {
            throw std::invalid_argument("horizontal_loss_graph: attribution width mismatch");
        }
    }
    auto pinv_of = [&](const nd::Var& z) {
        SelfExpression se =
            solve_self_expression(nd::value_of(z), nu, delta, tol, max_iter);
        return laplacian_pinv_graph(self_expression_graph(z, se), pinv_tol);
    };
    nd::Var user_term = bures_graph(pinv_of(u_src), pinv_of(u_tgt));
    nd::Var item_term = bures_graph(pinv_of(v_src), pinv_of(v_tgt));
    return nd::add(user_term, item_term);
}

} // namespace cfaa::subspace
