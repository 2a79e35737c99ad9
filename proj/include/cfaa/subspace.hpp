#pragma once

#include "cfaa/autodiff.hpp"
#include "cfaa/matrix.hpp"

namespace cfaa::subspace {

// Horizontal attribution alignment: a low-rank self-expression model over
// attributions, the derived attribution graph and Laplacian, and the
// squared Wasserstein distance between the graph Gaussians.

struct SelfExpression {
    nd::Matrix coeffs;  // B, D x D, zero diagonal
    nd::Matrix theta;   // (Z^T Z + nu * Xi)^-1
    nd::Matrix phi;     // (B B^T + delta I)^(-1/2) from the solve
    nd::Matrix xi;      // Phi + Phi^T
    double nu = 0.0;
    double delta = 0.0;
    int iterations_used = 0;
    bool converged = false;
};

/// Alternates the closed-form coefficient update at fixed Phi with the
/// spectral Phi update until max |delta B| < tol or max_iter. Phi starts at
/// the identity; the spectral floor delta keeps the inverse square root
/// defined when B is rank-deficient.
SelfExpression solve_self_expression(const nd::Matrix& z, double nu, double delta = 1e-6,
                                     double tol = 1e-6, int max_iter = 30);

/// Frobenius norm of the first-order condition
/// Z^T Z B - Z^T Z + nu Xi B + diagMat(gamma), with gamma recovered from
/// the diagonal.
double stationarity_residual(const nd::Matrix& z, const SelfExpression& se);

struct AttributionGraph {
    nd::Matrix adjacency;       // A = (|B| + |B^T|)/2
    nd::Matrix degree;          // diagonal row-sum matrix
    nd::Matrix laplacian;       // Deg - A
    nd::Matrix laplacian_pinv;  // spectral pseudoinverse
};

AttributionGraph build_attribution_graph(const nd::Matrix& coeffs, double pinv_tol = 1e-8);

/// Squared Bures-Wasserstein distance between zero-mean Gaussians with the
/// given covariances: Tr(S + T - 2 (S^1/2 T S^1/2)^1/2), clamped at 0.
double bures_distance(const nd::Matrix& cov_src, const nd::Matrix& cov_tgt);

/// Sum of the user-side and item-side Gaussian distances for
/// already-computed Laplacian pseudoinverses.
double horizontal_loss_from_pinvs(const nd::Matrix& lp_src_user, const nd::Matrix& lp_tgt_user,
                                  const nd::Matrix& lp_src_item, const nd::Matrix& lp_tgt_item);

/// Full horizontal alignment loss: self-expression in both domains for
/// users and items, graph construction, and the Gaussian distances.
double horizontal_loss(const nd::Matrix& u_src, const nd::Matrix& u_tgt,
                       const nd::Matrix& v_src, const nd::Matrix& v_tgt, double nu,
                       double delta = 1e-6, double tol = 1e-6, int max_iter = 30,
                       double pinv_tol = 1e-8);

// ---- differentiable chain (Phi and spectral masks are stopped) ---------

/// Coefficient matrix as a function of the embeddings with Xi fixed from a
/// finished solve.
nd::Var self_expression_graph(const nd::Var& z, const SelfExpression& solved);

/// Graph Laplacian pseudoinverse of a coefficient var; the eigenvalue
/// cutoff mask is taken from the current values and stopped.
nd::Var laplacian_pinv_graph(const nd::Var& coeffs, double pinv_tol = 1e-8);

nd::Var bures_graph(const nd::Var& cov_src, const nd::Var& cov_tgt);

nd::Var horizontal_loss_graph(const nd::Var& u_src, const nd::Var& u_tgt,
                              const nd::Var& v_src, const nd::Var& v_tgt, double nu,
                              double delta = 1e-6, double tol = 1e-6, int max_iter = 30,
                              double pinv_tol = 1e-8);

} // namespace cfaa::subspace
