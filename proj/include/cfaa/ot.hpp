#pragma once

#include "cfaa/autodiff.hpp"
#include "cfaa/matrix.hpp"

#include <vector>

namespace cfaa::ot {

// Entropy-regularized optimal transport between two K-point columns under
// uniform 1/K marginals, solved by alternating scaling in log space.

struct Coupling {
    Eigen::MatrixXd plan;  // pi, K x K, row and column sums 1/K
    Eigen::MatrixXd cost;  // squared pairwise differences
    double epsilon = 0.0;
    int iterations_used = 0;
    bool converged = false;
};

/// cost[i][j] = (src_i - tgt_j)^2
Eigen::MatrixXd pairwise_sq_cost(const Eigen::VectorXd& src, const Eigen::VectorXd& tgt);

/// Scale-invariant default regularization: 0.05 * mean(cost).
double default_epsilon(const Eigen::MatrixXd& cost);

/// Solves for the coupling; if max_iter is exhausted before the marginal
/// deviation drops below tol, the best iterate is returned with
/// converged = false.
Coupling sinkhorn_coupling(const Eigen::VectorXd& src, const Eigen::VectorXd& tgt,
                           double epsilon, double tol = 1e-6, int max_iter = 200);

/// Transport distance (1/K^2) * sum_ij plan_ij (src_i - tgt_j)^2 with the
/// plan treated as a constant. epsilon <= 0 selects the default
/// regularization for the call.
double ot_distance(const Eigen::VectorXd& src, const Eigen::VectorXd& tgt,
                   double epsilon = 0.0, double tol = 1e-6, int max_iter = 200);

/// Vertical alignment loss over typical samples: mean over attributions of
/// the user-side plus item-side transport distances.
double vertical_loss(const nd::Matrix& m_src_user, const nd::Matrix& m_tgt_user,
                     const nd::Matrix& m_src_item, const nd::Matrix& m_tgt_item,
                     double epsilon = 0.0, double tol = 1e-6, int max_iter = 200);

/// Differentiable vertical loss for a user-side and item-side pair of
/// typical-sample vars; couplings are solved on the current values and
/// stopped, gradients flow through the squared costs only.
nd::Var vertical_loss_graph(const nd::Var& m_src_user, const nd::Var& m_tgt_user,
                            const nd::Var& m_src_item, const nd::Var& m_tgt_item,
                            double epsilon = 0.0, double tol = 1e-6, int max_iter = 200);

} // namespace cfaa::ot
