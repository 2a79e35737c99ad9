#pragma once

#include "cfaa/autodiff.hpp"
#include "cfaa/matrix.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace cfaa::typical {

// Entropy-regularized soft selection of K typical samples per attribution
// (embedding dimension). Each attribution is solved independently by
// alternating a closed-form soft assignment with a weighted-mean proxy
// update; the objective is non-increasing across alternations.

struct SelectionProblem {
    nd::Matrix embeddings;   // Z, N x D
    nd::Index proxy_count = 0;  // K, 1 <= K <= N
    double alpha = 0.1;      // entropy strength, > 0
    double tol = 1e-6;       // relative objective change
    int max_iter = 50;
    std::uint64_t seed = 0;  // reserved; proxy init is deterministic quantiles
};

struct SelectionResult {
    nd::Matrix proxies;  // M, K x D
    std::vector<Eigen::MatrixXd> assignments;          // per attribution, N x K
    std::vector<std::vector<double>> objective_trace;  // per attribution
    std::vector<std::vector<std::uint8_t>> frozen;     // per attribution, K flags
    std::vector<int> iterations;                       // per attribution
};

/// Soft-min assignment: row i is exp(-(z_i - m_j)^2 / alpha) normalized over
/// j, evaluated in log space. Rows sum to one; entries are positive.
Eigen::MatrixXd update_assignments(const Eigen::VectorXd& z_col,
                                   const Eigen::VectorXd& proxies, double alpha);

struct ProxyUpdate {
    Eigen::VectorXd proxies;
    std::vector<std::uint8_t> frozen;  // proxies left unchanged for lack of mass
};

/// Assignment-weighted means; a proxy whose column mass is below 1e-300 is
/// left at its current value and flagged.
ProxyUpdate update_proxies(const Eigen::VectorXd& z_col, const Eigen::MatrixXd& psi,
                           const Eigen::VectorXd& current);

/// Value of the selection objective including the entropy term.
double selection_objective(const Eigen::VectorXd& z_col, const Eigen::MatrixXd& psi,
                           const Eigen::VectorXd& proxies, double alpha);

/// Evenly spaced order statistics of the column (deterministic proxy init).
Eigen::VectorXd quantile_init(const Eigen::VectorXd& z_col, nd::Index k);

SelectionResult select_typical_samples(const SelectionProblem& problem);

/// Differentiable proxy matrix for a solved selection: the assignments act
/// as stopped constants and gradients flow through the weighted mean into
/// the embeddings. Frozen proxies enter as constants.
nd::Var proxies_graph(const nd::Var& z, const SelectionResult& solved);

} // namespace cfaa::typical
