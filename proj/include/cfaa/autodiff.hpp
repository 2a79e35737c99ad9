#pragma once

#include "cfaa/matrix.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace cfaa::nd {

// Reverse-mode differentiation over a fixed set of matrix primitives.
// Nodes evaluate eagerly at construction; `recompute` re-runs the forward
// pass (used by finite-difference checks) and `backward` accumulates
// gradients from a scalar root. Graph construction and backward are
// single-threaded per graph; values are immutable once built except through
// leaf perturbation in grad_check.

struct DiffNode;
using Var = std::shared_ptr<DiffNode>;

struct DiffNode {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;  // valid only when grad_set during the stamped pass
    bool grad_set = false;
    bool requires_grad = false;
    std::uint64_t grad_epoch = 0;  // backward pass that wrote the gradient
    std::vector<Var> parents;
    std::function<void(DiffNode&)> forward;   // null for leaves and constants
    std::function<void(DiffNode&)> backprop;  // null for leaves and constants
};

/// Trainable input; participates in gradients.
Var leaf(const Matrix& v);
/// Fixed input; no gradient flows into it.
Var constant(const Matrix& v);
Var constant(Eigen::MatrixXd v);
Var scalar_constant(double v);

Matrix value_of(const Var& v);
/// True when the node received a gradient in the most recent backward pass.
/// Leaves shared across graphs keep stale buffers from earlier passes;
/// those do not count.
bool grad_valid(const Var& v);
/// Gradient accumulated by the most recent backward(); zeros if the node
/// was untouched by it.
Matrix grad_of(const Var& v);

// ---- primitives ------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var velemdiv(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var transpose(const Var& a);
Var inverse(const Var& a);
Var trace(const Var& a);
Var sum(const Var& a);
Var row_sums(const Var& a);
Var row_softmax(const Var& a);
Var sigmoid(const Var& a);
Var vlog(const Var& a);
Var vtanh(const Var& a);
Var vabs(const Var& a);
/// Entrywise square root with a floor: values at or below floor_eps map to
/// exactly 0 in value and gradient, values above it to sqrt(x) with
/// gradient 0.5/sqrt(x).
Var vsqrt_floor(const Var& a, double floor_eps = 1e-12);
/// Pass-through gradient strictly inside [lo, hi], zero outside.
Var clamp(const Var& a, double lo, double hi);
/// Entrywise mask/x with the mask a stopped constant; masked-out entries
/// are exactly zero in value and gradient.
Var recip_masked(const Var& a, const Eigen::MatrixXd& mask);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Index first, Index count);
Var gather_rows(const Var& a, std::vector<Index> rows);
/// Row b of the result is the sum of the rows of `table` listed in
/// lists[b] (multi-hot row times table without materializing the row).
Var sum_rows_gather(const Var& table, std::shared_ptr<const std::vector<std::vector<Index>>> lists);
/// x + 1*b for a 1 x d bias row.
Var add_row_broadcast(const Var& a, const Var& bias);
Var diag_vec(const Var& a);
Var make_diag(const Var& v);

struct EigVars {
    Var eigenvalues;  // D x 1, ascending
    Var eigenvectors; // D x D, columns
};

/// Differentiable symmetric eigendecomposition. The input is symmetrized
/// before factoring; the backward uses the pairwise eigen-gap formula with
/// denominators clamped at 1e-6 magnitude and reports the symmetric
/// projection of the gradient.
EigVars sym_eig_g(const Var& s);

/// Per-attribution weighted column means: column q of the K x D result is
/// weights[q]^T * Z.col(q), with weights[q] (N x K) column-normalized and
/// held constant.
Var proxy_mean(const Var& z, std::shared_ptr<const std::vector<Eigen::MatrixXd>> weights);

/// scale * sum_ij plan[i][j] * (src_i - tgt_j)^2 with the plan a stopped
/// constant; gradient flows through the squared costs only.
Var ot_cost(const Var& src, const Var& tgt, const Eigen::MatrixXd& plan, double plan_scale);

// ---- graph execution -------------------------------------------------

/// Re-evaluate every non-leaf node below root in topological order.
void recompute(const Var& root);

/// Accumulate gradients of a scalar (1x1) root into every reachable node
/// requiring gradients.
void backward(const Var& root);

/// Max over all parameter entries of
/// |analytic - central difference| / max(1, |analytic|).
double grad_check(const Var& root, const std::vector<Var>& params, double h);

} // namespace cfaa::nd
