#include "cfaa/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace cfaa::nd {

namespace {

constexpr double kEigGapFloor = 1e-6;

// Monotone id of the most recent backward pass; gradient buffers are only
// meaningful when stamped with the current value.
std::uint64_t g_backward_epoch = 0;

Var make_node(Eigen::MatrixXd value, std::vector<Var> parents,
              std::function<void(DiffNode&)> forward,
              std::function<void(DiffNode&)> backprop) {
    auto n = std::make_shared<DiffNode>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const Var& p : n->parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
        }
    }
    n->forward = std::move(forward);
    n->backprop = std::move(backprop);
    return n;
}

// Accumulates `g` into the parent's gradient buffer if it wants gradients.
void accum(const Var& p, const Eigen::MatrixXd& g) {
    if (!p->requires_grad) {
        return;
    }
    if (!p->grad_set) {
        p->grad = g;
        p->grad_set = true;
        p->grad_epoch = g_backward_epoch;
    } else {
        p->grad += g;
    }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}

// Post-order over parents; every node appears after all of its inputs.
std::vector<DiffNode*> topo_order(const Var& root) {
    std::vector<DiffNode*> order;
    std::unordered_set<DiffNode*> seen;
    std::vector<std::pair<DiffNode*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            DiffNode* p = node->parents[next].get();
            ++next;
            if (seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

} // namespace

Var leaf(const Matrix& v) {
    auto n = std::make_shared<DiffNode>();
    n->value = v.mat();
    n->requires_grad = true;
    return n;
}

Var constant(const Matrix& v) {
    auto n = std::make_shared<DiffNode>();
    n->value = v.mat();
    return n;
}

Var constant(Eigen::MatrixXd v) {
    auto n = std::make_shared<DiffNode>();
    n->value = std::move(v);
    return n;
}

Var scalar_constant(double v) {
    return constant(Eigen::MatrixXd::Constant(1, 1, v));
}

Matrix value_of(const Var& v) {
    return Matrix::from_eigen(v->value);
}

bool grad_valid(const Var& v) { return v->grad_set && v->grad_epoch == g_backward_epoch; }

Matrix grad_of(const Var& v) {
    if (!grad_valid(v)) {
        return Matrix(v->value.rows(), v->value.cols());
    }
    return Matrix::from_eigen(v->grad);
}

Var matmul(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.rows()) {
        throw std::invalid_argument("matmul: inner dimension mismatch");
    }
    return make_node(
        a->value * b->value, {a, b},
        [](DiffNode& n) { n.value = n.parents[0]->value * n.parents[1]->value; },
        [](DiffNode& n) {
            accum(n.parents[0], n.grad * n.parents[1]->value.transpose());
            accum(n.parents[1], n.parents[0]->value.transpose() * n.grad);
        });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    return make_node(
        a->value + b->value, {a, b},
        [](DiffNode& n) { n.value = n.parents[0]->value + n.parents[1]->value; },
        [](DiffNode& n) {
            accum(n.parents[0], n.grad);
            accum(n.parents[1], n.grad);
        });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    return make_node(
        a->value - b->value, {a, b},
        [](DiffNode& n) { n.value = n.parents[0]->value - n.parents[1]->value; },
        [](DiffNode& n) {
            accum(n.parents[0], n.grad);
            accum(n.parents[1], -n.grad);
        });
}

Var hadamard(const Var& a, const Var& b) {
    require_same_shape(a, b, "hadamard");
    return make_node(
        a->value.cwiseProduct(b->value), {a, b},
        [](DiffNode& n) { n.value = n.parents[0]->value.cwiseProduct(n.parents[1]->value); },
        [](DiffNode& n) {
            accum(n.parents[0], n.grad.cwiseProduct(n.parents[1]->value));
            accum(n.parents[1], n.grad.cwiseProduct(n.parents[0]->value));
        });
}

Var velemdiv(const Var& a, const Var& b) {
    require_same_shape(a, b, "velemdiv");
    return make_node(
        a->value.cwiseQuotient(b->value), {a, b},
        [](DiffNode& n) { n.value = n.parents[0]->value.cwiseQuotient(n.parents[1]->value); },
        [](DiffNode& n) {
            const Eigen::MatrixXd& bv = n.parents[1]->value;
            accum(n.parents[0], n.grad.cwiseQuotient(bv));
            accum(n.parents[1], -n.grad.cwiseProduct(n.value).cwiseQuotient(bv));
        });
}

Var scale(const Var& a, double c) {
    return make_node(
        c * a->value, {a},
        [c](DiffNode& n) { n.value = c * n.parents[0]->value; },
        [c](DiffNode& n) { accum(n.parents[0], c * n.grad); });
}

Var transpose(const Var& a) {
    return make_node(
        a->value.transpose(), {a},
        [](DiffNode& n) { n.value = n.parents[0]->value.transpose(); },
        [](DiffNode& n) { accum(n.parents[0], n.grad.transpose()); });
}

Var inverse(const Var& a) {
    if (a->value.rows() != a->value.cols()) {
        throw std::invalid_argument("inverse: matrix is not square");
    }
    return make_node(
        a->value.inverse(), {a},
        [](DiffNode& n) { n.value = n.parents[0]->value.inverse(); },
        [](DiffNode& n) {
            const Eigen::MatrixXd vt = n.value.transpose();
            accum(n.parents[0], -(vt * n.grad * vt));
        });
}

Var trace(const Var& a) {
    if (a->value.rows() != a->value.cols()) {
        throw std::invalid_argument("trace: matrix is not square");
    }
    return make_node(
        Eigen::MatrixXd::Constant(1, 1, a->value.trace()), {a},
        [](DiffNode& n) { n.value(0, 0) = n.parents[0]->value.trace(); },
        [](DiffNode& n) {
            const Index d = n.parents[0]->value.rows();
            accum(n.parents[0], Eigen::MatrixXd(n.grad(0, 0) * Eigen::MatrixXd::Identity(d, d)));
        });
}

Var sum(const Var& a) {
    return make_node(
        Eigen::MatrixXd::Constant(1, 1, a->value.sum()), {a},
        [](DiffNode& n) { n.value(0, 0) = n.parents[0]->value.sum(); },
        [](DiffNode& n) {
            const Eigen::MatrixXd& v = n.parents[0]->value;
            accum(n.parents[0],
                  Eigen::MatrixXd(Eigen::MatrixXd::Constant(v.rows(), v.cols(), n.grad(0, 0))));
        });
}

Var row_sums(const Var& a) {
    return make_node(
        Eigen::MatrixXd(a->value.rowwise().sum()), {a},
        [](DiffNode& n) { n.value = n.parents[0]->value.rowwise().sum(); },
        [](DiffNode& n) {
            accum(n.parents[0], Eigen::MatrixXd(n.grad.replicate(1, n.parents[0]->value.cols())));
        });
}

namespace {

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& a) {
    Eigen::VectorXd rmax = a.rowwise().maxCoeff();
    Eigen::MatrixXd e = (a.colwise() - rmax).array().exp();
    Eigen::VectorXd denom = e.rowwise().sum();
    return e.array().colwise() / denom.array();
}

} // namespace

Var row_softmax(const Var& a) {
    return make_node(
        softmax_rows(a->value), {a},
        [](DiffNode& n) { n.value = softmax_rows(n.parents[0]->value); },
        [](DiffNode& n) {
            Eigen::VectorXd dot = n.grad.cwiseProduct(n.value).rowwise().sum();
            Eigen::MatrixXd centered = n.grad.colwise() - dot;
            accum(n.parents[0], centered.cwiseProduct(n.value));
        });
}

namespace {

double sigmoid_scalar(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Eigen::MatrixXd sigmoid_mat(const Eigen::MatrixXd& a) {
    return a.unaryExpr([](double z) { return sigmoid_scalar(z); });
}

} // namespace

Var sigmoid(const Var& a) {
    return make_node(
        sigmoid_mat(a->value), {a},
        [](DiffNode& n) { n.value = sigmoid_mat(n.parents[0]->value); },
        [](DiffNode& n) {
            Eigen::MatrixXd s1 = n.value.array() * (1.0 - n.value.array());
            accum(n.parents[0], n.grad.cwiseProduct(s1));
        });
}

Var vlog(const Var& a) {
    return make_node(
        a->value.array().log().matrix(), {a},
        [](DiffNode& n) { n.value = n.parents[0]->value.array().log().matrix(); },
        [](DiffNode& n) { accum(n.parents[0], n.grad.cwiseQuotient(n.parents[0]->value)); });
}

Var vtanh(const Var& a) {
    return make_node(
        a->value.array().tanh().matrix(), {a},
        [](DiffNode& n) { n.value = n.parents[0]->value.array().tanh().matrix(); },
        [](DiffNode& n) {
            Eigen::MatrixXd d = 1.0 - n.value.array().square();
            accum(n.parents[0], n.grad.cwiseProduct(d));
        });
}

Var vabs(const Var& a) {
    return make_node(
        a->value.cwiseAbs(), {a},
        [](DiffNode& n) { n.value = n.parents[0]->value.cwiseAbs(); },
        [](DiffNode& n) {
            Eigen::MatrixXd sign = n.parents[0]->value.unaryExpr(
                [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
            accum(n.parents[0], n.grad.cwiseProduct(sign));
        });
}

Var vsqrt_floor(const Var& a, double floor_eps) {
    // values at or below the floor map to exactly zero so that spectral
    // noise around structural zero eigenvalues stays out of the function
    auto fwd = [floor_eps](const Eigen::MatrixXd& x) {
        return Eigen::MatrixXd(x.unaryExpr(
            [floor_eps](double v) { return v > floor_eps ? std::sqrt(v) : 0.0; }));
    };
    return make_node(
        fwd(a->value), {a},
        [fwd](DiffNode& n) { n.value = fwd(n.parents[0]->value); },
        [floor_eps](DiffNode& n) {
            const Eigen::MatrixXd& x = n.parents[0]->value;
            Eigen::MatrixXd g(x.rows(), x.cols());
            for (Index i = 0; i < x.rows(); ++i) {
                for (Index j = 0; j < x.cols(); ++j) {
                    g(i, j) = (x(i, j) > floor_eps) ? n.grad(i, j) * 0.5 / n.value(i, j) : 0.0;
                }
            }
            accum(n.parents[0], g);
        });
}

Var clamp(const Var& a, double lo, double hi) {
    auto fwd = [lo, hi](const Eigen::MatrixXd& x) {
        return Eigen::MatrixXd(x.array().max(lo).min(hi).matrix());
    };
    return make_node(
        fwd(a->value), {a},
        [fwd](DiffNode& n) { n.value = fwd(n.parents[0]->value); },
        [lo, hi](DiffNode& n) {
            const Eigen::MatrixXd& x = n.parents[0]->value;
            Eigen::MatrixXd g(x.rows(), x.cols());
            for (Index i = 0; i < x.rows(); ++i) {
                for (Index j = 0; j < x.cols(); ++j) {
                    g(i, j) = (x(i, j) > lo && x(i, j) < hi) ? n.grad(i, j) : 0.0;
                }
            }
            accum(n.parents[0], g);
        });
}

Var recip_masked(const Var& a, const Eigen::MatrixXd& mask) {
    if (a->value.rows() != mask.rows() || a->value.cols() != mask.cols()) {
        throw std::invalid_argument("recip_masked: mask shape mismatch");
    }
    auto fwd = [mask](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd out(x.rows(), x.cols());
        for (Index i = 0; i < x.rows(); ++i) {
            for (Index j = 0; j < x.cols(); ++j) {
                out(i, j) = (mask(i, j) != 0.0) ? 1.0 / x(i, j) : 0.0;
            }
        }
        return out;
    };
    return make_node(
        fwd(a->value), {a},
        [fwd](DiffNode& n) { n.value = fwd(n.parents[0]->value); },
        [](DiffNode& n) {
            // masked-out entries have value 0, so the product vanishes there
            accum(n.parents[0], Eigen::MatrixXd(-n.grad.cwiseProduct(n.value).cwiseProduct(n.value)));
        });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_cols: no inputs");
    }
    const Index rows = parts[0]->value.rows();
    Index cols = 0;
    for (const Var& p : parts) {
        if (p->value.rows() != rows) {
            throw std::invalid_argument("concat_cols: row count mismatch");
        }
        cols += p->value.cols();
    }
    auto fwd = [rows, cols](DiffNode& n) {
        n.value.resize(rows, cols);
        Index at = 0;
        for (const Var& p : n.parents) {
            n.value.middleCols(at, p->value.cols()) = p->value;
            at += p->value.cols();
        }
    };
    Eigen::MatrixXd init(rows, cols);
    {
        Index at = 0;
        for (const Var& p : parts) {
            init.middleCols(at, p->value.cols()) = p->value;
            at += p->value.cols();
        }
    }
    return make_node(
        std::move(init), parts, fwd,
        [](DiffNode& n) {
            Index at = 0;
            for (const Var& p : n.parents) {
                accum(p, Eigen::MatrixXd(n.grad.middleCols(at, p->value.cols())));
                at += p->value.cols();
            }
        });
}

Var slice_cols(const Var& a, Index first, Index count) {
    if (first < 0 || count < 0 || first + count > a->value.cols()) {
        throw std::invalid_argument("slice_cols: range out of bounds");
    }
    return make_node(
        a->value.middleCols(first, count), {a},
        [first, count](DiffNode& n) { n.value = n.parents[0]->value.middleCols(first, count); },
        [first, count](DiffNode& n) {
            const Eigen::MatrixXd& v = n.parents[0]->value;
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(v.rows(), v.cols());
            g.middleCols(first, count) = n.grad;
            accum(n.parents[0], g);
        });
}

Var gather_rows(const Var& a, std::vector<Index> rows) {
    for (Index r : rows) {
        if (r < 0 || r >= a->value.rows()) {
            throw std::invalid_argument("gather_rows: row index " + std::to_string(r) +
                                        " out of range");
        }
    }
    auto idx = std::make_shared<const std::vector<Index>>(std::move(rows));
    auto fwd = [idx](DiffNode& n) {
        const Eigen::MatrixXd& v = n.parents[0]->value;
        n.value.resize(static_cast<Index>(idx->size()), v.cols());
        for (std::size_t i = 0; i < idx->size(); ++i) {
            n.value.row(static_cast<Index>(i)) = v.row((*idx)[i]);
        }
    };
    Eigen::MatrixXd init(static_cast<Index>(idx->size()), a->value.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) {
        init.row(static_cast<Index>(i)) = a->value.row((*idx)[i]);
    }
    return make_node(
        std::move(init), {a}, fwd,
        [idx](DiffNode& n) {
            const Eigen::MatrixXd& v = n.parents[0]->value;
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(v.rows(), v.cols());
            for (std::size_t i = 0; i < idx->size(); ++i) {
                g.row((*idx)[i]) += n.grad.row(static_cast<Index>(i));
            }
            accum(n.parents[0], g);
        });
}

Var sum_rows_gather(const Var& table,
                    std::shared_ptr<const std::vector<std::vector<Index>>> lists) {
    for (const auto& list : *lists) {
        for (Index r : list) {
            if (r < 0 || r >= table->value.rows()) {
                throw std::invalid_argument("sum_rows_gather: row index " + std::to_string(r) +
                                            " out of range");
            }
        }
    }
    auto fwd = [lists](DiffNode& n) {
        const Eigen::MatrixXd& t = n.parents[0]->value;
        n.value = Eigen::MatrixXd::Zero(static_cast<Index>(lists->size()), t.cols());
        for (std::size_t b = 0; b < lists->size(); ++b) {
            for (Index r : (*lists)[b]) {
                n.value.row(static_cast<Index>(b)) += t.row(r);
            }
        }
    };
    Eigen::MatrixXd init = Eigen::MatrixXd::Zero(static_cast<Index>(lists->size()),
                                                 table->value.cols());
    for (std::size_t b = 0; b < lists->size(); ++b) {
        for (Index r : (*lists)[b]) {
            init.row(static_cast<Index>(b)) += table->value.row(r);
        }
    }
    return make_node(
        std::move(init), {table}, fwd,
        [lists](DiffNode& n) {
            const Eigen::MatrixXd& t = n.parents[0]->value;
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(t.rows(), t.cols());
            for (std::size_t b = 0; b < lists->size(); ++b) {
                for (Index r : (*lists)[b]) {
                    g.row(r) += n.grad.row(static_cast<Index>(b));
                }
            }
            accum(n.parents[0], g);
        });
}

Var add_row_broadcast(const Var& a, const Var& bias) {
    if (bias->value.rows() != 1 || bias->value.cols() != a->value.cols()) {
        throw std::invalid_argument("add_row_broadcast: bias must be 1 x cols(a)");
    }
    return make_node(
        a->value.rowwise() + bias->value.row(0), {a, bias},
        [](DiffNode& n) {
            n.value = n.parents[0]->value.rowwise() + n.parents[1]->value.row(0);
        },
        [](DiffNode& n) {
            accum(n.parents[0], n.grad);
            accum(n.parents[1], Eigen::MatrixXd(n.grad.colwise().sum()));
        });
}

Var diag_vec(const Var& a) {
    if (a->value.rows() != a->value.cols()) {
        throw std::invalid_argument("diag_vec: matrix is not square");
    }
    return make_node(
        a->value.diagonal(), {a},
        [](DiffNode& n) { n.value = n.parents[0]->value.diagonal(); },
        [](DiffNode& n) {
            const Index d = n.parents[0]->value.rows();
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
            g.diagonal() = n.grad.col(0);
            accum(n.parents[0], g);
        });
}

Var make_diag(const Var& v) {
    if (v->value.cols() != 1) {
        throw std::invalid_argument("make_diag: input must be a column vector");
    }
    return make_node(
        Eigen::MatrixXd(v->value.col(0).asDiagonal()), {v},
        [](DiffNode& n) { n.value = n.parents[0]->value.col(0).asDiagonal(); },
        [](DiffNode& n) { accum(n.parents[0], Eigen::MatrixXd(n.grad.diagonal())); });
}

namespace {

// Packed eigendecomposition value: column 0 holds ascending eigenvalues,
// columns 1..D hold eigenvectors.
Eigen::MatrixXd eig_packed(const Eigen::MatrixXd& s) {
    Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("sym_eig_g: eigensolver failed to converge");
    }
    const Index d = s.rows();
    Eigen::MatrixXd packed(d, d + 1);
    packed.col(0) = solver.eigenvalues();
    packed.rightCols(d) = solver.eigenvectors();
    return packed;
}

} // namespace

EigVars sym_eig_g(const Var& s) {
    if (s->value.rows() != s->value.cols()) {
        throw std::invalid_argument("sym_eig_g: matrix is not square");
    }
    Var packed = make_node(
        eig_packed(s->value), {s},
        [](DiffNode& n) { n.value = eig_packed(n.parents[0]->value); },
        [](DiffNode& n) {
            const Index d = n.parents[0]->value.rows();
            const Eigen::VectorXd lam = n.value.col(0);
            const Eigen::MatrixXd v = n.value.rightCols(d);
            const Eigen::VectorXd lam_bar = n.grad.col(0);
            const Eigen::MatrixXd v_bar = n.grad.rightCols(d);

            Eigen::MatrixXd inner = v.transpose() * v_bar;
            for (Index i = 0; i < d; ++i) {
                for (Index j = 0; j < d; ++j) {
                    if (i == j) {
                        inner(i, j) = 0.0;
                    } else {
                        double gap = lam(j) - lam(i);
                        if (std::abs(gap) < kEigGapFloor) {
                            gap = (gap >= 0.0) ? kEigGapFloor : -kEigGapFloor;
                        }
                        inner(i, j) /= gap;
                    }
                }
            }
            inner.diagonal() = lam_bar;
            Eigen::MatrixXd g = v * inner * v.transpose();
            accum(n.parents[0], Eigen::MatrixXd(0.5 * (g + g.transpose())));
        });
    const Index d = s->value.rows();
    EigVars out;
    out.eigenvalues = slice_cols(packed, 0, 1);
    out.eigenvectors = slice_cols(packed, 1, d);
    return out;
}

Var proxy_mean(const Var& z, std::shared_ptr<const std::vector<Eigen::MatrixXd>> weights) {
    const Index n = z->value.rows();
    const Index d = z->value.cols();
    if (static_cast<Index>(weights->size()) != d) {
        throw std::invalid_argument("proxy_mean: need one weight matrix per attribution");
    }
    const Index k = (*weights)[0].cols();
    for (const Eigen::MatrixXd& w : *weights) {
        if (w.rows() != n || w.cols() != k) {
            throw std::invalid_argument("proxy_mean: weight shape mismatch");
        }
    }
    auto fwd = [weights, k](DiffNode& node) {
        const Eigen::MatrixXd& zv = node.parents[0]->value;
        node.value.resize(k, zv.cols());
        for (Index q = 0; q < zv.cols(); ++q) {
            node.value.col(q) = (*weights)[static_cast<std::size_t>(q)].transpose() * zv.col(q);
        }
    };
    Eigen::MatrixXd init(k, d);
    for (Index q = 0; q < d; ++q) {
        init.col(q) = (*weights)[static_cast<std::size_t>(q)].transpose() * z->value.col(q);
    }
    return make_node(
        std::move(init), {z}, fwd,
        [weights](DiffNode& node) {
            const Eigen::MatrixXd& zv = node.parents[0]->value;
            Eigen::MatrixXd g(zv.rows(), zv.cols());
            for (Index q = 0; q < zv.cols(); ++q) {
                g.col(q) = (*weights)[static_cast<std::size_t>(q)] * node.grad.col(q);
            }
            accum(node.parents[0], g);
        });
}

Var ot_cost(const Var& src, const Var& tgt, const Eigen::MatrixXd& plan, double plan_scale) {
    if (src->value.cols() != 1 || tgt->value.cols() != 1) {
        throw std::invalid_argument("ot_cost: inputs must be column vectors");
    }
    const Index k = src->value.rows();
    if (tgt->value.rows() != k || plan.rows() != k || plan.cols() != k) {
        throw std::invalid_argument("ot_cost: plan shape mismatch");
    }
    auto plan_ptr = std::make_shared<const Eigen::MatrixXd>(plan);
    auto cost_value = [plan_ptr, plan_scale](const Eigen::MatrixXd& s, const Eigen::MatrixXd& t) {
        const Index n = s.rows();
        Eigen::MatrixXd diff = s.col(0).replicate(1, n) - t.col(0).transpose().replicate(n, 1);
        return plan_scale * plan_ptr->cwiseProduct(diff.cwiseAbs2()).sum();
    };
    return make_node(
        Eigen::MatrixXd::Constant(1, 1, cost_value(src->value, tgt->value)), {src, tgt},
        [cost_value](DiffNode& n) {
            n.value(0, 0) = cost_value(n.parents[0]->value, n.parents[1]->value);
        },
        [plan_ptr, plan_scale](DiffNode& n) {
            const Eigen::MatrixXd& s = n.parents[0]->value;
            const Eigen::MatrixXd& t = n.parents[1]->value;
            const Index k2 = s.rows();
            Eigen::MatrixXd diff =
                s.col(0).replicate(1, k2) - t.col(0).transpose().replicate(k2, 1);
            Eigen::MatrixXd weighted = plan_ptr->cwiseProduct(diff);
            const double g = n.grad(0, 0) * plan_scale * 2.0;
            accum(n.parents[0], Eigen::MatrixXd(g * weighted.rowwise().sum()));
            accum(n.parents[1], Eigen::MatrixXd(-g * weighted.colwise().sum().transpose()));
        });
}

void recompute(const Var& root) {
    for (DiffNode* node : topo_order(root)) {
        if (node->forward) {
            node->forward(*node);
        }
    }
}

void backward(const Var& root) {
    if (root->value.rows() != 1 || root->value.cols() != 1) {
        throw std::invalid_argument("backward: root must be scalar (1x1)");
    }
    ++g_backward_epoch;
    std::vector<DiffNode*> order = topo_order(root);
    for (DiffNode* node : order) {
        node->grad_set = false;
    }
    root->grad = Eigen::MatrixXd::Constant(1, 1, 1.0);
    root->grad_set = true;
    root->grad_epoch = g_backward_epoch;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        DiffNode* node = *it;
        if (node->backprop && node->grad_set && node->requires_grad) {
            node->backprop(*node);
        }
    }
}

double grad_check(const Var& root, const std::vector<Var>& params, double h) {
    if (root->value.rows() != 1 || root->value.cols() != 1) {
        throw std::invalid_argument("grad_check: root must be scalar (1x1)");
    }
    if (h <= 0.0) {
        throw std::invalid_argument("grad_check: step must be positive");
    }
    backward(root);
    std::vector<Eigen::MatrixXd> analytic;
    analytic.reserve(params.size());
    for (const Var& p : params) {
        analytic.push_back(grad_of(p).mat());
    }
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Var p = params[pi];
        for (Index i = 0; i < p->value.rows(); ++i) {
            for (Index j = 0; j < p->value.cols(); ++j) {
                const double orig = p->value(i, j);
                p->value(i, j) = orig + h;
                recompute(root);
                const double fp = root->value(0, 0);
                p->value(i, j) = orig - h;
                recompute(root);
                const double fm = root->value(0, 0);
                p->value(i, j) = orig;
                const double fd = (fp - fm) / (2.0 * h);
                const double g = analytic[pi](i, j);
                const double err = std::abs(g - fd) / std::max(1.0, std::abs(g));
                worst = std::max(worst, err);
            }
        }
    }
    recompute(root);
    return worst;
}

} // namespace cfaa::nd
