#include "cfaa/ot.hpp"

#include <cmath>
#include <stdexcept>

namespace cfaa::ot {

Eigen::MatrixXd pairwise_sq_cost(const Eigen::VectorXd& src, const Eigen::VectorXd& tgt) {
    const nd::Index k = src.size();
    if (tgt.size() != k) {
        throw std::invalid_argument("pairwise_sq_cost: size mismatch");
    }
    Eigen::MatrixXd diff = src.replicate(1, k) - tgt.transpose().replicate(k, 1);
    return diff.cwiseAbs2();
}

double default_epsilon(const Eigen::MatrixXd& cost) {
    return 0.05 * cost.mean();
}

Coupling sinkhorn_coupling(const Eigen::VectorXd& src, const Eigen::VectorXd& tgt,
                           double epsilon, double tol, int max_iter) {
    const nd::Index k = src.size();
    if (k < 1) {
        throw std::invalid_argument("sinkhorn_coupling: need K >= 1");
    }
    if (tgt.size() != k) {
        throw std::invalid_argument("sinkhorn_coupling: size mismatch");
    }
    if (epsilon <= 0.0) {
        throw std::invalid_argument("sinkhorn_coupling: epsilon must be positive");
    }

    Coupling out;
    out.cost = pairwise_sq_cost(src, tgt);
    out.epsilon = epsilon;

    const double log_marginal = -std::log(static_cast<double>(k));
    const double marginal = 1.0 / static_cast<double>(k);

    // potentials in cost units: log pi_ij = (f_i + g_j - M_ij) / eps
    Eigen::VectorXd f = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd work(k, k);

    // row-wise log-sum-exp of `work`, vectorized over the whole block
    Eigen::VectorXd row_max(k), lse(k);
    auto lse_rows = [&]() {
        row_max = work.rowwise().maxCoeff();
        lse = ((work.colwise() - row_max).array().exp().rowwise().sum()).log();
        lse += row_max;
    };
    auto plan_from = [&](double eps) {
        return Eigen::MatrixXd(
            ((((-out.cost).colwise() + f).rowwise() + g.transpose()) / eps).array().exp());
    };
    auto deviation_of = [&](const Eigen::MatrixXd& plan) {
        const double row_dev =
            (plan.rowwise().sum().array() - marginal).abs().maxCoeff();
        const double col_dev =
            (plan.colwise().sum().array() - marginal).abs().maxCoeff();
        return std::max(row_dev, col_dev);
    };

    // epsilon scaling: anneal from a coarse regularization down to the
    // requested one, warm-starting the potentials at every level
    std::vector<double> levels;
    for (double e = std::max(out.cost.mean(), epsilon); e > epsilon; e *= 0.5) {
        levels.push_back(e);
    }
    levels.push_back(epsilon);
    constexpr int kWarmupRounds = 10;

    for (std::size_t level = 0; level < levels.size() && out.iterations_used < max_iter;
         ++level) {
        const double eps = levels[level];
        const bool last = level + 1 == levels.size();
        int rounds = 0;
        while (out.iterations_used < max_iter) {
            work = ((-out.cost).rowwise() + g.transpose()) / eps;
            lse_rows();
            f = eps * (Eigen::VectorXd::Constant(k, log_marginal) - lse);
            work = (((-out.cost).colwise() + f) / eps).transpose();
            lse_rows();
            g = eps * (Eigen::VectorXd::Constant(k, log_marginal) - lse);
            ++out.iterations_used;
            ++rounds;
            if (deviation_of(plan_from(eps)) <= tol) {
                break;
            }
            if (!last && rounds >= kWarmupRounds) {
                break;  // coarse levels only need a warm start
            }
        }
    }
    out.plan = plan_from(epsilon);
    out.converged = deviation_of(out.plan) <= tol;
    return out;
}

namespace {

// epsilon <= 0 means "use the scale-invariant default"; an all-zero cost
// matrix has no meaningful regularization and takes the uniform plan.
Eigen::MatrixXd plan_for(const Eigen::VectorXd& src, const Eigen::VectorXd& tgt,
                         double epsilon, double tol, int max_iter) {
    const nd::Index k = src.size();
    Eigen::MatrixXd cost = pairwise_sq_cost(src, tgt);
    const double eps = epsilon > 0.0 ? epsilon : default_epsilon(cost);
    if (eps <= 0.0) {
        const double w = 1.0 / (static_cast<double>(k) * static_cast<double>(k));
        return Eigen::MatrixXd::Constant(k, k, w);
    }
    return sinkhorn_coupling(src, tgt, eps, tol, max_iter).plan;
}

} // namespace

double ot_distance(const Eigen::VectorXd& src, const Eigen::VectorXd& tgt, double epsilon,
                   double tol, int max_iter) {
    const nd::Index k = src.size();
    if (tgt.size() != k || k < 1) {
        throw std::invalid_argument("ot_distance: size mismatch");
    }
    Eigen::MatrixXd plan = plan_for(src, tgt, epsilon, tol, max_iter);
    Eigen::MatrixXd cost = pairwise_sq_cost(src, tgt);
    const double kk = static_cast<double>(k) * static_cast<double>(k);
    return plan.cwiseProduct(cost).sum() / kk;
}

double vertical_loss(const nd::Matrix& m_src_user, const nd::Matrix& m_tgt_user,
                     const nd::Matrix& m_src_item, const nd::Matrix& m_tgt_item,
                     double epsilon, double tol, int max_iter) {
    const nd::Index k = m_src_user.rows();
    const nd::Index d = m_src_user.cols();
    auto check = [&](const nd::Matrix& m, const char* name) {
        if (m.rows() != k || m.cols() != d) {
            throw std::invalid_argument(std::string("vertical_loss: ") + name +
                                        " has shape " + shape_string(m) + ", expected " +
                                        std::to_string(k) + "x" + std::to_string(d));
        }
    };
    check(m_tgt_user, "target user proxies");
    check(m_src_item, "source item proxies");
    check(m_tgt_item, "target item proxies");

    double total = 0.0;
    for (nd::Index q = 0; q < d; ++q) {
        total += ot_distance(m_src_user.mat().col(q), m_tgt_user.mat().col(q), epsilon, tol,
                             max_iter);
        total += ot_distance(m_src_item.mat().col(q), m_tgt_item.mat().col(q), epsilon, tol,
                             max_iter);
    }
    return total / static_cast<double>(d);
}

nd::Var vertical_loss_graph(const nd::Var& m_src_user, const nd::Var& m_tgt_user,
                            const nd::Var& m_src_item, const nd::Var& m_tgt_item,
                            double epsilon, double tol, int max_iter) {
    const nd::Index k = m_src_user->value.rows();
    const nd::Index d = m_src_user->value.cols();
    for (const nd::Var& m : {m_tgt_user, m_src_item, m_tgt_item}) {
        if (m->value.rows() != k || m->value.cols() != d) {
            throw std::invalid_argument("vertical_loss_graph: proxy shape mismatch");
        }
    }
    const double scale_kk = 1.0 / (static_cast<double>(k) * static_cast<double>(k));
    nd::Var acc;
    auto add_term = [&](const nd::Var& src, const nd::Var& tgt, nd::Index q) {
        Eigen::MatrixXd plan = plan_for(src->value.col(q), tgt->value.col(q), epsilon, tol,
                                        max_iter);
        nd::Var term = nd::ot_cost(nd::slice_cols(src, q, 1), nd::slice_cols(tgt, q, 1), plan,
                                   scale_kk);
        acc = acc ? nd::add(acc, term) : term;
    };
    for (nd::Index q = 0; q < d; ++q) {
        add_term(m_src_user, m_tgt_user, q);
        add_term(m_src_item, m_tgt_item, q);
    }
    return nd::scale(acc, 1.0 / static_cast<double>(d));
}

} // namespace cfaa::ot
