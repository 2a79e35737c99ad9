#include "cfaa/typical.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>

namespace cfaa::typical {

Eigen::MatrixXd update_assignments(const Eigen::VectorXd& z_col,
                                   const Eigen::VectorXd& proxies, double alpha) {
    const nd::Index n = z_col.size();
    const nd::Index k = proxies.size();
    if (k == 0) {
        throw std::invalid_argument("update_assignments: no proxies");
    }
    if (alpha <= 0.0) {
        throw std::invalid_argument("update_assignments: alpha must be positive");
    }
    Eigen::MatrixXd logits(n, k);
    for (nd::Index j = 0; j < k; ++j) {
        logits.col(j) = -(z_col.array() - proxies(j)).square() / alpha;
    }
    Eigen::VectorXd rmax = logits.rowwise().maxCoeff();
    Eigen::MatrixXd psi = (logits.colwise() - rmax).array().exp();
    Eigen::VectorXd denom = psi.rowwise().sum();
    psi.array().colwise() /= denom.array();
    psi = psi.cwiseMax(DBL_MIN);  // keep entries strictly positive
    return psi;
}

ProxyUpdate update_proxies(const Eigen::VectorXd& z_col, const Eigen::MatrixXd& psi,
                           const Eigen::VectorXd& current) {
    const nd::Index k = psi.cols();
    if (psi.rows() != z_col.size() || current.size() != k) {
        throw std::invalid_argument("update_proxies: shape mismatch");
    }
    ProxyUpdate out;
    out.proxies = current;
    out.frozen.assign(static_cast<std::size_t>(k), 0);
    Eigen::VectorXd mass = psi.colwise().sum();
    Eigen::VectorXd weighted = psi.transpose() * z_col;
    for (nd::Index j = 0; j < k; ++j) {
        if (mass(j) < 1e-300) {
            out.frozen[static_cast<std::size_t>(j)] = 1;
        } else {
            out.proxies(j) = weighted(j) / mass(j);
        }
    }
    return out;
}

double selection_objective(const Eigen::VectorXd& z_col, const Eigen::MatrixXd& psi,
                           const Eigen::VectorXd& proxies, double alpha) {
    double quad = 0.0;
    for (nd::Index j = 0; j < psi.cols(); ++j) {
        quad += psi.col(j).dot((z_col.array() - proxies(j)).square().matrix());
    }
    const double entropy = (psi.array() * psi.array().log()).sum();
    return quad + alpha * entropy;
}

Eigen::VectorXd quantile_init(const Eigen::VectorXd& z_col, nd::Index k) {
    const nd::Index n = z_col.size();
    if (k < 1 || k > n) {
        throw std::invalid_argument("quantile_init: need 1 <= K <= N");
    }
    std::vector<double> sorted(z_col.data(), z_col.data() + n);
    std::sort(sorted.begin(), sorted.end());
    Eigen::VectorXd init(k);
    if (k == 1) {
        init(0) = sorted[static_cast<std::size_t>((n - 1) / 2)];
        return init;
    }
    for (nd::Index j = 0; j < k; ++j) {
        const double pos = static_cast<double>(j) * static_cast<double>(n - 1) /
                           static_cast<double>(k - 1);
        init(j) = sorted[static_cast<std::size_t>(std::llround(pos))];
    }
    return init;
}

SelectionResult select_typical_samples(const SelectionProblem& problem) {
    const Eigen::MatrixXd& z = problem.embeddings.mat();
    const nd::Index n = z.rows();
    const nd::Index d = z.cols();
    const nd::Index k = problem.proxy_count;
    if (k < 1 || k > n) {
        throw std::invalid_argument("select_typical_samples: need 1 <= K <= N");
    }
    if (problem.alpha <= 0.0) {
        throw std::invalid_argument("select_typical_samples: alpha must be positive");
    }
    if (!problem.embeddings.all_finite()) {
        throw std::invalid_argument("select_typical_samples: non-finite embeddings");
    }

    SelectionResult result;
    result.proxies = nd::Matrix(k, d);
    result.assignments.resize(static_cast<std::size_t>(d));
    result.objective_trace.resize(static_cast<std::size_t>(d));
    result.frozen.resize(static_cast<std::size_t>(d));
    result.iterations.resize(static_cast<std::size_t>(d));

    for (nd::Index q = 0; q < d; ++q) {
        const Eigen::VectorXd col = z.col(q);
        Eigen::VectorXd proxies = quantile_init(col, k);
        Eigen::MatrixXd psi;
        std::vector<std::uint8_t> frozen(static_cast<std::size_t>(k), 0);
        std::vector<double>& trace = result.objective_trace[static_cast<std::size_t>(q)];
        double prev = 0.0;
        int iters = 0;
        for (int it = 0; it < problem.max_iter; ++it) {
            psi = update_assignments(col, proxies, problem.alpha);
            ProxyUpdate upd = update_proxies(col, psi, proxies);
            proxies = upd.proxies;
            frozen = upd.frozen;
            const double obj = selection_objective(col, psi, proxies, problem.alpha);
            trace.push_back(obj);
            iters = it + 1;
            if (it > 0 && std::abs(obj - prev) < problem.tol * std::max(1.0, std::abs(prev))) {
                break;
            }
            prev = obj;
        }
        result.proxies.mat().col(q) = proxies;
        result.assignments[static_cast<std::size_t>(q)] = psi;
        result.frozen[static_cast<std::size_t>(q)] = frozen;
        result.iterations[static_cast<std::size_t>(q)] = iters;
    }
    return result;
}

nd::Var proxies_graph(const nd::Var& z, const SelectionResult& solved) {
    const nd::Index d = z->value.cols();
    const nd::Index k = solved.proxies.rows();
    if (static_cast<nd::Index>(solved.assignments.size()) != d) {
        throw std::invalid_argument("proxies_graph: attribution count mismatch");
    }
    auto weights = std::make_shared<std::vector<Eigen::MatrixXd>>();
    weights->reserve(static_cast<std::size_t>(d));
    Eigen::MatrixXd offset = Eigen::MatrixXd::Zero(k, d);
    bool any_frozen = false;
    for (nd::Index q = 0; q < d; ++q) {
        Eigen::MatrixXd w = solved.assignments[static_cast<std::size_t>(q)];
        Eigen::VectorXd mass = w.colwise().sum();
        for (nd::Index j = 0; j < k; ++j) {
            if (solved.frozen[static_cast<std::size_t>(q)][static_cast<std::size_t>(j)]) {
                w.col(j).setZero();
                offset(j, q) = solved.proxies(j, q);
                any_frozen = true;
            } else {
                w.col(j) /= mass(j);
            }
        }
        weights->push_back(std::move(w));
    }
    nd::Var m = nd::proxy_mean(z, std::shared_ptr<const std::vector<Eigen::MatrixXd>>(weights));
    if (any_frozen) {
        m = nd::add(m, nd::constant(std::move(offset)));
    }
    return m;
}

} // namespace cfaa::typical
