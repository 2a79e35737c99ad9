#include "cfaa/ot.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace cfaa;

namespace {

// Exhaustive linear-program oracle: with uniform 1/K marginals the optimum
// sits at a permutation matrix scaled by 1/K, so minimize over all K!
// assignments.
double lp_distance_oracle(const Eigen::VectorXd& src, const Eigen::VectorXd& tgt) {
    const nd::Index k = src.size();
    Eigen::MatrixXd cost = ot::pairwise_sq_cost(src, tgt);
    std::vector<nd::Index> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (nd::Index i = 0; i < k; ++i) {
            total += cost(i, perm[static_cast<std::size_t>(i)]);
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const double kd = static_cast<double>(k);
    return best / (kd * kd * kd);  // plan mass 1/K, then the 1/K^2 prefactor
}

double marginal_deviation(const Eigen::MatrixXd& plan) {
    const double target = 1.0 / static_cast<double>(plan.rows());
    double dev = 0.0;
    for (nd::Index i = 0; i < plan.rows(); ++i) {
        dev = std::max(dev, std::abs(plan.row(i).sum() - target));
    }
    for (nd::Index j = 0; j < plan.cols(); ++j) {
        dev = std::max(dev, std::abs(plan.col(j).sum() - target));
    }
    return dev;
}

} // namespace

TEST_CASE("single atom couples trivially") {
    Eigen::VectorXd one(1);
    one << 3.0;
    ot::Coupling c = ot::sinkhorn_coupling(one, one, 0.1);
    CHECK(c.plan(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.cost(0, 0) == 0.0);
    CHECK(c.converged);
}

TEST_CASE("small epsilon recovers the diagonal plan on matched points") {
    Eigen::VectorXd pts(2);
    pts << 0.0, 1.0;
    ot::Coupling c = ot::sinkhorn_coupling(pts, pts, 1e-3, 1e-8, 2000);
    CHECK(c.converged);
    CHECK(c.plan(0, 0) == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(c.plan(1, 1) == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(c.plan(0, 1) < 1e-4);
    CHECK(c.plan(1, 0) < 1e-4);
}

TEST_CASE("marginals hold on random instances") {
    Rng rng(71);
    for (int rep = 0; rep < 20; ++rep) {
        const nd::Index k = 2 + static_cast<nd::Index>(rng.integer(31));
        Eigen::VectorXd src = testutil::random_matrix(k, 1, rng, -2.0, 2.0).col(0);
        Eigen::VectorXd tgt = testutil::random_matrix(k, 1, rng, -2.0, 2.0).col(0);
        Eigen::MatrixXd cost = ot::pairwise_sq_cost(src, tgt);
        ot::Coupling c = ot::sinkhorn_coupling(src, tgt, ot::default_epsilon(cost), 1e-6, 5000);
        CHECK(c.converged);
        CHECK(marginal_deviation(c.plan) <= 1e-6);
        CHECK(c.plan.minCoeff() >= 0.0);
        CHECK(c.plan.sum() == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("exhausting max_iter reports non-convergence") {
    Eigen::VectorXd src(4);
    src << 0.0, 1.0, 2.0, 3.0;
    Eigen::VectorXd tgt(4);
    tgt << 0.5, 1.5, 2.5, 3.5;
    ot::Coupling c = ot::sinkhorn_coupling(src, tgt, 1e-4, 1e-12, 1);
    CHECK_FALSE(c.converged);
    CHECK(c.iterations_used == 1);
}

TEST_CASE("sinkhorn_coupling validates input") {
    Eigen::VectorXd a(2), b(3);
    a << 0, 1;
    b << 0, 1, 2;
    CHECK_THROWS_AS(ot::sinkhorn_coupling(a, b, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(ot::sinkhorn_coupling(a, a, 0.0), std::invalid_argument);
}

TEST_CASE("identical columns give vanishing distance") {
    Rng rng(73);
    Eigen::VectorXd v = testutil::random_matrix(6, 1, rng).col(0);
    CHECK(ot::ot_distance(v, v, 1e-4, 1e-8, 5000) < 1e-6);
}

TEST_CASE("worked 2-point example gives 0.25") {
    Eigen::VectorXd src(2), tgt(2);
    src << 0.0, 1.0;
    tgt << 1.0, 2.0;
    const double d = ot::ot_distance(src, tgt, 1e-4, 1e-8, 5000);
    CHECK(std::abs(d - 0.25) <= 1e-4);
}

TEST_CASE("distance is symmetric") {
    Rng rng(79);
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd a = testutil::random_matrix(5, 1, rng).col(0);
        Eigen::VectorXd b = testutil::random_matrix(5, 1, rng).col(0);
        const double dab = ot::ot_distance(a, b, 0.0, 1e-12, 5000);
        const double dba = ot::ot_distance(b, a, 0.0, 1e-12, 5000);
        CHECK(std::abs(dab - dba) <= 1e-8);
    }
}

TEST_CASE("entropic distance matches the exhaustive LP oracle at small epsilon") {
    Rng rng(83);
    for (nd::Index k = 2; k <= 8; ++k) {
        Eigen::VectorXd src = testutil::random_matrix(k, 1, rng, -1.5, 1.5).col(0);
        Eigen::VectorXd tgt = testutil::random_matrix(k, 1, rng, -1.5, 1.5).col(0);
        const double entropic = ot::ot_distance(src, tgt, 1e-4, 1e-9, 20000);
        CHECK(std::abs(entropic - lp_distance_oracle(src, tgt)) <= 1e-3);
    }
}

TEST_CASE("doubling both columns quadruples the distance") {
    Rng rng(89);
    Eigen::VectorXd a = testutil::random_matrix(6, 1, rng).col(0);
    Eigen::VectorXd b = testutil::random_matrix(6, 1, rng).col(0);
    const double base = ot::ot_distance(a, b);  // default epsilon scales along
    const double scaled = ot::ot_distance(Eigen::VectorXd(2.0 * a), Eigen::VectorXd(2.0 * b));
    CHECK(std::abs(scaled - 4.0 * base) <= 1e-8 * std::max(1.0, scaled));
}

TEST_CASE("vertical loss vanishes for identical domains and collapses at D=1") {
    Rng rng(97);
    nd::Matrix m = nd::Matrix::from_eigen(testutil::random_matrix(4, 3, rng));
    CHECK(ot::vertical_loss(m, m, m, m, 1e-4) < 1e-6);

    nd::Matrix su = nd::Matrix::from_eigen(testutil::random_matrix(4, 1, rng));
    nd::Matrix tu = nd::Matrix::from_eigen(testutil::random_matrix(4, 1, rng));
    nd::Matrix sv = nd::Matrix::from_eigen(testutil::random_matrix(4, 1, rng));
    nd::Matrix tv = nd::Matrix::from_eigen(testutil::random_matrix(4, 1, rng));
    const double expect = ot::ot_distance(su.mat().col(0), tu.mat().col(0)) +
                          ot::ot_distance(sv.mat().col(0), tv.mat().col(0));
    CHECK(ot::vertical_loss(su, tu, sv, tv) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("vertical loss composes the per-attribution distances") {
    // user columns contribute 0.25 each (the worked example), items nothing
    nd::Matrix su(2, 2, {0, 0, 1, 1});
    nd::Matrix tu(2, 2, {1, 1, 2, 2});
    nd::Matrix sv(2, 2, {0.3, -0.7, 0.9, 0.4});
    const double loss = ot::vertical_loss(su, tu, sv, sv, 1e-4, 1e-9, 20000);
    CHECK(std::abs(loss - 0.25) <= 1e-4);
}

TEST_CASE("vertical loss rejects mismatched shapes") {
    nd::Matrix a(2, 2), b(3, 2);
    CHECK_THROWS_AS(ot::vertical_loss(a, b, a, a), std::invalid_argument);
}
