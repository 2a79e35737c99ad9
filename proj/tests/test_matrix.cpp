#include "cfaa/matrix.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace cfaa;

TEST_CASE("matrix construction validates shape and finiteness") {
    CHECK_THROWS_AS(nd::Matrix(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(nd::Matrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}),
                    std::invalid_argument);
    CHECK_THROWS_AS(nd::Matrix(1, 1, {std::numeric_limits<double>::infinity()}),
                    std::invalid_argument);
    nd::Matrix m(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m(1, 2) == 6.0);
    CHECK(m.row_major() == std::vector<double>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("sym_eig identity and diagonal cases") {
    nd::EigPair eye = nd::sym_eig(nd::Matrix::identity(2));
    CHECK(eye.eigenvalues(0, 0) == doctest::Approx(1.0));
    CHECK(eye.eigenvalues(1, 0) == doctest::Approx(1.0));

    nd::EigPair diag = nd::sym_eig(nd::Matrix(2, 2, {1, 0, 0, 4}));
    CHECK(diag.eigenvalues(0, 0) == doctest::Approx(1.0));
    CHECK(diag.eigenvalues(1, 0) == doctest::Approx(4.0));
    // standard basis vectors up to sign
    CHECK(std::abs(diag.eigenvectors(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(diag.eigenvectors(1, 1)) == doctest::Approx(1.0));
}

TEST_CASE("sym_eig hand-solved 2x2") {
    // det([[2-l,1],[1,2-l]]) = (2-l)^2 - 1 = 0 -> l = 1, 3
    nd::EigPair eig = nd::sym_eig(nd::Matrix(2, 2, {2, 1, 1, 2}));
    CHECK(eig.eigenvalues(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eig.eigenvalues(1, 0) == doctest::Approx(3.0).epsilon(1e-12));
    const double s = 1.0 / std::sqrt(2.0);
    // eigenvector of 1 is (1,-1)/sqrt(2), of 3 is (1,1)/sqrt(2), up to sign
    CHECK(std::abs(eig.eigenvectors(0, 0) * eig.eigenvectors(1, 0)) ==
          doctest::Approx(s * s).epsilon(1e-10));
    CHECK(eig.eigenvectors(0, 0) * eig.eigenvectors(1, 0) < 0.0);
    CHECK(eig.eigenvectors(0, 1) * eig.eigenvectors(1, 1) > 0.0);
    CHECK(std::abs(eig.eigenvectors(0, 1)) == doctest::Approx(s).epsilon(1e-10));
}

TEST_CASE("sym_eig reconstruction and orthonormality on random input") {
    Rng rng(7);
    for (nd::Index n : {2, 5, 16, 33, 64}) {
        Eigen::MatrixXd s = testutil::random_symmetric(n, rng);
        nd::EigPair eig = nd::sym_eig(nd::Matrix::from_eigen(s));
        Eigen::MatrixXd v = eig.eigenvectors.mat();
        Eigen::VectorXd lam = eig.eigenvalues.mat().col(0);
        const double recon = (v * lam.asDiagonal() * v.transpose() - s).norm() / s.norm();
        CHECK(recon <= 1e-10);
        const double ortho = (v.transpose() * v - Eigen::MatrixXd::Identity(n, n)).norm();
        CHECK(ortho <= 1e-10);
        for (nd::Index i = 1; i < n; ++i) {
            CHECK(lam(i) >= lam(i - 1));  // ascending
        }
    }
}

TEST_CASE("sym_eig rejects asymmetric and non-square input") {
    CHECK_THROWS_AS(nd::sym_eig(nd::Matrix(2, 2, {0, 1, 0, 0})), std::invalid_argument);
    CHECK_THROWS_AS(nd::sym_eig(nd::Matrix(2, 3)), std::invalid_argument);
}

TEST_CASE("sym_eig is deterministic") {
    Rng rng(11);
    Eigen::MatrixXd s = testutil::random_symmetric(8, rng);
    nd::EigPair a = nd::sym_eig(nd::Matrix::from_eigen(s));
    nd::EigPair b = nd::sym_eig(nd::Matrix::from_eigen(s));
    CHECK(a.eigenvalues.mat() == b.eigenvalues.mat());
    CHECK(a.eigenvectors.mat() == b.eigenvectors.mat());
}

TEST_CASE("psd_function diagonal spectral maps") {
    nd::Matrix sq = nd::psd_function(nd::Matrix(2, 2, {4, 0, 0, 9}), nd::PsdFn::Sqrt);
    CHECK(sq(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sq(1, 1) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(sq(0, 1) == doctest::Approx(0.0));

    nd::Matrix pinv = nd::psd_function(nd::Matrix(2, 2, {2, 0, 0, 0}), nd::PsdFn::Pinv, 1e-8);
    CHECK(pinv(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pinv(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("psd_function pinv_sqrt composes the hand eigendecomposition") {
    // [[2,1],[1,2]]: l = (1,3), so the map gives V diag(1, 1/sqrt(3)) V^T
    nd::Matrix got = nd::psd_function(nd::Matrix(2, 2, {2, 1, 1, 2}), nd::PsdFn::PinvSqrt);
    const double s = 1.0 / std::sqrt(2.0);
    Eigen::MatrixXd v(2, 2);
    v << s, s, -s, s;
    Eigen::Vector2d mapped(1.0, 1.0 / std::sqrt(3.0));
    Eigen::MatrixXd expected = v * mapped.asDiagonal() * v.transpose();
    CHECK((got.mat() - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("psd_function sqrt squared reproduces the input") {
    Rng rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        Eigen::MatrixXd s = testutil::random_spd(6, rng);
        nd::Matrix root = nd::psd_function(nd::Matrix::from_eigen(s), nd::PsdFn::Sqrt);
        CHECK((root.mat() * root.mat() - s).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("psd_function rejects indefinite input under sqrt") {
    CHECK_THROWS_AS(nd::psd_function(nd::Matrix(2, 2, {1, 0, 0, -1}), nd::PsdFn::Sqrt),
                    std::domain_error);
}

TEST_CASE("psd_function clamps tiny negatives") {
    nd::Matrix m(2, 2, {1, 0, 0, -1e-12});
    nd::Matrix root = nd::psd_function(m, nd::PsdFn::Sqrt, 1e-8);
    CHECK(root(1, 1) == doctest::Approx(0.0));
}
