#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "tksd/kernel.hpp"

using tksd::KernelConfig;
using tksd::Matrix;
using tksd::Vector;

TEST_CASE("median_heuristic: hand-computed values") {
    Matrix X(3, 1);
    X << 0.0, 1.0, 3.0;
    // Distances {1, 3, 2}, median 2.
    CHECK(tksd::median_heuristic(X) == doctest::Approx(2.0).epsilon(1e-15));

    Matrix Y(2, 2);
    Y << 0.0, 0.0, 3.0, 4.0;
    CHECK(tksd::median_heuristic(Y) == doctest::Approx(5.0).epsilon(1e-15));

    // Even count: distances {1, 2, 4, 1, 3, 2} -> midpoint of {2, 2} = 2.
    Matrix Z(4, 1);
    Z << 0.0, 1.0, 2.0, 4.0;
    CHECK(tksd::median_heuristic(Z) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("median_heuristic: errors") {
    Matrix one(1, 2);
    one << 0.0, 0.0;
    CHECK_THROWS_AS((void)tksd::median_heuristic(one), std::invalid_argument);

    Matrix dup(3, 2);
    dup << 1.0, 2.0, 1.0, 2.0, 1.0, 2.0;
    CHECK_THROWS_AS((void)tksd::median_heuristic(dup), tksd::DegenerateDataError);
}

TEST_CASE("kernel_bundle: x == y") {
    KernelConfig cfg;
    cfg.bandwidth = 0.7;
    Vector x(3);
    x << 0.3, -1.2, 2.0;
    const auto b = tksd::kernel_bundle(x, x, cfg);
    CHECK(b.k == 1.0);
    CHECK(b.dkx.norm() == 0.0);
    CHECK(b.dky.norm() == 0.0);
    for (int l = 0; l < 3; ++l) {
        CHECK(b.dkxy[l] == doctest::Approx(1.0 / (0.7 * 0.7)).epsilon(1e-15));
    }
}

TEST_CASE("kernel_bundle: 1d hand value at x=0, y=2, sigma=sqrt(2)") {
    KernelConfig cfg;
    cfg.bandwidth = std::sqrt(2.0);
    Vector x(1), y(1);
    x << 0.0;
    y << 2.0;
    const auto b = tksd::kernel_bundle(x, y, cfg);
    const double e1 = std::exp(-1.0);
    CHECK(b.k == doctest::Approx(e1).epsilon(1e-14));
    CHECK(b.dkx[0] == doctest::Approx(e1).epsilon(1e-14));          // -((0-2)/2) e^-1
    CHECK(b.dky[0] == doctest::Approx(-e1).epsilon(1e-14));
    CHECK(b.dkxy[0] == doctest::Approx(-0.5 * e1).epsilon(1e-14));  // e^-1 (1/2 - 4/4)
}

TEST_CASE("kernel_bundle: argument-swap symmetry") {
    KernelConfig cfg;
    cfg.bandwidth = 1.3;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;
    for (int rep = 0; rep < 5; ++rep) {
        Vector x(4), y(4);
        for (int i = 0; i < 4; ++i) {
            x[i] = gauss(rng);
            y[i] = gauss(rng);
        }
        const auto ab = tksd::kernel_bundle(x, y, cfg);
        const auto ba = tksd::kernel_bundle(y, x, cfg);
        CHECK(ab.k == doctest::Approx(ba.k).epsilon(1e-15));
        for (int l = 0; l < 4; ++l) {
            // d/dx_l k(y, x) = d/dy_l k(x, y) by symmetry of k.
            CHECK(ba.dkx[l] == doctest::Approx(ab.dky[l]).epsilon(1e-14));
            CHECK(ba.dkxy[l] == doctest::Approx(ab.dkxy[l]).epsilon(1e-14));
        }
    }
}

TEST_CASE("kernel_bundle: derivatives match central finite differences") {
    KernelConfig cfg;
    cfg.bandwidth = 0.9;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    const double h = 1e-6;
    for (int rep = 0; rep < 10; ++rep) {
        Vector x(3), y(3);
        for (int i = 0; i < 3; ++i) {
            x[i] = gauss(rng);
            y[i] = gauss(rng);
        }
        const auto b = tksd::kernel_bundle(x, y, cfg);
        for (int l = 0; l < 3; ++l) {
            Vector xp = x, xm = x;
            xp[l] += h;
            xm[l] -= h;
            const double fd_dkx =
                (tksd::kernel_bundle(xp, y, cfg).k - tksd::kernel_bundle(xm, y, cfg).k) / (2 * h);
            CHECK(b.dkx[l] == doctest::Approx(fd_dkx).epsilon(1e-6));

            // Cross derivative: difference the dky field in x_l.
            const double fd_dkxy = (tksd::kernel_bundle(xp, y, cfg).dky[l] -
                                    tksd::kernel_bundle(xm, y, cfg).dky[l]) /
                                   (2 * h);
            CHECK(b.dkxy[l] == doctest::Approx(fd_dkxy).epsilon(1e-5));
        }
    }
}

TEST_CASE("gram: entries agree with kernel_bundle, unit diagonal") {
    KernelConfig cfg;
    cfg.bandwidth = 1.1;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    Matrix X(6, 2), Y(4, 2);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = gauss(rng);
    for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] = gauss(rng);

    const Matrix K = tksd::gram(X, Y, cfg);
    REQUIRE(K.rows() == 6);
    REQUIRE(K.cols() == 4);
    for (Eigen::Index i = 0; i < 6; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j) {
            const auto b = tksd::kernel_bundle(X.row(i).transpose(), Y.row(j).transpose(), cfg);
            CHECK(K(i, j) == doctest::Approx(b.k).epsilon(1e-15));
        }
    }
    const Matrix Kxx = tksd::gram(X, X, cfg);
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(Kxx(i, i) == 1.0);
}

TEST_CASE("gram of distinct points is positive definite after default jitter") {
    KernelConfig cfg;
    cfg.bandwidth = 0.8;
    std::mt19937_64 rng(19);
    std::normal_distribution<double> gauss;
    Matrix X(50, 3);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = gauss(rng);
    const Matrix K = tksd::gram(X, X, cfg);
    const tksd::SpdSolver solver(K, cfg);  // throws if every escalation fails
    CHECK(solver.jitter_used() <= 1e-8 * (1.0 + 1e-12));
}

TEST_CASE("grad_gram and cross_grad_gram agree with kernel_bundle") {
    KernelConfig cfg;
    cfg.bandwidth = 0.6;
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss;
    Matrix X(5, 3), Y(4, 3);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = gauss(rng);
    for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] = gauss(rng);

    for (Eigen::Index l = 0; l < 3; ++l) {
        const Matrix D = tksd::grad_gram(X, Y, l, cfg);
        const Matrix C = tksd::cross_grad_gram(X, Y, l, cfg);
        for (Eigen::Index i = 0; i < 5; ++i) {
            for (Eigen::Index j = 0; j < 4; ++j) {
                const auto b = tksd::kernel_bundle(X.row(i).transpose(), Y.row(j).transpose(), cfg);
                CHECK(D(i, j) == doctest::Approx(b.dkx[l]).epsilon(1e-14));
                CHECK(C(i, j) == doctest::Approx(b.dkxy[l]).epsilon(1e-14));
            }
        }
    }

    // First-derivative Gram on one sample set is antisymmetric.
    const Matrix D = tksd::grad_gram(X, X, 1, cfg);
    CHECK((D + D.transpose()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("regularized_spd_solve: identity with forced zero jitter is exact") {
    KernelConfig cfg;
    cfg.jitter = 0.0;
    const Matrix I3 = Matrix::Identity(3, 3);
    const auto r = tksd::regularized_spd_solve(I3, I3, cfg);
    CHECK(r.jitter_used == 0.0);
    CHECK((r.solution - I3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("regularized_spd_solve: default jitter path") {
    KernelConfig cfg;  // jitter unset -> 1e-8 * trace/m = 1e-8 for identity
    const Matrix I3 = Matrix::Identity(3, 3);
    const auto r = tksd::regularized_spd_solve(I3, I3, cfg);
    CHECK(r.jitter_used == doctest::Approx(1e-8).epsilon(1e-12));
    CHECK((r.solution - I3 / (1.0 + 1e-8)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("regularized_spd_solve: singular 2x2 matches hand elimination of jittered system") {
    // K = ones(2,2) is singular; with jitter eps the system is
    //   [1+eps, 1; 1, 1+eps] x = b, inverse = 1/(eps(2+eps)) [1+eps, -1; -1, 1+eps].
    const double eps = 1e-4;
    KernelConfig cfg;
    cfg.jitter = eps;
    Matrix K(2, 2);
    K << 1.0, 1.0, 1.0, 1.0;
    Vector b(2);
    b << 0.3, -1.1;
    const auto r = tksd::regularized_spd_solve(K, b, cfg);
    CHECK(r.jitter_used == eps);

    const double det = eps * (2.0 + eps);
    Vector expected(2);
    expected << ((1.0 + eps) * b[0] - b[1]) / det, (-b[0] + (1.0 + eps) * b[1]) / det;
    CHECK((r.solution - expected).cwiseAbs().maxCoeff() < 1e-9 * expected.cwiseAbs().maxCoeff());
}

TEST_CASE("SpdSolver: escalation from forced zero jitter on a singular matrix") {
    KernelConfig cfg;
    cfg.jitter = 0.0;
    Matrix K(2, 2);
    K << 1.0, 1.0, 1.0, 1.0;
    const tksd::SpdSolver solver(K, cfg);
    // First retry restarts at the default base 1e-8 * trace/m = 1e-8.
    CHECK(solver.jitter_used() == doctest::Approx(1e-8).epsilon(1e-12));
}

TEST_CASE("SpdSolver: escalation eventually gives up") {
    KernelConfig cfg;
    cfg.jitter = 1e-10;
    cfg.jitter_growth_limit = 2;
    Matrix K(2, 2);
    K << 1.0, 3.0, 3.0, 1.0;  // indefinite; eigenvalues 4 and -2, beyond small jitter repair
    CHECK_THROWS_AS(tksd::SpdSolver(K, cfg), tksd::NotPositiveDefiniteError);
}

TEST_CASE("SpdSolver: input validation") {
    KernelConfig cfg;
    Matrix bad(2, 3);
    bad.setZero();
    CHECK_THROWS_AS(tksd::SpdSolver(bad, cfg), std::invalid_argument);

    Matrix asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS(tksd::SpdSolver(asym, cfg), std::invalid_argument);

    KernelConfig neg;
    neg.jitter = -1.0;
    Matrix I2 = Matrix::Identity(2, 2);
    CHECK_THROWS_AS(tksd::SpdSolver(I2, neg), std::invalid_argument);
}

TEST_CASE("kernel ops: invalid bandwidth and shape errors") {
    KernelConfig cfg;
    cfg.bandwidth = 0.0;
    Vector x(2), y(2);
    x.setZero();
    y.setOnes();
    CHECK_THROWS_AS((void)tksd::kernel_bundle(x, y, cfg), std::invalid_argument);

    KernelConfig ok;
    Vector z(3);
    z.setZero();
    CHECK_THROWS_AS((void)tksd::kernel_bundle(x, z, ok), std::invalid_argument);

    Matrix X(2, 2), Y(2, 3);
    X.setZero();
    Y.setZero();
    CHECK_THROWS_AS((void)tksd::gram(X, Y, ok), std::invalid_argument);
    CHECK_THROWS_AS((void)tksd::grad_gram(X, X, 5, ok), std::invalid_argument);
}
