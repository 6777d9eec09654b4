#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "tksd/geometry.hpp"

using tksd::Domain;
using tksd::LpBall;
using tksd::Matrix;
using tksd::Polygon2D;
using tksd::Vector;

namespace {

Vector vec2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

Matrix unit_square() {
    Matrix v(4, 2);
    v << 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0;
    return v;
}

std::string write_temp(const std::string& name, const std::string& contents) {
    std::ofstream out(name);
    out << contents;
    out.close();
    return name;
}

}  // namespace

TEST_CASE("lp ball contains: boundary points count as inside") {
    const Domain l2 = Domain::lp_ball(2, 1.0, Vector::Zero(2));
    CHECK(l2.contains(vec2(0.6, 0.8)));   // exactly on the sphere
    CHECK(l2.contains(vec2(0.1, -0.2)));
    CHECK_FALSE(l2.contains(vec2(1.1, 0.0)));

    const Domain l1 = Domain::lp_ball(1, 1.0, Vector::Zero(2));
    CHECK(l1.contains(vec2(0.5, 0.5)));   // on the l1 diamond
    CHECK(l1.contains(vec2(-0.3, 0.3)));
    CHECK_FALSE(l1.contains(vec2(0.6, 0.5)));

    CHECK_THROWS_AS(Domain::lp_ball(3, 1.0, Vector::Zero(2)), std::invalid_argument);
    CHECK_THROWS_AS(Domain::lp_ball(2, -1.0, Vector::Zero(2)), std::invalid_argument);
}

TEST_CASE("polygon contains: unit square corners, edges, interior, exterior") {
    const Polygon2D sq{unit_square()};
    // Corners and edge midpoints are inside by convention.
    CHECK(sq.contains(0.0, 0.0));
    CHECK(sq.contains(1.0, 0.0));
    CHECK(sq.contains(1.0, 1.0));
    CHECK(sq.contains(0.0, 1.0));
    CHECK(sq.contains(0.5, 0.0));
    CHECK(sq.contains(1.0, 0.5));
    CHECK(sq.contains(0.5, 1.0));
    CHECK(sq.contains(0.0, 0.5));
    CHECK(sq.contains(0.5, 0.5));
    CHECK_FALSE(sq.contains(1.5, 0.5));
    CHECK_FALSE(sq.contains(-0.2, 0.5));
    CHECK_FALSE(sq.contains(0.5, -1e-9));
}

TEST_CASE("polygon contains: ray through a vertex is counted once") {
    Matrix diamond(4, 2);
    diamond << 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0;
    const Polygon2D poly{diamond};
    CHECK(poly.contains(0.0, 0.0));     // horizontal ray passes through (1, 0)
    CHECK(poly.contains(-0.2, 0.0));
    CHECK_FALSE(poly.contains(1.2, 0.0));
    CHECK_FALSE(poly.contains(-1.2, 0.0));
}

TEST_CASE("polygon validation") {
    Matrix two(2, 2);
    two << 0.0, 0.0, 1.0, 0.0;
    CHECK_THROWS_AS(Polygon2D{two}, std::invalid_argument);

    Matrix dup(4, 2);
    dup << 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0;
    CHECK_THROWS_AS(Polygon2D{dup}, std::invalid_argument);

    // Trailing repeat of the first vertex makes the closing edge degenerate.
    Matrix closed(5, 2);
    closed << 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0;
    CHECK_THROWS_AS(Polygon2D{closed}, std::invalid_argument);

    Matrix bowtie(4, 2);
    bowtie << 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0;
    CHECK_THROWS_WITH_AS(Polygon2D{bowtie}, doctest::Contains("edges"), std::invalid_argument);
}

TEST_CASE("sample_boundary_lp: d=1 gives the two endpoints") {
    std::mt19937_64 rng(5);
    LpBall ball{2, 2.0, Vector::Constant(1, 0.5)};
    const Matrix pts = tksd::sample_boundary_lp(ball, 100, {}, rng);
    bool saw_low = false, saw_high = false;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const double v = pts(i, 0);
        CHECK((v == doctest::Approx(-1.5) || v == doctest::Approx(2.5)));
        saw_low = saw_low || v < 0.0;
        saw_high = saw_high || v > 0.0;
    }
    CHECK(saw_low);
    CHECK(saw_high);
}

TEST_CASE("sample_boundary_lp: samples lie exactly on the lp sphere") {
    std::mt19937_64 rng(9);
    for (const int p : {1, 2}) {
        for (const int d : {2, 5}) {
            Vector c = Vector::LinSpaced(d, -1.0, 1.0);
            LpBall ball{p, 3.0, c};
            const Matrix pts = tksd::sample_boundary_lp(ball, 200, {}, rng);
            for (Eigen::Index i = 0; i < pts.rows(); ++i) {
                const Vector diff = pts.row(i).transpose() - c;
                const double nrm = p == 1 ? diff.lpNorm<1>() : diff.norm();
                CHECK(std::abs(nrm - 3.0) <= 1e-12 * 3.0);
            }
        }
    }
}

TEST_CASE("sample_boundary_lp: unbiased sampling is centred, bias shifts mass") {
    std::mt19937_64 rng(13);
    LpBall ball{2, 1.0, Vector::Zero(2)};
    const Matrix pts = tksd::sample_boundary_lp(ball, 10000, {}, rng);
    const Vector mean = pts.colwise().mean().transpose();
    CHECK(std::abs(mean[0]) < 0.05);
    CHECK(std::abs(mean[1]) < 0.05);

    tksd::DirectionalBias toward{2.0, vec2(1.0, 0.0)};
    const Matrix biased = tksd::sample_boundary_lp(ball, 2000, toward, rng);
    CHECK(biased.col(0).mean() > 0.3);

    tksd::DirectionalBias away{-2.0, vec2(1.0, 0.0)};
    const Matrix pushed = tksd::sample_boundary_lp(ball, 2000, away, rng);
    CHECK(pushed.col(0).mean() < -0.3);
}

TEST_CASE("sample_boundary_polygon: arc-length uniform on the unit square") {
    std::mt19937_64 rng(17);
    const Polygon2D sq{unit_square()};
    const Matrix pts = tksd::sample_boundary_polygon(sq, 40000, rng);
    int edge_count[4] = {0, 0, 0, 0};
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const double x = pts(i, 0), y = pts(i, 1);
        CHECK(sq.boundary_distance(x, y) <= 1e-12);
        if (y == 0.0) {
            ++edge_count[0];
        } else if (x == 1.0) {
            ++edge_count[1];
        } else if (y == 1.0) {
            ++edge_count[2];
        } else {
            ++edge_count[3];
        }
    }
    for (const int c : edge_count) {
        CHECK(static_cast<double>(c) / 40000.0 == doctest::Approx(0.25).epsilon(0.08));
    }
}

TEST_CASE("approx_distance: hand values and tie breaking") {
    Matrix boundary(3, 2);
    boundary << 0.0, 1.0, 0.0, -1.0, 2.0, 0.0;
    const Vector x = vec2(0.0, 0.0);

    const auto d1 = tksd::approx_distance(x, boundary, 2, 1.0);
    CHECK(d1.value == doctest::Approx(1.0).epsilon(1e-15));
    // Tie between rows 0 and 1 breaks to row 0; gradient points away from (0, 1).
    CHECK(d1.gradient[0] == doctest::Approx(0.0));
    CHECK(d1.gradient[1] == doctest::Approx(-1.0));

    const auto d2 = tksd::approx_distance(x, boundary, 2, 2.0);
    CHECK(d2.value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d2.gradient[1] == doctest::Approx(-2.0));

    Matrix one(1, 2);
    one << 1.0, 1.0;
    const auto l1 = tksd::approx_distance(vec2(0.3, 0.2), one, 1, 1.0);
    CHECK(l1.value == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(l1.gradient[0] == doctest::Approx(-1.0));
    CHECK(l1.gradient[1] == doctest::Approx(-1.0));
}

TEST_CASE("approx_distance: zero subgradient at a coincident boundary point") {
    Matrix boundary(2, 2);
    boundary << 0.3, 0.2, 1.0, 1.0;
    const auto r = tksd::approx_distance(vec2(0.3, 0.2), boundary, 2, 1.0);
    CHECK(r.value == 0.0);
    CHECK(r.gradient.norm() == 0.0);
}

TEST_CASE("approx_distance: gradient matches central finite differences") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> gauss;
    Matrix boundary(20, 3);
    for (Eigen::Index i = 0; i < boundary.size(); ++i) boundary.data()[i] = 2.0 * gauss(rng);
    const double h = 1e-6;
    for (const int alpha : {1, 2}) {
        for (const double gamma : {1.0, 2.0}) {
            for (int rep = 0; rep < 8; ++rep) {
                Vector x(3);
                for (int l = 0; l < 3; ++l) x[l] = gauss(rng);
                const auto res = tksd::approx_distance(x, boundary, alpha, gamma);
                for (int l = 0; l < 3; ++l) {
                    Vector xp = x, xm = x;
                    xp[l] += h;
                    xm[l] -= h;
                    const double fd = (tksd::approx_distance(xp, boundary, alpha, gamma).value -
                                       tksd::approx_distance(xm, boundary, alpha, gamma).value) /
                                      (2 * h);
                    CHECK(res.gradient[l] == doctest::Approx(fd).epsilon(1e-5));
                }
            }
        }
    }
}

TEST_CASE("exact_distance_l2ball: values, gradients, outside error") {
    LpBall ball{2, 1.0, Vector::Zero(2)};
    const auto centre = tksd::exact_distance_l2ball(vec2(0.0, 0.0), ball);
    CHECK(centre.value == doctest::Approx(1.0));
    CHECK(centre.gradient.norm() == 0.0);

    const auto r = tksd::exact_distance_l2ball(vec2(0.6, 0.0), ball);
    CHECK(r.value == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(r.gradient[0] == doctest::Approx(-1.0));
    CHECK(r.gradient[1] == doctest::Approx(0.0));

    const auto edge = tksd::exact_distance_l2ball(vec2(1.0, 0.0), ball);
    CHECK(edge.value == doctest::Approx(0.0));

    CHECK_THROWS_AS((void)tksd::exact_distance_l2ball(vec2(1.2, 0.0), ball),
                    std::invalid_argument);
    LpBall l1ball{1, 1.0, Vector::Zero(2)};
    CHECK_THROWS_AS((void)tksd::exact_distance_l2ball(vec2(0.0, 0.0), l1ball),
                    std::invalid_argument);
}

TEST_CASE("approx_distance converges to the exact ball distance as m grows") {
    const LpBall ball{2, 1.0, Vector::Zero(2)};
    const Vector x = vec2(0.3, 0.2);
    const double exact = tksd::exact_distance_l2ball(x, ball).value;

    const int ms[] = {10, 100, 1000, 100000};
    double mean_gap[4] = {0, 0, 0, 0};
    const int seeds = 32;
    for (int s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(100 + static_cast<unsigned>(s));
        for (int mi = 0; mi < 4; ++mi) {
            const Matrix b = tksd::sample_boundary_lp(ball, ms[mi], {}, rng);
            const double approx = tksd::approx_distance(x, b, 2, 1.0).value;
            CHECK(approx >= exact - 1e-12);  // sampled points cannot be closer than the sphere
            mean_gap[mi] += (approx - exact) / seeds;
        }
    }
    CHECK(mean_gap[0] >= mean_gap[1]);
    CHECK(mean_gap[1] >= mean_gap[2]);
    CHECK(mean_gap[2] >= mean_gap[3]);
    CHECK(mean_gap[3] < 1e-2);  // dense-sampling oracle: m = 1e5 matches exact to 1e-2
}

TEST_CASE("truncated_rejection_sample: acceptance rates and containment") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss;
    const auto propose = [&gauss](std::mt19937_64& r) {
        Vector z(2);
        z[0] = gauss(r);
        z[1] = gauss(r);
        return z;
    };

    const Domain big = Domain::lp_ball(2, 100.0, Vector::Zero(2));
    const auto all = tksd::truncated_rejection_sample(propose, big, 500, rng);
    CHECK(all.acceptance_rate == 1.0);

    const Domain unit = Domain::lp_ball(2, 1.0, Vector::Zero(2));
    const auto res = tksd::truncated_rejection_sample(propose, unit, 35000, rng);
    // P(chi^2_2 <= 1) = 1 - e^{-1/2}
    CHECK(res.acceptance_rate == doctest::Approx(1.0 - std::exp(-0.5)).epsilon(0.03));
    for (Eigen::Index i = 0; i < res.samples.rows(); ++i) {
        CHECK(unit.contains(res.samples.row(i).transpose()));
    }
}

TEST_CASE("truncated_rejection_sample: infeasible domain throws") {
    std::mt19937_64 rng(37);
    std::normal_distribution<double> gauss;
    const auto propose = [&gauss](std::mt19937_64& r) {
        Vector z(2);
        z[0] = gauss(r);
        z[1] = gauss(r);
        return z;
    };
    const Domain far_away = Domain::lp_ball(2, 1e-6, Vector::Constant(2, 50.0));
    CHECK_THROWS_AS((void)tksd::truncated_rejection_sample(propose, far_away, 1, rng),
                    tksd::InfeasibleDomainError);
}

TEST_CASE("epsilon_lower_bound: hand value and monotonicity") {
    // d=2, L=pi: xi(2) = pi, so the bound is sqrt(0.95) at m=1.
    CHECK(std::abs(tksd::epsilon_lower_bound(1, 2, M_PI) - std::sqrt(0.95)) < 1e-12);

    for (const int d : {2, 5, 10}) {
        double prev = tksd::epsilon_lower_bound(1, d, 1.0);
        for (const long m : {2L, 5L, 10L, 100L, 1000L}) {
            const double cur = tksd::epsilon_lower_bound(m, d, 1.0);
            CHECK(cur < prev);
            prev = cur;
        }
    }
    // Increasing in the boundary size L.
    CHECK(tksd::epsilon_lower_bound(10, 3, 4.0) > tksd::epsilon_lower_bound(10, 3, 1.0));

    CHECK_THROWS_AS((void)tksd::epsilon_lower_bound(0, 2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)tksd::epsilon_lower_bound(1, 0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)tksd::epsilon_lower_bound(1, 2, 0.0), std::invalid_argument);
}

TEST_CASE("polygon CSV: header handling, parse errors") {
    const auto path = write_temp("tmp_square.csv", "x,y\n0,0\n1,0\n1,1\n0,1\n");
    const Polygon2D sq = tksd::load_polygon_csv(path);
    CHECK(sq.num_vertices() == 4);
    CHECK(sq.vertices()(2, 0) == 1.0);
    CHECK(sq.vertices()(2, 1) == 1.0);

    const auto two = write_temp("tmp_two.csv", "0,0\n1,0\n");
    CHECK_THROWS_AS((void)tksd::load_polygon_csv(two), tksd::ParseError);

    const auto nan = write_temp("tmp_nan.csv", "0,0\n1,nan\n0,1\n");
    CHECK_THROWS_AS((void)tksd::load_polygon_csv(nan), tksd::ParseError);

    const auto wide = write_temp("tmp_wide.csv", "0,0,0\n1,0,0\n0,1,0\n");
    CHECK_THROWS_AS((void)tksd::load_polygon_csv(wide), tksd::ParseError);

    const auto junk = write_temp("tmp_junk.csv", "0,0\n1,abc\n0,1\n");
    CHECK_THROWS_AS((void)tksd::load_polygon_csv(junk), tksd::ParseError);

    const auto bowtie = write_temp("tmp_bowtie.csv", "0,0\n1,1\n1,0\n0,1\n");
    CHECK_THROWS_WITH_AS((void)tksd::load_polygon_csv(bowtie), doctest::Contains("edges"),
                         std::invalid_argument);

    CHECK_THROWS_AS((void)tksd::load_polygon_csv("does_not_exist.csv"), tksd::ParseError);
}

TEST_CASE("boundary CSV round trip is bit-exact") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> gauss;
    Matrix pts(7, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = std::exp(5.0 * gauss(rng));
    pts(0, 0) = -pts(0, 0);
    pts(3, 2) = 1.0 / 3.0;

    tksd::save_boundary_csv("tmp_round.csv", pts);
    const Matrix back = tksd::load_boundary_csv("tmp_round.csv");
    REQUIRE(back.rows() == pts.rows());
    REQUIRE(back.cols() == pts.cols());
    for (Eigen::Index i = 0; i < pts.size(); ++i) {
        CHECK(back.data()[i] == pts.data()[i]);  // exact, not approximate
    }
}

TEST_CASE("BoundarySample: on-boundary validation against the domain") {
    std::mt19937_64 rng(43);
    const LpBall ball{2, 1.0, Vector::Zero(2)};
    const Domain dom = Domain::lp_ball(2, 1.0, Vector::Zero(2));
    const Matrix pts = tksd::sample_boundary_lp(ball, 20, {}, rng);
    CHECK_NOTHROW(tksd::BoundarySample(pts, dom));

    Matrix bad = pts;
    bad(3, 0) = 0.5;
    bad(3, 1) = 0.5;
    CHECK_THROWS_AS(tksd::BoundarySample(bad, dom), std::invalid_argument);

    const Polygon2D sq{unit_square()};
    const Domain sq_dom = Domain::polygon(sq);
    const Matrix on_sq = tksd::sample_boundary_polygon(sq, 15, rng);
    CHECK_NOTHROW(tksd::BoundarySample(on_sq, sq_dom));

    const Matrix empty(0, 2);
    CHECK_THROWS_AS((void)tksd::BoundarySample(empty), std::invalid_argument);
}
