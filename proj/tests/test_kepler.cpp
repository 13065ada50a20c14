#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "kepav/kepler.hpp"
#include "kepav/symplectic.hpp"

using namespace kepav;
using Eigen::Vector2d;

namespace {

// Independent oracle for the Kepler equation: plain bisection on
// f(u) = u - e sin u - l over [l - e, l + e].
double kepler_bisect(double e, double l, double tol = 1e-14) {
    double lo = l - e, hi = l + e, u = l;
    for (int it = 0; it < 120; ++it) {
        u = 0.5 * (lo + hi);
        const double f = u - e * std::sin(u) - l;
        if (std::abs(f) < tol) break;
        (f < 0.0 ? lo : hi) = u;
    }
    return u;
}

PoincareState random_interior_point(std::mt19937& rng, double r_min = 1e-3, double r_max_frac = 0.6) {
    std::uniform_real_distribution<double> lam(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> Lam(0.7, 1.6);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
    const double Lambda = Lam(rng);
    std::uniform_real_distribution<double> rad(r_min, r_max_frac * std::sqrt(2.0 * Lambda));
    const double r = rad(rng), th = ang(rng);
    return {lam(rng), Lambda, r * std::sin(th), r * std::cos(th)};
}

} // namespace

TEST_CASE("solve_kepler: circular, symmetric and oracle-checked cases") {
    CHECK(solve_kepler(0.0, 1.2) == doctest::Approx(1.2).epsilon(1e-14));
    CHECK(solve_kepler(0.9, M_PI) == doctest::Approx(M_PI).epsilon(1e-13));

    const double u_oracle = kepler_bisect(0.5, 1.0);
    const double u = solve_kepler(0.5, 1.0, 1e-12);
    CHECK(std::abs(u - u_oracle) < 1e-11);
    CHECK(u == doctest::Approx(1.498701).epsilon(1e-6));
    CHECK(std::abs(u - 0.5 * std::sin(u) - 1.0) < 1e-12);

    // residual bound and continuity on a sweep
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> ed(0.0, 0.99), ld(0.0, 2.0 * M_PI);
    for (int i = 0; i < 500; ++i) {
        const double e = ed(rng), l = ld(rng);
        const double ui = solve_kepler(e, l, 1e-13);
        CHECK(std::abs(ui - e * std::sin(ui) - l) < 1e-13);
    }
}

TEST_CASE("astro_to_cartesian: pericenter and circular examples") {
    // unit circular orbit
    const auto s0 = astro_to_cartesian({1.0, 0.0, 0.0, 0.0});
    CHECK((s0.x - Vector2d(1, 0)).norm() < 1e-14);
    CHECK((s0.y - Vector2d(0, 1)).norm() < 1e-14);

    // pericenter of an e = 1/2 ellipse
    const auto s1 = astro_to_cartesian({1.0, 0.5, 0.0, 0.0});
    CHECK((s1.x - Vector2d(0.5, 0)).norm() < 1e-14);
    CHECK((s1.y - Vector2d(0, std::sqrt(3.0))).norm() < 1e-13);
    CHECK(kepler_energy(s1) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(angular_momentum(s1) == doctest::Approx(std::sqrt(0.75)).epsilon(1e-12));

    // rotated circular orbit, a = 4
    const auto s2 = astro_to_cartesian({4.0, 0.0, 0.0, M_PI / 2.0});
    CHECK((s2.x - Vector2d(0, 4)).norm() < 1e-13);
    CHECK((s2.y - Vector2d(-0.5, 0)).norm() < 1e-13);

    // energy/momentum postconditions over random elements
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> ad(0.3, 3.0), ed(0.0, 0.9), angd(0.0, 2.0 * M_PI);
    for (int i = 0; i < 200; ++i) {
        const AstroCoords c{ad(rng), ed(rng), angd(rng), angd(rng)};
        const auto s = astro_to_cartesian(c);
        CHECK(in_elliptic_region(s));
        CHECK(std::abs(kepler_energy(s) + 0.5 / c.a) < 1e-10);
        CHECK(std::abs(angular_momentum(s) - std::sqrt(c.a * (1.0 - c.e * c.e))) < 1e-10);
        CHECK(2.0 * kepler_energy(s) * std::pow(angular_momentum(s), 2) >= -1.0 - 1e-12);
    }
}

TEST_CASE("poincare <-> delaunay") {
    const auto d1 = poincare_to_delaunay({0.0, 1.0, 0.0, std::sqrt(0.2)});
    CHECK(d1.L == doctest::Approx(1.0));
    CHECK(d1.G == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(d1.g == doctest::Approx(0.0));
    CHECK(d1.l == doctest::Approx(0.0));

    const auto d2 = poincare_to_delaunay({1.0, 2.0, 0.1, 0.1});
    CHECK(d2.G == doctest::Approx(1.99).epsilon(1e-12));
    CHECK(wrap_angle(d2.g) == doctest::Approx(wrap_angle(-M_PI / 4.0)).epsilon(1e-12));
    CHECK(d2.l == doctest::Approx(1.0 + M_PI / 4.0).epsilon(1e-12));

    CHECK_THROWS_AS((void)poincare_to_delaunay({0.3, 1.0, 0.0, 0.0}), CircularLocus);

    std::mt19937 rng(5);
    for (int i = 0; i < 200; ++i) {
        const auto p = random_interior_point(rng);
        const auto q = delaunay_to_poincare(poincare_to_delaunay(p));
        CHECK(angle_dist(q.lambda, p.lambda) < 1e-12);
        CHECK(std::abs(q.Lambda - p.Lambda) < 1e-12);
        CHECK(std::abs(q.eta - p.eta) < 1e-12);
        CHECK(std::abs(q.xi - p.xi) < 1e-12);
    }
}

TEST_CASE("poincare_to_cartesian: circular branch and domain guard") {
    const auto s = poincare_to_cartesian({M_PI / 2.0, 1.0, 0.0, 0.0});
    CHECK((s.x - Vector2d(0, 1)).norm() < 1e-14);
    CHECK((s.y - Vector2d(-1, 0)).norm() < 1e-14);

    CHECK_THROWS_AS((void)poincare_to_cartesian({0.0, 1.0, 0.0, std::sqrt(2.0) + 0.01}), OutOfDomain);

    // energy postcondition, both branches
    std::mt19937 rng(17);
    for (int i = 0; i < 200; ++i) {
        const auto p = random_interior_point(rng);
        CHECK(std::abs(kepler_energy(poincare_to_cartesian(p)) + 0.5 / (p.Lambda * p.Lambda)) < 1e-10);
    }
    CHECK(std::abs(kepler_energy(poincare_to_cartesian({0.3, 1.3, 0.0, 0.0})) + 0.5 / (1.3 * 1.3)) < 1e-12);
}

TEST_CASE("chart consistency across the circular-branch switch") {
    // just outside the switch radius the Delaunay chain must agree with the
    // circular formulas to 10 * tol_circ
    const ChartTolerances tol;
    for (double r : {tol.tol_circ, 1.4 * tol.tol_circ, 2.0 * tol.tol_circ}) {
        for (double lam : {0.0, 1.1, 4.4}) {
            const PoincareState p{lam, 1.2, r / std::sqrt(2.0), r / std::sqrt(2.0)};
            const auto chain = astro_to_cartesian(detail::poincare_to_astro(p));
            const double a = p.Lambda * p.Lambda;
            const Vector2d xc{a * std::cos(lam), a * std::sin(lam)};
            const Vector2d yc{-std::sin(lam) / p.Lambda, std::cos(lam) / p.Lambda};
            CHECK((chain.x - xc).norm() < 10.0 * tol.tol_circ);
            CHECK((chain.y - yc).norm() < 10.0 * tol.tol_circ);
        }
    }
}

TEST_CASE("cartesian_to_poincare: examples and round trips") {
    const auto p0 = cartesian_to_poincare({{1, 0}, {0, 1}});
    CHECK(p0.lambda == doctest::Approx(0.0));
    CHECK(p0.Lambda == doctest::Approx(1.0));
    CHECK(std::abs(p0.eta) < 1e-13);
    CHECK(std::abs(p0.xi) < 1e-13);

    const auto p1 = cartesian_to_poincare({{0.5, 0}, {0, std::sqrt(3.0)}});
    CHECK(p1.Lambda == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p1.lambda == doctest::Approx(0.0));
    CHECK(std::abs(p1.eta) < 1e-12);
    const double H = 1.0 - std::sqrt(0.75);
    CHECK(p1.xi == doctest::Approx(std::sqrt(2.0 * H)).epsilon(1e-12));

    CHECK_THROWS_AS((void)cartesian_to_poincare({{1, 0}, {0, 2.0}}), NotElliptic);  // E > 0
    CHECK_THROWS_AS((void)cartesian_to_poincare({{1, 0}, {0, -0.9}}), NotElliptic); // M < 0

    // poincare -> cartesian -> poincare round trip, 1e-10
    std::mt19937 rng(23);
    for (int i = 0; i < 1000; ++i) {
        const auto p = random_interior_point(rng, 1e-5);
        const auto q = cartesian_to_poincare(poincare_to_cartesian(p));
        CHECK(angle_dist(q.lambda, p.lambda) < 1e-10);
        CHECK(std::abs(q.Lambda - p.Lambda) < 1e-10);
        CHECK(std::abs(q.eta - p.eta) < 1e-10);
        CHECK(std::abs(q.xi - p.xi) < 1e-10);
    }

    // cartesian -> poincare -> cartesian on random elliptic states
    std::uniform_real_distribution<double> ad(0.4, 2.5), ed(0.0, 0.9), angd(0.0, 2.0 * M_PI);
    for (int i = 0; i < 1000; ++i) {
        const auto s = astro_to_cartesian({ad(rng), ed(rng), angd(rng), angd(rng)});
        const auto back = poincare_to_cartesian(cartesian_to_poincare(s));
        CHECK((back.x - s.x).norm() < 1e-10);
        CHECK((back.y - s.y).norm() < 1e-10);
    }
}

TEST_CASE("chart Jacobian: symplectic, unit determinant, down to the locus") {
    const Eigen::Matrix4d J = symplectic_j4();
    std::mt19937 rng(31);
    for (int i = 0; i < 20; ++i) {
        const auto p = random_interior_point(rng, 5e-2);
        const Eigen::Matrix4d D = poincare_chart_jacobian(p);
        CHECK(std::abs(D.determinant() - 1.0) < 1e-8);
        CHECK((D.transpose() * J * D - J).norm() < 1e-7);
    }
    // points with eta^2 + xi^2 = 1e-6 (through the analytic extension)
    for (double th : {0.0, 1.0, 2.5}) {
        const double r = 1e-3;
        const PoincareState p{0.7, 1.1, r * std::sin(th), r * std::cos(th)};
        const Eigen::Matrix4d D = poincare_chart_jacobian(p);
        CHECK(std::abs(D.determinant() - 1.0) < 1e-8);
        CHECK((D.transpose() * J * D - J).norm() < 1e-7);
    }
    // exactly on the locus
    const Eigen::Matrix4d D0 = poincare_chart_jacobian({0.4, 1.0, 0.0, 0.0});
    CHECK(std::abs(D0.determinant() - 1.0) < 1e-8);
    CHECK((D0.transpose() * J * D0 - J).norm() < 1e-7);
}

TEST_CASE("radial_chart_jet: displayed formulas and complex form") {
    // h = 0: d x~/dr = (1/2)(-3 + cos 0 .. ) = (-1, 0)
    const auto j0 = radial_chart_jet(0.0, 1.0, 0.0);
    CHECK(std::abs(j0.d1 - complexd(-1.0, 0.0)) < 1e-14);
    // h = pi/2 matches the eta-derivative example (0, 2)
    const auto j1 = radial_chart_jet(0.0, 1.0, M_PI / 2.0);
    CHECK(std::abs(j1.d1 - complexd(0.0, 2.0)) < 1e-14);
    // second derivative at h = 0: -1 + (1/4)(1 + 3) = 0
    CHECK(std::abs(j0.d2) < 1e-14);

    // trig display vs complex display, random arguments
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI), Lam(0.5, 2.0);
    for (int i = 0; i < 200; ++i) {
        const double lam = ang(rng), h = ang(rng), Lambda = Lam(rng);
        const auto jet = radial_chart_jet(lam, Lambda, h);
        const complexd eih = std::polar(1.0, -h);
        const complexd eth = std::polar(1.0, lam + h);
        const complexd d1c = 0.5 * std::pow(Lambda, 1.5) * eih * (-3.0 + eth * eth);
        const complexd d2c = Lambda * eih * (-eth + 0.25 * (1.0 / eth + 3.0 * eth * eth * eth));
        CHECK(std::abs(jet.d1 - d1c) < 1e-12);
        CHECK(std::abs(jet.d2 - d2c) < 1e-12);
    }
}

TEST_CASE("poincare_jet_circular: table values at lambda = 0, Lambda = 1") {
    const auto jet = poincare_jet_circular(0.0, 1.0);
    CHECK(std::abs(jet.dx[0] - complexd(0, 1)) < 1e-14);   // i
    CHECK(std::abs(jet.dx[1] - complexd(0, 2)) < 1e-14);   // 2i
    CHECK(std::abs(jet.dx[2] - complexd(-1, 0)) < 1e-14);  // -1
    CHECK(std::abs(jet.d2x(0, 0) - complexd(-1, 0)) < 1e-14);
    CHECK(std::abs(jet.d2x(0, 1) - complexd(-1, 0)) < 1e-14);
    CHECK(std::abs(jet.d2x(0, 2) - complexd(0, 1)) < 1e-14);
    CHECK(std::abs(jet.d2x(1, 1) - complexd(-2, 0)) < 1e-14);
    CHECK(std::abs(jet.d2x(2, 2)) < 1e-14);
    CHECK(std::abs(jet.d2x(1, 2) - complexd(0, 0.5)) < 1e-14);
}

TEST_CASE("poincare_jet_circular vs finite differences of the full map") {
    auto xc = [](const PoincareState& p) {
        const auto s = poincare_to_cartesian(p);
        return complexd(s.x(0), s.x(1));
    };
    auto yc = [](const PoincareState& p) {
        const auto s = poincare_to_cartesian(p);
        return complexd(s.y(0), s.y(1));
    };
    const double h = 1e-4;

    std::mt19937 rng(53);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI), Lam(0.6, 1.8);
    for (int i = 0; i < 25; ++i) {
        const double lam = ang(rng), Lambda = Lam(rng);
        const auto jet = poincare_jet_circular(lam, Lambda);
        auto at = [&](double dl, double de, double dxi) {
            return PoincareState{lam + dl, Lambda, de, dxi};
        };
        const std::array<std::array<double, 3>, 3> dirs = {{{h, 0, 0}, {0, h, 0}, {0, 0, h}}};
        for (int v = 0; v < 3; ++v) {
            const auto& d = dirs[v];
            const complexd fd1 =
                (xc(at(d[0], d[1], d[2])) - xc(at(-d[0], -d[1], -d[2]))) / (2.0 * h);
            CHECK(std::abs(fd1 - jet.dx[v]) < 1e-6 * std::max(1.0, std::abs(jet.dx[v])));
            const complexd fd1y =
                (yc(at(d[0], d[1], d[2])) - yc(at(-d[0], -d[1], -d[2]))) / (2.0 * h);
            CHECK(std::abs(fd1y - jet.dy[v]) < 1e-6 * std::max(1.0, std::abs(jet.dy[v])));
            // diagonal second derivatives
            const complexd fd2 = (xc(at(d[0], d[1], d[2])) - 2.0 * xc(at(0, 0, 0)) +
                                  xc(at(-d[0], -d[1], -d[2]))) /
                                 (h * h);
            CHECK(std::abs(fd2 - jet.d2x(v, v)) < 1e-6 * std::max(1.0, std::abs(jet.d2x(v, v))));
        }
        // mixed second derivatives
        auto cross = [&](int a, int b) {
            const auto& da = dirs[a];
            const auto& db = dirs[b];
            auto shift = [&](double sa, double sb) {
                return at(sa * da[0] + sb * db[0], sa * da[1] + sb * db[1], sa * da[2] + sb * db[2]);
            };
            return (xc(shift(1, 1)) - xc(shift(1, -1)) - xc(shift(-1, 1)) + xc(shift(-1, -1))) /
                   (4.0 * h * h);
        };
        CHECK(std::abs(cross(0, 1) - jet.d2x(0, 1)) < 1e-6 * std::max(1.0, std::abs(jet.d2x(0, 1))));
        CHECK(std::abs(cross(0, 2) - jet.d2x(0, 2)) < 1e-6 * std::max(1.0, std::abs(jet.d2x(0, 2))));
        CHECK(std::abs(cross(1, 2) - jet.d2x(1, 2)) < 1e-6 * std::max(1.0, std::abs(jet.d2x(1, 2))));
    }
}

TEST_CASE("winding_number: basic loops") {
    auto loop = [](int n, int samples) {
        std::vector<CartesianState> path;
        for (int k = 0; k <= samples; ++k) {
            const double t = 2.0 * M_PI * k / samples;
            path.push_back({{std::cos(n * t), std::sin(n * t)}, {0, 0}});
        }
        return path;
    };
    CHECK(winding_number(loop(1, 256)) == 1);
    CHECK(winding_number(loop(2, 256)) == 2);
    CHECK(winding_number(loop(-1, 256)) == -1);

    auto open_path = loop(1, 64);
    open_path.back().x = {0.5, 0.5};
    CHECK_THROWS_AS((void)winding_number(open_path), NotClosed);

    auto through_origin = loop(1, 64);
    through_origin[10].x = {1e-9, 0.0};
    CHECK_THROWS_AS((void)winding_number(through_origin), PathThroughOrigin);
}
