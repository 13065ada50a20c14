#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "kepav/averaging.hpp"

using namespace kepav;
using Eigen::Matrix3d;
using Eigen::Vector3d;

namespace {

ForcingModel make_linear(std::initializer_list<std::pair<int, complexd>> terms) {
    FourierSpectrum sp;
    for (const auto& [n, c] : terms) sp.coefficients[n] = c;
    return ForcingModel::linear(sp);
}

} // namespace

TEST_CASE("gamma on the circular locus: resonant harmonic only") {
    // N=1, c1=1: gamma(lambda,0,0) = -cos(lambda)
    const auto f = make_averaged(1, make_linear({{1, 1.0}}));
    CHECK(gamma(f, 0.0, 0.0, 0.0) == doctest::Approx(-1.0).epsilon(1e-12));
    for (double lam : {0.3, 1.7, 4.1})
        CHECK(gamma(f, lam, 0.0, 0.0) == doctest::Approx(-std::cos(lam)).epsilon(1e-12));

    // non-resonant harmonic: identically zero on the locus
    const auto f5 = make_averaged(1, make_linear({{5, 1.0}}));
    for (double lam : {0.0, 1.0, 2.0, 5.0}) CHECK(std::abs(gamma(f5, lam, 0.0, 0.0)) < 1e-13);

    // zero forcing
    const auto fz = make_averaged(3, ForcingModel::zero());
    CHECK(gamma(fz, 1.0, 0.1, -0.2) == 0.0);

    // N=2: the resonant coefficient is c_2 and Lambda_2 = 2^{-1/3}
    const auto f2 = make_averaged(2, make_linear({{2, complexd(0.4, -0.3)}, {1, 5.0}}));
    const double L2 = std::pow(2.0, -1.0 / 3.0);
    for (double lam : {0.2, 2.9}) {
        const complexd cN(0.4, -0.3);
        const double expect = -L2 * L2 * (cN * std::polar(1.0, -lam)).real();
        CHECK(gamma(f2, lam, 0.0, 0.0) == doctest::Approx(expect).epsilon(1e-11));
    }
}

TEST_CASE("gamma: torus domain guard and quadrature convergence") {
    const auto f = make_averaged(1, make_linear({{1, 1.0}, {-1, complexd(0.5, 0.2)}}));
    CHECK_THROWS_AS((void)gamma(f, 0.0, std::sqrt(2.0), 0.1), OutOfTorus);

    const auto f512 = make_averaged(1, f.forcing, 512);
    for (double lam : {0.4, 2.2})
        for (double eta : {0.0, 0.3})
            CHECK(std::abs(gamma(f, lam, eta, 0.2) - gamma(f512, lam, eta, 0.2)) < 1e-10);
}

TEST_CASE("single-harmonic closed form holds pointwise on the locus") {
    const complexd cN(0.7, -1.1);
    for (int N : {1, 2, 3}) {
        const auto f = make_averaged(N, make_linear({{N, cN}}));
        for (double lam = 0.0; lam < 2.0 * M_PI; lam += 0.37) {
            const double expect = -f.Lambda_N * f.Lambda_N * (std::polar(1.0, -lam) * cN).real();
            CHECK(std::abs(gamma(f, lam, 0.0, 0.0) - expect) < 1e-10);
        }
    }
}

TEST_CASE("gradient/Hessian: paper block values at the equator critical points") {
    const auto f = make_averaged(1, make_linear({{1, 1.0}}));

    const auto [g0, H0] = gamma_gradient_hessian(f, {0.0, 0.0, 0.0});
    CHECK(g0.norm() < 1e-11);
    CHECK((H0 - Matrix3d::Identity()).norm() < 1e-10); // diag(L^2|c1|, L*M) = I

    const auto [gp, Hp] = gamma_gradient_hessian(f, {M_PI, 0.0, 0.0});
    CHECK(gp.norm() < 1e-11);
    CHECK((Hp + H0).norm() < 1e-10); // antipodal identity

    // Hessian symmetry
    CHECK((H0 - H0.transpose()).norm() < 1e-9);
}

TEST_CASE("finite-difference route matches the jet route on the locus") {
    const auto f = make_averaged(1, make_linear({{1, 1.0}, {-1, 2.0}}));
    const auto [gj, Hj] = gamma_gradient_hessian(f, {0.0, 0.0, 0.0});
    const auto [gf, Hf] = gamma_gradient_hessian_fd(f, {0.0, 0.0, 0.0});
    CHECK((gj - gf).norm() < 1e-6);
    CHECK((Hj - Hf).norm() < 1e-6);
    // expected block: diag(1, 1 + 2/4, 1 - 2/4)
    Matrix3d expect = Matrix3d::Zero();
    expect.diagonal() << 1.0, 1.5, 0.5;
    CHECK((Hj - expect).norm() < 1e-10);

    // off the locus both public routes are the FD route; sanity on symmetry
    const auto [g1, H1] = gamma_gradient_hessian(f, {0.7, 0.2, -0.1});
    CHECK((H1 - H1.transpose()).norm() < 1e-9);
    (void)g1;
}

TEST_CASE("find_critical_points: pure c_N forcing has the two equator points") {
    const auto f = make_averaged(1, make_linear({{1, 1.0}}));
    const auto res = find_critical_points(f, seed_grid(f, 8, 3, 3));
    REQUIRE(res.points.size() == 2);
    CHECK(!res.degenerate_continuum);

    auto by_lambda = res.points;
    std::sort(by_lambda.begin(), by_lambda.end(),
              [](const CriticalPoint& a, const CriticalPoint& b) { return a.lambda < b.lambda; });
    const auto& cp0 = by_lambda[0];
    const auto& cpp = by_lambda[1];
    CHECK(angle_dist(cp0.lambda, 0.0) < 1e-7);
    CHECK(std::hypot(cp0.eta, cp0.xi) < 1e-7);
    CHECK(cp0.predicted_class == PredictedClass::Elliptic);
    CHECK(angle_dist(cpp.lambda, M_PI) < 1e-7);
    CHECK(cpp.predicted_class == PredictedClass::Unstable);
    CHECK(cp0.gradient_norm < 1e-9);
    CHECK(cp0.hessian_det == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(cp0.d2_lambda_lambda == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("find_critical_points: degenerate M(p) at |a| = 4 is Inconclusive") {
    const auto f = make_averaged(1, make_linear({{1, 1.0}, {-1, complexd(0.0, 4.0)}}));
    const auto res = find_critical_points(f, seed_grid(f, 8, 3, 3));
    REQUIRE(res.points.size() >= 2);
    int inconclusive = 0;
    for (const auto& cp : res.points)
        if (std::hypot(cp.eta, cp.xi) < 1e-6) {
            CHECK(cp.predicted_class == PredictedClass::Inconclusive);
            ++inconclusive;
        }
    CHECK(inconclusive >= 2);
}

TEST_CASE("find_critical_points: zero forcing reports a degenerate continuum") {
    const auto f = make_averaged(1, ForcingModel::zero());
    const auto res = find_critical_points(f, seed_grid(f, 4, 3, 3));
    CHECK(res.points.empty());
    CHECK(res.degenerate_continuum);
}

TEST_CASE("equator Newton solutions satisfy the circular critical-point equations") {
    // generic spectrum on the linear manifold c0 = c_{2N} = 0
    const complexd c1(0.8, 0.6), cm1(0.3, -0.2), c3(-0.1, 0.4);
    const auto f = make_averaged(1, make_linear({{1, c1}, {-1, cm1}, {3, c3}}));
    const auto res = find_critical_points(f, seed_grid(f, 8, 3, 3));
    int equator_points = 0;
    for (const auto& cp : res.points) {
        if (std::hypot(cp.eta, cp.xi) > 1e-7) continue;
        ++equator_points;
        // Im(e^{-i lambda} c_N) = 0 and e^{-2i lambda} c_{2N} = 3 conj(c0) (= 0 here)
        CHECK(std::abs((std::polar(1.0, -cp.lambda) * c1).imag()) < 1e-7);
    }
    CHECK(equator_points == 2);
}

TEST_CASE("gamma_grid: deterministic samples and minimum location") {
    const auto fz = make_averaged(1, ForcingModel::zero());
    const auto gz = gamma_grid(fz, 4, 2, 2);
    for (double v : gz.values) CHECK(v == 0.0);

    const auto f = make_averaged(1, make_linear({{1, 1.0}}));
    const auto grid = gamma_grid(f, 16, 3, 3);
    // eta = xi = 0 row samples -cos(lambda)
    for (int i = 0; i < grid.n_lambda; ++i) {
        const size_t idx = (static_cast<size_t>(i) * grid.n_eta + 1) * grid.n_xi + 1;
        CHECK(grid.values[idx] == doctest::Approx(-std::cos(grid.lambda[i])).epsilon(1e-10));
    }
    // global minimum within one cell of (0, 0, 0)
    const auto it = std::min_element(grid.values.begin(), grid.values.end());
    const size_t flat = static_cast<size_t>(it - grid.values.begin());
    const int i_lam = static_cast<int>(flat / (grid.n_eta * grid.n_xi));
    const int i_eta = static_cast<int>((flat / grid.n_xi) % grid.n_eta);
    const int i_xi = static_cast<int>(flat % grid.n_xi);
    CHECK(angle_dist(grid.lambda[i_lam], 0.0) <= 2.0 * M_PI / grid.n_lambda + 1e-12);
    CHECK(std::abs(grid.eta[i_eta]) <= grid.eta.back() + 1e-12);
    CHECK(i_eta == 1);
    CHECK(i_xi == 1);

    CHECK_THROWS_AS((void)gamma_grid(f, 1, 2, 2), OutOfDomain);
}

TEST_CASE("negative N analyzes the time-reversed forcing") {
    const auto fwd = make_linear({{1, complexd(0.2, 0.9)}, {2, 1.0}});
    const auto fm = make_averaged(-1, fwd);
    const auto fr = make_averaged(1, fwd.reversed());
    CHECK(fm.Lambda_N == fr.Lambda_N);
    for (double lam : {0.0, 1.3})
        CHECK(gamma(fm, lam, 0.1, 0.2) == doctest::Approx(gamma(fr, lam, 0.1, 0.2)).epsilon(1e-13));
}
