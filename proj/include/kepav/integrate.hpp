#pragma once

// Numerical integration of the perturbed Kepler system
//   x' = y,  y' = -x/|x|^3 + eps grad_x U(t, x)
// in Cartesian coordinates, optionally co-integrating the 4x4 fundamental
// matrix of the linearization as 16 extra components in one system so the
// variational flow shares the adaptive step control. Dormand-Prince 5(4)
// embedded pair.

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "kepav/errors.hpp"
#include "kepav/forcing.hpp"
#include "kepav/kepler.hpp"
#include "kepav/symplectic.hpp"

namespace kepav {

struct IntegratorConfig {
    double rel_tol = 1e-11;
    double abs_tol = 1e-11;
    double max_step = 0.25;
    double min_radius_guard = 1e-3; // below this |x| the run aborts (near-collision)
};

struct TrajectoryRecord {
    std::vector<std::pair<double, CartesianState>> samples; // strictly increasing in t
    std::optional<Monodromy4> monodromy;                    // fundamental matrix at t1
    double eps = 0.0;
    std::optional<double> energy_drift;                     // unperturbed runs only
};

namespace detail {

// Dormand-Prince 5(4) tableau
struct Dopri5 {
    static constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
    static constexpr double a21 = 1.0 / 5.0;
    static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                            a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
    static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                            a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
    static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                            b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
    static constexpr double e1 = 35.0 / 384.0 - 5179.0 / 57600.0;
    static constexpr double e3 = 500.0 / 1113.0 - 7571.0 / 16695.0;
    static constexpr double e4 = 125.0 / 192.0 - 393.0 / 640.0;
    static constexpr double e5 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
    static constexpr double e6 = 11.0 / 84.0 - 187.0 / 2100.0;
    static constexpr double e7 = -1.0 / 40.0;
};

/// Right-hand side of the (possibly extended) system. Layout: z[0..3] =
/// (x1,x2,y1,y2); with variational equations z[4..19] holds the fundamental
/// matrix column-major, Phi(i,j) = z[4 + 4j + i].
inline void perturbed_kepler_rhs(const ForcingModel& f, double eps, double min_radius, double t,
                                 const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    const Eigen::Vector2d x = z.segment<2>(0);
    const Eigen::Vector2d y = z.segment<2>(2);
    const double r = x.norm();
    if (r < min_radius) throw CollisionGuard("integration reached |x| < min_radius_guard");
    const double r2 = r * r, r3 = r2 * r, r5 = r3 * r2;

    const PotentialSample fs = f.eval_potential(t, x);
    dz.segment<2>(0) = y;
    dz.segment<2>(2) = -x / r3 + eps * fs.grad;

    if (z.size() == 20) {
        // K = (3 x x^T - |x|^2 I)/|x|^5 + eps D^2_x U
        Eigen::Matrix2d K = (3.0 * x * x.transpose() - r2 * Eigen::Matrix2d::Identity()) / r5;
        K += eps * fs.hess;
        // Phi' = [[0, I], [K, 0]] Phi
        for (int j = 0; j < 4; ++j) {
            const Eigen::Vector2d top = z.segment<2>(4 + 4 * j);
            const Eigen::Vector2d bot = z.segment<2>(4 + 4 * j + 2);
            dz.segment<2>(4 + 4 * j) = bot;
            dz.segment<2>(4 + 4 * j + 2) = K * top;
        }
    }
}

} // namespace detail

/// Integrate the perturbed Kepler system over t_span. Throws CollisionGuard
/// when the trajectory approaches the origin and StepFailure when the step
/// controller cannot meet the tolerance.
inline TrajectoryRecord integrate(const ForcingModel& f, double eps, const CartesianState& s0,
                                  std::pair<double, double> t_span, const IntegratorConfig& cfg = {},
                                  bool with_variational = false) {
    using D = detail::Dopri5;
    const double t0 = t_span.first, t1 = t_span.second;
    if (!(t1 > t0)) throw OutOfDomain("integrate: need t1 > t0");
    if (!(s0.x.norm() > 0.0)) throw OutOfDomain("integrate: |x(0)| = 0");

    const int dim = with_variational ? 20 : 4;
    Eigen::VectorXd z(dim);
    z.segment<4>(0) = cartesian_vec(s0);
    if (with_variational) {
        z.segment<16>(4).setZero();
        for (int i = 0; i < 4; ++i) z(4 + 5 * i) = 1.0; // Phi(0) = I
    }

    auto rhs = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        detail::perturbed_kepler_rhs(f, eps, cfg.min_radius_guard, t, y, dy);
    };

    TrajectoryRecord rec;
    rec.eps = eps;
    rec.samples.emplace_back(t0, s0);
    const double E0 = kepler_energy(s0);
    double drift = 0.0;

    Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
    Eigen::VectorXd ytmp(dim), ynew(dim), err(dim);

    double t = t0;
    double h = std::min(cfg.max_step, 1e-3 * (t1 - t0));
    rhs(t, z, k1);
    const double h_min = 1e-13 * std::max(1.0, t1 - t0);
    long steps = 0;
    const long max_steps = 50'000'000;

    while (t < t1) {
        if (++steps > max_steps) throw StepFailure("integrate: step budget exhausted");
        h = std::min(h, t1 - t);
        if (h < h_min) throw StepFailure("integrate: step size underflow");

        ytmp = z + h * (D::a21 * k1);
        rhs(t + D::c2 * h, ytmp, k2);
        ytmp = z + h * (D::a31 * k1 + D::a32 * k2);
        rhs(t + D::c3 * h, ytmp, k3);
        ytmp = z + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3);
        rhs(t + D::c4 * h, ytmp, k4);
        ytmp = z + h * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4);
        rhs(t + D::c5 * h, ytmp, k5);
        ytmp = z + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 + D::a65 * k5);
        rhs(t + h, ytmp, k6);
        ynew = z + h * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 + D::b6 * k6);
        rhs(t + h, ynew, k7); // FSAL
        err = h * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 + D::e7 * k7);

        double sum = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(z(i)), std::abs(ynew(i)));
            const double q = err(i) / sc;
            sum += q * q;
        }
        const double enorm = std::sqrt(sum / dim);

        if (enorm <= 1.0) {
            t += h;
            z.swap(ynew);
            k1.swap(k7);
            const CartesianState s = cartesian_from_vec(z.segment<4>(0));
            rec.samples.emplace_back(t, s);
            if (eps == 0.0) drift = std::max(drift, std::abs(kepler_energy(s) - E0));
        }
        const double factor =
            std::clamp(0.9 * std::pow(std::max(enorm, 1e-10), -0.2), 0.2, 5.0);
        h = std::min(factor * h, cfg.max_step);
    }

    if (eps == 0.0) rec.energy_drift = drift;
    if (with_variational) {
        Eigen::Matrix4d Phi;
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i) Phi(i, j) = z(4 + 4 * j + i);
        rec.monodromy = make_monodromy(Phi);
    }
    return rec;
}

/// The period map: state at t = 2pi and the fundamental matrix of the
/// linearization (Cartesian chart).
inline std::pair<CartesianState, Monodromy4> period_map(const ForcingModel& f, double eps,
                                                        const CartesianState& s0,
                                                        const IntegratorConfig& cfg = {}) {
    const auto rec = integrate(f, eps, s0, {0.0, 2.0 * M_PI}, cfg, /*with_variational=*/true);
    return {rec.samples.back().second, *rec.monodromy};
}

/// Transport a Cartesian-chart monodromy to the Poincare chart by conjugating
/// with the chart Jacobian at the orbit's initial point. The spectrum is
/// invariant under this similarity.
inline Monodromy4 monodromy_in_poincare(const Monodromy4& dpi_cartesian, const CartesianState& s0) {
    const PoincareState p0 = cartesian_to_poincare(s0); // throws NotElliptic outside E+
    const Eigen::Matrix4d Dp = poincare_chart_jacobian(p0);
    const Eigen::Matrix4d S = Dp.partialPivLu().solve(dpi_cartesian.entries * Dp);
    return make_monodromy(S);
}

} // namespace kepav
