#pragma once

// Coordinate charts of the planar Kepler problem: astronomical (a,e,l,g),
// Delaunay (l,L,g,G) and Poincare (lambda,Lambda,eta,xi), the Kepler-equation
// solver, forward/inverse maps to Cartesian states, and the first/second
// derivative tables of the Poincare map at the circular locus eta = xi = 0.
//
// All functions are pure; all angles are stored in [0, 2pi) and compared with
// wrap-aware distance. Symplectic 4-vector orderings: Cartesian (x1,x2,y1,y2),
// Poincare (lambda, eta, Lambda, xi); both use J = [[0,I2],[-I2,0]].

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "kepav/errors.hpp"

namespace kepav {

using complexd = std::complex<double>;

inline double wrap_angle(double x) {
    const double two_pi = 2.0 * M_PI;
    double r = std::fmod(x, two_pi);
    if (r < 0.0) r += two_pi;
    return r;
}

/// Distance between two angles modulo 2pi, in [0, pi].
inline double angle_dist(double a, double b) {
    const double d = wrap_angle(a - b);
    return std::min(d, 2.0 * M_PI - d);
}

// ---------------------------------------------------------------------------
// Chart types

struct CartesianState {
    Eigen::Vector2d x; // position, |x| > 0
    Eigen::Vector2d y; // velocity
};

struct AstroCoords {
    double a; // semi-major axis > 0
    double e; // eccentricity in [0, 1)
    double l; // mean anomaly
    double g; // argument of pericenter
};

struct DelaunayCoords {
    double l;
    double L; // sqrt(a)
    double g;
    double G; // sqrt(a (1 - e^2)), 0 < G <= L
};

struct PoincareState {
    double lambda;
    double Lambda; // > 0
    double eta;
    double xi;     // eta^2 + xi^2 < 2 Lambda
};

/// Energy E = |y|^2/2 - 1/|x|.
inline double kepler_energy(const CartesianState& s) {
    return 0.5 * s.y.squaredNorm() - 1.0 / s.x.norm();
}

/// Angular momentum M = x1 y2 - x2 y1.
inline double angular_momentum(const CartesianState& s) {
    return s.x(0) * s.y(1) - s.x(1) * s.y(0);
}

inline bool in_elliptic_region(const CartesianState& s) {
    return s.x.norm() > 0.0 && kepler_energy(s) < 0.0 && angular_momentum(s) > 0.0;
}

// vector packing for Jacobians / monodromies
inline Eigen::Vector4d cartesian_vec(const CartesianState& s) {
    return {s.x(0), s.x(1), s.y(0), s.y(1)};
}
inline CartesianState cartesian_from_vec(const Eigen::Vector4d& v) {
    return {{v(0), v(1)}, {v(2), v(3)}};
}
inline Eigen::Vector4d poincare_vec(const PoincareState& p) {
    return {p.lambda, p.eta, p.Lambda, p.xi};
}
inline PoincareState poincare_from_vec(const Eigen::Vector4d& v) {
    return {v(0), v(2), v(1), v(3)};
}

struct ChartTolerances {
    double tol_circ = 1e-9;    // circular-branch switch on sqrt(eta^2 + xi^2)
    double kepler_tol = 1e-13; // residual bound for the Kepler equation
};

// ---------------------------------------------------------------------------
// Kepler equation

/// Solve u - e sin(u) = l for the eccentric anomaly u. Newton iteration with
/// initial guess u0 = l + e sin(l) and a bisection fallback; for 0 <= e < 1
/// the residual bound is always reached.
inline double solve_kepler(double e, double l, double tol = 1e-13, int max_iter = 50) {
    if (!(e >= 0.0 && e < 1.0)) throw OutOfDomain("solve_kepler: eccentricity must be in [0,1)");
    const double l0 = wrap_angle(l);
    double u = l0 + e * std::sin(l0);
    double prev_abs = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        const double f = u - e * std::sin(u) - l0;
        if (std::abs(f) < tol) return u + (l - l0);
        if (std::abs(f) > prev_abs) break; // non-monotone residual: fall back
        prev_abs = std::abs(f);
        u -= f / (1.0 - e * std::cos(u));
    }
    // bisection on [l - e, l + e], where f changes sign
    double lo = l0 - e, hi = l0 + e;
    for (int it = 0; it < 200; ++it) {
        u = 0.5 * (lo + hi);
        const double f = u - e * std::sin(u) - l0;
        if (std::abs(f) < tol) return u + (l - l0);
        if (f < 0.0)
            lo = u;
        else
            hi = u;
    }
    throw NoConvergence("solve_kepler: iteration limit exceeded");
}

// ---------------------------------------------------------------------------
// Forward chart maps

inline Eigen::Matrix2d rotation2(double g) {
    Eigen::Matrix2d R;
    R << std::cos(g), -std::sin(g), std::sin(g), std::cos(g);
    return R;
}

inline CartesianState astro_to_cartesian(const AstroCoords& c, const ChartTolerances& tol = {}) {
    const double u = solve_kepler(c.e, c.l, tol.kepler_tol);
    const double cu = std::cos(u), su = std::sin(u);
    const double root = std::sqrt(1.0 - c.e * c.e);
    const Eigen::Matrix2d R = rotation2(c.g);
    const Eigen::Vector2d pos{c.a * (cu - c.e), c.a * root * su};
    const double denom = std::sqrt(c.a) * (1.0 - c.e * cu);
    const Eigen::Vector2d vel{-su / denom, root * cu / denom};
    return {R * pos, R * vel};
}

inline AstroCoords astro_from_delaunay(const DelaunayCoords& d) {
    const double a = d.L * d.L;
    const double ratio = d.G / d.L;
    const double e = std::sqrt(std::max(0.0, 1.0 - ratio * ratio));
    return {a, e, wrap_angle(d.l), wrap_angle(d.g)};
}

inline DelaunayCoords delaunay_from_astro(const AstroCoords& c) {
    const double L = std::sqrt(c.a);
    return {wrap_angle(c.l), L, wrap_angle(c.g), L * std::sqrt(1.0 - c.e * c.e)};
}

/// Delaunay chart of a Poincare point. The circular locus (within tol_circ of
/// eta = xi = 0) is rejected: l and g are separately undefined there.
inline DelaunayCoords poincare_to_delaunay(const PoincareState& p, const ChartTolerances& tol = {}) {
    const double r2 = p.eta * p.eta + p.xi * p.xi;
    if (r2 < tol.tol_circ * tol.tol_circ)
        throw CircularLocus("poincare_to_delaunay: point on the circular locus");
    const double H = 0.5 * r2;
    const double h = std::atan2(p.eta, p.xi);
    const double g = wrap_angle(-h);
    return {wrap_angle(p.lambda - g), p.Lambda, g, p.Lambda - H};
}

inline PoincareState delaunay_to_poincare(const DelaunayCoords& d) {
    const double H = d.L - d.G;
    const double rho = std::sqrt(std::max(0.0, 2.0 * H));
    const double h = -d.g;
    return {wrap_angle(d.l + d.g), d.L, rho * std::sin(h), rho * std::cos(h)};
}

namespace detail {

/// Eccentricity in Poincare variables (analytic-extension form; identical to
/// sqrt(1 - G^2/L^2) but with no cancellation near the circular locus).
inline double poincare_eccentricity(double Lambda, double r2) {
    return std::sqrt(r2) * std::sqrt(1.0 / Lambda - r2 / (4.0 * Lambda * Lambda));
}

inline AstroCoords poincare_to_astro(const PoincareState& p) {
    const double r2 = p.eta * p.eta + p.xi * p.xi;
    const double e = poincare_eccentricity(p.Lambda, r2);
    const double h = std::atan2(p.eta, p.xi);
    const double g = wrap_angle(-h);
    return {p.Lambda * p.Lambda, e, wrap_angle(p.lambda - g), g};
}

} // namespace detail

inline CartesianState poincare_to_cartesian(const PoincareState& p, const ChartTolerances& tol = {}) {
    const double r2 = p.eta * p.eta + p.xi * p.xi;
    if (!(p.Lambda > 0.0) || r2 >= 2.0 * p.Lambda)
        throw OutOfDomain("poincare_to_cartesian: point outside Omega");
    if (r2 < tol.tol_circ * tol.tol_circ) {
        const double a = p.Lambda * p.Lambda;
        const double cl = std::cos(p.lambda), sl = std::sin(p.lambda);
        return {{a * cl, a * sl}, {-sl / p.Lambda, cl / p.Lambda}};
    }
    return astro_to_cartesian(detail::poincare_to_astro(p), tol);
}

// ---------------------------------------------------------------------------
// Inverse map

/// Poincare chart of a Cartesian state in the elliptic region. Orbital
/// elements are extracted from (E, M) and the eccentricity vector; the
/// eccentric anomaly is resolved by atan2 in the pericenter frame.
inline PoincareState cartesian_to_poincare(const CartesianState& s) {
    const double r = s.x.norm();
    if (!(r > 0.0)) throw NotElliptic("cartesian_to_poincare: |x| = 0");
    const double E = kepler_energy(s);
    const double M = angular_momentum(s);
    if (!(E < 0.0) || !(M > 0.0))
        throw NotElliptic("cartesian_to_poincare: state outside the elliptic region E<0, M>0");

    const double a = -0.5 / E;
    const double L = std::sqrt(a);
    const double G = M;

    // eccentricity vector ((|y|^2 - 1/r) x - (x.y) y); |evec| = e
    const Eigen::Vector2d evec =
        (s.y.squaredNorm() - 1.0 / r) * s.x - s.x.dot(s.y) * s.y;
    const double e2 = evec.squaredNorm();
    const double e = std::sqrt(e2);
    const double H = a * e2 / (L + G); // = L - G, cancellation-free

    double lambda, g;
    if (e < 1e-13) {
        g = 0.0;
        lambda = wrap_angle(std::atan2(s.x(1), s.x(0)));
        return {lambda, L, 0.0, 0.0};
    }
    g = std::atan2(evec(1), evec(0));
    const Eigen::Vector2d peri = rotation2(-g) * s.x; // (a(cos u - e), a sqrt(1-e^2) sin u)
    const double root = std::sqrt(std::max(1e-300, 1.0 - e2));
    const double cu = peri(0) / a + e;
    const double su = peri(1) / (a * root);
    const double u = std::atan2(su, cu);
    const double l = u - e * std::sin(u);
    lambda = wrap_angle(l + g);
    const double rho = std::sqrt(std::max(0.0, 2.0 * H));
    const double h = -g;
    return {lambda, L, rho * std::sin(h), rho * std::cos(h)};
}

// ---------------------------------------------------------------------------
// Derivative tables at the circular locus

/// First and second r-derivatives of the rotated-frame map
/// x~(lambda, Lambda, r, h) at r = 0, complex-identified.
struct RadialJet {
    complexd d1; // d x~ / dr
    complexd d2; // d^2 x~ / dr^2
};

inline RadialJet radial_chart_jet(double lambda, double Lambda, double h) {
    const double th = lambda + h;
    const Eigen::Matrix2d R = rotation2(-h);
    const double s = std::sin(th), c = std::cos(th);

    const Eigen::Vector2d v1{-3.0 + std::cos(2.0 * th), std::sin(2.0 * th)};
    const Eigen::Vector2d d1 = 0.5 * std::pow(Lambda, 1.5) * (R * v1);

    const Eigen::Vector2d v2{-3.0 * s * s * c, -s - s * s * s + 2.0 * c * c * s};
    const Eigen::Vector2d d2 = Lambda * (R * v2);

    return {complexd(d1(0), d1(1)), complexd(d2(0), d2(1))};
}

/// Value and first/second derivatives of the Poincare map at eta = xi = 0,
/// with respect to (lambda, eta, xi), complex-identified (x = x1 + i x2).
/// dy holds the first derivatives of the velocity, obtained from
/// y = Lambda^{-3} dx/dlambda along the unperturbed flow.
struct PoincareJet2 {
    CartesianState value;
    std::array<complexd, 3> dx;  // d x / d(lambda, eta, xi)
    std::array<complexd, 3> dy;  // d y / d(lambda, eta, xi)
    Eigen::Matrix3cd d2x;        // symmetric second-derivative block of x
};

inline PoincareJet2 poincare_jet_circular(double lambda, double Lambda) {
    if (!(Lambda > 0.0)) throw OutOfDomain("poincare_jet_circular: Lambda must be positive");
    const complexd I(0.0, 1.0);
    const complexd eil = std::polar(1.0, lambda);
    const double L32 = std::pow(Lambda, 1.5);

    PoincareJet2 jet;
    jet.value = poincare_to_cartesian({lambda, Lambda, 0.0, 0.0});

    const RadialJet at_eta = radial_chart_jet(lambda, Lambda, M_PI / 2.0); // h = pi/2 -> eta
    const RadialJet at_xi = radial_chart_jet(lambda, Lambda, 0.0);        // h = 0    -> xi
    const RadialJet at_mix = radial_chart_jet(lambda, Lambda, M_PI / 4.0);

    jet.dx[0] = Lambda * Lambda * I * eil;
    jet.dx[1] = at_eta.d1;
    jet.dx[2] = at_xi.d1;

    jet.d2x.setZero();
    jet.d2x(0, 0) = -Lambda * Lambda * eil;
    jet.d2x(0, 1) = -L32 * eil * eil;      // d/dlambda of dx/deta
    jet.d2x(0, 2) = I * L32 * eil * eil;   // d/dlambda of dx/dxi
    jet.d2x(1, 1) = at_eta.d2;
    jet.d2x(2, 2) = at_xi.d2;
    jet.d2x(1, 2) = at_mix.d2 - 0.5 * (jet.d2x(1, 1) + jet.d2x(2, 2));
    jet.d2x(1, 0) = jet.d2x(0, 1);
    jet.d2x(2, 0) = jet.d2x(0, 2);
    jet.d2x(2, 1) = jet.d2x(1, 2);

    const double Lm3 = 1.0 / (Lambda * Lambda * Lambda);
    for (int v = 0; v < 3; ++v) jet.dy[v] = Lm3 * jet.d2x(0, v);
    return jet;
}

// ---------------------------------------------------------------------------
// Chart Jacobian (numerical)

/// 4x4 Jacobian of poincare_to_cartesian, rows (x1,x2,y1,y2), columns
/// (lambda, eta, Lambda, xi). Central differences with one Richardson step.
inline Eigen::Matrix4d poincare_chart_jacobian(const PoincareState& p, double base_step = 1e-4,
                                               const ChartTolerances& tol = {}) {
    const Eigen::Vector4d z0 = poincare_vec(p);
    auto eval = [&](const Eigen::Vector4d& z) {
        return cartesian_vec(poincare_to_cartesian(poincare_from_vec(z), tol));
    };
    Eigen::Matrix4d Jh, Jh2;
    for (int i = 0; i < 4; ++i) {
        for (const double h : {base_step, 0.5 * base_step}) {
            Eigen::Vector4d zp = z0, zm = z0;
            zp(i) += h;
            zm(i) -= h;
            const Eigen::Vector4d col = (eval(zp) - eval(zm)) / (2.0 * h);
            (h == base_step ? Jh : Jh2).col(i) = col;
        }
    }
    return (4.0 * Jh2 - Jh) / 3.0;
}

// ---------------------------------------------------------------------------
// Winding number

/// Winding number of a closed path around the origin: total change of arg(x)
/// over the samples divided by 2pi, rounded to the nearest integer.
inline int winding_number(const std::vector<CartesianState>& path, double tol_origin = 1e-6,
                          double tol_closed = 1e-6) {
    if (path.size() < 3) throw NotClosed("winding_number: too few samples");
    double total = 0.0;
    double prev_arg = std::atan2(path.front().x(1), path.front().x(0));
    for (const auto& s : path) {
        if (s.x.norm() < tol_origin) throw PathThroughOrigin("winding_number: path too close to the origin");
        const double arg = std::atan2(s.x(1), s.x(0));
        double d = arg - prev_arg;
        while (d > M_PI) d -= 2.0 * M_PI;
        while (d < -M_PI) d += 2.0 * M_PI;
        total += d;
        prev_arg = arg;
    }
    const double scale = std::max(1.0, path.front().x.norm());
    if ((path.front().x - path.back().x).norm() > tol_closed * scale)
        throw NotClosed("winding_number: endpoints differ");
    const double turns = total / (2.0 * M_PI);
    const double rounded = std::round(turns);
    if (std::abs(turns - rounded) >= 0.1)
        throw NotClosed("winding_number: rounding residual too large (undersampled path?)");
    return static_cast<int>(rounded);
}

} // namespace kepav
