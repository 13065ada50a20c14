#pragma once

// Spectral analysis and local stability classification of real 4x4 symplectic
// matrices near the parabolic matrix P*.
//
// Vector ordering convention for symplectic 4-vectors: z = (z1, z2, z3, z4)
// with the standard form J = [[0, I2], [-I2, 0]], i.e. z1<->z3 and z2<->z4 are
// the conjugate pairs. In the Poincare chart this is z = (lambda, eta, Lambda, xi);
// in the Cartesian chart z = (x1, x2, y1, y2).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "kepav/errors.hpp"

namespace kepav {

using complexd = std::complex<double>;

enum class StabilityClass {
    Elliptic,
    Hyperbolic,
    MixedEllipticHyperbolic,
    Degenerate,
    OutsideLocalChart,
};

inline const char* to_string(StabilityClass c) {
    switch (c) {
        case StabilityClass::Elliptic: return "Elliptic";
        case StabilityClass::Hyperbolic: return "Hyperbolic";
        case StabilityClass::MixedEllipticHyperbolic: return "MixedEllipticHyperbolic";
        case StabilityClass::Degenerate: return "Degenerate";
        case StabilityClass::OutsideLocalChart: return "OutsideLocalChart";
    }
    return "?";
}

inline Eigen::Matrix4d symplectic_j4() {
    Eigen::Matrix4d J = Eigen::Matrix4d::Zero();
    J(0, 2) = 1.0;
    J(1, 3) = 1.0;
    J(2, 0) = -1.0;
    J(3, 1) = -1.0;
    return J;
}

/// Operator norm of S^T J S - J.
inline double symplectic_defect(const Eigen::Matrix4d& S) {
    const Eigen::Matrix4d J = symplectic_j4();
    const Eigen::Matrix4d R = S.transpose() * J * S - J;
    return R.jacobiSvd().singularValues()(0);
}

struct SpectralTolerances {
    double tol_symp = 1e-8;        // acceptance bound for the symplectic defect
    double tol_eig = 1e-6;         // margin for | |mu|-1 | and |mu -+ 1|
    double pairing_residual = 1e-6; // max |mu_i mu_j - 1| allowed by the pairing
    double degenerate_band = 1e-10; // |det(S-I)| or |tr S - 4| below this: no verdict
};

/// A 4x4 real matrix accepted as symplectic, with its measured defect.
struct Monodromy4 {
    Eigen::Matrix4d entries;
    double symplectic_defect = 0.0;
};

inline Monodromy4 make_monodromy(const Eigen::Matrix4d& S) {
    return Monodromy4{S, symplectic_defect(S)};
}

struct SpectralSummary {
    double delta1 = 0.0;           // mu1 + mu3 (real part)
    double delta2 = 0.0;           // mu2 + mu4 (real part)
    double trace = 0.0;            // tr S, from the matrix
    double det_s_minus_i = 0.0;    // det(S - I), from the matrix
    std::array<complexd, 4> eigenvalues{}; // ordered mu1, mu2, mu3 = 1/mu1, mu4 = 1/mu2
    StabilityClass cls = StabilityClass::Degenerate;
};

namespace detail {

/// Eigenvalues of a general real 4x4 matrix (Eigen's Schur-based solver).
inline std::array<complexd, 4> eigenvalues4(const Eigen::Matrix4d& S) {
    Eigen::EigenSolver<Eigen::Matrix4d> es(S, /*computeEigenvectors=*/false);
    std::array<complexd, 4> mu;
    for (int i = 0; i < 4; ++i) mu[i] = es.eigenvalues()(i);
    return mu;
}

struct Pairing {
    // indices: {p1a, p1b, p2a, p2b}
    std::array<int, 4> idx;
    double residual; // max over the two pairs of |mu_i mu_j - 1|
};

/// Pick the matching of the four eigenvalues into two reciprocal pairs that
/// minimizes the worst product residual.
inline Pairing best_reciprocal_pairing(const std::array<complexd, 4>& mu) {
    constexpr std::array<std::array<int, 4>, 3> matchings = {{
        {0, 1, 2, 3}, // (0,1)(2,3)
        {0, 2, 1, 3}, // (0,2)(1,3)
        {0, 3, 1, 2}, // (0,3)(1,2)
    }};
    Pairing best{{0, 1, 2, 3}, std::numeric_limits<double>::infinity()};
    for (const auto& m : matchings) {
        const double r1 = std::abs(mu[m[0]] * mu[m[1]] - 1.0);
        const double r2 = std::abs(mu[m[2]] * mu[m[3]] - 1.0);
        const double r = std::max(r1, r2);
        if (r < best.residual) best = Pairing{{m[0], m[1], m[2], m[3]}, r};
    }
    return best;
}

/// Classification from the spectrum alone (the direct route).
inline StabilityClass spectral_class(const std::array<complexd, 4>& mu, const SpectralTolerances& tol) {
    bool any_near_pm1 = false;
    int on_circle = 0, real_line = 0;
    for (const auto& m : mu) {
        if (std::abs(m - 1.0) <= tol.tol_eig || std::abs(m + 1.0) <= tol.tol_eig) any_near_pm1 = true;
        if (std::abs(std::abs(m) - 1.0) <= tol.tol_eig) ++on_circle;
        if (std::abs(m.imag()) <= tol.tol_eig * (1.0 + std::abs(m))) ++real_line;
    }
    if (any_near_pm1) return StabilityClass::Degenerate;
    if (on_circle == 4) return StabilityClass::Elliptic;
    if (real_line == 4) return StabilityClass::Hyperbolic;
    // two on the circle (non-real), two real off the circle
    int circle_nonreal = 0, real_off = 0;
    for (const auto& m : mu) {
        const bool circ = std::abs(std::abs(m) - 1.0) <= tol.tol_eig;
        const bool real = std::abs(m.imag()) <= tol.tol_eig * (1.0 + std::abs(m));
        if (circ && !real) ++circle_nonreal;
        if (real && !circ) ++real_off;
    }
    if (circle_nonreal == 2 && real_off == 2) return StabilityClass::MixedEllipticHyperbolic;
    // complex quadruplet off the unit circle (or numerically unresolvable):
    // not in S^1 U (R \ {0}), so S is outside any valid neighborhood.
    return StabilityClass::OutsideLocalChart;
}

/// The paper's trace/det verdict, valid only inside the local chart.
inline StabilityClass trace_det_class(double tr, double det, double band) {
    if (std::abs(det) <= band || std::abs(tr - 4.0) <= band) return StabilityClass::Degenerate;
    if (det < 0.0) return StabilityClass::MixedEllipticHyperbolic;
    return (tr < 4.0) ? StabilityClass::Elliptic : StabilityClass::Hyperbolic;
}

} // namespace detail

/// Group the spectrum of S into reciprocal pairs and derive Delta1, Delta2.
/// Pairs are ordered so |Delta1 - 2| >= |Delta2 - 2|.
/// Throws PairingAmbiguous when no pairing meets the residual tolerance.
inline SpectralSummary eigen_pairing(const Monodromy4& S, const SpectralTolerances& tol = {}) {
    const auto mu = detail::eigenvalues4(S.entries);
    const auto pairing = detail::best_reciprocal_pairing(mu);
    if (!(pairing.residual <= tol.pairing_residual)) {
        throw PairingAmbiguous("no reciprocal eigenvalue pairing within tolerance (residual " +
                               std::to_string(pairing.residual) + ")");
    }

    complexd p1a = mu[pairing.idx[0]], p1b = mu[pairing.idx[1]];
    complexd p2a = mu[pairing.idx[2]], p2b = mu[pairing.idx[3]];
    complexd d1 = p1a + p1b, d2 = p2a + p2b;
    if (std::abs(d1 - 2.0) < std::abs(d2 - 2.0)) {
        std::swap(p1a, p2a);
        std::swap(p1b, p2b);
        std::swap(d1, d2);
    }
    // within each pair put |mu| >= 1 (ties: Im >= 0) first
    auto order_pair = [](complexd& a, complexd& b) {
        const double ma = std::abs(a), mb = std::abs(b);
        if (ma < mb || (ma == mb && a.imag() < b.imag())) std::swap(a, b);
    };
    order_pair(p1a, p1b);
    order_pair(p2a, p2b);

    SpectralSummary out;
    out.delta1 = d1.real();
    out.delta2 = d2.real();
    out.trace = S.entries.trace();
    out.det_s_minus_i = (S.entries - Eigen::Matrix4d::Identity()).determinant();
    out.eigenvalues = {p1a, p2a, p1b, p2b};
    return out;
}

/// Local stability classification near a parabolic matrix.
///
/// The trace/det criterion (elliptic iff det(S-I) > 0 and tr S < 4) is valid
/// only in an unquantified neighborhood of P; the verdict is therefore always
/// cross-checked against the directly computed spectrum and OutsideLocalChart
/// is reported on disagreement. chart_radius is accepted for the caller's
/// bookkeeping only.
inline SpectralSummary classify_local(const Monodromy4& S, double chart_radius = 0.0,
                                      const SpectralTolerances& tol = {}) {
    (void)chart_radius;
    SpectralSummary out = eigen_pairing(S, tol);
    const StabilityClass td = detail::trace_det_class(out.trace, out.det_s_minus_i, tol.degenerate_band);
    const StabilityClass sp = detail::spectral_class(out.eigenvalues, tol);
    if (td == StabilityClass::Degenerate || sp == StabilityClass::Degenerate) {
        out.cls = StabilityClass::Degenerate;
    } else if (td == sp) {
        out.cls = td;
    } else {
        out.cls = StabilityClass::OutsideLocalChart;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference matrices

/// P* = [[I2, T], [0, I2]] with T = diag(tau, 0): monodromy of an unperturbed
/// Kepler 2pi-periodic orbit in the Poincare chart (ordering lambda, eta, Lambda, xi).
inline Eigen::Matrix4d parabolic_pstar(double tau) {
    Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
    P(0, 2) = tau;
    return P;
}

/// Rotation by theta1 in the (z1,z3) plane and theta2 in the (z2,z4) plane.
inline Eigen::Matrix4d symplectic_plane_rotations(double theta1, double theta2) {
    Eigen::Matrix4d S = Eigen::Matrix4d::Zero();
    const double c1 = std::cos(theta1), s1 = std::sin(theta1);
    const double c2 = std::cos(theta2), s2 = std::sin(theta2);
    S(0, 0) = c1; S(0, 2) = s1; S(2, 0) = -s1; S(2, 2) = c1;
    S(1, 1) = c2; S(1, 3) = s2; S(3, 1) = -s2; S(3, 3) = c2;
    return S;
}

namespace detail {

inline Eigen::Matrix4d block2(const Eigen::Matrix2d& A, const Eigen::Matrix2d& B,
                              const Eigen::Matrix2d& C, const Eigen::Matrix2d& D) {
    Eigen::Matrix4d M;
    M << A, B, C, D;
    return M;
}

inline Eigen::Matrix4d remark_q(double eps) {
    Eigen::Matrix2d A = Eigen::Matrix2d::Zero(), M = Eigen::Matrix2d::Zero();
    A(0, 0) = 1.0;
    A(1, 1) = eps;
    M(1, 1) = 1.0;
    return block2(A, M, Eigen::Matrix2d::Zero(), A.inverse());
}

inline Eigen::Matrix4d remark_q_inv(double eps) {
    Eigen::Matrix2d A = Eigen::Matrix2d::Zero(), M = Eigen::Matrix2d::Zero();
    A(0, 0) = 1.0;
    A(1, 1) = eps;
    M(1, 1) = 1.0;
    return block2(A.inverse(), -M, Eigen::Matrix2d::Zero(), A);
}

} // namespace detail

/// S_eps = Q_eps B_eps Q_eps^{-1}: symplectic, with det(S-I) > 0 and tr S < 4,
/// yet a complex eigenvalue quadruplet off the unit circle. Shows the trace/det
/// criterion is only local.
inline Eigen::Matrix4d remark1_matrix(double eps) {
    Eigen::Matrix2d C;
    C << 1.0, eps, -eps, 1.0;
    const Eigen::Matrix4d B = detail::block2(C.transpose(), Eigen::Matrix2d::Zero(),
                                             Eigen::Matrix2d::Zero(), C.inverse());
    return detail::remark_q(eps) * B * detail::remark_q_inv(eps);
}

/// The eps -> 0 limit of remark1_matrix: blockdiag(beta^t, beta^{-1}) with
/// beta = [[1,0],[-1,1]]. Satisfies all of (parab) except dim ker(P-I) = 2.
inline Eigen::Matrix4d remark1_limit() {
    Eigen::Matrix2d bt, binv;
    bt << 1.0, -1.0, 0.0, 1.0;
    binv << 1.0, 0.0, 1.0, 1.0;
    return detail::block2(bt, Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero(), binv);
}

/// E_eps = [[R_eps, T], [0, R_eps]] with R_eps a rotation by eps^2 and
/// T = diag(tau, -tau); elliptic for eps^2 < pi, converges to P*(tau) under
/// the Q_eps conjugation.
inline Eigen::Matrix4d remark2_core(double eps, double tau) {
    Eigen::Matrix2d R, T;
    const double c = std::cos(eps * eps), s = std::sin(eps * eps);
    R << c, -s, s, c;
    T << tau, 0.0, 0.0, -tau;
    return detail::block2(R, T, Eigen::Matrix2d::Zero(), R);
}

/// The conjugated fixture curly-E_eps = Q_eps E_eps Q_eps^{-1}.
inline Eigen::Matrix4d remark2_matrix(double eps, double tau) {
    return detail::remark_q(eps) * remark2_core(eps, tau) * detail::remark_q_inv(eps);
}

/// The three fixtures {S_eps, curly-E_eps, P*} from the local-criterion remarks.
inline std::array<Monodromy4, 3> make_remark_fixtures(double eps, double tau) {
    if (eps == 0.0) throw Error("make_remark_fixtures: eps must be nonzero");
    return {make_monodromy(remark1_matrix(eps)),
            make_monodromy(remark2_matrix(eps, tau)),
            make_monodromy(parabolic_pstar(tau))};
}

} // namespace kepav
