#pragma once

// Fully explicit analytics for linear forcing at circular orbits: the
// equator critical-point conditions, the M(p) matrix whose determinant sign
// decides ellipticity vs instability, and the block Hessian of gamma_N at the
// equator critical points.

#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "kepav/averaging.hpp"
#include "kepav/continuation.hpp"
#include "kepav/errors.hpp"
#include "kepav/forcing.hpp"

namespace kepav {

/// Existence test for equator critical points:
///   Im(e^{-i lambda} c_N) = 0,  e^{-2i lambda} c_{2N} = 3 conj(c_0).
struct EquatorConditions {
    bool solvable = false;
    std::vector<double> lambda_solutions; // antipodal pair when present
    bool continuum = false;               // c_0 = c_N = c_{2N} = 0
    bool first_equation_vacuous = false;  // c_N = 0: only the second equation constrains lambda
};

inline EquatorConditions equator_critical_conditions(const FourierSpectrum& spectrum, int N,
                                                     double rel_tol = 1e-12) {
    if (N < 1) throw OutOfDomain("equator_critical_conditions: N must be >= 1");
    const complexd c0 = spectrum.coeff(0), cN = spectrum.coeff(N), c2N = spectrum.coeff(2 * N);
    const double scale = std::max(spectrum.max_abs_coeff(), 1e-300);
    const double tol = rel_tol * scale;

    EquatorConditions out;
    if (std::abs(c0) <= tol && std::abs(cN) <= tol && std::abs(c2N) <= tol) {
        out.solvable = true;
        out.continuum = true;
        return out;
    }

    // solvability: 3|c0| = |c2N| and c0 c2N conj(cN)^2 in [0, inf)
    const bool moduli_ok = std::abs(3.0 * std::abs(c0) - std::abs(c2N)) <= 3.0 * tol;
    const complexd prod = c0 * c2N * std::conj(cN) * std::conj(cN);
    const bool product_ok = std::abs(prod.imag()) <= rel_tol * std::max(std::abs(prod), scale * scale * scale * scale) &&
                            prod.real() >= -rel_tol * std::max(std::abs(prod), scale * scale * scale * scale);
    if (!(moduli_ok && product_ok)) return out;

    if (std::abs(cN) > tol) {
        const double lam = wrap_angle(std::arg(cN));
        // both candidates satisfy the first equation; the second is invariant
        // under lambda -> lambda + pi, so check it once
        if (std::abs(c2N) > tol || std::abs(c0) > tol) {
            const complexd resid = std::polar(1.0, -2.0 * lam) * c2N - 3.0 * std::conj(c0);
            if (std::abs(resid) > 3.0 * tol) return out;
        }
        out.solvable = true;
        out.lambda_solutions = {lam, wrap_angle(lam + M_PI)};
        return out;
    }

    // c_N = 0: the first equation is vacuous; solve e^{-2i lambda} c_{2N} = 3 conj(c0)
    out.first_equation_vacuous = true;
    if (std::abs(c2N) <= tol) return out; // then c0 = 0 too (moduli_ok), caught above as continuum
    const complexd w = 3.0 * std::conj(c0) / c2N; // |w| = 1 by moduli_ok
    const double lam = wrap_angle(-0.5 * std::arg(w));
    out.solvable = true;
    out.lambda_solutions = {lam, wrap_angle(lam + M_PI)};
    return out;
}

/// Per-family continuation prediction for the two equator critical points.
struct FamilyPrediction {
    double lambda = 0.0;          // equator angle of the critical point
    int base_sign = +1;           // bifurcates from base_sign * e^{i(lambda* + N t)}
    PredictedClass cls = PredictedClass::Inconclusive;
};

struct CircularReport {
    int N = 1;
    complexd c0, cN, c2N, cNeg, c3N;
    bool on_linear_manifold = false; // c0 = c_{2N} = 0 within tolerance
    std::optional<double> lambda_star;
    Eigen::Matrix2d M_matrix = Eigen::Matrix2d::Zero();
    double det_M = 0.0;
    Eigen::Matrix3d d2gamma = Eigen::Matrix3d::Zero(); // full block at (lambda*, 0, 0)
    std::array<FamilyPrediction, 2> families{};
};

/// Evaluate the explicit M(p) block on the linear manifold c_0 = c_{2N} = 0:
///   D^2 gamma_N(lambda*,0,0) = blockdiag(Lambda_N^2 |c_N|, Lambda_N M(p)),
/// with e^{i lambda*} = c_N / |c_N|, and classify both bifurcating families.
inline CircularReport m_matrix(const FourierSpectrum& spectrum, int N, double rel_tol = 1e-12,
                               double class_tol = 1e-12) {
    if (N < 1) throw OutOfDomain("m_matrix: N must be >= 1");
    CircularReport rep;
    rep.N = N;
    rep.c0 = spectrum.coeff(0);
    rep.cN = spectrum.coeff(N);
    rep.c2N = spectrum.coeff(2 * N);
    rep.cNeg = spectrum.coeff(-N);
    rep.c3N = spectrum.coeff(3 * N);

    const double scale = std::max(spectrum.max_abs_coeff(), 1e-300);
    const double tol = rel_tol * scale;
    rep.on_linear_manifold = std::abs(rep.c0) <= tol && std::abs(rep.c2N) <= tol;
    if (!rep.on_linear_manifold)
        throw OffManifold("m_matrix: requires c_0 = c_{2N} = 0");
    if (std::abs(rep.cN) <= tol)
        throw DegenerateEquator("m_matrix: c_N = 0, equator critical points are not isolated");

    const double lam = wrap_angle(std::arg(rep.cN));
    rep.lambda_star = lam;

    const double acN = std::abs(rep.cN);
    const complexd q1 = rep.cN * rep.cNeg / acN;
    const complexd q3 = 3.0 * std::pow(std::conj(rep.cN), 3) * rep.c3N / (acN * acN * acN);
    rep.M_matrix(0, 0) = acN + 0.25 * (q1 + q3).real();
    rep.M_matrix(1, 1) = acN - 0.25 * (q1 + q3).real();
    rep.M_matrix(0, 1) = rep.M_matrix(1, 0) = 0.25 * (q1 - q3).imag();
    rep.det_M = rep.M_matrix.determinant();

    const double LN = std::pow(static_cast<double>(N), -1.0 / 3.0);
    rep.d2gamma.setZero();
    rep.d2gamma(0, 0) = LN * LN * acN;
    rep.d2gamma.block<2, 2>(1, 1) = LN * rep.M_matrix;

    const double band = class_tol * std::max(1.0, acN * acN);
    rep.families[0].lambda = lam;
    rep.families[0].base_sign = +1;
    rep.families[1].lambda = wrap_angle(lam + M_PI);
    rep.families[1].base_sign = -1;
    if (std::abs(rep.det_M) <= band) {
        rep.families[0].cls = rep.families[1].cls = PredictedClass::Inconclusive;
    } else if (rep.det_M > 0.0) {
        rep.families[0].cls = PredictedClass::Elliptic; // d2_ll > 0, det > 0
        rep.families[1].cls = PredictedClass::Unstable; // negated Hessian: d2_ll < 0
    } else {
        rep.families[0].cls = rep.families[1].cls = PredictedClass::Unstable;
    }
    return rep;
}

/// Numerical cross-check of the analytic block Hessian against the averaging
/// engine at both equator critical points. Mismatches are reported, not thrown.
struct HessianComparison {
    Eigen::Matrix3d analytic;
    Eigen::Matrix3d numeric;
    double max_abs_diff = 0.0;
    bool match = false;
};

inline std::array<HessianComparison, 2> cross_validate_hessian(const CircularReport& rep,
                                                               const ForcingModel& forcing,
                                                               int quadrature_nodes = 256,
                                                               double tol = 1e-6) {
    const auto f = make_averaged(rep.N, forcing, quadrature_nodes);
    std::array<HessianComparison, 2> out;
    for (int k = 0; k < 2; ++k) {
        const double lam = rep.families[k].lambda;
        out[k].analytic = (k == 0) ? rep.d2gamma : Eigen::Matrix3d(-rep.d2gamma);
        out[k].numeric = gamma_gradient_hessian(f, {lam, 0.0, 0.0}).second;
        out[k].max_abs_diff = (out[k].analytic - out[k].numeric).cwiseAbs().maxCoeff();
        out[k].match = out[k].max_abs_diff < tol;
    }
    return out;
}

/// The analytic equator critical point of the k-th family (k = 0, 1) as a
/// CriticalPoint ready for continuation.
inline CriticalPoint family_critical_point(const CircularReport& rep, int k) {
    CriticalPoint cp;
    cp.lambda = rep.families[k].lambda;
    cp.eta = cp.xi = 0.0;
    cp.gradient_norm = 0.0;
    cp.hessian = (k == 0) ? rep.d2gamma : Eigen::Matrix3d(-rep.d2gamma);
    cp.d2_lambda_lambda = cp.hessian(0, 0);
    cp.hessian_det = cp.hessian.determinant();
    cp.predicted_class = rep.families[k].cls;
    return cp;
}

/// Full comparison table: analytic block Hessians vs the averaging engine, and
/// predicted family classes vs the observed continuation classes. Mismatches
/// are reported in the table, never thrown.
struct CrossValidation {
    std::array<HessianComparison, 2> hessians;
    std::array<Branch, 2> branches;
    std::array<BranchClassification, 2> classifications;
    std::array<std::string, 2> branch_errors{}; // nonempty when a family produced no branch
    std::array<bool, 2> family_ok{};            // branch completed and every point agrees
    bool all_match = false;
};

inline CrossValidation cross_validate(const CircularReport& rep, const ForcingModel& forcing,
                                      const std::vector<double>& eps_grid = geometric_grid(),
                                      const IntegratorConfig& cfg = {}, int quadrature_nodes = 256) {
    CrossValidation out;
    out.hessians = cross_validate_hessian(rep, forcing, quadrature_nodes);
    out.all_match = out.hessians[0].match && out.hessians[1].match;
    for (int k = 0; k < 2; ++k) {
        try {
            out.branches[k] =
                continue_branch(forcing, family_critical_point(rep, k), rep.N, eps_grid, cfg);
            out.classifications[k] = classify_branch(out.branches[k]);
            out.family_ok[k] = !out.branches[k].truncated && out.classifications[k].all_agree;
        } catch (const Error& err) {
            out.branch_errors[k] = err.what();
            out.family_ok[k] = false;
        }
        out.all_match = out.all_match && out.family_ok[k];
    }
    return out;
}

} // namespace kepav
