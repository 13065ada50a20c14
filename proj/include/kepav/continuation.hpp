#pragma once

// Newton-shooting continuation of 2pi-periodic orbits in eps from
// averaging-predicted seeds, per-eps monodromy classification, and the
// asymptotic-expansion checks
//   det(S(eps)-I) = -tau_N (2pi)^3 eps^3 det D^2 gamma_N + o(eps^3)
//   tr S(eps) - 4 = eps 4 pi^2 h''(r_N) d2_ll gamma_N + o(eps)
// with h''(r_N) = -3 N^{4/3}.
//
// Shooting acts on the full 4-dimensional fixed-point problem
// F(s) = Pi_eps(s) - s, which is nonsingular for eps != 0 at non-degenerate
// critical points; the singular eps = 0 limit is detected and rejected.
// Negative N runs the time-reversed system (forcing t -> p(-t), winding |N|)
// and maps initial conditions back via (x, y) -> (x, -y); the Floquet
// classification is invariant (reciprocal spectrum).

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kepav/averaging.hpp"
#include "kepav/errors.hpp"
#include "kepav/integrate.hpp"
#include "kepav/symplectic.hpp"

namespace kepav {

struct BranchPoint {
    double eps = 0.0;
    CartesianState s0;            // periodic initial condition (original orientation)
    PoincareState poincare0;      // chart point of the analyzed (prograde) orbit
    double newton_residual = 0.0; // ||Pi_eps(s0) - s0|| from the verification run
    SpectralSummary monodromy_summary;
    int winding = 0;
};

struct Branch {
    int N = 1;
    CriticalPoint critical_point;
    std::vector<BranchPoint> points; // eps strictly increasing
    PredictedClass predicted_class = PredictedClass::Inconclusive;
    bool truncated = false;
    std::vector<std::string> failures; // per-eps notes for truncated branches
};

struct ShootOptions {
    double tol_shoot = 1e-10;
    int max_iter = 120;               // direct seeds at small eps need long LM tails
    int max_damping = 20;             // regularization retries within one iteration
    double max_step_norm = 0.25;      // trust-region cap on one update
    double sigma_min_singular = 1e-8; // smallest singular value of DPi - I treated as singular;
                                      // the eps = 0 defect direction carries only integration
                                      // noise (~1e-9), while healthy branches at eps >= 1e-4
                                      // stay above 1e-7 even near the det M(p) = 0 threshold
    double tol_det_floor = 1e-12;     // absolute floor for det(S-I) sign calls
    SpectralTolerances spectral{};
};

/// Cartesian initial condition of the unperturbed orbit through a critical
/// point: P(lambda, |N|^{-1/3}, eta, xi), mapped back for retrograde N.
inline CartesianState seed_from_critical_point(const CriticalPoint& cp, int N) {
    if (N == 0) throw OutOfDomain("seed_from_critical_point: N must be nonzero");
    const double Lambda = std::pow(std::abs(static_cast<double>(N)), -1.0 / 3.0);
    CartesianState s = poincare_to_cartesian({cp.lambda, Lambda, cp.eta, cp.xi});
    if (N < 0) s.y = -s.y;
    return s;
}

namespace detail {

inline double det_band(double eps, double predicted_det_coeff, const ShootOptions& opts) {
    const double tol_det =
        std::max(opts.tol_det_floor, 0.01 * std::abs(predicted_det_coeff) * eps * eps * eps);
    return 10.0 * tol_det;
}

} // namespace detail

/// One Newton-shooting solve of Pi_eps(s) = s from a guess.
/// predicted_det_coeff (= -tau_N (2pi)^3 det D^2 gamma, when available) scales
/// the degeneracy band of the per-point classification with eps^3.
inline BranchPoint shoot(const ForcingModel& f, double eps, int N, const CartesianState& guess,
                         const IntegratorConfig& cfg = {}, const ShootOptions& opts = {},
                         double predicted_det_coeff = 0.0) {
    if (N == 0) throw OutOfDomain("shoot: N must be nonzero");
    if (eps == 0.0)
        throw SingularJacobian("shoot: the eps = 0 fixed-point problem is singular on Sigma_N");
    if (eps < 0.0) throw OutOfDomain("shoot: eps must be positive");
    const bool reversed = N < 0;
    const ForcingModel work_f = reversed ? f.reversed() : f;
    CartesianState s = reversed ? CartesianState{guess.x, -guess.y} : guess;

    // Regularized (Levenberg-Marquardt) Newton on F(s) = Pi_eps(s) - s. The
    // Jacobian DPi - I has three O(eps) singular values inherited from the
    // parabolic limit, so the plain damped-Newton basin shrinks like O(eps);
    // the nu-regularized step stays productive in the degenerate directions.
    // Every residual (loop top, trial, verification) comes from the same
    // variational integration route, so comparisons near the residual floor
    // are consistent, and each accepted trial already carries next Jacobian.
    struct Eval {
        Eigen::Vector4d F;
        Eigen::Matrix4d dpi;
    };
    auto eval_at = [&](const CartesianState& state) {
        const auto [s1, dpi] = period_map(work_f, eps, state, cfg);
        return Eval{cartesian_vec(s1) - cartesian_vec(state), dpi.entries};
    };

    bool converged = false;
    double nu = 0.0;
    Eval cur = eval_at(s);
    for (int it = 0; it < opts.max_iter; ++it) {
        if (cur.F.norm() < opts.tol_shoot) {
            converged = true;
            break;
        }
        const Eigen::Matrix4d J = cur.dpi - Eigen::Matrix4d::Identity();
        const auto sv = J.jacobiSvd().singularValues();
        if (sv(3) < opts.sigma_min_singular)
            throw SingularJacobian("shoot: DPi - I is singular (eps = 0 torus or degenerate point)");

        const Eigen::Matrix4d JtJ = J.transpose() * J;
        const Eigen::Vector4d JtF = J.transpose() * cur.F;
        bool improved = false;
        for (int trial = 0; trial <= opts.max_damping; ++trial) {
            Eigen::Vector4d step = (JtJ + nu * Eigen::Matrix4d::Identity()).ldlt().solve(-JtF);
            if (step.norm() > opts.max_step_norm) step *= opts.max_step_norm / step.norm();
            const CartesianState s_try = cartesian_from_vec(cartesian_vec(s) + step);
            try {
                const Eval e_try = eval_at(s_try);
                if (e_try.F.norm() < cur.F.norm()) {
                    // gain ratio of the Gauss-Newton model controls nu
                    const double predicted =
                        cur.F.squaredNorm() - (cur.F + J * step).squaredNorm();
                    const double actual = cur.F.squaredNorm() - e_try.F.squaredNorm();
                    const double rho = actual / std::max(predicted, 1e-300);
                    s = s_try;
                    cur = e_try;
                    improved = true;
                    nu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
                    if (nu < 1e-13 * JtJ.trace()) nu = 0.0;
                    break;
                }
            } catch (const CollisionGuard&) {
                // fall through: shrink the step by raising the regularization
            }
            nu = std::max(4.0 * nu, 1e-10 * JtJ.trace());
        }
        if (!improved) throw NoConvergence("shoot: regularized steps failed to reduce the residual");
    }
    if (!converged) throw NoConvergence("shoot: Newton did not reach tol_shoot");

    // verification run: residual re-measured, monodromy and winding extracted
    const auto rec = integrate(work_f, eps, s, {0.0, 2.0 * M_PI}, cfg, /*with_variational=*/true);
    const Eigen::Vector4d F_verify =
        cartesian_vec(rec.samples.back().second) - cartesian_vec(s);

    BranchPoint bp;
    bp.eps = eps;
    bp.newton_residual = F_verify.norm();
    if (!(bp.newton_residual < opts.tol_shoot))
        throw NoConvergence("shoot: verification residual exceeds tol_shoot");
    bp.s0 = reversed ? CartesianState{s.x, -s.y} : s;
    bp.poincare0 = cartesian_to_poincare(s);

    std::vector<CartesianState> path;
    path.reserve(rec.samples.size());
    for (const auto& [t, st] : rec.samples) path.push_back(st);
    const int w = winding_number(path, cfg.min_radius_guard, 1e-5);
    bp.winding = reversed ? -w : w;

    const Monodromy4 S = monodromy_in_poincare(*rec.monodromy, s);
    SpectralTolerances tol = opts.spectral;
    tol.degenerate_band = detail::det_band(eps, predicted_det_coeff, opts);
    bp.monodromy_summary = classify_local(S, 0.0, tol);
    return bp;
}

/// Geometric eps grid, default 1e-4 .. 1e-2 with 9 points.
inline std::vector<double> geometric_grid(double lo = 1e-4, double hi = 1e-2, int n = 9) {
    std::vector<double> grid;
    for (int i = 0; i < n; ++i)
        grid.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
    return grid;
}

/// tau_N = 2 pi h''(r_N) = -6 pi N^{4/3} (prograde analysis winding |N|).
inline double tau_of(int N) {
    return -6.0 * M_PI * std::pow(std::abs(static_cast<double>(N)), 4.0 / 3.0);
}

/// Predicted leading coefficient of det(S(eps) - I).
inline double predicted_det_coeff(int N, double det_d2gamma) {
    return -tau_of(N) * std::pow(2.0 * M_PI, 3) * det_d2gamma;
}

/// Predicted linear coefficient of tr S(eps) - 4.
inline double predicted_trace_coeff(int N, double d2_lambda_lambda) {
    return 4.0 * M_PI * M_PI * (-3.0 * std::pow(std::abs(static_cast<double>(N)), 4.0 / 3.0)) *
           d2_lambda_lambda;
}

/// Predictor-corrector continuation over an increasing eps grid; the first
/// point is seeded from the critical point, each subsequent point from the
/// previous converged one. If the smallest eps does not converge from the
/// crude zeroth-order seed (the Jacobian degenerates like eps near the
/// integrable limit), the branch is anchored at the largest eps that does and
/// walked downward from there. Missing points are recorded and the branch is
/// flagged as truncated.
inline Branch continue_branch(const ForcingModel& f, const CriticalPoint& cp, int N,
                              const std::vector<double>& eps_grid, const IntegratorConfig& cfg = {},
                              const ShootOptions& opts = {}) {
    if (eps_grid.empty() || eps_grid.front() <= 0.0)
        throw OutOfDomain("continue_branch: eps grid must be positive");
    for (size_t i = 1; i < eps_grid.size(); ++i)
        if (eps_grid[i] <= eps_grid[i - 1])
            throw OutOfDomain("continue_branch: eps grid must be strictly increasing");

    Branch branch;
    branch.N = N;
    branch.critical_point = cp;
    branch.predicted_class = cp.predicted_class;
    const double det_coeff = predicted_det_coeff(N, cp.hessian_det);
    const CartesianState seed = seed_from_critical_point(cp, N);

    const size_t n = eps_grid.size();
    std::vector<std::optional<BranchPoint>> slots(n);
    auto try_shoot = [&](size_t k, const CartesianState& guess) {
        try {
            slots[k] = shoot(f, eps_grid[k], N, guess, cfg, opts, det_coeff);
            return true;
        } catch (const Error& err) {
            branch.failures.push_back("eps = " + std::to_string(eps_grid[k]) + ": " + err.what());
            return false;
        }
    };

    size_t anchor = n; // index of the first converged point
    if (try_shoot(0, seed)) {
        anchor = 0;
    } else {
        for (size_t k = n - 1; k >= 1; --k) { // scan from the top; slot 0 already failed
            if (try_shoot(k, seed)) {
                anchor = k;
                break;
            }
            if (k == 1) break;
        }
        if (anchor == n) throw EmptyBranch("continue_branch: no eps in the grid converged");
        // walk downward from the anchor
        for (size_t k = anchor; k-- > 0;) {
            if (!try_shoot(k, slots[k + 1]->s0)) break;
        }
    }
    // walk upward from the anchor
    for (size_t k = anchor + 1; k < n; ++k) {
        if (!try_shoot(k, slots[k - 1]->s0)) break;
    }

    for (auto& slot : slots)
        if (slot.has_value()) branch.points.push_back(std::move(*slot));
    branch.truncated = branch.points.size() < n;
    if (!branch.truncated) branch.failures.clear(); // every slot recovered
    return branch;
}

// ---------------------------------------------------------------------------
// Expansion fits

struct ExpansionFit {
    double det_slope = 0.0;          // log-log slope of |det(S-I)| vs eps (expect 2d+1 = 3)
    double det_coeff_fit = 0.0;      // signed leading coefficient from the fit
    double det_coeff_predicted = 0.0;
    double det_rel_err = 0.0;
    double trace_coeff_fit = 0.0;    // linear coefficient of tr S - 4
    double trace_coeff_predicted = 0.0;
    double trace_rel_err = 0.0;
    size_t n_fit_points = 0;
    double eps_lo = 0.0, eps_hi = 0.0;
};

/// Fit the leading terms of det(S(eps)-I) and tr S(eps) - 4 over the branch's
/// middle points (the two smallest eps are noise-dominated and excluded, as is
/// anything past a classification change) and compare with the averaging
/// prediction from gamma_hessian.
inline ExpansionFit expansion_check(const Branch& branch, const Eigen::Matrix3d& gamma_hessian) {
    const auto& pts = branch.points;
    if (pts.size() < 4 || pts.back().eps < 10.0 * pts.front().eps)
        throw InsufficientPoints("expansion_check: need >= 4 points spanning a decade in eps");

    size_t lo = 2, hi = pts.size();
    const StabilityClass base_cls = pts[lo].monodromy_summary.cls;
    for (size_t i = lo + 1; i < hi; ++i) {
        if (pts[i].monodromy_summary.cls != base_cls) {
            hi = i;
            break;
        }
    }
    if (hi - lo < 2) throw InsufficientPoints("expansion_check: too few stable-classification points");

    ExpansionFit fit;
    fit.n_fit_points = hi - lo;
    fit.eps_lo = pts[lo].eps;
    fit.eps_hi = pts[hi - 1].eps;

    // least squares on log|det| = slope log(eps) + b
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int det_sign = 0;
    for (size_t i = lo; i < hi; ++i) {
        const double det = pts[i].monodromy_summary.det_s_minus_i;
        if (det == 0.0) throw InsufficientPoints("expansion_check: det(S-I) vanished exactly");
        det_sign += (det > 0.0) ? 1 : -1;
        const double x = std::log(pts[i].eps), y = std::log(std::abs(det));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(fit.n_fit_points);
    fit.det_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - fit.det_slope * sx) / n;
    fit.det_coeff_fit = ((det_sign >= 0) ? 1.0 : -1.0) * std::exp(intercept);

    // least squares of (tr - 4) = c1 eps + c2 eps^2; report c1
    double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
    for (size_t i = lo; i < hi; ++i) {
        const double e = pts[i].eps, y = pts[i].monodromy_summary.trace - 4.0;
        a11 += e * e;
        a12 += e * e * e;
        a22 += e * e * e * e;
        b1 += e * y;
        b2 += e * e * y;
    }
    const double den = a11 * a22 - a12 * a12;
    fit.trace_coeff_fit = (b1 * a22 - b2 * a12) / den;

    fit.det_coeff_predicted = predicted_det_coeff(branch.N, gamma_hessian.determinant());
    fit.trace_coeff_predicted = predicted_trace_coeff(branch.N, gamma_hessian(0, 0));
    fit.det_rel_err = std::abs(fit.det_coeff_fit - fit.det_coeff_predicted) /
                      std::max(1e-300, std::abs(fit.det_coeff_predicted));
    fit.trace_rel_err = std::abs(fit.trace_coeff_fit - fit.trace_coeff_predicted) /
                        std::max(1e-300, std::abs(fit.trace_coeff_predicted));
    return fit;
}

// ---------------------------------------------------------------------------
// Branch classification

struct PointAgreement {
    double eps = 0.0;
    PredictedClass predicted = PredictedClass::Inconclusive;
    StabilityClass observed = StabilityClass::Degenerate;
    bool agrees = false;
};

struct BranchClassification {
    PredictedClass prediction = PredictedClass::Inconclusive;
    std::vector<PointAgreement> table;
    bool all_agree = false;
    int outside_chart_count = 0;
    int first_disagreement = -1; // index into table, -1 if none
};

inline bool observation_matches(PredictedClass pred, StabilityClass obs) {
    switch (pred) {
        case PredictedClass::Elliptic:
            return obs == StabilityClass::Elliptic;
        case PredictedClass::Unstable:
            return obs == StabilityClass::Hyperbolic || obs == StabilityClass::MixedEllipticHyperbolic;
        case PredictedClass::Inconclusive:
            return true; // the theorem is silent; observations are reported, not judged
    }
    return false;
}

/// Compare the Theorem-1 prediction stored with the branch against the
/// observed per-eps monodromy classes.
inline BranchClassification classify_branch(const Branch& branch) {
    BranchClassification out;
    out.prediction = branch.predicted_class;
    out.all_agree = true;
    for (const auto& bp : branch.points) {
        PointAgreement row;
        row.eps = bp.eps;
        row.predicted = out.prediction;
        row.observed = bp.monodromy_summary.cls;
        row.agrees = observation_matches(row.predicted, row.observed);
        if (row.observed == StabilityClass::OutsideLocalChart) ++out.outside_chart_count;
        if (!row.agrees && out.first_disagreement < 0)
            out.first_disagreement = static_cast<int>(out.table.size());
        out.all_agree = out.all_agree && row.agrees;
        out.table.push_back(row);
    }
    return out;
}

} // namespace kepav
