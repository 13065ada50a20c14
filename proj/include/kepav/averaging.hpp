#pragma once

// The averaged function gamma_N(lambda, eta, xi) of the perturbation over the
// resonant torus Lambda = |N|^{-1/3}, its gradient and Hessian, and the Newton
// search for non-degenerate critical points (the seeds of the continuation).
//
// Negative N is handled by time reversal: the model analyzes the forcing
// t -> p(-t) with winding |N|; the continuation layer maps initial conditions
// back to the original orientation.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kepav/errors.hpp"
#include "kepav/forcing.hpp"
#include "kepav/kepler.hpp"

namespace kepav {

enum class PredictedClass { Elliptic, Unstable, Inconclusive };

inline const char* to_string(PredictedClass c) {
    switch (c) {
        case PredictedClass::Elliptic: return "Elliptic";
        case PredictedClass::Unstable: return "Unstable";
        case PredictedClass::Inconclusive: return "Inconclusive";
    }
    return "?";
}

struct AveragedFunction {
    int N = 1;                  // winding number, nonzero
    double Lambda_N = 1.0;      // |N|^{-1/3}
    ForcingModel forcing;       // original orientation
    int quadrature_nodes = 256;

    ForcingModel effective_forcing; // reversed when N < 0
    int effective_N = 1;            // |N|
};

inline AveragedFunction make_averaged(int N, ForcingModel forcing, int quadrature_nodes = 256) {
    if (N == 0) throw OutOfDomain("make_averaged: winding number must be nonzero");
    AveragedFunction f;
    f.N = N;
    f.Lambda_N = std::pow(std::abs(static_cast<double>(N)), -1.0 / 3.0);
    f.effective_N = std::abs(N);
    f.effective_forcing = (N > 0) ? forcing : forcing.reversed();
    f.forcing = std::move(forcing);
    f.quadrature_nodes = quadrature_nodes;
    return f;
}

namespace detail {

inline void check_in_torus(const AveragedFunction& f, double eta, double xi, double margin = 0.0) {
    const double r = std::hypot(eta, xi);
    if (r + margin >= std::sqrt(2.0 * f.Lambda_N))
        throw OutOfTorus("point outside the solid torus Lambda = Lambda_N");
}

} // namespace detail

/// gamma_N(lambda, eta, xi) by the composite trapezoid rule (spectrally
/// accurate for the periodic integrand); deterministic for a fixed node count.
inline double gamma(const AveragedFunction& f, double lambda, double eta, double xi) {
    detail::check_in_torus(f, eta, xi);
    const int n = f.quadrature_nodes;
    double sum = 0.0;
    for (int k = 0; k < n; ++k) {
        const double t = 2.0 * M_PI * k / n;
        const PoincareState p{wrap_angle(lambda + f.effective_N * t), f.Lambda_N, eta, xi};
        const CartesianState s = poincare_to_cartesian(p);
        sum += f.effective_forcing.eval_potential(t, s.x).U;
    }
    return sum / n;
}

// ---------------------------------------------------------------------------
// Derivatives

namespace detail {

/// Closed-form gradient/Hessian on the circular locus for linear forcing:
/// differentiation under the integral using the chart derivative tables.
inline std::pair<Eigen::Vector3d, Eigen::Matrix3d> gamma_jet_derivatives(const AveragedFunction& f,
                                                                         double lambda) {
    const int n = f.quadrature_nodes;
    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
    Eigen::Matrix3d hess = Eigen::Matrix3d::Zero();
    for (int k = 0; k < n; ++k) {
        const double t = 2.0 * M_PI * k / n;
        const complexd p = f.effective_forcing.eval_forcing(t);
        const auto jet = poincare_jet_circular(wrap_angle(lambda + f.effective_N * t), f.Lambda_N);
        for (int v = 0; v < 3; ++v) {
            grad(v) -= (p * std::conj(jet.dx[v])).real();
            for (int w = v; w < 3; ++w) hess(v, w) -= (p * std::conj(jet.d2x(v, w))).real();
        }
    }
    grad /= n;
    hess /= n;
    hess(1, 0) = hess(0, 1);
    hess(2, 0) = hess(0, 2);
    hess(2, 1) = hess(1, 2);
    return {grad, hess};
}

/// Central differences of gamma with one Richardson step. Gradient base step
/// 1e-5; Hessian base step 1e-4 (second differences need the larger step to
/// stay above the roundoff floor of the quadrature).
inline std::pair<Eigen::Vector3d, Eigen::Matrix3d> gamma_fd_derivatives(const AveragedFunction& f,
                                                                        const Eigen::Vector3d& z,
                                                                        double step_grad = 1e-5,
                                                                        double step_hess = 1e-4) {
    auto g = [&](const Eigen::Vector3d& w) { return gamma(f, w(0), w(1), w(2)); };

    Eigen::Vector3d grad;
    for (int v = 0; v < 3; ++v) {
        double d[2];
        int idx = 0;
        for (const double h : {step_grad, 0.5 * step_grad}) {
            Eigen::Vector3d zp = z, zm = z;
            zp(v) += h;
            zm(v) -= h;
            d[idx++] = (g(zp) - g(zm)) / (2.0 * h);
        }
        grad(v) = (4.0 * d[1] - d[0]) / 3.0;
    }

    Eigen::Matrix3d hess;
    const double g0 = g(z);
    for (int v = 0; v < 3; ++v) {
        double d[2];
        int idx = 0;
        for (const double h : {step_hess, 0.5 * step_hess}) {
            Eigen::Vector3d zp = z, zm = z;
            zp(v) += h;
            zm(v) -= h;
            d[idx++] = (g(zp) - 2.0 * g0 + g(zm)) / (h * h);
        }
        hess(v, v) = (4.0 * d[1] - d[0]) / 3.0;
    }
    for (int v = 0; v < 3; ++v) {
        for (int w = v + 1; w < 3; ++w) {
            double d[2];
            int idx = 0;
            for (const double h : {step_hess, 0.5 * step_hess}) {
                auto shifted = [&](double sv, double sw) {
                    Eigen::Vector3d zz = z;
                    zz(v) += sv * h;
                    zz(w) += sw * h;
                    return g(zz);
                };
                d[idx++] = (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) /
                           (4.0 * h * h);
            }
            hess(v, w) = hess(w, v) = (4.0 * d[1] - d[0]) / 3.0;
        }
    }
    return {grad, hess};
}

} // namespace detail

/// Gradient and Hessian of gamma_N at (lambda, eta, xi). On the circular locus
/// with linear forcing the closed-form route through the chart jets is used;
/// elsewhere (and for general potentials) finite differences of gamma.
inline std::pair<Eigen::Vector3d, Eigen::Matrix3d> gamma_gradient_hessian(const AveragedFunction& f,
                                                                          const Eigen::Vector3d& z) {
    const double fd_margin = 2e-4;
    detail::check_in_torus(f, z(1), z(2), fd_margin);
    const bool on_locus = std::hypot(z(1), z(2)) < 1e-8;
    if (on_locus && f.effective_forcing.kind() == ForcingKind::LinearForcing)
        return detail::gamma_jet_derivatives(f, z(0));
    return detail::gamma_fd_derivatives(f, z);
}

/// The finite-difference route unconditionally (test oracle).
inline std::pair<Eigen::Vector3d, Eigen::Matrix3d> gamma_gradient_hessian_fd(
    const AveragedFunction& f, const Eigen::Vector3d& z) {
    detail::check_in_torus(f, z(1), z(2), 2e-4);
    return detail::gamma_fd_derivatives(f, z);
}

// ---------------------------------------------------------------------------
// Critical points

struct CriticalPoint {
    double lambda = 0.0;
    double eta = 0.0;
    double xi = 0.0;
    double gradient_norm = 0.0;
    Eigen::Matrix3d hessian = Eigen::Matrix3d::Zero();
    double d2_lambda_lambda = 0.0;
    double hessian_det = 0.0;
    PredictedClass predicted_class = PredictedClass::Inconclusive;
};

struct SeedFailure {
    Eigen::Vector3d seed;
    std::string reason;
};

struct CriticalPointSearch {
    std::vector<CriticalPoint> points;
    bool degenerate_continuum = false; // gradient vanishes identically (e.g. zero forcing)
    std::vector<SeedFailure> failures;
};

struct SearchOptions {
    double tol_grad = 1e-9;
    int max_iter = 40;
    double dedup_tol = 1e-6;
    double class_tol = 1e-6; // Inconclusive band for the Theorem-1 inequalities
};

namespace detail {

inline PredictedClass theorem1_class(double d2ll, double det, double scale, double class_tol) {
    const double band_ll = class_tol * std::max(1.0, scale);
    const double band_det = class_tol * std::max(1.0, scale * scale * scale);
    if (std::abs(d2ll) <= band_ll || std::abs(det) <= band_det) return PredictedClass::Inconclusive;
    if (d2ll > 0.0 && det > 0.0) return PredictedClass::Elliptic;
    return PredictedClass::Unstable;
}

inline CriticalPoint finish_critical_point(const AveragedFunction& f, const Eigen::Vector3d& z,
                                           double grad_norm, const SearchOptions& opts) {
    CriticalPoint cp;
    cp.lambda = wrap_angle(z(0));
    cp.eta = z(1);
    cp.xi = z(2);
    cp.gradient_norm = grad_norm;
    cp.hessian = gamma_gradient_hessian(f, z).second;
    cp.d2_lambda_lambda = cp.hessian(0, 0);
    cp.hessian_det = cp.hessian.determinant();
    cp.predicted_class = theorem1_class(cp.d2_lambda_lambda, cp.hessian_det, cp.hessian.norm(),
                                        opts.class_tol);
    return cp;
}

} // namespace detail

/// Newton iteration on grad gamma from each seed; converged points are
/// deduplicated (wrap-aware) and classified by the Theorem-1 inequalities.
/// Per-seed failures are recorded, not thrown. When the gradient (and Hessian)
/// vanish identically over all seeds the search reports a degenerate
/// continuum instead of fabricating points.
inline CriticalPointSearch find_critical_points(const AveragedFunction& f,
                                                const std::vector<Eigen::Vector3d>& seeds,
                                                const SearchOptions& opts = {}) {
    CriticalPointSearch out;

    double max_grad = 0.0, max_hess = 0.0;
    std::vector<std::pair<Eigen::Vector3d, Eigen::Matrix3d>> seed_derivs;
    seed_derivs.reserve(seeds.size());
    for (const auto& seed : seeds) {
        try {
            const auto gh = gamma_gradient_hessian(f, seed);
            max_grad = std::max(max_grad, gh.first.norm());
            max_hess = std::max(max_hess, gh.second.norm());
            seed_derivs.emplace_back(gh);
        } catch (const OutOfTorus&) {
            seed_derivs.emplace_back(Eigen::Vector3d::Zero(), Eigen::Matrix3d::Zero());
        }
    }
    if (max_grad < opts.tol_grad && max_hess < 1e-8) {
        out.degenerate_continuum = true;
        return out;
    }

    const double r_max = 0.97 * std::sqrt(2.0 * f.Lambda_N);
    for (size_t si = 0; si < seeds.size(); ++si) {
        Eigen::Vector3d z = seeds[si];
        bool converged = false;
        double grad_norm = 0.0;
        try {
            auto gh = (si < seed_derivs.size() && std::hypot(z(1), z(2)) < r_max)
                          ? seed_derivs[si]
                          : gamma_gradient_hessian(f, z);
            for (int it = 0; it < opts.max_iter; ++it) {
                grad_norm = gh.first.norm();
                if (grad_norm < opts.tol_grad) {
                    converged = true;
                    break;
                }
                Eigen::Matrix3d H = gh.second;
                // Tikhonov fallback for near-singular Hessians
                if (std::abs(H.determinant()) < 1e-10 * std::max(1.0, std::pow(H.norm(), 3)))
                    H += 1e-10 * Eigen::Matrix3d::Identity();
                const Eigen::Vector3d step = H.partialPivLu().solve(-gh.first);
                z += step;
                if (std::hypot(z(1), z(2)) >= r_max)
                    throw OutOfTorus("Newton iterate left the solid torus");
                gh = gamma_gradient_hessian(f, z);
            }
        } catch (const Error& err) {
            out.failures.push_back({seeds[si], err.what()});
            continue;
        }
        if (!converged) {
            out.failures.push_back({seeds[si], "NoConvergence"});
            continue;
        }
        bool duplicate = false;
        for (const auto& cp : out.points) {
            const double d = std::sqrt(std::pow(angle_dist(cp.lambda, wrap_angle(z(0))), 2) +
                                       std::pow(cp.eta - z(1), 2) + std::pow(cp.xi - z(2), 2));
            if (d < opts.dedup_tol) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) out.points.push_back(detail::finish_critical_point(f, z, grad_norm, opts));
    }
    return out;
}

/// Uniform seed grid: n_lambda angles, n_eta x n_xi points in
/// [-r0, r0]^2 with r0 = radius_frac * sqrt(2 Lambda_N).
inline std::vector<Eigen::Vector3d> seed_grid(const AveragedFunction& f, int n_lambda, int n_eta,
                                              int n_xi, double radius_frac = 0.35) {
    std::vector<Eigen::Vector3d> seeds;
    const double r0 = radius_frac * std::sqrt(2.0 * f.Lambda_N);
    for (int i = 0; i < n_lambda; ++i) {
        const double lam = 2.0 * M_PI * i / n_lambda;
        for (int j = 0; j < n_eta; ++j) {
            const double eta = (n_eta == 1) ? 0.0 : -r0 + 2.0 * r0 * j / (n_eta - 1);
            for (int k = 0; k < n_xi; ++k) {
                const double xi = (n_xi == 1) ? 0.0 : -r0 + 2.0 * r0 * k / (n_xi - 1);
                if (std::hypot(eta, xi) < 0.9 * std::sqrt(2.0 * f.Lambda_N))
                    seeds.push_back({lam, eta, xi});
            }
        }
    }
    return seeds;
}

// ---------------------------------------------------------------------------
// Grid sampling

struct GammaGrid {
    int n_lambda = 0, n_eta = 0, n_xi = 0;
    std::vector<double> lambda, eta, xi;
    std::vector<double> values; // row-major, lambda outermost, xi innermost
};

/// Deterministic row-major sample grid for export and seeding. eta and xi run
/// over [-r0, r0] with r0 = radius_frac * sqrt(2 Lambda_N).
inline GammaGrid gamma_grid(const AveragedFunction& f, int n_lambda, int n_eta, int n_xi,
                            double radius_frac = 0.35) {
    if (n_lambda < 2 || n_eta < 2 || n_xi < 2)
        throw OutOfDomain("gamma_grid: resolution must be >= 2 in each axis");
    GammaGrid grid;
    grid.n_lambda = n_lambda;
    grid.n_eta = n_eta;
    grid.n_xi = n_xi;
    const double r0 = radius_frac * std::sqrt(2.0 * f.Lambda_N);
    for (int i = 0; i < n_lambda; ++i) grid.lambda.push_back(2.0 * M_PI * i / n_lambda);
    for (int j = 0; j < n_eta; ++j) grid.eta.push_back(-r0 + 2.0 * r0 * j / (n_eta - 1));
    for (int k = 0; k < n_xi; ++k) grid.xi.push_back(-r0 + 2.0 * r0 * k / (n_xi - 1));
    grid.values.reserve(static_cast<size_t>(n_lambda) * n_eta * n_xi);
    for (const double lam : grid.lambda)
        for (const double eta : grid.eta)
            for (const double xi : grid.xi) grid.values.push_back(gamma(f, lam, eta, xi));
    return grid;
}

} // namespace kepav
