#pragma once

// Representation of the time-periodic perturbation U(t, x): either a general
// potential with derivatives, or the linear-forcing specialization
// U(t,x) = -<p(t), x> with p given by finitely many Fourier coefficients.
// The plane is identified with C throughout: x = x1 + i x2, p = p1 + i p2.

#include <cmath>
#include <complex>
#include <functional>
#include <map>

#include <Eigen/Dense>

#include "kepav/errors.hpp"

namespace kepav {

using complexd = std::complex<double>;

enum class ForcingKind { GeneralPotential, LinearForcing };

/// Finitely supported Fourier coefficients n -> c_n.
struct FourierSpectrum {
    std::map<int, complexd> coefficients;

    complexd coeff(int n) const {
        const auto it = coefficients.find(n);
        return it == coefficients.end() ? complexd(0.0, 0.0) : it->second;
    }
    /// p(t) = sum c_n e^{int}
    complexd eval(double t) const {
        complexd sum(0.0, 0.0);
        for (const auto& [n, c] : coefficients) sum += c * std::polar(1.0, n * t);
        return sum;
    }
    double max_abs_coeff() const {
        double m = 0.0;
        for (const auto& [n, c] : coefficients) m = std::max(m, std::abs(c));
        return m;
    }
};

/// Value, gradient and Hessian of U at one (t, x).
struct PotentialSample {
    double U = 0.0;
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
};

/// The perturbation model. Immutable after construction; general-potential
/// callables must themselves be safe for concurrent evaluation.
class ForcingModel {
  public:
    using PotentialFn = std::function<PotentialSample(double t, const Eigen::Vector2d& x)>;

    static ForcingModel linear(FourierSpectrum spectrum) {
        ForcingModel f;
        f.kind_ = ForcingKind::LinearForcing;
        f.spectrum_ = std::move(spectrum);
        return f;
    }

    static ForcingModel zero() { return linear(FourierSpectrum{}); }

    static ForcingModel potential(PotentialFn fn) {
        ForcingModel f;
        f.kind_ = ForcingKind::GeneralPotential;
        f.potential_ = std::move(fn);
        return f;
    }

    ForcingKind kind() const { return kind_; }
    const FourierSpectrum& spectrum() const {
        if (kind_ != ForcingKind::LinearForcing) throw WrongKind("spectrum: not a linear forcing");
        return spectrum_;
    }

    /// p(t) for linear forcing.
    complexd eval_forcing(double t) const {
        if (kind_ != ForcingKind::LinearForcing) throw WrongKind("eval_forcing: not a linear forcing");
        return spectrum_.eval(reduce(t));
    }

    /// (U, grad_x U, D^2_x U) at (t, x). For linear forcing U = -Re(p conj(x)),
    /// grad U = -p, Hessian 0.
    PotentialSample eval_potential(double t, const Eigen::Vector2d& x) const {
        const double tr = reduce(t);
        if (kind_ == ForcingKind::LinearForcing) {
            const complexd p = spectrum_.eval(tr);
            PotentialSample out;
            out.U = -(p.real() * x(0) + p.imag() * x(1));
            out.grad = {-p.real(), -p.imag()};
            return out;
        }
        return potential_(tr, x);
    }

    /// Time-reversed forcing U(-t, x); for linear forcing c_n -> c_{-n}.
    ForcingModel reversed() const {
        if (kind_ == ForcingKind::LinearForcing) {
            FourierSpectrum rev;
            for (const auto& [n, c] : spectrum_.coefficients) rev.coefficients[-n] = c;
            return linear(std::move(rev));
        }
        PotentialFn base = potential_;
        return potential([base](double t, const Eigen::Vector2d& x) { return base(-t, x); });
    }

  private:
    static double reduce(double t) {
        const double two_pi = 2.0 * M_PI;
        double r = std::fmod(t, two_pi);
        if (r < 0.0) r += two_pi;
        return r;
    }

    ForcingKind kind_ = ForcingKind::LinearForcing;
    FourierSpectrum spectrum_;
    PotentialFn potential_;
};

/// Fourier coefficients c_n = (1/2pi) int_0^{2pi} p(t) e^{-int} dt, n in
/// [-n_max, n_max], by the uniform-grid discrete transform (exact to rounding
/// for trigonometric polynomials of degree <= n_max when n_samples is large
/// enough).
template <typename Fn>
FourierSpectrum fourier_analyze(Fn&& p, int n_max, int n_samples) {
    if (n_samples < 4 * n_max + 4) throw OutOfDomain("fourier_analyze: too few samples");
    FourierSpectrum out;
    for (int n = -n_max; n <= n_max; ++n) {
        complexd sum(0.0, 0.0);
        for (int k = 0; k < n_samples; ++k) {
            const double t = 2.0 * M_PI * k / n_samples;
            sum += complexd(p(t)) * std::polar(1.0, -n * t);
        }
        out.coefficients[n] = sum / static_cast<double>(n_samples);
    }
    return out;
}

} // namespace kepav
