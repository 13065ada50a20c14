#pragma once

// JSON/CSV serialization of the toolkit's types and the run configuration.
//
// Wire formats:
//   matrices         row-major JSON arrays of 16 reals
//   states           {"chart": "cartesian"|"poincare"|"delaunay"|"astro",
//                     "values": [...]} with the chart's field order
//                    (poincare: lambda, Lambda, eta, xi), angles in radians
//   forcing config   {"type": "fourier", "terms": [{"n", "re", "im"}, ...]}
//                    or {"type": "builtin", "name": ..., "params": {...}}
//   gamma grid CSV   header "lambda,eta,xi,gamma"
//   branch summary   CSV "branch,eps,det_s_minus_i,trace,class"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "kepav/averaging.hpp"
#include "kepav/circular.hpp"
#include "kepav/continuation.hpp"
#include "kepav/forcing.hpp"
#include "kepav/integrate.hpp"
#include "kepav/kepler.hpp"
#include "kepav/symplectic.hpp"

namespace kepav {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// matrices and spectral summaries

inline json matrix_to_json(const Eigen::Matrix4d& M) {
    json arr = json::array();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) arr.push_back(M(i, j));
    return arr;
}

inline Eigen::Matrix4d matrix_from_json(const json& arr) {
    if (!arr.is_array() || arr.size() != 16)
        throw OutOfDomain("matrix_from_json: expected a 16-element array");
    Eigen::Matrix4d M;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) M(i, j) = arr[4 * i + j].get<double>();
    return M;
}

inline StabilityClass stability_class_from_string(const std::string& s) {
    for (const auto c : {StabilityClass::Elliptic, StabilityClass::Hyperbolic,
                         StabilityClass::MixedEllipticHyperbolic, StabilityClass::Degenerate,
                         StabilityClass::OutsideLocalChart})
        if (s == to_string(c)) return c;
    throw OutOfDomain("unknown stability class: " + s);
}

inline json summary_to_json(const SpectralSummary& s) {
    json eig = json::array();
    for (const auto& mu : s.eigenvalues) eig.push_back({mu.real(), mu.imag()});
    return json{{"delta1", s.delta1},
                {"delta2", s.delta2},
                {"trace", s.trace},
                {"det_s_minus_i", s.det_s_minus_i},
                {"eigenvalues", eig},
                {"class", to_string(s.cls)}};
}

// ---------------------------------------------------------------------------
// states

inline json state_to_json(const CartesianState& s) {
    return json{{"chart", "cartesian"}, {"values", {s.x(0), s.x(1), s.y(0), s.y(1)}}};
}
inline json state_to_json(const PoincareState& p) {
    return json{{"chart", "poincare"}, {"values", {p.lambda, p.Lambda, p.eta, p.xi}}};
}
inline json state_to_json(const DelaunayCoords& d) {
    return json{{"chart", "delaunay"}, {"values", {d.l, d.L, d.g, d.G}}};
}
inline json state_to_json(const AstroCoords& a) {
    return json{{"chart", "astro"}, {"values", {a.a, a.e, a.l, a.g}}};
}

inline CartesianState cartesian_from_json(const json& j) {
    if (j.at("chart") != "cartesian") throw OutOfDomain("expected a cartesian state");
    const auto& v = j.at("values");
    return {{v.at(0).get<double>(), v.at(1).get<double>()},
            {v.at(2).get<double>(), v.at(3).get<double>()}};
}

inline PoincareState poincare_from_json(const json& j) {
    if (j.at("chart") != "poincare") throw OutOfDomain("expected a poincare state");
    const auto& v = j.at("values");
    return {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>(),
            v.at(3).get<double>()};
}

// ---------------------------------------------------------------------------
// forcing configuration

inline json forcing_to_json(const ForcingModel& f) {
    if (f.kind() != ForcingKind::LinearForcing)
        throw WrongKind("forcing_to_json: only fourier forcings serialize");
    json terms = json::array();
    for (const auto& [n, c] : f.spectrum().coefficients)
        terms.push_back({{"n", n}, {"re", c.real()}, {"im", c.imag()}});
    return json{{"type", "fourier"}, {"terms", terms}};
}

inline ForcingModel forcing_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "fourier") {
        FourierSpectrum sp;
        for (const auto& term : j.at("terms"))
            sp.coefficients[term.at("n").get<int>()] +=
                complexd(term.at("re").get<double>(), term.value("im", 0.0));
        return ForcingModel::linear(sp);
    }
    if (type == "builtin") {
        const std::string name = j.at("name").get<std::string>();
        const json params = j.value("params", json::object());
        if (name == "quadratic") {
            const double k = params.value("k", 1.0);
            return ForcingModel::potential([k](double, const Eigen::Vector2d& x) {
                PotentialSample s;
                s.U = 0.5 * k * x.squaredNorm();
                s.grad = k * x;
                s.hess = k * Eigen::Matrix2d::Identity();
                return s;
            });
        }
        if (name == "pulsating_quadratic") {
            const double k = params.value("k", 1.0);
            return ForcingModel::potential([k](double t, const Eigen::Vector2d& x) {
                PotentialSample s;
                const double w = k * (1.0 + std::cos(t));
                s.U = 0.5 * w * x.squaredNorm();
                s.grad = w * x;
                s.hess = w * Eigen::Matrix2d::Identity();
                return s;
            });
        }
        throw OutOfDomain("unknown builtin potential: " + name);
    }
    throw OutOfDomain("unknown forcing type: " + type);
}

// ---------------------------------------------------------------------------
// higher-level records

inline json critical_point_to_json(const CriticalPoint& cp) {
    json hess = json::array();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) hess.push_back(cp.hessian(i, j));
    return json{{"lambda", cp.lambda},
                {"eta", cp.eta},
                {"xi", cp.xi},
                {"gradient_norm", cp.gradient_norm},
                {"hessian", hess},
                {"d2_lambda_lambda", cp.d2_lambda_lambda},
                {"hessian_det", cp.hessian_det},
                {"predicted_class", to_string(cp.predicted_class)}};
}

inline json branch_point_to_json(const BranchPoint& bp) {
    json j = summary_to_json(bp.monodromy_summary);
    return json{{"eps", bp.eps},
                {"s0", state_to_json(bp.s0)},
                {"poincare0", state_to_json(bp.poincare0)},
                {"residual", bp.newton_residual},
                {"winding", bp.winding},
                {"class", to_string(bp.monodromy_summary.cls)},
                {"eigenvalues", j["eigenvalues"]},
                {"trace", bp.monodromy_summary.trace},
                {"det_s_minus_i", bp.monodromy_summary.det_s_minus_i}};
}

inline json branch_to_json(const Branch& b) {
    json pts = json::array();
    for (const auto& bp : b.points) pts.push_back(branch_point_to_json(bp));
    return json{{"N", b.N},
                {"critical_point", critical_point_to_json(b.critical_point)},
                {"predicted_class", to_string(b.predicted_class)},
                {"truncated", b.truncated},
                {"failures", b.failures},
                {"points", pts}};
}

inline json expansion_fit_to_json(const ExpansionFit& f) {
    return json{{"det_slope", f.det_slope},
                {"det_coeff_fit", f.det_coeff_fit},
                {"det_coeff_predicted", f.det_coeff_predicted},
                {"det_rel_err", f.det_rel_err},
                {"trace_coeff_fit", f.trace_coeff_fit},
                {"trace_coeff_predicted", f.trace_coeff_predicted},
                {"trace_rel_err", f.trace_rel_err},
                {"n_fit_points", f.n_fit_points},
                {"eps_lo", f.eps_lo},
                {"eps_hi", f.eps_hi}};
}

inline std::string family_sentence(const CircularReport& rep, int k) {
    std::ostringstream os;
    os << "The family bifurcating from " << (rep.families[k].base_sign > 0 ? "+" : "-")
       << "e^{i(lambda* + " << rep.N << " t)} with lambda* = " << rep.families[k].lambda << " is ";
    switch (rep.families[k].cls) {
        case PredictedClass::Elliptic:
            os << "elliptic for small eps > 0.";
            break;
        case PredictedClass::Unstable:
            os << "unstable for small eps > 0.";
            break;
        case PredictedClass::Inconclusive:
            os << "not decided by the averaged Hessian (det M(p) vanishes within tolerance).";
            break;
    }
    return os.str();
}

inline json circular_report_to_json(const CircularReport& rep) {
    auto cplx = [](const complexd& c) { return json{{"re", c.real()}, {"im", c.imag()}}; };
    json fam = json::array();
    for (int k = 0; k < 2; ++k)
        fam.push_back({{"lambda", rep.families[k].lambda},
                       {"base_sign", rep.families[k].base_sign},
                       {"class", to_string(rep.families[k].cls)},
                       {"sentence", family_sentence(rep, k)}});
    json d2 = json::array();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) d2.push_back(rep.d2gamma(i, j));
    return json{{"N", rep.N},
                {"c0", cplx(rep.c0)},
                {"cN", cplx(rep.cN)},
                {"c2N", cplx(rep.c2N)},
                {"c_negN", cplx(rep.cNeg)},
                {"c3N", cplx(rep.c3N)},
                {"on_linear_manifold", rep.on_linear_manifold},
                {"lambda_star", rep.lambda_star ? json(*rep.lambda_star) : json()},
                {"M", {rep.M_matrix(0, 0), rep.M_matrix(0, 1), rep.M_matrix(1, 0), rep.M_matrix(1, 1)}},
                {"det_M", rep.det_M},
                {"d2gamma", d2},
                {"families", fam}};
}

// ---------------------------------------------------------------------------
// CSV exports

inline std::string gamma_grid_csv(const GammaGrid& grid) {
    std::ostringstream os;
    os.precision(17);
    os << "lambda,eta,xi,gamma\n";
    size_t idx = 0;
    for (const double lam : grid.lambda)
        for (const double eta : grid.eta)
            for (const double xi : grid.xi) os << lam << ',' << eta << ',' << xi << ','
                                               << grid.values[idx++] << '\n';
    return os.str();
}

inline std::string branch_summary_csv(const std::vector<Branch>& branches) {
    std::ostringstream os;
    os.precision(17);
    os << "branch,eps,det_s_minus_i,trace,class\n";
    for (size_t k = 0; k < branches.size(); ++k)
        for (const auto& bp : branches[k].points)
            os << k << ',' << bp.eps << ',' << bp.monodromy_summary.det_s_minus_i << ','
               << bp.monodromy_summary.trace << ',' << to_string(bp.monodromy_summary.cls) << '\n';
    return os.str();
}

inline std::string trajectory_csv(const TrajectoryRecord& rec) {
    std::ostringstream os;
    os.precision(17);
    os << "t,x1,x2,y1,y2\n";
    for (const auto& [t, s] : rec.samples)
        os << t << ',' << s.x(0) << ',' << s.x(1) << ',' << s.y(0) << ',' << s.y(1) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// files

/// Write-temp-then-rename so readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("atomic_write: cannot open " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

inline json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

// ---------------------------------------------------------------------------
// run configuration

struct RunConfig {
    json forcing_spec = json{{"type", "fourier"}, {"terms", json::array()}};
    int N = 1;
    std::vector<double> eps_grid = geometric_grid();
    IntegratorConfig integrator{};
    int quadrature_nodes = 256;
    std::string output_dir = ".";
    std::array<int, 3> seed_grid_res = {8, 3, 3};
    std::string report_format = "json"; // json | csv | text
    std::array<int, 3> gamma_grid_res = {0, 0, 0}; // nonzero: export a grid CSV

    ForcingModel forcing() const { return forcing_from_json(forcing_spec); }
};

inline RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    if (j.contains("forcing")) cfg.forcing_spec = j.at("forcing");
    cfg.N = j.value("N", cfg.N);
    if (cfg.N == 0) throw OutOfDomain("config: N must be nonzero");
    if (j.contains("eps_grid")) {
        const auto& g = j.at("eps_grid");
        if (g.is_array()) {
            cfg.eps_grid = g.get<std::vector<double>>();
        } else {
            cfg.eps_grid = geometric_grid(g.value("min", 1e-4), g.value("max", 1e-2),
                                          g.value("count", 9));
        }
    }
    if (j.contains("integrator")) {
        const auto& in = j.at("integrator");
        cfg.integrator.rel_tol = in.value("rel_tol", cfg.integrator.rel_tol);
        cfg.integrator.abs_tol = in.value("abs_tol", cfg.integrator.abs_tol);
        cfg.integrator.max_step = in.value("max_step", cfg.integrator.max_step);
        cfg.integrator.min_radius_guard =
            in.value("min_radius_guard", cfg.integrator.min_radius_guard);
    }
    cfg.quadrature_nodes = j.value("quadrature_nodes", cfg.quadrature_nodes);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    if (j.contains("seed_grid")) {
        const auto g = j.at("seed_grid").get<std::vector<int>>();
        if (g.size() != 3) throw OutOfDomain("config: seed_grid must have 3 entries");
        cfg.seed_grid_res = {g[0], g[1], g[2]};
    }
    if (j.contains("gamma_grid")) {
        const auto g = j.at("gamma_grid").get<std::vector<int>>();
        if (g.size() != 3) throw OutOfDomain("config: gamma_grid must have 3 entries");
        cfg.gamma_grid_res = {g[0], g[1], g[2]};
    }
    cfg.report_format = j.value("format", cfg.report_format);
    if (cfg.report_format != "json" && cfg.report_format != "csv" && cfg.report_format != "text")
        throw OutOfDomain("config: format must be json, csv or text");
    return cfg;
}

/// The fully resolved configuration, echoed into every output for provenance.
inline json run_config_echo(const RunConfig& cfg) {
    return json{{"forcing", cfg.forcing_spec},
                {"N", cfg.N},
                {"eps_grid", cfg.eps_grid},
                {"integrator",
                 {{"rel_tol", cfg.integrator.rel_tol},
                  {"abs_tol", cfg.integrator.abs_tol},
                  {"max_step", cfg.integrator.max_step},
                  {"min_radius_guard", cfg.integrator.min_radius_guard}}},
                {"quadrature_nodes", cfg.quadrature_nodes},
                {"output_dir", cfg.output_dir},
                {"seed_grid", cfg.seed_grid_res},
                {"gamma_grid", cfg.gamma_grid_res},
                {"format", cfg.report_format}};
}

} // namespace kepav
