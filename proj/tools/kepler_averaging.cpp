// kepler-averaging: continuation and stability analysis of 2pi-periodic
// orbits of the periodically forced Kepler problem.
//
//   kepler-averaging circular         analytic report for linear forcing at
//                                     circular orbits (lambda*, M(p), det M)
//   kepler-averaging average          averaged-function critical points
//   kepler-averaging continue         continuation + per-eps classification
//                                     + expansion fits
//   kepler-averaging reproduce-paper  the e^{it} + a e^{-it} sweep across the
//                                     |a| = 4 transition
//
// Exit codes: 0 success; 2 forcing off the linear manifold / degenerate
// equator (circular); 3 no critical points found (average); 1 other failures
// or an off-threshold prediction mismatch (reproduce-paper).

#include <cstdlib>
#include <future>
#include <iostream>

#include <CLI11.hpp>

#include "kepav/circular.hpp"
#include "kepav/io.hpp"

using namespace kepav;

namespace {

int thread_budget() {
    if (const char* env = std::getenv("KEPLER_AVG_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

struct CliArgs {
    std::string config_path;
    std::string forcing_path;
    std::string out_dir;
    std::string format;
    int N = 0; // 0: take from config
};

RunConfig resolve_config(const CliArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = run_config_from_json(load_json(args.config_path));
    if (!args.forcing_path.empty()) cfg.forcing_spec = load_json(args.forcing_path);
    if (args.N != 0) cfg.N = args.N;
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    if (!args.format.empty()) cfg.report_format = args.format;
    return cfg;
}

std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
    return std::filesystem::path(cfg.output_dir) / name;
}

void write_report(const RunConfig& cfg, const std::string& stem, const json& body) {
    json doc = body;
    doc["config"] = run_config_echo(cfg);
    atomic_write(out_path(cfg, stem + ".json"), doc.dump(2) + "\n");
}

// continuation over all critical points, optionally in parallel over branches
struct BranchRun {
    Branch branch;
    json fit; // expansion fit or {"error": ...}
    std::string error;
};

std::vector<BranchRun> run_branches(const RunConfig& cfg, const std::vector<CriticalPoint>& cps) {
    const auto forcing = cfg.forcing();
    auto run_one = [&](const CriticalPoint& cp) {
        BranchRun out;
        try {
            out.branch = continue_branch(forcing, cp, cfg.N, cfg.eps_grid, cfg.integrator);
            try {
                out.fit = expansion_fit_to_json(expansion_check(out.branch, cp.hessian));
            } catch (const InsufficientPoints& e) {
                out.fit = json{{"error", e.what()}};
            }
        } catch (const Error& e) {
            out.error = e.what();
        }
        return out;
    };

    std::vector<BranchRun> runs(cps.size());
    const int threads = thread_budget();
    if (threads <= 1 || cps.size() <= 1) {
        for (size_t i = 0; i < cps.size(); ++i) runs[i] = run_one(cps[i]);
    } else {
        std::vector<std::future<BranchRun>> futs;
        futs.reserve(cps.size());
        for (const auto& cp : cps)
            futs.push_back(std::async(std::launch::async, run_one, cp));
        for (size_t i = 0; i < futs.size(); ++i) runs[i] = futs[i].get();
    }
    return runs;
}

int cmd_circular(const RunConfig& cfg) {
    const auto forcing = cfg.forcing();
    if (forcing.kind() != ForcingKind::LinearForcing) {
        std::cerr << "circular: requires a fourier forcing\n";
        return 2;
    }
    CircularReport rep;
    try {
        rep = m_matrix(forcing.spectrum(), std::abs(cfg.N));
    } catch (const OffManifold& e) {
        std::cerr << "circular: " << e.what()
                  << " (the explicit equator analysis needs c_0 = c_{2N} = 0)\n";
        return 2;
    } catch (const DegenerateEquator& e) {
        std::cerr << "circular: " << e.what() << "\n";
        return 2;
    }
    write_report(cfg, "circular_report", circular_report_to_json(rep));
    if (cfg.report_format == "text") {
        std::cout << "N = " << rep.N << ", lambda* = " << *rep.lambda_star
                  << ", det M(p) = " << rep.det_M << "\n";
        for (int k = 0; k < 2; ++k) std::cout << "  " << family_sentence(rep, k) << "\n";
    } else {
        std::cout << "wrote " << out_path(cfg, "circular_report.json").string() << "\n";
    }
    return 0;
}

int cmd_average(const RunConfig& cfg) {
    const auto f = make_averaged(cfg.N, cfg.forcing(), cfg.quadrature_nodes);
    const auto seeds = seed_grid(f, cfg.seed_grid_res[0], cfg.seed_grid_res[1], cfg.seed_grid_res[2]);
    const auto found = find_critical_points(f, seeds);

    json cps = json::array();
    for (const auto& cp : found.points) cps.push_back(critical_point_to_json(cp));
    write_report(cfg, "critical_points",
                 json{{"N", cfg.N},
                      {"degenerate_continuum", found.degenerate_continuum},
                      {"n_seeds", seeds.size()},
                      {"n_failures", found.failures.size()},
                      {"critical_points", cps}});

    if (cfg.gamma_grid_res[0] > 1) {
        const auto grid =
            gamma_grid(f, cfg.gamma_grid_res[0], cfg.gamma_grid_res[1], cfg.gamma_grid_res[2]);
        atomic_write(out_path(cfg, "gamma_grid.csv"), gamma_grid_csv(grid));
    }

    if (found.degenerate_continuum) {
        std::cerr << "average: degenerate: gradient vanishes identically on the torus\n";
        return 3;
    }
    if (found.points.empty()) {
        std::cerr << "average: no critical points found from " << seeds.size() << " seeds\n";
        return 3;
    }
    if (cfg.report_format == "text") {
        for (const auto& cp : found.points)
            std::cout << "critical point (lambda, eta, xi) = (" << cp.lambda << ", " << cp.eta
                      << ", " << cp.xi << ")  predicted " << to_string(cp.predicted_class) << "\n";
    } else {
        std::cout << "wrote " << out_path(cfg, "critical_points.json").string() << "\n";
    }
    return 0;
}

int cmd_continue(const RunConfig& cfg) {
    const auto f = make_averaged(cfg.N, cfg.forcing(), cfg.quadrature_nodes);
    const auto found = find_critical_points(
        f, seed_grid(f, cfg.seed_grid_res[0], cfg.seed_grid_res[1], cfg.seed_grid_res[2]));
    if (found.points.empty()) {
        std::cerr << "continue: no critical points to continue\n";
        return 3;
    }

    const auto runs = run_branches(cfg, found.points);

    std::vector<Branch> completed;
    json summary = json::array();
    int written = 0;
    for (size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        if (!run.error.empty()) {
            summary.push_back(json{{"branch", i}, {"error", run.error}});
            continue;
        }
        const auto cls = classify_branch(run.branch);
        json rows = json::array();
        for (const auto& row : cls.table)
            rows.push_back(json{{"eps", row.eps},
                                {"predicted", to_string(row.predicted)},
                                {"observed", to_string(row.observed)},
                                {"agrees", row.agrees}});
        json jb = branch_to_json(run.branch);
        jb["classification"] = json{{"prediction", to_string(cls.prediction)},
                                    {"all_agree", cls.all_agree},
                                    {"outside_chart_count", cls.outside_chart_count},
                                    {"table", rows}};
        jb["expansion_fit"] = run.fit;
        write_report(cfg, "branch_" + std::to_string(i), jb);
        summary.push_back(json{{"branch", i},
                               {"prediction", to_string(cls.prediction)},
                               {"all_agree", cls.all_agree},
                               {"truncated", run.branch.truncated},
                               {"n_points", run.branch.points.size()}});
        completed.push_back(run.branch);
        ++written;
    }
    atomic_write(out_path(cfg, "branches_summary.csv"), branch_summary_csv(completed));
    write_report(cfg, "continuation_summary", json{{"branches", summary}});

    if (cfg.report_format == "text") {
        for (const auto& row : summary) std::cout << row.dump() << "\n";
    } else {
        std::cout << "wrote " << written << " branch file(s) under " << cfg.output_dir << "\n";
    }
    return written > 0 ? 0 : 1;
}

int cmd_reproduce_paper(RunConfig cfg) {
    // the forced problem z'' = -z/|z|^3 - eps (e^{it} + a e^{-it}); both
    // families exist iff |a| != 4, elliptic/unstable split for |a| < 4
    const std::vector<complexd> sweep = {
        {0.5, 0.0}, {1.0, 0.0}, {2.0, 0.0}, {3.9, 0.0}, {4.1, 0.0},
        {5.0, 0.0}, {8.0, 0.0}, {0.0, 4.0}, {2.0, 2.0}};

    json table = json::array();
    bool mismatch = false;
    std::cout << "      a            det M(p)   predicted(+family, -family)   observed\n";
    for (const complexd a : sweep) {
        FourierSpectrum sp;
        sp.coefficients[1] = 1.0;
        sp.coefficients[-1] = a;
        const auto rep = m_matrix(sp, 1);
        cfg.N = 1;
        cfg.forcing_spec = forcing_to_json(ForcingModel::linear(sp));
        const auto forcing = cfg.forcing();

        const auto cv = cross_validate(rep, forcing, cfg.eps_grid, cfg.integrator,
                                       cfg.quadrature_nodes);
        const bool threshold = rep.families[0].cls == PredictedClass::Inconclusive;
        const bool row_ok = threshold || (cv.family_ok[0] && cv.family_ok[1]);
        mismatch = mismatch || !row_ok;

        json observed = json::array();
        for (int k = 0; k < 2; ++k) {
            std::string last = "none";
            if (!cv.branches[k].points.empty())
                last = to_string(cv.branches[k].points.back().monodromy_summary.cls);
            observed.push_back(last);
        }
        table.push_back(json{{"a_re", a.real()},
                             {"a_im", a.imag()},
                             {"det_M", rep.det_M},
                             {"predicted", {to_string(rep.families[0].cls), to_string(rep.families[1].cls)}},
                             {"observed", observed},
                             {"hessian_match", {cv.hessians[0].match, cv.hessians[1].match}},
                             {"agrees", row_ok}});
        std::printf("  %5.2f%+5.2fi   %10.6f   %-11s %-11s   %s / %s %s\n", a.real(), a.imag(),
                    rep.det_M, to_string(rep.families[0].cls), to_string(rep.families[1].cls),
                    observed[0].get<std::string>().c_str(), observed[1].get<std::string>().c_str(),
                    row_ok ? "" : "  <-- MISMATCH");
    }
    write_report(cfg, "paper_reproduction", json{{"table", table}, {"mismatch", mismatch}});
    std::cout << (mismatch ? "prediction/observation MISMATCH off-threshold\n"
                           : "all off-threshold predictions confirmed; |a| = 4 threshold reported "
                             "as Inconclusive\n");
    return mismatch ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuation and linearized stability of 2pi-periodic orbits of the "
                 "periodically forced Kepler problem"};
    app.require_subcommand(1);

    CliArgs args;
    app.add_option("--config", args.config_path, "JSON run configuration");
    app.add_option("--forcing", args.forcing_path, "JSON forcing spec (overrides config)");
    app.add_option("--N", args.N, "winding number (overrides config)");
    app.add_option("--out", args.out_dir, "output directory (overrides config)");
    app.add_option("--format", args.format, "json | csv | text");

    auto* c_circ = app.add_subcommand("circular", "explicit circular-orbit analysis");
    auto* c_avg = app.add_subcommand("average", "averaged-function critical points");
    auto* c_cont = app.add_subcommand("continue", "continue branches and classify");
    auto* c_paper = app.add_subcommand("reproduce-paper", "the e^{it} + a e^{-it} sweep");

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig cfg = resolve_config(args);
        if (c_circ->parsed()) return cmd_circular(cfg);
        if (c_avg->parsed()) return cmd_average(cfg);
        if (c_cont->parsed()) return cmd_continue(cfg);
        if (c_paper->parsed()) return cmd_reproduce_paper(cfg);
    } catch (const std::exception& e) {
        std::cerr << "kepler-averaging: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
