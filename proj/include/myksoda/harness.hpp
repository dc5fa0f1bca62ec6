#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "lemma_checks.hpp"
#include "reporting.hpp"

namespace myksoda {

// CLI entry points.  Exit code contract:
//   0  requested computation finished (iteration converged / checks passed)
//   1  computation ran but did not meet its goal (non-convergence, failed
//      lemma); artifacts are still written
//   2  unusable invocation (bad config, bad flags, I/O failure)

namespace detail {

inline std::filesystem::path cache_dir_from_env() {
    const char* env = std::getenv("MYKSODA_CACHE_DIR");
    return env && *env ? std::filesystem::path(env) : std::filesystem::path();
}

inline bool ensure_output_dir(const std::filesystem::path& dir, std::ostream& err) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        err << "error: cannot create output directory " << dir << ": " << ec.message()
            << "\n";
        return false;
    }
    return true;
}

}  // namespace detail

inline int cli_run(const std::filesystem::path& config_path,
                   const std::filesystem::path& output_dir, std::ostream& out,
                   std::ostream& err) {
    HarnessConfig hc;
    try {
        hc = load_harness_config_file(config_path);
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 2;
    }
    if (!detail::ensure_output_dir(output_dir, err)) return 2;
    hc.ks.cache_dir = detail::cache_dir_from_env();

    KsResult res;
    try {
        res = run_myksoda(hc.ks);
    } catch (const std::exception& ex) {
        err << "error: iteration failed: " << ex.what() << "\n";
        return 1;
    }

    const std::filesystem::path trace_path = output_dir / "trace.txt";
    std::ofstream trace(trace_path);
    if (!trace) {
        err << "error: cannot write " << trace_path << "\n";
        return 2;
    }
    write_trace(trace, hc.ks, res, hc.config_hash);
    trace.close();

    out << "config " << hc.config_hash << "\n";
    out << "stop " << res.stop_reason << " after " << res.iterations << " iterations\n";
    out << "residual " << fmt17(res.residual_final) << "\n";
    out << "e_final " << fmt17(res.e_final) << "\n";
    if (res.z.size()) {
        Deregularized dr = deregularize(res.z, hc.ks.w, hc.ks.eps, hc.ks.p, res.e_final);
        GroundState oracle = ground_state(hc.ks.full, hc.ks.w, hc.ks.gap_tol);
        out << "energy_dereg " << fmt17(dr.energy) << "\n";
        out << "density_err_vs_eigensolver "
            << fmt17((dr.density - oracle.density).lpNorm<Eigen::Infinity>()) << "\n";
        out << "energy_err_vs_eigensolver " << fmt17(std::abs(dr.energy - oracle.energy))
            << "\n";
        out << "trace " << trace_path.string() << "\n";
    }
    return res.converged ? 0 : 1;
}

inline int cli_sweep(const std::filesystem::path& config_path,
                     const std::filesystem::path& output_dir, std::ostream& out,
                     std::ostream& err) {
    HarnessConfig hc;
    try {
        hc = load_harness_config_file(config_path);
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 2;
    }
    if (!detail::ensure_output_dir(output_dir, err)) return 2;
    const std::filesystem::path cache = detail::cache_dir_from_env();

    std::vector<SweepRow> rows;
    bool all_converged = true;
    for (double p : hc.sweep_p) {
        for (double eps : hc.sweep_eps) {
            for (double u : hc.sweep_interaction) {
                KsConfig ks = hc.ks;
                ks.p = p;
                ks.eps = eps;
                ks.full.interaction = u;
                ks.ref.interaction = u;  // reference still has lambda = 0
                ks.cache_dir = cache;
                SweepRow row;
                row.p = p;
                row.eps = eps;
                row.interaction = u;
                try {
                    ks.validate();
                    KsResult res = run_myksoda(ks);
                    row.converged = res.converged;
                    row.iterations = res.iterations;
                    row.residual_final = res.residual_final;
                    row.e_final = res.e_final;
                    row.energy_dereg =
                        res.z.size()
                            ? deregularize(res.z, ks.w, eps, p, res.e_final).energy
                            : std::numeric_limits<double>::quiet_NaN();
                    row.stop_reason = res.stop_reason;
                } catch (const std::exception& ex) {
                    row.converged = false;
                    row.stop_reason = "error";
                    err << "warning: cell p=" << p << " eps=" << eps << " U=" << u
                        << " failed: " << ex.what() << "\n";
                }
                all_converged &= row.converged;
                rows.push_back(std::move(row));
            }
        }
    }

    const std::filesystem::path csv_path = output_dir / "sweep.csv";
    std::ofstream csv(csv_path);
    if (!csv) {
        err << "error: cannot write " << csv_path << "\n";
        return 2;
    }
    write_sweep_csv(csv, rows);
    csv.close();
    out << "config " << hc.config_hash << "\n";
    out << "cells " << rows.size() << "\n";
    out << "summary " << csv_path.string() << "\n";
    return all_converged ? 0 : 1;
}

inline int cli_lemma_check(const std::filesystem::path& config_path,
                           const std::filesystem::path& output_dir, std::ostream& out,
                           std::ostream& err) {
    HarnessConfig hc;
    try {
        hc = load_harness_config_file(config_path);
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 2;
    }
    if (!detail::ensure_output_dir(output_dir, err)) return 2;
    hc.ks.cache_dir = detail::cache_dir_from_env();

    std::vector<LemmaReport> reports;
    try {
        reports = run_lemma_checks(hc);
    } catch (const std::exception& ex) {
        err << "error: lemma checks failed to run: " << ex.what() << "\n";
        return 1;
    }

    const std::filesystem::path rep_path = output_dir / "lemma_report.txt";
    std::ofstream rp(rep_path);
    if (!rp) {
        err << "error: cannot write " << rep_path << "\n";
        return 2;
    }
    bool all_pass = true;
    rp << "# lemma report, config " << hc.config_hash << "\n";
    for (const LemmaReport& r : reports) {
        const std::string line = std::string(r.pass ? "[PASS] " : "[FAIL] ") + r.id +
                                 " samples=" + std::to_string(r.samples) +
                                 " metric=" + fmt17(r.metric) + " tol=" + fmt17(r.tol) +
                                 (r.note.empty() ? "" : " (" + r.note + ")");
        rp << line << "\n";
        out << line << "\n";
        all_pass &= r.pass;
    }
    rp.close();
    out << "report " << rep_path.string() << "\n";
    return all_pass ? 0 : 1;
}

inline int cli_baseline_prox(const std::filesystem::path& config_path,
                             const std::filesystem::path& output_dir, std::ostream& out,
                             std::ostream& err) {
    HarnessConfig hc;
    try {
        hc = load_harness_config_file(config_path);
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 2;
    }
    if (!detail::ensure_output_dir(output_dir, err)) return 2;
    const KsConfig& ks = hc.ks;

    BaselineResult res;
    try {
        LiebOptions lopts;
        lopts.box_radius = ks.lieb_box_radius;
        GridFunctional F =
            tabulate_lieb_F(ks.full, ks.grid_h, lopts, detail::cache_dir_from_env()).grid;
        Vec x0 = ks.x0;
        if (!x0.size()) {
            // default start: uniform filling, which is always in the domain
            x0 = Vec::Constant(ks.full.sites,
                               double(ks.full.particles) / double(ks.full.sites));
        }
        res = proximal_point_baseline(F, ks.w, ks.eps, ks.p, x0, hc.baseline_max_iter,
                                      hc.baseline_step_tol);
    } catch (const std::exception& ex) {
        err << "error: baseline failed: " << ex.what() << "\n";
        return 1;
    }

    const std::filesystem::path path = output_dir / "baseline.txt";
    std::ofstream bp(path);
    if (!bp) {
        err << "error: cannot write " << path << "\n";
        return 2;
    }
    bp << "# proximal-point baseline, config " << hc.config_hash << "\n";
    bp << "# columns: i value x[0..]\n";
    for (size_t i = 0; i < res.values.size(); ++i) {
        bp << i << ' ' << fmt17(res.values[i]);
        for (long k = 0; k < res.iterates[i].size(); ++k)
            bp << ' ' << fmt17(res.iterates[i][k]);
        bp << "\n";
    }
    bp << "# monotone " << (res.monotone ? 1 : 0) << "\n";
    bp << "# final_value " << fmt17(res.final_value) << "\n";
    bp.close();

    out << "config " << hc.config_hash << "\n";
    out << "iterations " << res.iterations << "\n";
    out << "final_value " << fmt17(res.final_value) << "\n";
    out << "monotone " << (res.monotone ? 1 : 0) << "\n";
    out << "log " << path.string() << "\n";
    return res.monotone ? 0 : 1;
}

}  // namespace myksoda
