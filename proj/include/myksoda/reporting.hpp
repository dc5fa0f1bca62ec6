#pragma once

#include <algorithm>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "ks_iteration.hpp"
#include "util.hpp"

namespace myksoda {

// Plain-text artifacts.  Every float is printed with %.17g so a re-run can be
// compared byte-for-byte (determinism is part of the contract).

namespace detail {

inline void put_vec(std::ostream& os, const Vec& v) {
    for (long k = 0; k < v.size(); ++k) os << ' ' << fmt17(v[k]);
}

}  // namespace detail

inline void write_trace(std::ostream& os, const KsConfig& cfg, const KsResult& res,
                        const std::string& config_hash) {
    const int m = cfg.full.sites;
    os << "# myksoda trace v1\n";
    os << "# config " << config_hash << "\n";
    os << "# sites " << m << " particles " << cfg.full.particles << " p " << fmt17(cfg.p)
       << " eps " << fmt17(cfg.eps) << " backend "
       << (cfg.backend == KsConfig::Backend::Exact ? "exact" : "grid") << "\n";
    os << "# columns: i residual e m tau dir_derivative tau_closed_form orth_residual"
          " dist_before dist_after gap_ratio degenerate";
    for (int k = 0; k < m; ++k) os << " x" << k;
    for (int k = 0; k < m; ++k) os << " xstar" << k;
    for (int k = 0; k < m; ++k) os << " y" << k;
    os << "\n";
    for (const IterationStep& s : res.steps) {
        os << s.i << ' ' << fmt17(s.residual) << ' ' << fmt17(s.e) << ' ' << fmt17(s.m) << ' '
           << fmt17(s.tau) << ' ' << fmt17(s.dir_derivative) << ' ' << fmt17(s.tau_closed_form)
           << ' ' << fmt17(s.orth_residual) << ' ' << fmt17(s.dist_before) << ' '
           << fmt17(s.dist_after) << ' ' << fmt17(s.gap_ratio) << ' ' << (s.degenerate ? 1 : 0);
        detail::put_vec(os, s.x);
        detail::put_vec(os, s.ks_potential);
        detail::put_vec(os, s.y);
        os << "\n";
    }
    os << "# stop " << res.stop_reason << "\n";
    os << "# converged " << (res.converged ? 1 : 0) << "\n";
    os << "# iterations " << res.iterations << "\n";
    os << "# degenerate_encountered " << (res.degenerate_encountered ? 1 : 0) << "\n";
    os << "# residual_final " << fmt17(res.residual_final) << "\n";
    os << "# e_final " << fmt17(res.e_final) << "\n";
    if (res.z.size()) {
        os << "# z";
        detail::put_vec(os, res.z);
        os << "\n";
        if (res.z_star.size()) {
            os << "# z_star";
            detail::put_vec(os, res.z_star);
            os << "\n";
        }
        Deregularized dr = deregularize(res.z, cfg.w, cfg.eps, cfg.p, res.e_final);
        os << "# density_dereg";
        detail::put_vec(os, dr.density);
        os << "\n";
        os << "# energy_dereg " << fmt17(dr.energy) << "\n";
        // summary against the eigensolver oracle: for a converged run with a
        // unique ground state the de-regularized pair must reproduce exact
        // diagonalization of the interacting system
        GroundState oracle = ground_state(cfg.full, cfg.w, cfg.gap_tol);
        os << "# density_err_vs_eigensolver "
           << fmt17((dr.density - oracle.density).lpNorm<Eigen::Infinity>()) << "\n";
        os << "# energy_err_vs_eigensolver " << fmt17(std::abs(dr.energy - oracle.energy))
           << "\n";
    }
}

struct SweepRow {
    double p = 0.0;
    double eps = 0.0;
    double interaction = 0.0;
    bool converged = false;
    long iterations = 0;
    double residual_final = 0.0;
    double e_final = 0.0;
    double energy_dereg = 0.0;
    std::string stop_reason;
};

inline void write_sweep_csv(std::ostream& os, std::vector<SweepRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        if (a.p != b.p) return a.p < b.p;
        if (a.eps != b.eps) return a.eps < b.eps;
        return a.interaction < b.interaction;
    });
    os << "p,eps,interaction,converged,iterations,residual_final,e_final,energy_dereg,stop_reason\n";
    for (const SweepRow& r : rows)
        os << fmt17(r.p) << ',' << fmt17(r.eps) << ',' << fmt17(r.interaction) << ','
           << (r.converged ? 1 : 0) << ',' << r.iterations << ',' << fmt17(r.residual_final)
           << ',' << fmt17(r.e_final) << ',' << fmt17(r.energy_dereg) << ',' << r.stop_reason
           << "\n";
}

}  // namespace myksoda
