#pragma once

#include <random>
#include <string>
#include <vector>

#include "config.hpp"
#include "ks_iteration.hpp"

namespace myksoda {

// Self-contained empirical checks of the convex-analysis facts the iteration
// relies on.  Each check draws its own deterministic samples, measures the
// worst violation, and reports pass/fail against a pinned tolerance.  The
// negative control corrupts the duality map on purpose and must be caught.

struct LemmaReport {
    std::string id;
    bool pass = false;
    double metric = 0.0;  // worst observed deviation (see note for units)
    double tol = 0.0;
    long samples = 0;
    std::string note;  // constants where applicable; failing inputs on failure
};

namespace detail {

inline std::string vec_str(const Vec& v) {
    std::string s = "(";
    for (long k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt17(v[k]);
    return s + ")";
}

}  // namespace detail

// --- duality map identities ------------------------------------------------
// ||J_p(x)||_{p*} = ||x||_p^{p-1},  <J_p(x), x> = ||x||_p^p,  J_{p*} o J_p = id
inline LemmaReport check_duality_identities(uint64_t seed, int n_samples,
                                            bool corrupt = false) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    double worst = 0.0;
    Vec worst_x;
    double worst_p = 0.0;
    long samples = 0;
    for (int dim : {2, 3, 4}) {
        for (double p : {2.0, 2.5, 3.0, 4.0}) {
            const double ps = conjugate_exponent(p);
            for (int s = 0; s < n_samples; ++s) {
                Vec x(dim);
                for (int k = 0; k < dim; ++k) x[k] = gauss(rng);
                x *= std::pow(10.0, std::uniform_real_distribution<double>(-2, 2)(rng));
                Vec J = duality_map(x, p);
                if (corrupt) J += 0.05 * x;  // wrong map: identities must break
                const double np = norm_p(x, p);
                const double e1 = std::abs(norm_p(J, ps) - std::pow(np, p - 1.0)) /
                                  (1.0 + std::pow(np, p - 1.0));
                const double e2 =
                    std::abs(J.dot(x) - std::pow(np, p)) / (1.0 + std::pow(np, p));
                const double e3 = (inverse_duality_map(J, p) - x).cwiseAbs().maxCoeff() /
                                  (1.0 + x.cwiseAbs().maxCoeff());
                if (std::max({e1, e2, e3}) > worst) {
                    worst = std::max({e1, e2, e3});
                    worst_x = x;
                    worst_p = p;
                }
                ++samples;
            }
        }
    }
    LemmaReport rep;
    rep.id = "duality-map";
    rep.metric = worst;
    rep.tol = 1e-12;
    rep.samples = samples;
    rep.pass = worst <= rep.tol;
    rep.note = "identities over dims {2,3,4}, p in {2,2.5,3,4}";
    if (!rep.pass && worst_x.size())
        rep.note += "; worst at p=" + fmt17(worst_p) + " x=" + detail::vec_str(worst_x);
    return rep;
}

// --- two-sided smoothness gap ------------------------------------------------
// gap(x,y) = ||x+y||^p - ||x||^p - p<J_p(x),y> is exactly ||y||^2 for p = 2
// and strictly positive for p > 2; the sampled bracket [xi, xi'] with
// xi tau^p <= gap <= xi' tau^p feeds the step-length sandwich.
inline LemmaReport check_xu_gap(uint64_t seed, double p, int n_pairs) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    LemmaReport rep;
    rep.id = "xu-gap";
    rep.samples = n_pairs;
    if (p == 2.0) {
        double worst = 0.0;
        Vec worst_x, worst_y;
        for (int s = 0; s < n_pairs; ++s) {
            const int dim = 2 + int(rng() % 3);
            Vec x(dim), y(dim);
            for (int k = 0; k < dim; ++k) {
                x[k] = gauss(rng);
                y[k] = gauss(rng);
            }
            // moderate length ratios keep the p = 2 cancellation noise well
            // below the tolerance
            const double t = std::pow(10.0, std::uniform_real_distribution<double>(-1, 1)(rng));
            y *= t * x.norm() / y.norm();
            const double gap = xu_gap(x, y, 2.0);
            const double err = std::abs(gap - y.squaredNorm()) / (1.0 + y.squaredNorm());
            if (err > worst) {
                worst = err;
                worst_x = x;
                worst_y = y;
            }
        }
        rep.metric = worst;
        rep.tol = 1e-12;
        rep.pass = worst <= rep.tol;
        rep.note = "p=2 exactness gap == ||y||^2";
        if (!rep.pass && worst_x.size())
            rep.note += "; worst at x=" + detail::vec_str(worst_x) +
                        " y=" + detail::vec_str(worst_y);
        return rep;
    }
    double most_negative = 0.0;
    Vec worst_x, worst_y;
    for (int s = 0; s < n_pairs; ++s) {
        const int dim = 2 + int(rng() % 3);
        Vec x(dim), y(dim);
        for (int k = 0; k < dim; ++k) {
            x[k] = gauss(rng);
            y[k] = gauss(rng);
        }
        const double t = std::pow(10.0, std::uniform_real_distribution<double>(-3, 3)(rng));
        y *= t * norm_p(x, p) / norm_p(y, p);
        const double gap = xu_gap(x, y, p);
        const double scale = std::pow(norm_p(x, p) + norm_p(y, p), p);
        if (gap / (1.0 + scale) < most_negative) {
            most_negative = gap / (1.0 + scale);
            worst_x = x;
            worst_y = y;
        }
    }
    XuConstants xc = estimate_xu_constants(3, p, 4000, seed + 1);
    rep.metric = -most_negative;
    rep.tol = 1e-12;
    rep.pass = most_negative >= -rep.tol && xc.xi_lower > 0.0 && xc.xi_lower <= xc.xi_upper;
    rep.note = "positivity; sampled xi=" + fmt17(xc.xi_lower) + " xi'=" + fmt17(xc.xi_upper);
    if (!rep.pass && worst_x.size())
        rep.note += "; worst at x=" + detail::vec_str(worst_x) + " y=" + detail::vec_str(worst_y);
    return rep;
}

// --- envelope below the functional + gradient against finite differences ----
inline LemmaReport check_my_envelope(const GridFunctional& F, double eps, double p,
                                     int n_points, uint64_t seed) {
    std::mt19937_64 rng(seed);
    LemmaReport rep;
    rep.id = "my-envelope";

    // f_eps <= f at every finite node
    double worst_env = 0.0;
    long nodes_checked = 0;
    F.for_each_node([&](long flat, const Vec&, const Vec& y) {
        const double fv = F.value(flat);
        if (std::isinf(fv)) return;
        if (worst_env > 1e-6) return;  // already failed badly, skip the rest
        ProxResult pr = my_regularize(F, eps, p, y);
        worst_env = std::max(worst_env, pr.value - fv);
        ++nodes_checked;
    });

    // gradient vs central differences of the envelope.  The envelope of a
    // piecewise-linear tabulation is C^1 but its second derivative jumps
    // where the prox switches between a node and a cell interior, so the
    // central difference carries an O(jump * h) error at those junctions;
    // keep h small and the prox resolved far below h or the check measures
    // the junction instead of the gradient.
    Vec lo, hi;
    F.finite_bounding_box(lo, hi);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double worst_fd = 0.0;
    Vec worst_x;
    const double h_fd = 2e-6;
    ProxOptions opts;
    opts.refine_floor_factor = 1e-10;
    for (int s = 0; s < n_points; ++s) {
        Vec x(F.ambient_dim());
        for (int k = 0; k < F.ambient_dim(); ++k) {
            const double pad = 0.3 * (hi[k] - lo[k]) + 0.1;
            x[k] = lo[k] - pad + uni(rng) * (hi[k] - lo[k] + 2 * pad);
        }
        ProxResult pr = my_regularize(F, eps, p, x, opts);
        for (int k = 0; k < F.ambient_dim(); ++k) {
            Vec xp = x, xm = x;
            xp[k] += h_fd;
            xm[k] -= h_fd;
            const double fd = (my_regularize(F, eps, p, xp, opts).value -
                               my_regularize(F, eps, p, xm, opts).value) /
                              (2.0 * h_fd);
            if (std::abs(fd - pr.gradient[k]) > worst_fd) {
                worst_fd = std::abs(fd - pr.gradient[k]);
                worst_x = x;
            }
        }
    }
    rep.metric = std::max(worst_env, worst_fd);
    rep.tol = 1e-4;
    rep.samples = nodes_checked + n_points;
    rep.pass = worst_env <= 1e-9 && worst_fd <= 1e-4;
    rep.note = "envelope overshoot " + fmt17(worst_env) + ", grad-FD " + fmt17(worst_fd);
    if (!rep.pass && worst_x.size()) rep.note += "; worst FD at x=" + detail::vec_str(worst_x);
    return rep;
}

// --- conjugate decomposition -------------------------------------------------
//   inf_x { f_eps(x) + <v,x> }  ==  inf_x { f(x) + <v,x> } - eps phi_{p*}(v)
// with the left side minimized directly over a dilated box.
inline LemmaReport check_conjugate_decomposition(const GridFunctional& F, double eps,
                                                 double p, int n_potentials, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    SpaceSpec space(F.ambient_dim(), p);
    Vec lo, hi;
    F.finite_bounding_box(lo, hi);
    double worst = 0.0;
    Vec worst_v;
    for (int s = 0; s < n_potentials; ++s) {
        Vec v(F.ambient_dim());
        for (int k = 0; k < F.ambient_dim(); ++k) v[k] = uni(rng);
        const Vec shift = eps * inverse_duality_map(v, p);
        Vec blo = lo, bhi = hi;
        for (int k = 0; k < F.ambient_dim(); ++k) {
            const double d = std::abs(shift[k]) + 2.0 * F.min_spacing() + 0.05;
            blo[k] -= d;
            bhi[k] += d;
        }
        ProxOptions popts;
        popts.refine_floor_factor = 1e-4;
        auto q = [&](const Vec& x) { return my_regularize(F, eps, p, x, popts).value + v.dot(x); };
        BoxMinResult reg = minimize_over_box(q, blo, bhi, 4.0 * F.min_spacing(),
                                             1e-6 * F.min_spacing());
        const double lhs = reg.value;
        const double rhs =
            conjugate_down(F, v).value - eps * phi_p(v, space.p_star());
        if (std::abs(lhs - rhs) > worst) {
            worst = std::abs(lhs - rhs);
            worst_v = v;
        }
    }
    LemmaReport rep;
    rep.id = "conjugate-decomposition";
    rep.metric = worst;
    rep.tol = 10.0 * F.min_spacing() * F.min_spacing();
    rep.samples = n_potentials;
    rep.pass = worst <= rep.tol;
    rep.note = std::to_string(n_potentials) + " potentials, grid h=" + fmt17(F.min_spacing());
    if (!rep.pass && worst_v.size()) rep.note += "; worst at v=" + detail::vec_str(worst_v);
    return rep;
}

// --- argmin translation under regularization ---------------------------------
inline LemmaReport check_my_shift_lemma(const GridFunctional& F, double eps, double p,
                                        int n_potentials, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.5, 1.5);
    double worst = 0.0;
    Vec worst_ws;
    bool any_boundary = false;
    for (int s = 0; s < n_potentials; ++s) {
        Vec ws(F.ambient_dim());
        for (int k = 0; k < F.ambient_dim(); ++k) ws[k] = uni(rng);
        MyShiftReport sr = check_my_shift(F, eps, p, ws);
        any_boundary |= sr.boundary;
        if (std::max(sr.translation_residual, sr.value_offset_residual) > worst) {
            worst = std::max(sr.translation_residual, sr.value_offset_residual);
            worst_ws = ws;
        }
    }
    LemmaReport rep;
    rep.id = "my-shift";
    rep.metric = worst;
    rep.tol = 10.0 * F.min_spacing() * F.min_spacing();
    rep.samples = n_potentials;
    rep.pass = worst <= rep.tol;
    rep.note = any_boundary ? "warning: some argmins pinned at the chart boundary"
                            : "interior argmins";
    if (!rep.pass && worst_ws.size()) rep.note += "; worst at w*=" + detail::vec_str(worst_ws);
    return rep;
}

// --- strong monotonicity of the quasidensity map -----------------------------
// Exact superdifferential pairs x = rho(v) - eps J_p^{-1}(v):
//   <v1 - v2, x1 - x2> <= -eps zeta ||v1 - v2||_{p*}^{p*}
inline LemmaReport check_monotonicity_exact(const LatticeModel& model, double eps, double p,
                                            int n_pairs, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-3.0, 3.0);
    SpaceSpec space(model.sites, p);
    const double ps = space.p_star();
    double zeta_min = std::numeric_limits<double>::infinity();
    double zeta_max = 0.0;
    Vec worst_va, worst_vb;
    int used = 0;
    for (int s = 0; s < n_pairs; ++s) {
        Vec va(model.sites), vb(model.sites);
        for (int k = 0; k < model.sites; ++k) {
            va[k] = uni(rng);
            vb[k] = uni(rng);
        }
        Vec dv = va - vb;
        const double dvn = norm_p(dv, ps);
        if (dvn < 1e-6) continue;
        Vec xa = regularized_ground_density(model, va, eps, p);
        Vec xb = regularized_ground_density(model, vb, eps, p);
        const double ratio = -dv.dot(xa - xb) / (eps * std::pow(dvn, ps));
        if (ratio < zeta_min) {
            zeta_min = ratio;
            worst_va = va;
            worst_vb = vb;
        }
        zeta_max = std::max(zeta_max, ratio);
        ++used;
    }
    LemmaReport rep;
    rep.id = "strong-monotonicity";
    rep.metric = zeta_min;
    rep.tol = (p == 2.0) ? 1.0 - 1e-9 : 0.0;
    rep.samples = used;
    rep.pass = used > 0 && zeta_min > rep.tol;
    rep.note = "zeta_hat=" + fmt17(zeta_min) + " over " + std::to_string(used) +
               " exact ground-state pairs (max " + fmt17(zeta_max) + ")";
    if (!rep.pass && worst_va.size())
        rep.note += "; worst at v1=" + detail::vec_str(worst_va) +
                    " v2=" + detail::vec_str(worst_vb);
    return rep;
}

// --- prox identities on the dual route ---------------------------------------
// At the maximizer v of E(v) - eps phi_{p*}(v) - <v,x>:
//   prox = x + eps J^{-1}(v) = rho(v),  grad = -v = J_p(x - prox)/eps^{p-1},
//   value = F(prox) + phi_p(x - prox)/eps^{p-1},
// and prox must beat every competitor in the prox objective.
inline LemmaReport check_prox_identities(const LatticeModel& model, double eps, double p,
                                         int n_points, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    RegularizedLieb reg(model, eps, p);
    const double epw = std::pow(eps, p - 1.0);
    double worst_grad = 0.0, worst_value = 0.0, worst_opt = 0.0;
    Vec worst_x;
    double worst_metric = 0.0;
    long used = 0;
    for (int s = 0; s < n_points; ++s) {
        Vec x(model.sites);
        for (int k = 0; k < model.sites; ++k) x[k] = -0.3 + 1.6 * uni(rng);
        RegularizedLieb::Eval ev = reg.eval(x);
        if (!ev.converged) continue;
        ++used;

        double local = (duality_map(x - ev.prox, p) / epw - ev.gradient).cwiseAbs().maxCoeff();
        worst_grad = std::max(worst_grad, local);

        LiebResult Fp = lieb_F(model, ev.prox);
        if (Fp.converged) {
            const double verr = std::abs(Fp.value + phi_p(x - ev.prox, p) / epw - ev.value);
            worst_value = std::max(worst_value, verr);
            local = std::max(local, verr);

            // optimality against random physical competitors
            for (int t = 0; t < 5; ++t) {
                Vec q(model.sites);
                double sum = 0.0;
                for (int k = 0; k < model.sites; ++k) {
                    q[k] = uni(rng);
                    sum += q[k];
                }
                q *= double(model.particles) / sum;
                if ((q.array() > 1.0).any()) continue;
                LiebResult Fq = lieb_F(model, q);
                if (!Fq.converged) continue;
                const double competitor = Fq.value + phi_p(x - q, p) / epw;
                worst_opt = std::max(worst_opt, ev.value - competitor);
                local = std::max(local, ev.value - competitor);
            }
        }
        if (local > worst_metric) {
            worst_metric = local;
            worst_x = x;
        }
    }
    LemmaReport rep;
    rep.id = "prox-identities";
    rep.metric = std::max({worst_grad, worst_value, worst_opt});
    rep.tol = 1e-6;
    rep.samples = used;
    rep.pass = rep.metric <= rep.tol;
    rep.note = "grad " + fmt17(worst_grad) + ", value " + fmt17(worst_value) + ", opt " +
               fmt17(worst_opt);
    if (!rep.pass && worst_x.size()) rep.note += "; worst at x=" + detail::vec_str(worst_x);
    return rep;
}

// --- per-step descent and the two-sided step bound ---------------------------
inline LemmaReport check_descent_sandwich(const KsConfig& cfg_in, long max_steps,
                                          uint64_t seed) {
    KsConfig cfg = cfg_in;
    cfg.max_iter = std::min(cfg.max_iter, max_steps);
    KsResult res = run_myksoda(cfg);

    LemmaReport rep;
    rep.id = "descent-sandwich";
    if (res.steps.empty()) {
        rep.pass = res.converged;
        rep.note = res.converged ? "converged at the starting point (zero steps)"
                                 : ("no steps recorded: " + res.stop_reason);
        rep.tol = 0.0;
        return rep;
    }

    // the step-bound ratio is only testable where the drop e_i - m_i rises
    // above its rounding noise; the descent chain covers the remaining steps
    auto ratio_resolvable = [](const IterationStep& s) {
        return s.dist_after > 1e-12 && s.e - s.m > 1e-10 * (1.0 + std::abs(s.e));
    };
    double worst = 0.0;
    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
    for (const IterationStep& s : res.steps) {
        if (!(s.dir_derivative < 0.0)) worst = std::max(worst, 1.0);
        worst = std::max(worst, s.m - s.e);  // m_i <= e_i
        if (ratio_resolvable(s)) {
            rmax = std::max(rmax, s.tau / s.dist_after);
            rmin = std::min(rmin, s.tau / s.dist_after);
        }
    }
    // e_{i+1} <= m_i with a small absolute slack for the norm-power arithmetic
    for (size_t i = 0; i + 1 < res.steps.size(); ++i)
        worst = std::max(worst, res.steps[i + 1].e - res.steps[i].m - 1e-10);

    // two-sided bound: the realized gap ratio (||x_i-p_i||^p - ||x_{i+1}-p_i||^p)/tau^p
    // against constants sampled over the same step geometry (||y||/||x|| range)
    std::string sandwich_note;
    if (std::isfinite(rmin) && rmax > 0.0) {
        const double lg_lo = std::log10(rmin) - 0.5;
        const double lg_hi = std::log10(rmax) + 0.5;
        XuConstants xc = estimate_xu_constants(cfg_in.full.sites, cfg.p, 4000, seed, lg_lo,
                                               lg_hi, true);
        for (const IterationStep& s : res.steps) {
            if (!ratio_resolvable(s)) continue;
            worst = std::max(worst, xc.xi_lower * (1.0 - 1e-6) - s.gap_ratio);
            worst = std::max(worst, s.gap_ratio - xc.xi_upper * (1.0 + 1e-6));
        }
        sandwich_note = ", xi=" + fmt17(xc.xi_lower) + " xi'=" + fmt17(xc.xi_upper);
    }

    rep.metric = worst;
    rep.tol = 1e-10;
    rep.samples = static_cast<long>(res.steps.size());
    rep.pass = worst <= rep.tol;
    rep.note = std::to_string(res.steps.size()) + " steps, stop=" + res.stop_reason +
               sandwich_note;
    return rep;
}

// --- negative control ---------------------------------------------------------
inline LemmaReport check_negative_control(uint64_t seed) {
    LemmaReport broken = check_duality_identities(seed, 50, /*corrupt=*/true);
    LemmaReport rep;
    rep.id = "negative-control";
    rep.metric = broken.metric;
    rep.tol = broken.tol;
    rep.samples = broken.samples;
    rep.pass = !broken.pass;  // the corrupted map must be caught
    rep.note = rep.pass ? "corrupted duality map detected as expected"
                        : "corrupted duality map slipped through";
    return rep;
}

inline std::vector<LemmaReport> run_lemma_checks(const HarnessConfig& hc) {
    std::vector<LemmaReport> out;
    const KsConfig& ks = hc.ks;
    const int n = static_cast<int>(hc.lemma_pairs);

    out.push_back(check_duality_identities(hc.seed, std::max(10, n / 12)));
    out.push_back(check_xu_gap(hc.seed + 1, ks.p, std::max(50, n)));

    // grid-based checks need a dense tabulation, which is a 2-site tool (see
    // the grid-backend note in KsConfig::validate); report the skip instead
    // of crawling through a multi-parameter tabulation
    if (ks.full.sites <= 2) {
        LiebOptions lopts;
        lopts.box_radius = ks.lieb_box_radius;
        GridFunctional F = tabulate_lieb_F(ks.full, ks.grid_h, lopts, ks.cache_dir).grid;
        out.push_back(check_my_envelope(F, ks.eps, ks.p, 20, hc.seed + 2));
        out.push_back(check_conjugate_decomposition(F, ks.eps, ks.p, std::max(5, n / 20),
                                                    hc.seed + 3));
        out.push_back(check_my_shift_lemma(F, ks.eps, ks.p, std::max(5, n / 20),
                                           hc.seed + 4));
    } else {
        LemmaReport skip;
        skip.id = "grid-envelope-suite";
        skip.pass = true;
        skip.note = "skipped: dense tabulation checks run on 2-site models only";
        out.push_back(skip);
    }

    out.push_back(check_monotonicity_exact(ks.full, ks.eps, ks.p, n, hc.seed + 5));
    out.push_back(check_prox_identities(ks.full, ks.eps, ks.p, std::max(10, n / 4),
                                        hc.seed + 6));
    out.push_back(check_descent_sandwich(ks, 60, hc.seed + 7));

    if (hc.lemma_negative_control) out.push_back(check_negative_control(hc.seed + 8));
    return out;
}

}  // namespace myksoda
