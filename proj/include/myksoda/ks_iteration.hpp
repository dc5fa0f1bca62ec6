#pragma once

#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lattice.hpp"

namespace myksoda {

// One Kohn-Sham-style iteration run: given the external potential w*, chase
// the fixed point of
//   x*_{i+1} = w* + grad F1_eps(x_i) - grad F0_eps(x_i)
//   x'_{i+1} = regularized ground density of the reference system at x*_{i+1}
//   x_{i+1}  = x_i + tau_i y_i,  y_i = (x'_{i+1} - x_i)/||.||_p
// with tau_i chosen so that x_{i+1} is the norm-minimizer along the ray
// towards the prox point p_i of the tilted functional F1_eps + <w*,.>.

struct KsConfig {
    LatticeModel full;  // interacting system (lambda as configured)
    LatticeModel ref;   // reference system (same sites/particles, lambda = 0)
    double eps = 0.1;
    double p = 2.0;
    Vec w;   // external potential w*
    Vec x0;  // empty: start from the reference regularized ground density at w*
    double residual_tol = 1e-8;
    long max_iter = 500;
    double gap_tol = 1e-8;
    enum class Backend { Exact, Grid };
    Backend backend = Backend::Exact;
    double grid_h = 0.01;             // tabulation spacing (grid backend)
    double lieb_box_radius = 20.0;    // ascent box for tabulation
    std::filesystem::path cache_dir;  // empty: no tabulation cache
    double tau_bisect_tol = 1e-12;

    void validate() const {
        full.validate();
        ref.validate();
        if (full.sites != ref.sites || full.particles != ref.particles)
            throw std::invalid_argument("KsConfig: full and reference systems must share sites and particles");
        SpaceSpec space(full.sites, p);
        if (!(eps > 0.0)) throw std::invalid_argument("KsConfig: eps must be > 0");
        if (w.size() != full.sites) throw std::invalid_argument("KsConfig: w has wrong length");
        if (x0.size() != 0 && x0.size() != full.sites)
            throw std::invalid_argument("KsConfig: x0 has wrong length");
        if (!(residual_tol > 0.0)) throw std::invalid_argument("KsConfig: residual_tol must be > 0");
        if (max_iter < 1) throw std::invalid_argument("KsConfig: max_iter must be >= 1");
        if (!(grid_h > 0.0) || grid_h > 0.5)
            throw std::invalid_argument("KsConfig: grid_h out of range");
        // Dense simplex tabulation is a 2-site (one-parameter) tool: for
        // larger lattices the non-interacting nodes cross ground-state
        // degeneracies (the per-node ascent crawls for minutes) and the
        // multilinear cells are non-convex along diagonals, which defeats the
        // refinement's convexity guard.  The exact backend covers those.
        if (backend == Backend::Grid && full.sites > 2)
            throw std::invalid_argument(
                "KsConfig: the grid backend supports 2-site models only; "
                "use backend = exact for larger lattices");
    }
};

struct IterationStep {
    long i = 0;
    Vec x;             // x_i
    Vec ks_potential;  // x*_{i+1}
    Vec ref_density;   // x'_{i+1}
    Vec y;             // unit direction (||y||_p = 1)
    double tau = 0.0;
    double e = 0.0;         // F1_eps(x_i) + <w*, x_i>
    double m = 0.0;         // minimum of the tangent model section along y_i
    double residual = 0.0;  // ||grad F1_eps(x_i) + w*||_{p*}
    // certificates recorded for the invariant checks (p_i is the proximal
    // point of F1 at x_i, the center of the tangent model):
    double dir_derivative = 0.0;  // <grad F1_eps(x_i) + w*, y_i>, must be < 0
    double tau_closed_form = std::numeric_limits<double>::quiet_NaN();  // p = 2 only
    double orth_residual = 0.0;   // g(tau) at the accepted root
    double dist_before = 0.0;     // ||x_i - p_i||_p
    double dist_after = 0.0;      // ||x_{i+1} - p_i||_p
    double gap_ratio = 0.0;  // p eps^{p-1} (e_i - m_i) / tau^p, in [xi, xi']
    bool degenerate = false;
};

struct KsResult {
    std::vector<IterationStep> steps;
    bool converged = false;
    long iterations = 0;
    Vec z;       // final quasidensity
    Vec z_star;  // final reference potential
    double e_final = 0.0;  // F1_eps(z) + <w*, z> (= E1_eps(w*) at convergence)
    double residual_final = 0.0;
    std::string stop_reason;  // converged | max_iter | degenerate_stall | no_descent | inversion_failed
    bool degenerate_encountered = false;
};

inline Vec ks_potential_step(const Vec& w, const Vec& grad_f1, const Vec& grad_f0) {
    return w + grad_f1 - grad_f0;
}

// Damping factor: the unique root of the strictly increasing
//   g(tau) = <J_p(x_i + tau y_i - p_i), y_i>,
// i.e. x_{i+1} is the phi_p-closest point to p_i along the ray.  g(0) < 0
// exactly when y_i is a descent direction of the tilted functional.
struct DampingResult {
    double tau = 0.0;
    double g_at_zero = 0.0;
    double g_at_tau = 0.0;
};

// Step length along y: minimize the model section
//   tau -> phi_p(x + tau y - prox_pt)/eps^{p-1} + tau <w, y>,
// i.e. find the root of its derivative g.  The model is tangent to
// F_eps + <w,.> at x (same gradient, since J_p(x - prox_pt)/eps^{p-1} equals
// nabla F_eps(x)) and majorizes it everywhere by the envelope property of the
// true proximal point, so the section minimum m bounds the next energy.
// Folding the tilt into a shifted center instead only works for p = 2, where
// phi_2 absorbs linear terms; there the root reduces to the closed form
// tau = -eps <nabla F_eps(x) + w, y>.
inline DampingResult damping_step(const Vec& x, const Vec& y, const Vec& prox_pt,
                                  const Vec& w, double eps, double p,
                                  double bisect_tol = 1e-12) {
    const double tilt = std::pow(eps, p - 1.0) * w.dot(y);
    auto g = [&](double t) { return duality_map(x + t * y - prox_pt, p).dot(y) + tilt; };
    DampingResult res;
    res.g_at_zero = g(0.0);
    if (!(res.g_at_zero < 0.0))
        throw std::runtime_error(
            "damping_step: g(0) >= 0 (not a descent direction; converged state or bug)");
    double hi = std::max(norm_p(prox_pt - x, p), 1e-8);
    int guard = 0;
    while (g(hi) <= 0.0 && guard < 200) {
        hi *= 2.0;
        ++guard;
    }
    if (g(hi) <= 0.0) throw std::runtime_error("damping_step: failed to bracket the root");
    auto done = [=](double a, double b) { return b - a < bisect_tol; };
    auto bracket = boost::math::tools::bisect(g, 0.0, hi, done);
    res.tau = 0.5 * (bracket.first + bracket.second);
    res.g_at_tau = g(res.tau);
    return res;
}

namespace detail {

struct FunctionalEval {
    double value = 0.0;
    Vec gradient;
    Vec prox;
    bool degenerate = false;
    bool ok = true;
};

using RegEval = std::function<FunctionalEval(const Vec&)>;

inline RegEval wrap_exact(const RegularizedLieb& f) {
    return [&f](const Vec& x) {
        RegularizedLieb::Eval e = f.eval(x);
        return FunctionalEval{e.value, e.gradient, e.prox, e.degenerate, e.converged};
    };
}

inline RegEval wrap_grid(const GridFunctional& g, double eps, double p) {
    return [&g, eps, p](const Vec& x) {
        ProxOptions opts;
        // the gradient accuracy bounds the reachable residual, so refine far
        // below the tabulation spacing
        opts.refine_floor_factor = 1e-8;
        ProxResult pr = my_regularize(g, eps, p, x, opts);
        return FunctionalEval{pr.value, pr.gradient, pr.minimizer, false, true};
    };
}

}  // namespace detail

inline KsResult run_myksoda(const KsConfig& cfg) {
    cfg.validate();
    SpaceSpec space(cfg.full.sites, cfg.p);
    const double ps = space.p_star();

    // functional backends; tabulations must outlive the evaluators
    std::optional<RegularizedLieb> f1x, f0x;
    std::optional<GridFunctional> f1g, f0g;
    detail::RegEval F1, F0;
    if (cfg.backend == KsConfig::Backend::Exact) {
        f1x.emplace(cfg.full, cfg.eps, cfg.p);
        f0x.emplace(cfg.ref, cfg.eps, cfg.p);
        F1 = detail::wrap_exact(*f1x);
        F0 = detail::wrap_exact(*f0x);
    } else {
        LiebOptions lopts;
        lopts.box_radius = cfg.lieb_box_radius;
        f1g = tabulate_lieb_F(cfg.full, cfg.grid_h, lopts, cfg.cache_dir).grid;
        f0g = tabulate_lieb_F(cfg.ref, cfg.grid_h, lopts, cfg.cache_dir).grid;
        F1 = detail::wrap_grid(*f1g, cfg.eps, cfg.p);
        F0 = detail::wrap_grid(*f0g, cfg.eps, cfg.p);
    }

    KsResult res;
    Vec x = cfg.x0.size() ? cfg.x0
                          : regularized_ground_density(cfg.ref, cfg.w, cfg.eps, cfg.p,
                                                       cfg.gap_tol);

    for (long i = 0; i < cfg.max_iter; ++i) {
        detail::FunctionalEval ev1 = F1(x);
        if (!ev1.ok) {
            res.stop_reason = "inversion_failed";
            res.z = x;
            return res;
        }
        Vec grad_tilted = ev1.gradient + cfg.w;
        const double r = norm_p(grad_tilted, ps);
        const double e = ev1.value + cfg.w.dot(x);
        res.degenerate_encountered |= ev1.degenerate;

        if (r <= cfg.residual_tol) {
            detail::FunctionalEval ev0 = F0(x);
            res.converged = true;
            res.iterations = i;
            res.z = x;
            res.z_star = ks_potential_step(cfg.w, ev1.gradient, ev0.gradient);
            res.e_final = e;
            res.residual_final = r;
            res.stop_reason = "converged";
            return res;
        }

        detail::FunctionalEval ev0 = F0(x);
        if (!ev0.ok) {
            res.stop_reason = "inversion_failed";
            res.z = x;
            return res;
        }
        res.degenerate_encountered |= ev0.degenerate;
        Vec xs_next = ks_potential_step(cfg.w, ev1.gradient, ev0.gradient);

        bool deg_step = false;
        Vec x_ref = regularized_ground_density(cfg.ref, xs_next, cfg.eps, cfg.p, cfg.gap_tol,
                                               &deg_step);
        res.degenerate_encountered |= deg_step;

        Vec dir = x_ref - x;
        const double dn = norm_p(dir, cfg.p);
        if (dn < 1e-14) {
            res.stop_reason = "degenerate_stall";
            res.z = x;
            res.e_final = e;
            res.residual_final = r;
            res.iterations = i;
            return res;
        }
        Vec y = dir / dn;

        const double dir_deriv = grad_tilted.dot(y);
        const Vec& prox_pt = ev1.prox;  // true proximal point of F^1 at x

        IterationStep step;
        step.i = i;
        step.x = x;
        step.ks_potential = xs_next;
        step.ref_density = x_ref;
        step.y = y;
        step.e = e;
        step.residual = r;
        step.dir_derivative = dir_deriv;
        step.degenerate = deg_step || ev1.degenerate || ev0.degenerate;

        if (!(dir_deriv < 0.0)) {
            res.steps.push_back(step);
            res.stop_reason = "no_descent";
            res.z = x;
            res.e_final = e;
            res.residual_final = r;
            res.iterations = i;
            return res;
        }

        DampingResult damp =
            damping_step(x, y, prox_pt, cfg.w, cfg.eps, cfg.p, cfg.tau_bisect_tol);
        step.tau = damp.tau;
        step.orth_residual = damp.g_at_tau;
        if (cfg.p == 2.0) step.tau_closed_form = -cfg.eps * dir_deriv;

        Vec x_next = x + damp.tau * y;
        step.dist_before = norm_p(x - prox_pt, cfg.p);
        step.dist_after = norm_p(x_next - prox_pt, cfg.p);
        // section minimum of the tangent model; e - m carries the tilt term,
        // and Xu's inequality at the root gives the two-sided bound
        //   xi tau^p <= p eps^{p-1} (e - m) <= xi' tau^p.
        // Near convergence the drop (~ residual * tau) falls below the ulp of
        // e, so keep it in its own scale for the ratio instead of re-deriving
        // it from the rounded m.
        const double epw = cfg.p * std::pow(cfg.eps, cfg.p - 1.0);
        const double drop =
            (std::pow(step.dist_before, cfg.p) - std::pow(step.dist_after, cfg.p)) / epw -
            damp.tau * cfg.w.dot(y);
        step.m = e - drop;
        step.gap_ratio = epw * drop / std::pow(damp.tau, cfg.p);

        res.steps.push_back(step);
        x = x_next;
    }

    // exhausted the iteration budget: evaluate once more to report honestly
    detail::FunctionalEval ev1 = F1(x);
    res.converged = false;
    res.iterations = cfg.max_iter;
    res.z = x;
    res.e_final = ev1.ok ? ev1.value + cfg.w.dot(x) : std::numeric_limits<double>::quiet_NaN();
    res.residual_final = ev1.ok ? norm_p(ev1.gradient + cfg.w, ps) : kGridInf;
    res.stop_reason = "max_iter";
    return res;
}

// Undo the regularization at the converged point:
//   density: z~ = z + eps J_p^{-1}(w*)
//   energy:  E1(w*) = E1_eps(w*) + eps phi_{p*}(w*),  E1_eps(w*) = F1_eps(z) + <w*, z>
struct Deregularized {
    Vec density;
    double energy = 0.0;
};

inline Deregularized deregularize(const Vec& z, const Vec& w, double eps, double p,
                                  double e_regularized) {
    SpaceSpec space(static_cast<int>(z.size()), p);
    Deregularized out;
    out.density = z + eps * inverse_duality_map(w, p);
    out.energy = e_regularized + eps * phi_p(w, space.p_star());
    return out;
}

// Plain proximal-point minimization of f = F + <w*, .> on a tabulated
// functional; the reference algorithm the iteration is compared against.
struct BaselineResult {
    std::vector<Vec> iterates;   // x_0 .. x_k
    std::vector<double> values;  // f(x_i)
    Vec final_x;
    double final_value = 0.0;
    bool monotone = true;
    long iterations = 0;
};

inline BaselineResult proximal_point_baseline(const GridFunctional& F, const Vec& w,
                                              double eps, double p, Vec x0, long max_iter,
                                              double step_tol = 1e-10,
                                              double refine_floor_factor = 1e-6) {
    SpaceSpec space(F.ambient_dim(), p);
    if (w.size() != F.ambient_dim() || x0.size() != F.ambient_dim())
        throw std::invalid_argument("proximal_point_baseline: dim mismatch");
    auto f_val = [&](const Vec& x) {
        const double fv = F.eval_ambient(x);
        return std::isfinite(fv) ? fv + w.dot(x) : kGridInf;
    };
    BaselineResult res;
    Vec x = std::move(x0);
    double fx = f_val(x);
    if (!std::isfinite(fx))
        throw std::invalid_argument("proximal_point_baseline: x0 outside the effective domain");
    res.iterates.push_back(x);
    res.values.push_back(fx);

    ProxOptions opts;
    opts.refine_floor_factor = refine_floor_factor;
    opts.linear = &w;
    for (long i = 0; i < max_iter; ++i) {
        ProxResult pr = my_regularize(F, eps, p, x, opts);
        Vec x_next = pr.minimizer;
        const double f_next = f_val(x_next);
        if (f_next > res.values.back() + 1e-12 * (1.0 + std::abs(f_next)))
            res.monotone = false;
        const double move = norm_p(x_next - x, p);
        x = x_next;
        res.iterates.push_back(x);
        res.values.push_back(f_next);
        res.iterations = i + 1;
        if (move < step_tol) break;
    }
    res.final_x = x;
    res.final_value = res.values.back();
    return res;
}

}  // namespace myksoda
