#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>

#include "grid_functional.hpp"
#include "lp_geometry.hpp"
#include "minimize.hpp"

namespace myksoda {

// Sign convention used throughout (matches the density-functional usage):
//   f^(x*)  = inf_x { f(x) + <x*, x> }        ("conjugate down", concave)
//   g^(x)   = sup_x* { g(x*) - <x*, x> }      ("conjugate up", convex)
// so f = (f^)^ for closed proper convex f.

struct ProxOptions {
    // refinement terminates when the poll step drops below
    // min_spacing * refine_floor_factor (the default matches the coarse
    // contract; iteration code passes much smaller factors)
    double refine_floor_factor = 1e-2;
    // evaluate the true functional instead of the interpolant during
    // refinement (grid still provides the global scan)
    const std::function<double(const Vec&)>* exact_eval = nullptr;
    // optional extra linear term <linear, y> added to f(y) in the objective
    const Vec* linear = nullptr;
    long max_evals = 2000000;
};

struct ProxResult {
    Vec minimizer;    // prox point (ambient coordinates)
    double value;     // f_eps(x) = f(prox) + phi_p(x - prox)/eps^{p-1}
    Vec gradient;     // grad f_eps(x) = J_p(x - prox)/eps^{p-1}
    bool boundary = false;  // prox pinned at the edge of the tabulated chart
};

namespace detail {

inline double prox_objective(const GridFunctional& f, const ProxOptions& opts,
                             double eps, double p, const Vec& x, const Vec& u) {
    const double epw = std::pow(eps, p - 1.0);
    double fv;
    if (opts.exact_eval) {
        const Vec y = f.embed(u);
        fv = (*opts.exact_eval)(y);
        if (opts.linear && std::isfinite(fv)) fv += opts.linear->dot(y);
        if (!std::isfinite(fv)) return kGridInf;
        return fv + phi_p(x - y, p) / epw;
    }
    fv = f.eval_param(u);
    if (!std::isfinite(fv)) return kGridInf;
    const Vec y = f.embed(u);
    if (opts.linear) fv += opts.linear->dot(y);
    return fv + phi_p(x - y, p) / epw;
}

}  // namespace detail

// Proximal regularization of a tabulated functional:
//   f_eps(x) = inf_y { f(y) + phi_p(x - y)/eps^{p-1} }
// computed by an exhaustive scan over the finite grid nodes followed by
// pattern-search refinement in chart coordinates.  Convexity of f makes the
// scan minimum a valid basin for local refinement; a refined value far below
// what neighboring nodes allow for a convex integrand is reported as an
// error, since it means the tabulated data is not convex.
//
// The eps^{p-1} weight (rather than a bare 1/eps) is what makes the
// regularized relations exact with a plain eps prefactor for every p:
//   prox(x) = x - eps J_p^{-1}(grad f_eps(x)),
//   (f_eps)^(v) = f^(v) - eps phi_{p*}(v),
//   argmin(f_eps + w*) = argmin(f + w*) - eps J_p^{-1}(w*).
// For p = 2 the two weights coincide.
inline ProxResult my_regularize(const GridFunctional& f, double eps, double p, const Vec& x,
                                const ProxOptions& opts = {}) {
    if (!(eps > 0.0)) throw std::invalid_argument("my_regularize: eps must be > 0");
    SpaceSpec space(f.ambient_dim(), p);
    if (x.size() != f.ambient_dim())
        throw std::invalid_argument("my_regularize: point dim mismatch");

    const double epw = std::pow(eps, p - 1.0);
    const long count = f.node_count();
    long best = -1;
    double best_v = kGridInf;
    for (long flat = 0; flat < count; ++flat) {
        const double fv = f.value(flat);
        if (std::isinf(fv)) continue;
        const Vec u = f.node_param(flat);
        const Vec y = f.embed(u);
        double v = fv + phi_p(x - y, p) / epw;
        if (opts.linear) v += opts.linear->dot(y);
        if (v < best_v) {
            best_v = v;
            best = flat;
        }
    }
    if (best < 0)
        throw std::runtime_error("my_regularize: functional has empty effective domain");

    const int r = f.param_dim();
    Vec u0 = f.node_param(best);
    Vec lo(r), hi(r), step(r);
    for (int a = 0; a < r; ++a) {
        lo[a] = f.lo(a);
        hi[a] = f.hi(a);
        step[a] = f.spacing(a);
    }
    auto obj = [&](const Vec& u) { return detail::prox_objective(f, opts, eps, p, x, u); };
    const double floor = f.min_spacing() * opts.refine_floor_factor;
    PatternResult ref = pattern_search(obj, u0, step, floor, &lo, &hi, opts.max_evals);

    // convexity guard: how far below the best node a convex objective could
    // legitimately dip inside the surrounding cells, estimated from the node
    // neighborhood
    double allowed = 1e-9 * (1.0 + std::abs(best_v));
    for (int a = 0; a < r; ++a) {
        for (int s : {-1, +1}) {
            Vec un = u0;
            un[a] += s * f.spacing(a);
            if (un[a] < lo[a] - 1e-12 || un[a] > hi[a] + 1e-12) continue;
            const double vn = detail::prox_objective(f, ProxOptions{opts.refine_floor_factor,
                                                                    nullptr, opts.linear},
                                                     eps, p, x, un);
            if (std::isfinite(vn)) allowed += std::max(0.0, vn - best_v) / 4.0;
        }
    }
    if (ref.value < best_v - allowed)
        throw std::runtime_error(
            "my_regularize: refinement undercut the grid scan beyond the convex allowance "
            "(non-convex functional data?)");

    ProxResult out;
    if (ref.value <= best_v) {
        out.minimizer = f.embed(ref.u);
        out.value = ref.value;
    } else {
        out.minimizer = f.embed(u0);
        out.value = best_v;
    }
    out.gradient = duality_map(x - out.minimizer, p) / epw;
    for (int a = 0; a < r; ++a) {
        const double ua = (ref.value <= best_v ? ref.u[a] : u0[a]);
        if (ua - lo[a] < 2.0 * floor || hi[a] - ua < 2.0 * floor) out.boundary = true;
    }
    return out;
}

struct ConjugateResult {
    double value;
    Vec arg;        // where the inf/sup is attained (ambient coordinates)
    bool boundary = false;
};

// f^(x*) restricted to the tabulated domain: scan + refinement.
inline ConjugateResult conjugate_down(const GridFunctional& f, const Vec& xs,
                                      double refine_floor_factor = 1e-2,
                                      const std::function<double(const Vec&)>* exact_eval = nullptr) {
    if (xs.size() != f.ambient_dim())
        throw std::invalid_argument("conjugate_down: dim mismatch");
    const long count = f.node_count();
    long best = -1;
    double best_v = kGridInf;
    for (long flat = 0; flat < count; ++flat) {
        const double fv = f.value(flat);
        if (std::isinf(fv)) continue;
        const double v = fv + xs.dot(f.embed(f.node_param(flat)));
        if (v < best_v) {
            best_v = v;
            best = flat;
        }
    }
    if (best < 0)
        throw std::runtime_error("conjugate_down: functional has empty effective domain");

    const int r = f.param_dim();
    Vec lo(r), hi(r), step(r);
    for (int a = 0; a < r; ++a) {
        lo[a] = f.lo(a);
        hi[a] = f.hi(a);
        step[a] = f.spacing(a);
    }
    auto obj = [&](const Vec& u) {
        double fv = exact_eval ? (*exact_eval)(f.embed(u)) : f.eval_param(u);
        if (!std::isfinite(fv)) return kGridInf;
        return fv + xs.dot(f.embed(u));
    };
    PatternResult ref = pattern_search(obj, f.node_param(best), step,
                                       f.min_spacing() * refine_floor_factor, &lo, &hi);
    ConjugateResult out;
    if (ref.value <= best_v) {
        out.value = ref.value;
        out.arg = f.embed(ref.u);
    } else {
        out.value = best_v;
        out.arg = f.embed(f.node_param(best));
    }
    for (int a = 0; a < r; ++a) {
        const double ua = (ref.value <= best_v ? ref.u[a] : f.node_param(best)[a]);
        if (ua - lo[a] < 2.0 * f.min_spacing() * refine_floor_factor ||
            hi[a] - ua < 2.0 * f.min_spacing() * refine_floor_factor)
            out.boundary = true;
    }
    return out;
}

// Oracle for a concave functional on the dual side: returns the value at v
// and optionally a supergradient and Hessian (hess_ok = false when the
// Hessian does not exist there, e.g. at a ground-state degeneracy).
using ConcaveEval = std::function<double(const Vec& v, Vec* grad, Mat* hess, bool* hess_ok)>;

struct AscentOptions {
    int scan_nodes_per_axis = 9;   // 0 disables the coarse scan
    double grad_tol_l1 = 1e-8;
    long max_iter = 100000;
    double schedule_offset = 10.0;  // fallback step a_k = 1/(k + offset)
    bool use_newton = true;
    const Mat* tangent_basis = nullptr;  // orthonormal columns; ascent restricted to span
    Vec start;                           // empty: scan best (or box center)
};

struct AscentResult {
    double value = -kGridInf;
    Vec maximizer;
    bool boundary = false;
    bool converged = false;
    long iterations = 0;
    double grad_l1 = kGridInf;
};

// g^(x) = sup_v { g(v) - <v, x> } over a box.  With a supergradient oracle the
// ascent takes Newton steps guarded by Armijo backtracking and falls back to
// the diminishing-step schedule (with tail iterate averaging) whenever
// curvature information is unusable; without one it is a scan plus pattern
// search on the values alone.
inline AscentResult conjugate_up(const ConcaveEval& g, const Vec& x, const Vec& lo,
                                 const Vec& hi, bool has_gradient,
                                 const AscentOptions& opts = {}) {
    const int m = static_cast<int>(x.size());
    if (lo.size() != m || hi.size() != m)
        throw std::invalid_argument("conjugate_up: box dim mismatch");

    auto phi = [&](const Vec& v) { return g(v, nullptr, nullptr, nullptr) - v.dot(x); };
    auto clamp = [&](Vec& v) {
        for (int k = 0; k < m; ++k) v[k] = std::min(hi[k], std::max(lo[k], v[k]));
    };

    Vec v;
    if (opts.start.size() == m) {
        v = opts.start;
        clamp(v);
    } else if (opts.scan_nodes_per_axis >= 2) {
        BoxMinResult scan = minimize_over_box([&](const Vec& w) { return -phi(w); }, lo, hi,
                                              (hi - lo).maxCoeff() /
                                                  (opts.scan_nodes_per_axis - 1),
                                              (hi - lo).maxCoeff());  // scan only, no refine
        v = scan.x;
    } else {
        v = 0.5 * (lo + hi);
    }

    AscentResult res;
    if (!has_gradient) {
        Vec step = (hi - lo) / std::max(2, opts.scan_nodes_per_axis - 1);
        PatternResult ref = pattern_search([&](const Vec& w) { return -phi(w); }, v, step,
                                           (hi - lo).minCoeff() * 1e-9, &lo, &hi);
        res.value = -ref.value;
        res.maximizer = ref.u;
        res.converged = true;  // value-only mode has no residual notion
        res.grad_l1 = kGridInf;
    } else {
        const Mat* B = opts.tangent_basis;
        double phi_v = phi(v);
        Vec avg = Vec::Zero(m);
        long avg_count = 0;
        Vec best_v = v;
        double best_phi = phi_v;
        long k = 0;
        for (; k < opts.max_iter; ++k) {
            Vec grad(m);
            Mat hess;
            bool hess_ok = false;
            g(v, &grad, opts.use_newton ? &hess : nullptr, &hess_ok);
            Vec full_grad = grad - x;
            Vec red = B ? Vec(B->transpose() * full_grad) : full_grad;
            res.grad_l1 = (B ? Vec(*B * red) : red).lpNorm<1>();
            if (res.grad_l1 < opts.grad_tol_l1) {
                res.converged = true;
                break;
            }
            bool stepped = false;
            if (opts.use_newton && hess_ok) {
                Mat Hr = B ? Mat(B->transpose() * hess * *B) : hess;
                Eigen::LDLT<Mat> ldlt(-Hr);
                if (ldlt.info() == Eigen::Success) {
                    Vec dr = ldlt.solve(red);
                    if (dr.dot(red) > 0.0) {
                        Vec d = B ? Vec(*B * dr) : dr;
                        double t = 1.0;
                        for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
                            Vec vt = v + t * d;
                            clamp(vt);
                            const double pt = phi(vt);
                            if (pt >= phi_v + 1e-4 * t * red.dot(dr)) {
                                v = vt;
                                phi_v = pt;
                                stepped = true;
                                break;
                            }
                        }
                    }
                }
            }
            if (!stepped) {
                // diminishing-step supergradient ascent fallback
                const double a = 1.0 / (static_cast<double>(k) + opts.schedule_offset);
                Vec d = B ? Vec(*B * red) : red;
                v = v + a * d;
                clamp(v);
                phi_v = phi(v);
                if (k >= opts.max_iter / 2) {  // tail averaging
                    avg += v;
                    ++avg_count;
                }
            }
            if (phi_v > best_phi) {
                best_phi = phi_v;
                best_v = v;
            }
        }
        res.iterations = k;
        if (avg_count > 0) {
            Vec va = avg / static_cast<double>(avg_count);
            clamp(va);
            const double pa = phi(va);
            if (pa > best_phi) {
                best_phi = pa;
                best_v = va;
            }
        }
        if (phi_v > best_phi) {
            best_phi = phi_v;
            best_v = v;
        }
        res.value = best_phi;
        res.maximizer = best_v;
        if (res.converged) {
            res.value = phi_v;
            res.maximizer = v;
        }
    }

    for (int kk = 0; kk < m; ++kk) {
        const double margin = 1e-6 * (hi[kk] - lo[kk]);
        if (res.maximizer[kk] - lo[kk] < margin || hi[kk] - res.maximizer[kk] < margin)
            res.boundary = true;
    }
    return res;
}

// Translation identity of the proximal regularization under a linear tilt:
// with x_hat minimizing f + <w*,.> and x_eps minimizing f_eps + <w*,.>,
//   x_hat = x_eps + eps J_p^{-1}(w*)   and
//   min(f + w*) = min(f_eps + w*) + eps phi_{p*}(w*).
// Both minimizations are done by brute force (the regularized one over a
// dilated ambient box, since the minimizer leaves the tabulated domain), so
// the report is an independent check of the identity, not an application of
// it.
struct MyShiftReport {
    double translation_residual;   // ||x_hat - (x_eps + eps J^{-1} w*)||_p
    double value_offset_residual;  // |min(f+w) - min(f_eps+w) - eps phi_p*(w)|
    Vec min_unregularized, min_regularized;
    double value_unregularized, value_regularized;
    bool boundary = false;
};

inline MyShiftReport check_my_shift(const GridFunctional& f, double eps, double p,
                                    const Vec& ws, double coarse_step_factor = 4.0,
                                    double refine_floor = 1e-8,
                                    const std::function<double(const Vec&)>* exact_eval = nullptr) {
    SpaceSpec space(f.ambient_dim(), p);
    ConjugateResult unreg = conjugate_down(f, ws, 1e-6, exact_eval);

    Vec shift = eps * inverse_duality_map(ws, p);
    Vec blo, bhi;
    if (!f.finite_bounding_box(blo, bhi))
        throw std::runtime_error("check_my_shift: empty effective domain");
    const double pad = 2.0 * f.min_spacing() + 0.05;
    for (int k = 0; k < f.ambient_dim(); ++k) {
        blo[k] -= std::abs(shift[k]) + pad;
        bhi[k] += std::abs(shift[k]) + pad;
    }

    ProxOptions popts;
    popts.refine_floor_factor = 1e-4;
    popts.exact_eval = exact_eval;
    auto q = [&](const Vec& xx) {
        return my_regularize(f, eps, p, xx, popts).value + ws.dot(xx);
    };
    BoxMinResult reg = minimize_over_box(q, blo, bhi, coarse_step_factor * f.min_spacing(),
                                         refine_floor);

    MyShiftReport rep;
    rep.min_unregularized = unreg.arg;
    rep.min_regularized = reg.x;
    rep.value_unregularized = unreg.value;
    rep.value_regularized = reg.value;
    rep.translation_residual = norm_p(unreg.arg - (reg.x + shift), p);
    rep.value_offset_residual =
        std::abs(unreg.value - reg.value - eps * phi_p(ws, space.p_star()));
    rep.boundary = unreg.boundary;
    return rep;
}

// Empirical strong monotonicity of the superdifferential of (f_eps)^:
// for pairs x in argmin(f_eps + <v,.>) the pairing <v1-v2, x1-x2> must be
// <= -eps zeta ||v1-v2||_{p*}^{p*}; zeta_hat is the worst sampled ratio.
struct MonotonicityReport {
    double zeta_hat = kGridInf;
    double zeta_max = -kGridInf;
    double worst_pairing = -kGridInf;  // max over pairs of <dv, dx> (<= 0 expected)
    long pairs = 0;
};

inline MonotonicityReport check_strong_monotonicity(
    const GridFunctional& f, double eps, double p, long n_pairs, const Vec& box_lo,
    const Vec& box_hi, std::uint64_t seed, double refine_floor = 1e-8,
    const std::function<double(const Vec&)>* exact_eval = nullptr) {
    SpaceSpec space(f.ambient_dim(), p);
    const double ps = space.p_star();
    const int m = f.ambient_dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    // superdifferential point of (f_eps)^ at v: brute-force argmin of
    // f_eps + <v,.> started from the translated unregularized argmin (which
    // for convex f lies in the right basin; the search is still free to move)
    auto argmin_point = [&](const Vec& v) {
        ConjugateResult cd = conjugate_down(f, v, 1e-4, exact_eval);
        Vec hint = cd.arg - eps * inverse_duality_map(v, p);
        ProxOptions popts;
        popts.refine_floor_factor = 1e-5;
        popts.exact_eval = exact_eval;
        auto q = [&](const Vec& xx) {
            return my_regularize(f, eps, p, xx, popts).value + v.dot(xx);
        };
        Vec step = Vec::Constant(m, 2.0 * f.min_spacing());
        PatternResult ref = pattern_search(q, hint, step, refine_floor);
        return ref.u;
    };

    MonotonicityReport rep;
    Vec v1(m), v2(m);
    long attempts = 0;
    while (rep.pairs < n_pairs && attempts < 20 * n_pairs) {
        ++attempts;
        for (int k = 0; k < m; ++k) {
            v1[k] = box_lo[k] + (box_hi[k] - box_lo[k]) * uni(rng);
            v2[k] = box_lo[k] + (box_hi[k] - box_lo[k]) * uni(rng);
        }
        const Vec dv = v1 - v2;
        const double dvn = norm_p(dv, ps);
        if (dvn < 0.1) continue;  // too close to resolve the ratio numerically
        const Vec x1 = argmin_point(v1), x2 = argmin_point(v2);
        const double s = dv.dot(x1 - x2);
        const double ratio = -s / (eps * std::pow(dvn, ps));
        rep.zeta_hat = std::min(rep.zeta_hat, ratio);
        rep.zeta_max = std::max(rep.zeta_max, ratio);
        rep.worst_pairing = std::max(rep.worst_pairing, s);
        ++rep.pairs;
    }
    if (rep.pairs == 0) throw std::runtime_error("check_strong_monotonicity: no usable pairs");
    return rep;
}

}  // namespace myksoda
