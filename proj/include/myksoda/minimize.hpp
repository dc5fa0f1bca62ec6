#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "space.hpp"

namespace myksoda {

// Derivative-free local refinement: polls a stencil of directions scaled by a
// per-axis step, moves greedily, halves the step when no direction improves,
// and stops when every step is below the floor.  For up to three parameters
// the stencil is the full set of sign patterns so diagonal valleys (which
// defeat axis-only coordinate descent on kinked interpolants) are handled.
struct PatternResult {
    Vec u;
    double value = std::numeric_limits<double>::infinity();
    long evals = 0;
    bool hit_eval_cap = false;
};

inline PatternResult pattern_search(const std::function<double(const Vec&)>& f, Vec u0,
                                    Vec step, double step_floor,
                                    const Vec* lo = nullptr, const Vec* hi = nullptr,
                                    long max_evals = 2000000) {
    const int r = static_cast<int>(u0.size());
    if (step.size() != r)
        throw std::invalid_argument("pattern_search: step dim mismatch");

    std::vector<Vec> dirs;
    if (r <= 3) {
        const int total = 1;
        (void)total;
        int npat = 1;
        for (int a = 0; a < r; ++a) npat *= 3;
        for (int c = 0; c < npat; ++c) {
            Vec d = Vec::Zero(r);
            int cc = c;
            bool nonzero = false;
            for (int a = 0; a < r; ++a) {
                const int s = cc % 3;
                cc /= 3;
                d[a] = (s == 0) ? 0.0 : (s == 1 ? 1.0 : -1.0);
                nonzero = nonzero || s != 0;
            }
            if (nonzero) dirs.push_back(d);
        }
    } else {
        for (int a = 0; a < r; ++a) {
            Vec d = Vec::Zero(r);
            d[a] = 1.0;
            dirs.push_back(d);
            dirs.push_back(-d);
        }
    }

    auto clamp = [&](Vec& u) {
        if (lo)
            for (int a = 0; a < r; ++a) u[a] = std::max(u[a], (*lo)[a]);
        if (hi)
            for (int a = 0; a < r; ++a) u[a] = std::min(u[a], (*hi)[a]);
    };

    PatternResult res;
    res.u = u0;
    clamp(res.u);
    res.value = f(res.u);
    ++res.evals;

    while (step.maxCoeff() >= step_floor) {
        bool improved = false;
        Vec best_u = res.u;
        double best_v = res.value;
        for (const Vec& d : dirs) {
            if (res.evals >= max_evals) {
                res.hit_eval_cap = true;
                return res;
            }
            Vec u = res.u + d.cwiseProduct(step);
            clamp(u);
            const double v = f(u);
            ++res.evals;
            if (v < best_v) {
                best_v = v;
                best_u = u;
                improved = true;
            }
        }
        if (improved) {
            res.u = best_u;
            res.value = best_v;
        } else {
            step *= 0.5;
        }
    }
    return res;
}

// Exhaustive scan of a regular grid over a box followed by pattern-search
// refinement.  This is the brute-force global minimizer used when nothing
// better than convexity is known about the objective.
struct BoxMinResult {
    Vec x;
    double value = std::numeric_limits<double>::infinity();
    long scanned = 0;
};

inline BoxMinResult minimize_over_box(const std::function<double(const Vec&)>& f,
                                      const Vec& lo, const Vec& hi, double coarse_step,
                                      double refine_floor, long max_scan = 4000000) {
    const int r = static_cast<int>(lo.size());
    if (hi.size() != r || !(coarse_step > 0.0))
        throw std::invalid_argument("minimize_over_box: bad box or step");
    std::vector<long> n(r);
    long total = 1;
    for (int a = 0; a < r; ++a) {
        n[a] = std::max(2L, static_cast<long>(std::ceil((hi[a] - lo[a]) / coarse_step)) + 1);
        total *= n[a];
        if (total > max_scan)
            throw std::runtime_error("minimize_over_box: scan budget exceeded");
    }

    BoxMinResult res;
    Vec x(r);
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        for (int a = r - 1; a >= 0; --a) {
            const long i = rem % n[a];
            rem /= n[a];
            x[a] = lo[a] + (hi[a] - lo[a]) * static_cast<double>(i) / static_cast<double>(n[a] - 1);
        }
        const double v = f(x);
        ++res.scanned;
        if (v < res.value) {
            res.value = v;
            res.x = x;
        }
    }
    if (!std::isfinite(res.value)) return res;

    Vec step = Vec::Constant(r, coarse_step);
    PatternResult ref = pattern_search(f, res.x, step, refine_floor, &lo, &hi);
    if (ref.value < res.value) {
        res.value = ref.value;
        res.x = ref.u;
    }
    return res;
}

}  // namespace myksoda
