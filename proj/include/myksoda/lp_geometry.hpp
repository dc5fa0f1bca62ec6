#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "space.hpp"

namespace myksoda {

inline double norm_p(const Vec& x, double p) {
    if (!(p >= 1.0))
        throw std::invalid_argument("norm_p: exponent must be >= 1");
    if (x.size() == 0) return 0.0;
    if (p == 2.0) return x.norm();
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) s += std::pow(std::abs(x[k]), p);
    return std::pow(s, 1.0 / p);
}

// phi_p = ||.||_p^p / p, the gauge used in the proximal penalty.  Summing the
// powers directly avoids the pow(pow(...)) round trip through the norm.
inline double phi_p(const Vec& x, double p) {
    if (!(p > 1.0))
        throw std::invalid_argument("phi_p: exponent must be > 1");
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) s += std::pow(std::abs(x[k]), p);
    return s / p;
}

// Duality map J_p(x)_k = |x_k|^{p-2} x_k = sign(x_k) |x_k|^{p-1}, the gradient
// of phi_p.  Written with exponent p-1 so it is well defined for every p > 1
// (in particular for dual exponents in (1,2), where |x|^{p-2} alone blows up
// at zero).
inline Vec duality_map(const Vec& x, double p) {
    if (!(p > 1.0))
        throw std::invalid_argument("duality_map: exponent must be > 1");
    Vec out(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double a = std::abs(x[k]);
        out[k] = (a == 0.0) ? 0.0 : std::copysign(std::pow(a, p - 1.0), x[k]);
    }
    return out;
}

// Inverse of J_p, which for l^p spaces is the duality map of the dual
// exponent: J_p^{-1} = J_{p*}.
inline Vec inverse_duality_map(const Vec& xs, double p) {
    return duality_map(xs, conjugate_exponent(p));
}

namespace detail {

// |a+b|^p - |a|^p - p sign(a)|a|^{p-1} b for a scalar component.  Subtracting
// the three powers directly cancels catastrophically when |b| << |a| (the
// true gap is O(|a|^{p-2} b^2), far below the ulp of |a|^p), so for small
// b/a the leading terms are removed symbolically via the binomial series
//   (1+u)^p - 1 - p u = sum_{k>=2} C(p,k) u^k,   u = b/a,
// which terminates at k = p for integer p (reproducing the exact p = 2 and
// p = 3 identities) and converges geometrically for |u| <= 1/2.
inline double scalar_power_gap(double a, double b, double p) {
    if (b == 0.0) return 0.0;
    const double aa = std::abs(a);
    if (aa == 0.0) return std::pow(std::abs(b), p);
    const double u = (a > 0.0 ? b : -b) / aa;
    if (std::abs(u) > 0.5) {
        const double jp = std::copysign(std::pow(aa, p - 1.0), a);
        return std::pow(std::abs(a + b), p) - std::pow(aa, p) - p * jp * b;
    }
    double term = 0.5 * p * (p - 1.0) * u * u;  // k = 2
    double sum = term;
    for (int k = 2; k < 400 && term != 0.0; ++k) {
        term *= (p - k) / (k + 1.0) * u;
        const double prev = sum;
        sum += term;
        if (sum == prev) break;
    }
    return std::pow(aa, p) * sum;
}

}  // namespace detail

// Two-sided smoothness/convexity gap of phi_p (componentwise, since the p-th
// power of the l^p norm is a sum of scalar contributions):
//   xu_gap(x, y) = ||x+y||^p - ||x||^p - p <J_p(x), y>.
// Nonnegative for p >= 2; exactly ||y||_2^2 when p = 2.  Each component goes
// through the cancellation-safe scalar form so the gap stays accurate in
// relative terms even for ||y|| many orders below ||x||.
inline double xu_gap(const Vec& x, const Vec& y, double p) {
    if (x.size() != y.size())
        throw std::invalid_argument("xu_gap: dimension mismatch");
    if (!(p >= 2.0))
        throw std::invalid_argument("xu_gap: p must be >= 2");
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k)
        s += detail::scalar_power_gap(x[k], y[k], p);
    return s;
}

// Empirical bracket for the power-type convexity/smoothness constants:
//   xi_lower = inf xu_gap / ||y||_p^p,   xi_upper = sup (same ratio)
// over a sample of pairs.  Besides generic Gaussian pairs the sampler walks
// two structured families that are known to squeeze the bracket:
//   - coordinate-aligned pairs x = s e_k, y = e_k over a grid in s (these
//     attain the scalar infimum, which equals the vector one because the
//     gap decomposes componentwise), and
//   - pairs with y orthogonal to J_p(x) at log-spaced length ratios, the
//     geometry produced by the damping step of the iteration.
// The ||y||/||x|| ratio range is a parameter: ratios far from 1 are where the
// p > 2 upper ratio grows (like ratio^{-(p-2)} as y shrinks), so the bracket
// should be sampled over the ratio range the consumer actually realizes.
struct XuConstants {
    double xi_lower = std::numeric_limits<double>::infinity();
    double xi_upper = -std::numeric_limits<double>::infinity();
    long samples = 0;
    int dim = 0;
    double p = 0.0;
};

inline XuConstants estimate_xu_constants(int dim, double p, long n_pairs,
                                         std::uint64_t seed,
                                         double log10_ratio_min = -1.0,
                                         double log10_ratio_max = 1.0,
                                         bool structured_families = true) {
    SpaceSpec space(dim, p);  // validates dim, p
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> ulog(log10_ratio_min, log10_ratio_max);

    XuConstants out;
    out.dim = dim;
    out.p = p;

    auto account = [&](const Vec& x, const Vec& y) {
        const double yn = norm_p(y, p);
        if (!(yn > 1e-14)) return;
        const double ratio = xu_gap(x, y, p) / std::pow(yn, p);
        out.xi_lower = std::min(out.xi_lower, ratio);
        out.xi_upper = std::max(out.xi_upper, ratio);
        ++out.samples;
    };

    auto draw = [&](Vec& v) {
        for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = gauss(rng);
    };

    Vec x(dim), y(dim);
    for (long i = 0; i < n_pairs; ++i) {
        draw(x);
        draw(y);
        double xn = norm_p(x, p);
        if (xn < 1e-12) continue;
        const double t = std::pow(10.0, ulog(rng));
        const double yn = norm_p(y, p);
        if (yn < 1e-12) continue;
        y *= t * xn / yn;
        account(x, y);

        if (structured_families && dim >= 2) {
            // orthogonalized pair: same x, y with <J_p(x), y> = 0
            Vec jp = duality_map(x, p);
            Vec yo = y - (jp.dot(y) / jp.squaredNorm()) * jp;
            if (norm_p(yo, p) > 1e-12) account(x, yo);
        }
    }

    if (structured_families) {
        // scalar family along the first coordinate: ratio depends only on
        // s = x/y, so a fine grid in s brackets the true scalar (= vector)
        // infimum tightly
        Vec ex = Vec::Zero(dim), ey = Vec::Zero(dim);
        ey[0] = 1.0;
        for (double s = -8.0; s <= 8.0; s += 1e-3) {
            ex[0] = s;
            account(ex, ey);
        }
    }

    if (out.samples == 0)
        throw std::runtime_error("estimate_xu_constants: no usable samples");
    return out;
}

}  // namespace myksoda
