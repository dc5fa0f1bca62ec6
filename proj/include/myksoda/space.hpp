#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace myksoda {

// Densities, quasidensities and potentials are all plain coefficient vectors
// over the lattice sites; what distinguishes them is which side of the
// pairing they live on, so we keep a single vector type and let the function
// signatures carry the meaning.
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Finite-dimensional l^p space carrying the quasidensities.  We require
// p >= 2: then the space is uniformly convex of power type p and its dual
// (exponent p* = p/(p-1) in (1,2]) is smooth, so both duality maps below are
// single-valued.
struct SpaceSpec {
    int dim;
    double p;

    SpaceSpec(int dim_, double p_) : dim(dim_), p(p_) {
        if (dim < 1)
            throw std::invalid_argument("SpaceSpec: dim must be >= 1, got " +
                                        std::to_string(dim));
        if (!(p >= 2.0))
            throw std::invalid_argument("SpaceSpec: p must be >= 2, got " +
                                        std::to_string(p));
    }

    double p_star() const { return p / (p - 1.0); }
};

inline double conjugate_exponent(double p) {
    if (!(p > 1.0))
        throw std::invalid_argument("conjugate_exponent: p must be > 1");
    return p / (p - 1.0);
}

// Dual pairing <x*, x>.  In coordinates this is the plain dot product; the
// l^p / l^p* structure only enters through norms and duality maps.
inline double pairing(const Vec& xs, const Vec& x) {
    if (xs.size() != x.size())
        throw std::invalid_argument("pairing: dimension mismatch (" +
                                    std::to_string(xs.size()) + " vs " +
                                    std::to_string(x.size()) + ")");
    return xs.dot(x);
}

}  // namespace myksoda
