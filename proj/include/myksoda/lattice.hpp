#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "convex_ops.hpp"
#include "grid_functional.hpp"
#include "lp_geometry.hpp"
#include "util.hpp"

namespace myksoda {

// Spinless fermions on a small lattice:
//   H(v) = -t sum_bonds (c_i^+ c_j + c_j^+ c_i)
//        + lambda U sum_bonds n_i n_j
//        + sum_k v_k n_k
// lambda = 1 is the interacting ("full") system, lambda = 0 the reference.
struct LatticeModel {
    int sites = 2;
    int particles = 1;
    double hopping = 1.0;
    double interaction = 0.0;
    double lambda = 1.0;
    enum class Topology { Chain, Ring } topology = Topology::Chain;

    void validate() const {
        if (sites < 2) throw std::invalid_argument("LatticeModel: need sites >= 2");
        if (sites > 20) throw std::invalid_argument("LatticeModel: sites > 20 not supported");
        if (particles < 1 || particles > sites)
            throw std::invalid_argument("LatticeModel: need 1 <= particles <= sites");
        if (!(hopping > 0.0)) throw std::invalid_argument("LatticeModel: need hopping > 0");
        if (interaction < 0.0) throw std::invalid_argument("LatticeModel: need interaction >= 0");
        if (lambda < 0.0 || lambda > 1.0)
            throw std::invalid_argument("LatticeModel: need lambda in [0,1]");
    }

    // ring on two sites would duplicate the single bond, so it degrades to
    // the chain there
    std::vector<std::pair<int, int>> bonds() const {
        std::vector<std::pair<int, int>> b;
        for (int k = 0; k + 1 < sites; ++k) b.emplace_back(k, k + 1);
        if (topology == Topology::Ring && sites >= 3) b.emplace_back(sites - 1, 0);
        return b;
    }

    LatticeModel reference() const {
        LatticeModel m = *this;
        m.lambda = 0.0;
        return m;
    }

    std::string cache_tag() const {
        std::string s = "sites=" + std::to_string(sites) + "|N=" + std::to_string(particles) +
                        "|t=" + fmt17(hopping) + "|U=" + fmt17(interaction) +
                        "|lambda=" + fmt17(lambda) +
                        "|topo=" + (topology == Topology::Chain ? "chain" : "ring");
        return s;
    }
};

// Occupation-number basis at fixed particle number: bitmasks with N bits set,
// enumerated in increasing integer order (deterministic).
struct FockBasis {
    int sites = 0;
    int particles = 0;
    std::vector<std::uint32_t> states;

    static FockBasis build(int sites, int particles) {
        FockBasis b;
        b.sites = sites;
        b.particles = particles;
        const std::uint32_t limit = 1u << sites;
        for (std::uint32_t s = 0; s < limit; ++s)
            if (static_cast<int>(__builtin_popcount(s)) == particles) b.states.push_back(s);
        return b;
    }

    int dim() const { return static_cast<int>(states.size()); }

    int index_of(std::uint32_t s) const {
        auto it = std::lower_bound(states.begin(), states.end(), s);
        if (it == states.end() || *it != s)
            throw std::logic_error("FockBasis: state not in basis");
        return static_cast<int>(it - states.begin());
    }
};

namespace detail {
// fermionic sign (-1)^{number of occupied sites below `site`} for the
// site-ordered creation-operator convention
inline int jw_sign(std::uint32_t state, int site) {
    const std::uint32_t below = state & ((1u << site) - 1u);
    return (__builtin_popcount(below) & 1) ? -1 : 1;
}
}  // namespace detail

inline Mat build_hamiltonian(const LatticeModel& model, const Vec& v) {
    model.validate();
    if (v.size() != model.sites)
        throw std::invalid_argument("build_hamiltonian: potential has wrong length");
    const FockBasis basis = FockBasis::build(model.sites, model.particles);
    const int d = basis.dim();
    Mat h = Mat::Zero(d, d);
    const auto bonds = model.bonds();
    for (int a = 0; a < d; ++a) {
        const std::uint32_t s = basis.states[a];
        double diag = 0.0;
        for (int k = 0; k < model.sites; ++k)
            if (s & (1u << k)) diag += v[k];
        for (auto [i, j] : bonds) {
            const bool occ_i = s & (1u << i), occ_j = s & (1u << j);
            if (occ_i && occ_j) diag += model.lambda * model.interaction;
            // hopping c_i^+ c_j moves a fermion j -> i
            if (occ_j && !occ_i) {
                std::uint32_t mid = s & ~(1u << j);
                const int sign = detail::jw_sign(s, j) * detail::jw_sign(mid, i);
                const int bdx = basis.index_of(mid | (1u << i));
                h(bdx, a) += -model.hopping * sign;
                h(a, bdx) += -model.hopping * sign;  // + h.c.
            }
        }
        h(a, a) += diag;
    }
    return h;
}

struct GroundState {
    double energy = 0.0;
    Vec density;       // ensemble average over the (near-)degenerate ground space
    double gap = 0.0;  // first excitation gap (inf when the space is exhausted)
    bool degenerate = false;
    int multiplicity = 1;
    Vec evals;
    Mat evecs;
};

// Full symmetric eigendecomposition; tiny Fock spaces make this the honest
// and cheapest route.  A ground multiplet within gap_tol is averaged, which
// keeps the density a deterministic function of (model, v) even though the
// individual eigenvectors are not.
inline GroundState ground_state(const LatticeModel& model, const Vec& v,
                                double gap_tol = 1e-8) {
    const Mat h = build_hamiltonian(model, v);
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("ground_state: eigensolver failed");
    const FockBasis basis = FockBasis::build(model.sites, model.particles);
    const int d = basis.dim();

    GroundState gs;
    gs.evals = es.eigenvalues();
    gs.evecs = es.eigenvectors();
    gs.energy = gs.evals[0];
    int mult = 1;
    while (mult < d && gs.evals[mult] - gs.evals[0] < gap_tol) ++mult;
    gs.multiplicity = mult;
    gs.degenerate = mult > 1;
    gs.gap = (mult < d) ? gs.evals[mult] - gs.evals[0]
                        : std::numeric_limits<double>::infinity();

    gs.density = Vec::Zero(model.sites);
    for (int n = 0; n < mult; ++n) {
        for (int a = 0; a < d; ++a) {
            const double w = gs.evecs(a, n) * gs.evecs(a, n);
            if (w == 0.0) continue;
            const std::uint32_t s = basis.states[a];
            for (int k = 0; k < model.sites; ++k)
                if (s & (1u << k)) gs.density[k] += w;
        }
    }
    gs.density /= static_cast<double>(mult);
    return gs;
}

inline double energy_E(const LatticeModel& model, const Vec& v) {
    return ground_state(model, v).energy;
}

// Static density-density response chi_kl = d rho_k / d v_l from first-order
// perturbation theory (negative semidefinite; null vector = constant shifts).
// Unavailable when the ground state is degenerate.
inline bool density_response(const LatticeModel& model, const GroundState& gs, Mat& chi) {
    if (gs.degenerate) return false;
    const FockBasis basis = FockBasis::build(model.sites, model.particles);
    const int d = basis.dim();
    const int m = model.sites;
    // t(k, n) = <0| n_k |n>
    Mat t = Mat::Zero(m, d);
    for (int a = 0; a < d; ++a) {
        const std::uint32_t s = basis.states[a];
        for (int k = 0; k < m; ++k)
            if (s & (1u << k))
                for (int n = 0; n < d; ++n) t(k, n) += gs.evecs(a, 0) * gs.evecs(a, n);
    }
    chi = Mat::Zero(m, m);
    for (int n = 1; n < d; ++n) {
        const double denom = gs.evals[n] - gs.evals[0];
        if (denom <= 0.0) return false;
        chi -= (2.0 / denom) * (t.col(n) * t.col(n).transpose());
    }
    return true;
}

// E_eps = E - eps phi_{p*} on the potential side.
inline double regularized_energy(const LatticeModel& model, const Vec& v, double eps,
                                 double p) {
    SpaceSpec space(model.sites, p);
    return energy_E(model, v) - eps * phi_p(v, space.p_star());
}

// Superdifferential selection of E_eps: rho(v) - eps J_p^{-1}(v); the
// ensemble-averaged density is used on a degenerate multiplet.
inline Vec regularized_ground_density(const LatticeModel& model, const Vec& v, double eps,
                                      double p, double gap_tol = 1e-8,
                                      bool* degenerate = nullptr) {
    GroundState gs = ground_state(model, v, gap_tol);
    if (degenerate) *degenerate = gs.degenerate;
    return gs.density - eps * inverse_duality_map(v, p);
}

inline bool physical_density(const Vec& rho, int particles, double tol = 1e-9) {
    for (Eigen::Index k = 0; k < rho.size(); ++k)
        if (rho[k] < -tol || rho[k] > 1.0 + tol) return false;
    return std::abs(rho.sum() - particles) <= tol;
}

// Orthonormal basis of the zero-sum subspace (gauge: E(v + c 1) = E(v) + c N,
// so the ascent for the density transform is performed orthogonally to 1).
// Columns 2..m of the Householder reflector sending e_1 to 1/sqrt(m) do it.
inline Mat zero_sum_basis(int m) {
    Vec u = Vec::Constant(m, 1.0 / std::sqrt(double(m)));
    u[0] -= 1.0;
    Mat h = Mat::Identity(m, m) - (2.0 / u.squaredNorm()) * (u * u.transpose());
    return h.rightCols(m - 1);
}

// Density-to-value transform ("constrained search" functional):
//   F(rho) = sup_v { E(v) - <v, rho> },  +inf off the physical density set.
// Realized as conjugate_up over the capped box [-R, R]^M with the residual
// rho(v) - rho as supergradient and the response matrix for Newton steps,
// restricted to the zero-sum gauge.  A maximizer pinned at the box edge
// (densities at the boundary of the polytope, where the true maximizer runs
// away) is reported via the boundary flag; the value is then a finite lower
// bound for the true supremum.
struct LiebResult {
    double value = kGridInf;
    Vec potential;
    bool boundary = false;
    bool converged = true;
    long iterations = 0;
    double residual_l1 = 0.0;
};

struct LiebOptions {
    double box_radius = 20.0;
    double grad_tol_l1 = 1e-8;
    long max_iter = 100000;
    double gap_tol = 1e-8;
    Vec start;  // warm start for the maximizing potential
};

inline LiebResult lieb_F(const LatticeModel& model, const Vec& rho,
                         const LiebOptions& opts = {}) {
    model.validate();
    if (rho.size() != model.sites) throw std::invalid_argument("lieb_F: density dim mismatch");
    LiebResult res;
    if (!physical_density(rho, model.particles)) {
        res.value = kGridInf;
        return res;
    }
    const int m = model.sites;
    Mat basis = zero_sum_basis(m);
    ConcaveEval g = [&](const Vec& v, Vec* grad, Mat* hess, bool* hess_ok) {
        GroundState gs = ground_state(model, v, opts.gap_tol);
        if (grad) *grad = gs.density;
        if (hess) {
            Mat chi;
            *hess_ok = density_response(model, gs, chi);
            if (*hess_ok) *hess = chi;
        }
        return gs.energy;
    };
    AscentOptions aopts;
    aopts.scan_nodes_per_axis = 0;
    aopts.grad_tol_l1 = opts.grad_tol_l1;
    aopts.max_iter = opts.max_iter;
    aopts.tangent_basis = &basis;
    aopts.start = (opts.start.size() == m) ? opts.start : Vec::Zero(m);
    Vec lo = Vec::Constant(m, -opts.box_radius), hi = Vec::Constant(m, opts.box_radius);
    AscentResult asc = conjugate_up(g, rho, lo, hi, /*has_gradient=*/true, aopts);
    res.value = asc.value;
    res.potential = asc.maximizer;
    res.boundary = asc.boundary;
    res.converged = asc.converged;
    res.iterations = asc.iterations;
    res.residual_l1 = asc.grad_l1;
    return res;
}

// Tabulate F onto the simplex-slice grid, optionally through a file cache
// keyed by the model, spacing and ascent parameters.
struct LiebTabulation {
    GridFunctional grid;
    long boundary_nodes = 0;
    long unconverged_nodes = 0;
    bool from_cache = false;
};

inline LiebTabulation tabulate_lieb_F(const LatticeModel& model, double h,
                                      const LiebOptions& opts = {},
                                      const std::filesystem::path& cache_dir = {}) {
    model.validate();
    const std::string tag = "liebF|" + model.cache_tag() + "|h=" + fmt17(h) +
                            "|R=" + fmt17(opts.box_radius) +
                            "|tol=" + fmt17(opts.grad_tol_l1) + "|v1";
    LiebTabulation out;
    std::filesystem::path cache_file;
    if (!cache_dir.empty()) {
        cache_file = cache_dir / ("liebF_" + hex16(hash_fnv1a(tag)) + ".grid");
        if (std::filesystem::exists(cache_file)) {
            GridFunctional g = GridFunctional::load_file(cache_file);
            if (g.label() == tag) {
                out.grid = std::move(g);
                out.from_cache = true;
                return out;
            }
            // hash collision or stale format: fall through and rewrite
        }
    }

    GridFunctional grid = GridFunctional::simplex_slice(model.sites, model.particles, h, tag);
    LiebOptions node_opts = opts;
    Vec warm;  // previous node's maximizer; adjacent nodes differ little
    const long count = grid.node_count();
    for (long flat = 0; flat < count; ++flat) {
        Vec x = grid.embed(grid.node_param(flat));
        if (!grid.ambient_admissible(x)) {
            grid.value(flat) = kGridInf;
            continue;
        }
        node_opts.start = warm;
        LiebResult r = lieb_F(model, x, node_opts);
        grid.value(flat) = r.value;
        if (std::isfinite(r.value)) {
            warm = r.potential;
            if (r.boundary) ++out.boundary_nodes;
            if (!r.converged) ++out.unconverged_nodes;
        }
    }
    out.grid = std::move(grid);

    if (!cache_dir.empty()) {
        std::filesystem::create_directories(cache_dir);
        out.grid.save_file(cache_file);
    }
    return out;
}

// Exact inversion of the regularized potential-to-quasidensity map: find v
// with rho(v) - eps J_p^{-1}(v) = x by maximizing the strictly concave
//   Psi(v) = E(v) - eps phi_{p*}(v) - <v, x>,
// whose gradient is exactly that residual.  The -eps phi_{p*} term removes
// the gauge freedom, so the maximizer is unique; Newton steps use the
// response matrix plus the (diagonal) Jacobian of J_p^{-1}.
struct InversionResult {
    Vec potential;
    bool converged = false;
    long iterations = 0;
    double residual_linf = kGridInf;
    bool degenerate = false;   // a degenerate multiplet was met along the way
    double energy = 0.0;       // E(v) at the final potential
    Vec density;               // rho(v) at the final potential
};

inline InversionResult potential_from_quasidensity(const LatticeModel& model, const Vec& x,
                                                   double eps, double p, double tol = 1e-13,
                                                   const Vec* warm = nullptr,
                                                   long max_iter = 500) {
    model.validate();
    SpaceSpec space(model.sites, p);
    if (x.size() != model.sites)
        throw std::invalid_argument("potential_from_quasidensity: dim mismatch");
    if (!(eps > 0.0))
        throw std::invalid_argument("potential_from_quasidensity: eps must be > 0");
    const double ps = space.p_star();
    const int m = model.sites;

    InversionResult res;
    Vec v = (warm && warm->size() == m) ? *warm : Vec::Zero(m);

    auto psi = [&](const Vec& w, GroundState& gs) {
        gs = ground_state(model, w);
        return gs.energy - eps * phi_p(w, ps) - w.dot(x);
    };

    GroundState gs;
    double psi_v = psi(v, gs);
    const double stop = tol * (1.0 + x.lpNorm<Eigen::Infinity>());
    for (long k = 0; k < max_iter; ++k) {
        res.iterations = k;
        if (gs.degenerate) res.degenerate = true;
        Vec grad = gs.density - eps * inverse_duality_map(v, p) - x;
        res.residual_linf = grad.lpNorm<Eigen::Infinity>();
        if (res.residual_linf <= stop) {
            res.converged = true;
            break;
        }
        // Hessian of -Psi: eps D - chi, always positive definite (D from the
        // dual duality map, floored so the exponent p*-2 < 0 stays finite)
        Mat a = Mat::Zero(m, m);
        Mat chi;
        const bool have_chi = density_response(model, gs, chi);
        if (have_chi) a = -chi;
        for (int i = 0; i < m; ++i) {
            const double av = std::max(std::abs(v[i]), 1e-14);
            a(i, i) += (ps == 2.0) ? eps : eps * (ps - 1.0) * std::pow(av, ps - 2.0);
        }
        Vec d;
        Eigen::LDLT<Mat> ldlt(a);
        if (ldlt.info() == Eigen::Success) {
            d = ldlt.solve(grad);
            if (!(d.dot(grad) > 0.0)) d = grad;  // fall back to plain ascent
        } else {
            d = grad;
        }
        bool stepped = false;
        double t = 1.0;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            Vec vt = v + t * d;
            GroundState gst;
            const double pt = psi(vt, gst);
            // near the optimum the Psi improvement per step (~residual^2)
            // drops below double resolution, so Armijo alone stalls around
            // residual 1e-8; accept on residual decrease as well, which is
            // what Newton actually delivers in the quadratic basin
            const Vec grad_t = gst.density - eps * inverse_duality_map(vt, p) - x;
            const bool armijo = pt >= psi_v + 1e-4 * t * d.dot(grad);
            const bool residual_drop =
                grad_t.lpNorm<Eigen::Infinity>() <= (1.0 - 1e-4 * t) * res.residual_linf;
            if (armijo || residual_drop) {
                v = vt;
                gs = gst;
                psi_v = pt;
                stepped = true;
                break;
            }
        }
        if (!stepped) {
            // line search exhausted: residual is at the numerical floor
            break;
        }
    }
    res.potential = v;
    res.energy = gs.energy;
    res.density = gs.density;
    return res;
}

// Value/gradient/prox oracle for the regularized density functional
// F_eps = (E_eps)^ of one lattice model, served from the dual side:
// the maximizer v of E_eps(v) - <v,x> yields
//   F_eps(x) = E_eps(v) - <v,x>,  grad F_eps(x) = -v,  prox(x) = x + eps J^{-1}(v).
// Machine-precision accuracy at the cost of one small Newton solve per call;
// cross-validated in the tests against the brute-force grid route.
class RegularizedLieb {
  public:
    RegularizedLieb(LatticeModel model, double eps, double p)
        : model_(std::move(model)), eps_(eps), p_(p), space_(model_.sites, p) {
        model_.validate();
        if (!(eps_ > 0.0)) throw std::invalid_argument("RegularizedLieb: eps must be > 0");
    }

    struct Eval {
        double value = 0.0;
        Vec gradient;
        Vec prox;
        Vec potential;
        bool degenerate = false;
        bool converged = false;
        long iterations = 0;
    };

    Eval eval(const Vec& x) const {
        InversionResult inv = potential_from_quasidensity(model_, x, eps_, p_, tol_,
                                                          warm_.size() ? &warm_ : nullptr);
        warm_ = inv.potential;
        Eval e;
        e.converged = inv.converged;
        e.degenerate = inv.degenerate;
        e.iterations = inv.iterations;
        e.potential = inv.potential;
        e.value = inv.energy - eps_ * phi_p(inv.potential, space_.p_star()) -
                  inv.potential.dot(x);
        e.gradient = -inv.potential;
        e.prox = x + eps_ * inverse_duality_map(inv.potential, p_);
        return e;
    }

    void reset_warm_start() const { warm_.resize(0); }
    const LatticeModel& model() const { return model_; }
    double eps() const { return eps_; }
    double p() const { return p_; }

  private:
    LatticeModel model_;
    double eps_;
    double p_;
    SpaceSpec space_;
    double tol_ = 1e-13;
    mutable Vec warm_;
};

}  // namespace myksoda
