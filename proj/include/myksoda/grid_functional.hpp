#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "space.hpp"

namespace myksoda {

inline constexpr double kGridInf = std::numeric_limits<double>::infinity();

// Extended-real convex functional stored on a regular grid.  Two chart kinds:
//
//   Box:          the grid parametrizes a box of the ambient space directly.
//   SimplexSlice: densities of M sites at fixed particle number N; the grid
//                 runs over the first M-1 coordinates in [0,1] and the last
//                 coordinate is reconstructed as N - sum(u).  Nodes whose
//                 reconstructed coordinate leaves [0,1] are masked to +inf,
//                 so the finite region is the physical density polytope.
//
// Values may be +inf anywhere (extended-real).  Evaluation between nodes is
// multilinear and conservative: if any corner of the cell is +inf the cell
// evaluates to +inf.
class GridFunctional {
  public:
    enum class Chart { Box, SimplexSlice };

    static GridFunctional box(std::vector<double> lo, std::vector<double> hi,
                              std::vector<int> nodes, std::string label = "") {
        GridFunctional g;
        g.chart_ = Chart::Box;
        g.lo_ = std::move(lo);
        g.hi_ = std::move(hi);
        g.n_ = std::move(nodes);
        g.label_ = std::move(label);
        if (g.lo_.size() != g.hi_.size() || g.lo_.size() != g.n_.size() || g.lo_.empty())
            throw std::invalid_argument("GridFunctional::box: inconsistent axis specs");
        g.ambient_dim_ = static_cast<int>(g.lo_.size());
        g.init_axes();
        return g;
    }

    // h is the requested node spacing on [0, 1]; the actual spacing is
    // 1/round(1/h) so that 0 and 1 are exact nodes.
    static GridFunctional simplex_slice(int sites, int particles, double h,
                                        std::string label = "") {
        if (sites < 2)
            throw std::invalid_argument("GridFunctional::simplex_slice: need sites >= 2");
        if (particles < 1 || particles > sites)
            throw std::invalid_argument("GridFunctional::simplex_slice: need 1 <= N <= sites");
        if (!(h > 0.0) || h > 1.0)
            throw std::invalid_argument("GridFunctional::simplex_slice: bad spacing");
        GridFunctional g;
        g.chart_ = Chart::SimplexSlice;
        g.ambient_dim_ = sites;
        g.particles_ = particles;
        const int n = static_cast<int>(std::lround(1.0 / h)) + 1;
        g.lo_.assign(sites - 1, 0.0);
        g.hi_.assign(sites - 1, 1.0);
        g.n_.assign(sites - 1, n);
        g.label_ = std::move(label);
        g.init_axes();
        return g;
    }

    Chart chart() const { return chart_; }
    int ambient_dim() const { return ambient_dim_; }
    int param_dim() const { return static_cast<int>(n_.size()); }
    int particles() const { return particles_; }
    const std::string& label() const { return label_; }
    void set_label(std::string s) { label_ = std::move(s); }
    double lo(int axis) const { return lo_[axis]; }
    double hi(int axis) const { return hi_[axis]; }
    int nodes(int axis) const { return n_[axis]; }
    double spacing(int axis) const { return h_[axis]; }
    double min_spacing() const {
        double m = h_[0];
        for (double v : h_) m = std::min(m, v);
        return m;
    }

    long node_count() const { return static_cast<long>(values_.size()); }
    double value(long flat) const { return values_[static_cast<size_t>(flat)]; }
    double& value(long flat) { return values_[static_cast<size_t>(flat)]; }

    Vec node_param(long flat) const {
        const int r = param_dim();
        Vec u(r);
        for (int a = r - 1; a >= 0; --a) {
            const long i = flat % n_[a];
            flat /= n_[a];
            u[a] = lo_[a] + static_cast<double>(i) * h_[a];
        }
        return u;
    }

    Vec embed(const Vec& u) const {
        if (u.size() != param_dim())
            throw std::invalid_argument("GridFunctional::embed: param dim mismatch");
        if (chart_ == Chart::Box) return u;
        Vec x(ambient_dim_);
        x.head(param_dim()) = u;
        x[ambient_dim_ - 1] = static_cast<double>(particles_) - u.sum();
        return x;
    }

    // Whether an ambient point can carry a finite value at all (chart mask).
    bool ambient_admissible(const Vec& x, double tol = 1e-12) const {
        if (x.size() != ambient_dim_) return false;
        if (chart_ == Chart::Box) {
            for (int a = 0; a < ambient_dim_; ++a)
                if (x[a] < lo_[a] - tol || x[a] > hi_[a] + tol) return false;
            return true;
        }
        for (int k = 0; k < ambient_dim_; ++k)
            if (x[k] < -tol || x[k] > 1.0 + tol) return false;
        return std::abs(x.sum() - particles_) <= 1e-9;
    }

    void for_each_node(const std::function<void(long, const Vec&, const Vec&)>& fn) const {
        const long count = node_count();
        for (long flat = 0; flat < count; ++flat) {
            Vec u = node_param(flat);
            fn(flat, u, embed(u));
        }
    }

    // Tabulate f at every admissible node; masked nodes get +inf.
    void fill(const std::function<double(const Vec&)>& f) {
        const long count = node_count();
        for (long flat = 0; flat < count; ++flat) {
            Vec x = embed(node_param(flat));
            values_[static_cast<size_t>(flat)] = ambient_admissible(x) ? f(x) : kGridInf;
        }
    }

    // Multilinear interpolation in chart coordinates; +inf outside the chart
    // box or on cells touching a masked node.
    double eval_param(const Vec& u) const {
        const int r = param_dim();
        if (u.size() != r)
            throw std::invalid_argument("GridFunctional::eval_param: param dim mismatch");
        std::vector<long> base(r);
        std::vector<double> frac(r);
        for (int a = 0; a < r; ++a) {
            const double snap = 1e-9 * (1.0 + std::abs(hi_[a] - lo_[a]));
            if (u[a] < lo_[a] - snap || u[a] > hi_[a] + snap) return kGridInf;
            double t = (u[a] - lo_[a]) / h_[a];
            long i = static_cast<long>(std::floor(t));
            i = std::max(0L, std::min(i, static_cast<long>(n_[a]) - 2));
            base[a] = i;
            frac[a] = std::min(1.0, std::max(0.0, t - static_cast<double>(i)));
        }
        double acc = 0.0;
        const int corners = 1 << r;
        for (int c = 0; c < corners; ++c) {
            double w = 1.0;
            long flat = 0;
            for (int a = 0; a < r; ++a) {
                const int bit = (c >> a) & 1;
                w *= bit ? frac[a] : 1.0 - frac[a];
                flat = flat * n_[a] + (base[a] + bit);
            }
            const double v = values_[static_cast<size_t>(flat)];
            if (std::isinf(v)) {
                if (w > 1e-12) return kGridInf;
                continue;  // zero-weight corner may be masked without harm
            }
            acc += w * v;
        }
        return acc;
    }

    double eval_ambient(const Vec& x) const {
        if (x.size() != ambient_dim_)
            throw std::invalid_argument("GridFunctional::eval_ambient: dim mismatch");
        if (chart_ == Chart::Box) return eval_param(x);
        if (std::abs(x.sum() - particles_) > 1e-9) return kGridInf;
        for (int k = 0; k < ambient_dim_; ++k)
            if (x[k] < -1e-9 || x[k] > 1.0 + 1e-9) return kGridInf;
        return eval_param(x.head(param_dim()));
    }

    // Bounding box (in ambient coordinates) of the nodes holding finite
    // values; callers dilate this when they need to search off the domain.
    bool finite_bounding_box(Vec& lo, Vec& hi) const {
        lo = Vec::Constant(ambient_dim_, kGridInf);
        hi = Vec::Constant(ambient_dim_, -kGridInf);
        bool any = false;
        const long count = node_count();
        for (long flat = 0; flat < count; ++flat) {
            if (std::isinf(values_[static_cast<size_t>(flat)])) continue;
            Vec x = embed(node_param(flat));
            lo = lo.cwiseMin(x);
            hi = hi.cwiseMax(x);
            any = true;
        }
        return any;
    }

    long finite_node_count() const {
        long c = 0;
        for (double v : values_)
            if (!std::isinf(v)) ++c;
        return c;
    }

    // Midpoint convexity audit over sampled pairs of finite nodes.  The worst
    // violation of f(m) <= (f(a)+f(b))/2 is reported; tol is the caller's
    // noise allowance for tabulated values.
    struct ConvexityReport {
        bool convex = true;
        double worst_violation = 0.0;
        long checked = 0;
    };

    ConvexityReport check_midpoint_convexity(long samples, std::uint64_t seed,
                                             double tol = 1e-9) const {
        std::vector<long> finite;
        const long count = node_count();
        for (long flat = 0; flat < count; ++flat)
            if (!std::isinf(values_[static_cast<size_t>(flat)])) finite.push_back(flat);
        ConvexityReport rep;
        if (finite.size() < 2) return rep;
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<size_t> pick(0, finite.size() - 1);
        for (long s = 0; s < samples; ++s) {
            const long fa = finite[pick(rng)], fb = finite[pick(rng)];
            if (fa == fb) continue;
            const Vec ua = node_param(fa), ub = node_param(fb);
            const double fm = eval_param(0.5 * (ua + ub));
            if (std::isinf(fm)) continue;  // midpoint crosses a masked cell
            const double viol = fm - 0.5 * (value(fa) + value(fb));
            rep.worst_violation = std::max(rep.worst_violation, viol);
            ++rep.checked;
        }
        rep.convex = rep.worst_violation <= tol;
        return rep;
    }

    // --- serialization (structured text; %.17g round-trips doubles exactly)

    void save(std::ostream& os) const {
        os << "myksoda-grid 1\n";
        os << "label " << label_ << "\n";
        os << "kind " << (chart_ == Chart::Box ? "box" : "simplex") << "\n";
        os << "ambient " << ambient_dim_ << "\n";
        os << "param " << param_dim() << "\n";
        os << "particles " << particles_ << "\n";
        char buf[64];
        for (int a = 0; a < param_dim(); ++a) {
            os << "axis " << a;
            std::snprintf(buf, sizeof buf, " %.17g", lo_[a]);
            os << buf;
            std::snprintf(buf, sizeof buf, " %.17g", hi_[a]);
            os << buf << " " << n_[a] << "\n";
        }
        os << "values " << values_.size() << "\n";
        for (double v : values_) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << buf << "\n";
        }
        os << "end\n";
    }

    static GridFunctional load(std::istream& is) {
        auto fail = [](const std::string& what) -> GridFunctional& {
            throw std::runtime_error("GridFunctional::load: " + what);
        };
        std::string line, tag;
        if (!std::getline(is, line) || line != "myksoda-grid 1")
            fail("bad magic line '" + line + "'");
        GridFunctional g;
        if (!std::getline(is, line) || line.rfind("label ", 0) != 0) fail("missing label");
        g.label_ = line.substr(6);
        std::string kind;
        is >> tag >> kind;
        if (tag != "kind" || (kind != "box" && kind != "simplex")) fail("bad kind");
        g.chart_ = (kind == "box") ? Chart::Box : Chart::SimplexSlice;
        int param = 0;
        is >> tag >> g.ambient_dim_;
        if (tag != "ambient") fail("bad ambient");
        is >> tag >> param;
        if (tag != "param") fail("bad param");
        is >> tag >> g.particles_;
        if (tag != "particles") fail("bad particles");
        g.lo_.resize(param);
        g.hi_.resize(param);
        g.n_.resize(param);
        for (int a = 0; a < param; ++a) {
            int idx = 0;
            std::string slo, shi;
            is >> tag >> idx >> slo >> shi >> g.n_[a];
            if (tag != "axis" || idx != a) fail("bad axis record");
            g.lo_[a] = parse_double(slo);
            g.hi_[a] = parse_double(shi);
        }
        size_t count = 0;
        is >> tag >> count;
        if (tag != "values") fail("bad values header");
        g.values_.resize(count);
        std::string tok;
        for (size_t i = 0; i < count; ++i) {
            if (!(is >> tok)) fail("truncated values");
            g.values_[i] = parse_double(tok);
        }
        is >> tag;
        if (tag != "end") fail("missing end marker");
        g.init_axes(/*keep_values=*/true);
        return g;
    }

    void save_file(const std::filesystem::path& path) const {
        std::filesystem::path tmp = path;
        tmp += ".tmp";
        {
            std::ofstream os(tmp);
            if (!os) throw std::runtime_error("GridFunctional: cannot write " + tmp.string());
            save(os);
        }
        std::filesystem::rename(tmp, path);
    }

    static GridFunctional load_file(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("GridFunctional: cannot read " + path.string());
        return load(is);
    }

  private:
    static double parse_double(const std::string& tok) {
        // strtod handles "inf"/"-inf"/"nan", which stream extraction does not
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str())
            throw std::runtime_error("GridFunctional::load: bad number '" + tok + "'");
        return v;
    }

    void init_axes(bool keep_values = false) {
        h_.resize(n_.size());
        size_t count = 1;
        for (size_t a = 0; a < n_.size(); ++a) {
            if (n_[a] < 2)
                throw std::invalid_argument("GridFunctional: need >= 2 nodes per axis");
            if (!(hi_[a] > lo_[a]))
                throw std::invalid_argument("GridFunctional: need hi > lo per axis");
            h_[a] = (hi_[a] - lo_[a]) / static_cast<double>(n_[a] - 1);
            count *= static_cast<size_t>(n_[a]);
        }
        if (keep_values) {
            if (values_.size() != count)
                throw std::runtime_error("GridFunctional: value count does not match axes");
        } else {
            values_.assign(count, kGridInf);
        }
    }

    Chart chart_ = Chart::Box;
    int ambient_dim_ = 0;
    int particles_ = 0;
    std::vector<double> lo_, hi_;
    std::vector<int> n_;
    std::vector<double> h_;
    std::vector<double> values_;
    std::string label_;
};

}  // namespace myksoda
