#include <catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <random>

#include "myksoda/lattice.hpp"

using namespace myksoda;

namespace {

LatticeModel two_site(double t = 1.0, double u = 0.0, int n = 1) {
    LatticeModel m;
    m.sites = 2;
    m.particles = n;
    m.hopping = t;
    m.interaction = u;
    return m;
}

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

Vec vec3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

// one fermion on two sites: E = (v0+v1)/2 - R,  R = sqrt(t^2 + d^2),
// d = (v0-v1)/2, density rho0 = (1 - d/R)/2
struct TwoSiteExact {
    double energy, rho0, rho1, gap, chi00;
    TwoSiteExact(double t, double v0, double v1) {
        const double d = 0.5 * (v0 - v1);
        const double r = std::sqrt(t * t + d * d);
        energy = 0.5 * (v0 + v1) - r;
        rho0 = 0.5 * (1.0 - d / r);
        rho1 = 1.0 - rho0;
        gap = 2.0 * r;
        chi00 = -t * t / (4.0 * r * r * r);
    }
};

}  // namespace

TEST_CASE("fock basis enumerates bitmasks in increasing order", "[lattice]") {
    FockBasis b32 = FockBasis::build(3, 2);
    REQUIRE(b32.dim() == 3);
    CHECK(b32.states == std::vector<std::uint32_t>{3, 5, 6});
    CHECK(b32.index_of(5) == 1);

    FockBasis b42 = FockBasis::build(4, 2);
    REQUIRE(b42.dim() == 6);
    CHECK(b42.states == std::vector<std::uint32_t>{3, 5, 6, 9, 10, 12});

    CHECK(FockBasis::build(4, 1).dim() == 4);
    CHECK(FockBasis::build(4, 4).dim() == 1);
    CHECK_THROWS_AS(b32.index_of(4), std::logic_error);
}

TEST_CASE("two-site hamiltonian matrix is the textbook 2x2", "[lattice]") {
    LatticeModel m = two_site(0.7);
    Mat h = build_hamiltonian(m, vec2(0.4, -0.2));
    REQUIRE(h.rows() == 2);
    // basis (01, 10) = fermion on site 0, fermion on site 1
    CHECK(h(0, 0) == Catch::Approx(0.4));
    CHECK(h(1, 1) == Catch::Approx(-0.2));
    CHECK(h(0, 1) == Catch::Approx(-0.7));
    CHECK(h(1, 0) == Catch::Approx(-0.7));

    CHECK_THROWS_AS(build_hamiltonian(m, vec3(0, 0, 0)), std::invalid_argument);
}

TEST_CASE("three-site chain at half filling: signs and interaction placement", "[lattice]") {
    LatticeModel m;
    m.sites = 3;
    m.particles = 2;
    m.hopping = 1.0;
    m.interaction = 2.0;
    m.lambda = 1.0;

    // basis (011, 101, 110); adjacent pairs only in 011 and 110
    Mat h = build_hamiltonian(m, Vec::Zero(3));
    Mat expect(3, 3);
    expect << 2.0, -1.0, 0.0,  //
        -1.0, 0.0, -1.0,       //
        0.0, -1.0, 2.0;
    CHECK((h - expect).cwiseAbs().maxCoeff() < 1e-14);

    // potential lands on the occupied sites of each basis state
    Mat hv = build_hamiltonian(m, vec3(0.1, 0.2, 0.4));
    CHECK(hv(0, 0) == Catch::Approx(2.0 + 0.1 + 0.2));
    CHECK(hv(1, 1) == Catch::Approx(0.1 + 0.4));
    CHECK(hv(2, 2) == Catch::Approx(2.0 + 0.2 + 0.4));

    // reference system drops the interaction but keeps everything else
    Mat h0 = build_hamiltonian(m.reference(), Vec::Zero(3));
    CHECK(h0(0, 0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(h0(0, 1) == Catch::Approx(-1.0));
}

TEST_CASE("ring topology adds the closing bond, except on two sites", "[lattice]") {
    LatticeModel chain3;
    chain3.sites = 3;
    CHECK(chain3.bonds().size() == 2);
    chain3.topology = LatticeModel::Topology::Ring;
    CHECK(chain3.bonds().size() == 3);

    LatticeModel ring2 = two_site();
    ring2.topology = LatticeModel::Topology::Ring;
    CHECK(ring2.bonds().size() == 1);
    Mat hc = build_hamiltonian(two_site(), vec2(0.3, -0.1));
    Mat hr = build_hamiltonian(ring2, vec2(0.3, -0.1));
    CHECK((hc - hr).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model validation rejects unusable parameters", "[lattice]") {
    LatticeModel m = two_site();
    m.sites = 1;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m = two_site();
    m.particles = 0;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m = two_site();
    m.particles = 3;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m = two_site();
    m.hopping = 0.0;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m = two_site();
    m.interaction = -1.0;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m = two_site();
    m.lambda = 1.5;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("two-site ground state matches the closed form", "[lattice]") {
    LatticeModel m = two_site();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int rep = 0; rep < 50; ++rep) {
        const double v0 = u(rng), v1 = u(rng);
        TwoSiteExact ex(1.0, v0, v1);
        GroundState gs = ground_state(m, vec2(v0, v1));
        CHECK(gs.energy == Catch::Approx(ex.energy).margin(1e-12));
        CHECK(gs.density[0] == Catch::Approx(ex.rho0).margin(1e-12));
        CHECK(gs.density[1] == Catch::Approx(ex.rho1).margin(1e-12));
        CHECK(gs.gap == Catch::Approx(ex.gap).margin(1e-12));
        CHECK_FALSE(gs.degenerate);
        CHECK(gs.multiplicity == 1);
        CHECK(energy_E(m, vec2(v0, v1)) == Catch::Approx(ex.energy).margin(1e-12));
    }
}

TEST_CASE("fully filled band is a single state", "[lattice]") {
    LatticeModel m = two_site(1.0, 3.0, 2);
    GroundState gs = ground_state(m, vec2(0.5, -0.3));
    // |11> is the whole Fock space: energy v0 + v1 + U, hopping inert
    CHECK(gs.energy == Catch::Approx(0.5 - 0.3 + 3.0).margin(1e-14));
    CHECK(gs.density[0] == Catch::Approx(1.0));
    CHECK(gs.density[1] == Catch::Approx(1.0));
    CHECK(std::isinf(gs.gap));
    CHECK(gs.multiplicity == 1);
}

TEST_CASE("half-filled three-site chain ground state", "[lattice]") {
    LatticeModel m;
    m.sites = 3;
    m.particles = 2;
    GroundState gs = ground_state(m, Vec::Zero(3));
    CHECK(gs.energy == Catch::Approx(-std::sqrt(2.0)).margin(1e-13));
    CHECK(gs.density[0] == Catch::Approx(0.75).margin(1e-13));
    CHECK(gs.density[1] == Catch::Approx(0.5).margin(1e-13));
    CHECK(gs.density[2] == Catch::Approx(0.75).margin(1e-13));
    CHECK(gs.density.sum() == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("four-site ring at quarter filling is degenerate", "[lattice]") {
    LatticeModel m;
    m.sites = 4;
    m.particles = 2;
    m.topology = LatticeModel::Topology::Ring;
    GroundState gs = ground_state(m, Vec::Zero(4));
    // single-particle levels -2t, 0, 0, 2t: filling (-2t, 0) twice over
    CHECK(gs.energy == Catch::Approx(-2.0).margin(1e-12));
    CHECK(gs.degenerate);
    CHECK(gs.multiplicity == 2);
    // ensemble average over the multiplet restores the uniform density
    for (int k = 0; k < 4; ++k) CHECK(gs.density[k] == Catch::Approx(0.5).margin(1e-12));

    Mat chi;
    CHECK_FALSE(density_response(m, gs, chi));
}

TEST_CASE("density response matches perturbation theory and finite differences", "[lattice]") {
    LatticeModel m = two_site();
    const Vec v = vec2(0.4, -0.2);
    GroundState gs = ground_state(m, v);
    Mat chi;
    REQUIRE(density_response(m, gs, chi));

    TwoSiteExact ex(1.0, 0.4, -0.2);
    CHECK(chi(0, 0) == Catch::Approx(ex.chi00).margin(1e-12));
    // symmetry, zero row sums (constant shifts do nothing), and the 2x2
    // structure chi = chi00 * [[1,-1],[-1,1]]
    CHECK(chi(0, 1) == Catch::Approx(-ex.chi00).margin(1e-12));
    CHECK((chi - chi.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((chi * Vec::Ones(2)).cwiseAbs().maxCoeff() < 1e-12);

    // central differences of the density on a three-site interacting chain
    LatticeModel m3;
    m3.sites = 3;
    m3.particles = 2;
    m3.interaction = 1.3;
    const Vec v3 = vec3(0.2, -0.4, 0.1);
    GroundState gs3 = ground_state(m3, v3);
    Mat chi3;
    REQUIRE(density_response(m3, gs3, chi3));
    const double h = 1e-5;
    for (int l = 0; l < 3; ++l) {
        Vec vp = v3, vm = v3;
        vp[l] += h;
        vm[l] -= h;
        Vec col = (ground_state(m3, vp).density - ground_state(m3, vm).density) / (2.0 * h);
        for (int k = 0; k < 3; ++k) CHECK(chi3(k, l) == Catch::Approx(col[k]).margin(1e-6));
    }
    // negative semidefinite
    Eigen::SelfAdjointEigenSolver<Mat> es(chi3);
    CHECK(es.eigenvalues().maxCoeff() < 1e-12);
}

TEST_CASE("potential-side energy is concave", "[lattice]") {
    LatticeModel m;
    m.sites = 3;
    m.particles = 2;
    m.interaction = 0.8;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 40; ++rep) {
        Vec a(3), b(3);
        for (int k = 0; k < 3; ++k) {
            a[k] = u(rng);
            b[k] = u(rng);
        }
        const double th = 0.3;
        const double lhs = energy_E(m, th * a + (1.0 - th) * b);
        const double rhs = th * energy_E(m, a) + (1.0 - th) * energy_E(m, b);
        CHECK(lhs >= rhs - 1e-12);
    }
}

TEST_CASE("regularized energy and its superdifferential selection", "[lattice]") {
    LatticeModel m = two_site();
    const Vec v = vec2(0.4, -0.2);
    TwoSiteExact ex(1.0, 0.4, -0.2);

    // p = 2: E - eps |v|^2/2 and rho - eps v
    const double e2 = regularized_energy(m, v, 0.1, 2.0);
    CHECK(e2 == Catch::Approx(ex.energy - 0.1 * 0.5 * v.squaredNorm()).margin(1e-12));
    Vec x2 = regularized_ground_density(m, v, 0.1, 2.0);
    CHECK(x2[0] == Catch::Approx(ex.rho0 - 0.1 * 0.4).margin(1e-12));
    CHECK(x2[1] == Catch::Approx(ex.rho1 + 0.1 * 0.2).margin(1e-12));

    // p = 3 (p* = 3/2): J_3^{-1}(v) = sign(v) sqrt(|v|)
    bool degen = true;
    Vec x3 = regularized_ground_density(m, v, 0.1, 3.0, 1e-8, &degen);
    CHECK_FALSE(degen);
    CHECK(x3[0] == Catch::Approx(ex.rho0 - 0.1 * std::sqrt(0.4)).margin(1e-12));
    CHECK(x3[1] == Catch::Approx(ex.rho1 + 0.1 * std::sqrt(0.2)).margin(1e-12));
    const double e3 = regularized_energy(m, v, 0.1, 3.0);
    const double phi_ps = (std::pow(0.4, 1.5) + std::pow(0.2, 1.5)) / 1.5;
    CHECK(e3 == Catch::Approx(ex.energy - 0.1 * phi_ps).margin(1e-12));
}

TEST_CASE("physical density test", "[lattice]") {
    CHECK(physical_density(vec2(0.3, 0.7), 1));
    CHECK(physical_density(vec2(1.0, 0.0), 1));
    CHECK_FALSE(physical_density(vec2(0.5, 0.2), 1));   // wrong particle count
    CHECK_FALSE(physical_density(vec2(1.2, -0.2), 1));  // out of [0,1]
}

TEST_CASE("zero-sum basis is orthonormal and orthogonal to constants", "[lattice]") {
    for (int m : {2, 3, 5}) {
        Mat b = zero_sum_basis(m);
        REQUIRE(b.rows() == m);
        REQUIRE(b.cols() == m - 1);
        CHECK((b.transpose() * b - Mat::Identity(m - 1, m - 1)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((b.transpose() * Vec::Ones(m)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("density-to-value transform on two sites: closed form", "[lattice][lieb]") {
    // one fermion, U irrelevant: F(rho) = -2 t sqrt(rho0 rho1)
    LatticeModel m = two_site(1.0);
    LiebResult r = lieb_F(m, vec2(0.3, 0.7));
    CHECK(r.converged);
    CHECK_FALSE(r.boundary);
    CHECK(r.value == Catch::Approx(-2.0 * std::sqrt(0.21)).margin(1e-9));
    // maximizing potential in the zero-sum gauge: (d, -d), d = s/sqrt(1-s^2)
    const double d = 0.4 / std::sqrt(1.0 - 0.16);
    CHECK(r.potential[0] == Catch::Approx(d).margin(1e-6));
    CHECK(r.potential[1] == Catch::Approx(-d).margin(1e-6));

    // near the corner the maximizer is large but still inside the box
    LiebResult rc = lieb_F(m, vec2(0.99, 0.01));
    CHECK(rc.converged);
    CHECK_FALSE(rc.boundary);
    CHECK(rc.value == Catch::Approx(-2.0 * std::sqrt(0.0099)).margin(1e-8));

    // at the corner itself the supremum runs away; the box pins it
    LiebResult re = lieb_F(m, vec2(1.0, 0.0));
    CHECK(re.boundary);
    CHECK(re.value < 0.0);
    CHECK(re.value > -0.05);  // 20 - sqrt(401) off the limiting value 0

    // off the density polytope the transform is +inf
    CHECK(std::isinf(lieb_F(m, vec2(1.2, -0.2)).value));
    CHECK(std::isinf(lieb_F(m, vec2(0.5, 0.2)).value));
}

TEST_CASE("density-to-value transform fixes the uniform chain point", "[lattice][lieb]") {
    LatticeModel m;
    m.sites = 3;
    m.particles = 2;
    LiebResult r = lieb_F(m, vec3(0.75, 0.5, 0.75));
    CHECK(r.converged);
    CHECK_FALSE(r.boundary);
    CHECK(r.value == Catch::Approx(-std::sqrt(2.0)).margin(1e-9));
    CHECK(r.potential.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("transform tabulation and its file cache", "[lattice][lieb]") {
    LatticeModel m = two_site();
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "myksoda-test-lattice-cache";
    fs::remove_all(dir);

    LiebTabulation t1 = tabulate_lieb_F(m, 0.1, {}, dir);
    CHECK_FALSE(t1.from_cache);
    REQUIRE(t1.grid.node_count() == 11);
    // value at rho = (0.5, 0.5) is E(0) = -2 t sqrt(1/4)
    bool found = false;
    for (long flat = 0; flat < t1.grid.node_count(); ++flat) {
        Vec y = t1.grid.embed(t1.grid.node_param(flat));
        if (y.size() == 2 && std::abs(y[0] - 0.5) < 1e-12 && std::abs(y[1] - 0.5) < 1e-12) {
            CHECK(t1.grid.value(flat) == Catch::Approx(-1.0).margin(1e-9));
            found = true;
        }
    }
    CHECK(found);
    // the two extreme admissible nodes sit where the maximizer is box-pinned
    CHECK(t1.boundary_nodes >= 2);

    LiebTabulation t2 = tabulate_lieb_F(m, 0.1, {}, dir);
    CHECK(t2.from_cache);
    REQUIRE(t2.grid.node_count() == t1.grid.node_count());
    for (long flat = 0; flat < t1.grid.node_count(); ++flat) {
        const double a = t1.grid.value(flat), b = t2.grid.value(flat);
        CHECK(((a == b) || (std::isinf(a) && std::isinf(b))));
    }
    CHECK(t2.grid.label() == t1.grid.label());
    fs::remove_all(dir);
}

TEST_CASE("dual-route regularized functional: roundtrip identities", "[lattice][regularized]") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (double p : {2.0, 3.0}) {
        for (int sites : {2, 3}) {
            LatticeModel m;
            m.sites = sites;
            m.particles = sites - 1;
            m.interaction = (sites == 3) ? 1.0 : 0.0;
            const double eps = 0.1;
            RegularizedLieb reg(m, eps, p);
            for (int rep = 0; rep < 10; ++rep) {
                Vec v0(sites);
                for (int k = 0; k < sites; ++k) v0[k] = u(rng);
                // choose x on the image of the regularized map, so the
                // maximizing potential is v0 by construction
                GroundState gs = ground_state(m, v0);
                Vec x = gs.density - eps * inverse_duality_map(v0, p);
                RegularizedLieb::Eval e = reg.eval(x);
                REQUIRE(e.converged);
                CHECK((e.potential - v0).lpNorm<Eigen::Infinity>() < 1e-9);
                CHECK((e.gradient + v0).lpNorm<Eigen::Infinity>() < 1e-9);
                CHECK((e.prox - gs.density).lpNorm<Eigen::Infinity>() < 1e-9);
                const double ps = p / (p - 1.0);
                const double want = gs.energy - eps * phi_p(v0, ps) - v0.dot(x);
                CHECK(e.value == Catch::Approx(want).margin(1e-9));
            }
        }
    }
}

TEST_CASE("dual-route value agrees with the infimal envelope", "[lattice][regularized]") {
    // independent check against the closed form F(q) = -2 sqrt(q0 q1):
    // value = min over physical q of F(q) + phi_p(x - q) / eps^{p-1},
    // attained at the reported prox
    LatticeModel m = two_site();
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u01(0.02, 0.98);
    for (double p : {2.0, 3.0}) {
        const double eps = 0.2;
        const double epw = std::pow(eps, p - 1.0);
        RegularizedLieb reg(m, eps, p);
        for (int rep = 0; rep < 8; ++rep) {
            Vec x = vec2(u01(rng), u01(rng));
            RegularizedLieb::Eval e = reg.eval(x);
            REQUIRE(e.converged);
            auto envelope = [&](const Vec& q) {
                return -2.0 * std::sqrt(q[0] * q[1]) + phi_p(x - q, p) / epw;
            };
            CHECK(e.value == Catch::Approx(envelope(e.prox)).margin(1e-8));
            for (int trial = 0; trial < 40; ++trial) {
                const double q0 = u01(rng);
                CHECK(e.value <= envelope(vec2(q0, 1.0 - q0)) + 1e-9);
            }
        }
    }
}

TEST_CASE("dual route flags degenerate multiplets", "[lattice][regularized]") {
    LatticeModel m;
    m.sites = 4;
    m.particles = 2;
    m.topology = LatticeModel::Topology::Ring;
    RegularizedLieb reg(m, 0.1, 2.0);
    // x = rho(0) = uniform: the maximizer is v = 0, met degenerately
    RegularizedLieb::Eval e = reg.eval(Vec::Constant(4, 0.5));
    CHECK(e.converged);
    CHECK(e.degenerate);
    CHECK(e.potential.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("inversion of the regularized map: argument checks and warm start", "[lattice]") {
    LatticeModel m = two_site();
    CHECK_THROWS_AS(potential_from_quasidensity(m, vec3(0, 0, 0), 0.1, 2.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(potential_from_quasidensity(m, vec2(0.4, 0.6), 0.0, 2.0),
                    std::invalid_argument);

    RegularizedLieb reg(m, 0.1, 2.0);
    const Vec x = vec2(0.35, 0.62);
    RegularizedLieb::Eval e1 = reg.eval(x);
    RegularizedLieb::Eval e2 = reg.eval(x);  // warm-started second call
    reg.reset_warm_start();
    RegularizedLieb::Eval e3 = reg.eval(x);
    REQUIRE(e1.converged);
    CHECK((e1.potential - e2.potential).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((e1.potential - e3.potential).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK(e2.value == Catch::Approx(e1.value).margin(1e-12));
}
