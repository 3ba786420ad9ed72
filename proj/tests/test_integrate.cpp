#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "metromd/integrate.hpp"
#include "metromd/model.hpp"
#include "metromd/potential.hpp"

using namespace metromd;

namespace {

SystemSpec make_spec(int n, int d, double box, double beta, double m) {
    SystemSpec s;
    s.n_particles = n;
    s.dim = d;
    s.box_length = box;
    s.beta = beta;
    s.mass = Eigen::VectorXd::Constant(n, m);
    return s;
}

std::vector<int> full_set(int n) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = i;
    return v;
}

bool same_bits(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

bool same_bits(const PhaseState& a, const PhaseState& b) {
    return same_bits(a.q, b.q) && same_bits(a.p, b.p);
}

PhaseState random_fluid_state(const SystemSpec& spec, std::uint64_t seed) {
    RngStream rng(seed);
    PhaseState s;
    s.q.resize(spec.dof());
    lattice_init(spec, s.q);
    for (int i = 0; i < spec.dof(); ++i)
        s.q[i] = wrap_scalar(s.q[i] + 0.05 * rng.gaussian(), spec.box_length);
    s.p.resize(spec.dof());
    sample_maxwell(spec, rng, s.p);
    return s;
}

}  // namespace

TEST_CASE("free flight: drift, wrap, momenta untouched") {
    auto spec = make_spec(2, 2, 5.0, 1.0, 2.0);
    ZeroPotential pot(2);
    PhaseState s;
    s.q = Eigen::Vector4d(4.8, 1.0, 2.0, 3.0);
    s.p = Eigen::Vector4d(10.0, -1.0, 0.5, 0.0);
    auto set = full_set(2);
    auto out = verlet_substep(spec, pot, set, 0.1, s);
    CHECK(out.q[0] == doctest::Approx(0.3).epsilon(1e-14));  // 4.8 + 0.5 wraps
    CHECK(out.q[1] == doctest::Approx(0.95).epsilon(1e-14));
    CHECK(out.q[2] == doctest::Approx(2.025).epsilon(1e-14));
    CHECK(out.q[3] == 3.0);
    CHECK(same_bits(out.p, s.p));
}

TEST_CASE("two-body step matches a hand-coded reference") {
    // independent arithmetic: pow-based pair force, explicit kick/drift/kick
    const double box = 20.0, r_cut = 2.5, h = 0.02, m = 1.5;
    auto spec = make_spec(2, 2, box, 1.0, m);
    auto pot = LennardJonesFluid::truncated(2, 2, box, r_cut);
    PhaseState s;
    s.q.resize(4);
    s.q << 9.0, 10.0, 11.2, 10.0;
    s.p.resize(4);
    s.p << 0.3, -0.2, -0.1, 0.5;

    auto pair_force = [&](const Eigen::Vector2d& qa, const Eigen::Vector2d& qb) {
        double r = (qa - qb).norm();
        double c = r < r_cut ? 48.0 * std::pow(r, -14.0) - 24.0 * std::pow(r, -8.0) : 0.0;
        return Eigen::Vector2d(c * (qa - qb));
    };
    Eigen::Vector2d qa = s.q.head<2>(), qb = s.q.tail<2>();
    Eigen::Vector2d pa = s.p.head<2>(), pb = s.p.tail<2>();
    Eigen::Vector2d f = pair_force(qa, qb);
    pa += 0.5 * h * f;
    pb -= 0.5 * h * f;
    qa += (h / m) * pa;
    qb += (h / m) * pb;
    f = pair_force(qa, qb);
    pa += 0.5 * h * f;
    pb -= 0.5 * h * f;

    auto set = full_set(2);
    auto out = verlet_substep(spec, pot, set, h, s);
    CHECK(out.q[0] == doctest::Approx(qa[0]).epsilon(1e-13));
    CHECK(out.q[1] == doctest::Approx(qa[1]).epsilon(1e-13));
    CHECK(out.q[2] == doctest::Approx(qb[0]).epsilon(1e-13));
    CHECK(out.q[3] == doctest::Approx(qb[1]).epsilon(1e-13));
    CHECK(out.p[0] == doctest::Approx(pa[0]).epsilon(1e-13));
    CHECK(out.p[1] == doctest::Approx(pa[1]).epsilon(1e-13));
    CHECK(out.p[2] == doctest::Approx(pb[0]).epsilon(1e-13));
    CHECK(out.p[3] == doctest::Approx(pb[1]).epsilon(1e-13));
}

TEST_CASE("scalar cosine well matches a hand iteration") {
    const double box = 5.0, h = 0.05, m = 2.0;
    auto spec = make_spec(1, 1, box, 1.0, m);
    CosineWell pot(1, 1, box);
    double q = 1.3, p = 0.7;
    const double w = 2.0 * std::numbers::pi / box;
    auto force = [&](double x) { return -w * std::sin(w * x); };
    PhaseState s;
    s.q = Eigen::VectorXd::Constant(1, q);
    s.p = Eigen::VectorXd::Constant(1, p);
    auto set = full_set(1);
    for (int t = 0; t < 10; ++t) {
        p += 0.5 * h * force(q);
        q += (h / m) * p;
        p += 0.5 * h * force(q);
        s = verlet_substep(spec, pot, set, h, s);
    }
    CHECK(s.q[0] == doctest::Approx(q).epsilon(1e-13));
    CHECK(s.p[0] == doctest::Approx(p).epsilon(1e-13));
}

TEST_CASE("acceptance probability spot values") {
    CHECK(accept_probability(0.0, 1.0) == 1.0);
    CHECK(accept_probability(-3.5, 1.0) == 1.0);
    CHECK(accept_probability(1.0, 1.0) ==
          doctest::Approx(0.36787944117144233).epsilon(1e-15));
    CHECK(accept_probability(0.5, 2.0) ==
          doctest::Approx(0.36787944117144233).epsilon(1e-15));
    CHECK(accept_probability(std::numeric_limits<double>::quiet_NaN(), 1.0) == 0.0);
    CHECK(accept_probability(std::numeric_limits<double>::infinity(), 1.0) == 0.0);
}

TEST_CASE("blow-up detector") {
    CHECK(!blew_up(123.0));
    CHECK(!blew_up(1e10));
    CHECK(!blew_up(-5.0));
    CHECK(blew_up(1.0000001e10));
    CHECK(blew_up(std::numeric_limits<double>::infinity()));
    CHECK(blew_up(std::numeric_limits<double>::quiet_NaN()));
}

TEST_CASE("proposal maps are time reversible") {
    auto flip = [](PhaseState s) {
        s.p = -s.p;
        return s;
    };
    auto check_roundtrip = [](const PhaseState& a, const PhaseState& b) {
        CHECK((a.q - b.q).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((a.p - b.p).cwiseAbs().maxCoeff() < 1e-10);
    };

    SUBCASE("single rate") {
        auto spec = make_spec(5, 2, 4.0, 1.0, 1.0);
        auto pot = LennardJonesFluid::truncated(5, 2, 4.0, 1.8);
        auto s = random_fluid_state(spec, 11);
        auto set = full_set(5);
        auto forward = verlet_substep(spec, pot, set, 0.01, s);
        auto back = flip(verlet_substep(spec, pot, set, 0.01, flip(forward)));
        check_roundtrip(back, s);
    }
    SUBCASE("multi rate") {
        auto spec = make_spec(5, 2, 4.0, 1.0, 1.0);
        LJSplit lj(5, 2, 4.0, 1.2, 1.8);
        auto s = random_fluid_state(spec, 12);
        auto set = full_set(5);
        auto forward = respa_substep(spec, lj.split, set, 0.01, 4, s);
        auto back = flip(respa_substep(spec, lj.split, set, 0.01, 4, flip(forward)));
        check_roundtrip(back, s);
    }
    SUBCASE("constrained") {
        auto spec = make_spec(4, 2, 8.0, 1.0, 1.0);
        DumbbellConstraints cons(2, 2, 8.0, 1.0);
        auto pot = LennardJonesFluid::truncated(4, 2, 8.0, 2.5, cons.bonded_pairs());
        PhaseState s;
        s.q.resize(8);
        s.q << 2.0, 2.0, 3.0, 2.0, 5.0, 5.0, 5.0, 6.0;
        s.p.resize(8);
        RngStream rng(13);
        sample_maxwell(spec, rng, s.p);
        project_to_manifold(spec, cons, s);
        for (int j = 0; j < 2; ++j) {
            auto forward = rattle_substep(spec, pot, cons, j, 0.01, {}, s);
            REQUIRE(forward.converged);
            auto mirrored = flip(forward.state);
            auto back = rattle_substep(spec, pot, cons, j, 0.01, {}, mirrored);
            REQUIRE(back.converged);
            check_roundtrip(flip(back.state), s);
        }
    }
}

TEST_CASE("proposal maps preserve phase space volume") {
    auto spec = make_spec(2, 2, 20.0, 1.0, 1.3);
    auto pot = LennardJonesFluid::truncated(2, 2, 20.0, 2.5);
    LJSplit lj(2, 2, 20.0, 1.8, 2.5);
    PhaseState s;
    s.q.resize(4);
    s.q << 9.0, 10.0, 11.2, 10.3;
    s.p.resize(4);
    s.p << 0.3, -0.2, -0.1, 0.5;
    auto set = full_set(2);

    auto jac_det = [&](auto&& map) {
        const int n = 8;
        Eigen::MatrixXd jac(n, n);
        const double delta = 1e-5;
        for (int j = 0; j < n; ++j) {
            PhaseState lo = s, hi = s;
            (j < 4 ? hi.q[j] : hi.p[j - 4]) += delta;
            (j < 4 ? lo.q[j] : lo.p[j - 4]) -= delta;
            PhaseState fh = map(hi), fl = map(lo);
            for (int i = 0; i < n; ++i) {
                double dh = (i < 4 ? fh.q[i] : fh.p[i - 4]) - (i < 4 ? fl.q[i] : fl.p[i - 4]);
                jac(i, j) = dh / (2.0 * delta);
            }
        }
        return jac.fullPivLu().determinant();
    };

    double det_v = jac_det([&](const PhaseState& in) { return verlet_substep(spec, pot, set, 0.02, in); });
    CHECK(det_v == doctest::Approx(1.0).epsilon(1e-6));
    double det_r = jac_det(
        [&](const PhaseState& in) { return respa_substep(spec, lj.split, set, 0.02, 3, in); });
    CHECK(det_r == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("multi-rate with a zero fast part degenerates to single rate, bitwise") {
    auto spec = make_spec(6, 2, 5.0, 1.0, 1.0);
    auto pot = LennardJonesFluid::truncated(6, 2, 5.0, 2.0);
    ZeroPotential zero(2);
    PotentialSplit split(zero, pot);
    auto s = random_fluid_state(spec, 21);

    SUBCASE("substeps") {
        auto whole = full_set(6);
        CHECK(same_bits(respa_substep(spec, split, whole, 0.02, 1, s),
                        verlet_substep(spec, pot, whole, 0.02, s)));
        std::vector<int> one = {2};
        CHECK(same_bits(respa_substep(spec, split, one, 0.02, 1, s),
                        verlet_substep(spec, pot, one, 0.02, s)));
    }
    SUBCASE("whole chains") {
        for (auto part : {Partition::trivial(6), Partition::per_particle(6)}) {
            Integrator a(spec, part, pot, Proposal::verlet(0.05), 1.0);
            Integrator b(spec, part, split, Proposal::respa(0.05, 1), 1.0);
            PhaseState sa = s, sb = s;
            RngStream ta(7), ma(8), tb(7), mb(8);
            for (int t = 0; t < 50; ++t) {
                auto ra = a.step(sa, ta, ma);
                auto rb = b.step(sb, tb, mb);
                CHECK(ra.accepted == rb.accepted);
                REQUIRE(same_bits(sa, sb));
            }
        }
    }
}

TEST_CASE("acceptance is a no-op on a free chain") {
    // zero potential: every defect is exactly zero, so the patched chain and
    // the unpatched chain follow identical paths from the same noise stream
    auto spec = make_spec(3, 2, 5.0, 1.0, 1.0);
    ZeroPotential pot(2);
    auto part = Partition::per_particle(3);
    Integrator a(spec, part, pot, Proposal::verlet(0.1), 2.0);
    Integrator b(spec, part, pot, Proposal::verlet(0.1), 2.0);
    auto s = random_fluid_state(spec, 31);
    PhaseState sa = s, sb = s;
    RngStream ta(5), ma(6), tb(5);
    for (int t = 0; t < 20; ++t) {
        auto rec = a.step(sa, ta, ma);
        CHECK(rec.accepted == rec.proposed);
        b.step_unpatched(sb, tb);
        REQUIRE(same_bits(sa, sb));
    }
}

TEST_CASE("certain rejection flips momenta exactly and freezes positions") {
    // head-on collision proposal lands deep in the core: defect ~ 1e11, so
    // the acceptance probability underflows to exactly zero
    auto spec = make_spec(2, 1, 20.0, 1.0, 1.0);
    auto pot = LennardJonesFluid::truncated(2, 1, 20.0, 2.5);
    PhaseState s;
    s.q = Eigen::Vector2d(4.0, 5.0);
    s.p = Eigen::Vector2d(8.0, -8.0);

    SUBCASE("one set") {
        Integrator chain(spec, Partition::trivial(2), pot, Proposal::verlet(0.1), 0.0);
        PhaseState t = s;
        RngStream thermo(1), metro(2);
        auto rec = chain.step(t, thermo, metro);
        CHECK(rec.accepted == 0);
        CHECK(same_bits(t.q, s.q));
        Eigen::VectorXd flipped = -s.p;
        CHECK(same_bits(t.p, flipped));
    }
    SUBCASE("per-particle sets") {
        Integrator chain(spec, Partition::per_particle(2), pot, Proposal::verlet(0.1), 0.0);
        PhaseState t = s;
        RngStream thermo(1), metro(2);
        auto rec = chain.step(t, thermo, metro);
        CHECK(rec.accepted == 0);
        CHECK(same_bits(t.q, s.q));
        Eigen::VectorXd flipped = -s.p;
        CHECK(same_bits(t.p, flipped));
    }
}

TEST_CASE("whole-system energy reuse never changes the chain") {
    auto spec = make_spec(6, 2, 5.0, 1.0, 1.0);
    auto pot = LennardJonesFluid::truncated(6, 2, 5.0, 2.0);
    auto part = Partition::trivial(6);
    Integrator warm(spec, part, pot, Proposal::verlet(0.05), 1.0);
    auto s = random_fluid_state(spec, 41);
    PhaseState sa = s, sb = s;
    RngStream ta(9), ma(10), tb(9), mb(10);
    for (int t = 0; t < 30; ++t) {
        warm.step(sa, ta, ma);
        Integrator cold(spec, part, pot, Proposal::verlet(0.05), 1.0);  // empty cache
        cold.step(sb, tb, mb);
        REQUIRE(same_bits(sa, sb));
    }
}

TEST_CASE("local energy defects agree with the full Hamiltonian") {
    SUBCASE("single rate, per particle") {
        auto spec = make_spec(5, 2, 4.0, 1.0, 1.0);
        auto pot = LennardJonesFluid::truncated(5, 2, 4.0, 1.8);
        Integrator chain(spec, Partition::per_particle(5), pot, Proposal::verlet(0.05), 1.0);
        chain.set_paranoid(true);
        auto s = random_fluid_state(spec, 51);
        RngStream thermo(1), metro(2);
        for (int t = 0; t < 50; ++t) chain.step(s, thermo, metro);
        CHECK(std::isfinite(hamiltonian(spec, s, pot)));
    }
    SUBCASE("multi rate") {
        auto spec = make_spec(5, 2, 4.0, 1.0, 1.0);
        LJSplit lj(5, 2, 4.0, 1.2, 1.8);
        Integrator chain(spec, Partition::per_particle(5), lj.split, Proposal::respa(0.05, 3),
                         1.0);
        chain.set_paranoid(true);
        auto s = random_fluid_state(spec, 52);
        RngStream thermo(3), metro(4);
        for (int t = 0; t < 50; ++t) chain.step(s, thermo, metro);
        CHECK(std::isfinite(hamiltonian(spec, s, lj.split)));
    }
    SUBCASE("constrained") {
        auto spec = make_spec(4, 2, 8.0, 1.0, 1.0);
        DumbbellConstraints cons(2, 2, 8.0, 1.0);
        auto pot = LennardJonesFluid::truncated(4, 2, 8.0, 2.5, cons.bonded_pairs());
        PhaseState s;
        s.q.resize(8);
        s.q << 2.0, 2.0, 3.0, 2.0, 5.0, 5.0, 5.0, 6.0;
        s.p.resize(8);
        RngStream init(5);
        sample_maxwell(spec, init, s.p);
        project_to_manifold(spec, cons, s);
        Integrator chain(spec, Partition::per_dumbbell(2), pot, cons, Proposal::rattle(0.02),
                         1.0);
        chain.set_paranoid(true);
        RngStream thermo(6), metro(7);
        for (int t = 0; t < 50; ++t) {
            auto rec = chain.step(s, thermo, metro);
            CHECK(rec.solver_failures == 0);
        }
        CHECK(cons.max_abs_value(s.q) < 1e-9);
        CHECK(cons.max_abs_tangency(spec, s.q, s.p) < 1e-9);
    }
}

TEST_CASE("rigid pair under no forces rotates at fixed bond length") {
    auto spec = make_spec(2, 2, 10.0, 1.0, 1.0);
    DumbbellConstraints cons(1, 2, 10.0, 1.0);
    ZeroPotential pot(2);
    const double v = 0.8;

    auto run = [&](int steps, double total_time) {
        PhaseState s;
        s.q.resize(4);
        s.q << 4.5, 5.0, 5.5, 5.0;
        s.p.resize(4);
        s.p << 0.0, v, 0.0, -v;
        double h = total_time / steps;
        double max_g = 0.0, max_t = 0.0;
        for (int t = 0; t < steps; ++t) {
            auto out = rattle_substep(spec, pot, cons, 0, h, {}, s);
            REQUIRE(out.converged);
            s = out.state;
            max_g = std::max(max_g, cons.max_abs_value(s.q));
            max_t = std::max(max_t, cons.max_abs_tangency(spec, s.q, s.p));
        }
        CHECK(max_g < 5e-12);
        CHECK(max_t < 1e-11);
        return s;
    };

    // exact solution: bond direction angle pi - 2 v t, center fixed
    auto exact_bond = [&](double t) {
        double a = std::numbers::pi - 2.0 * v * t;
        return Eigen::Vector2d(std::cos(a), std::sin(a));
    };
    auto bond_err = [&](const PhaseState& s, double t) {
        Eigen::Vector2d d(min_image(s.q[0] - s.q[2], 10.0), min_image(s.q[1] - s.q[3], 10.0));
        return (d - exact_bond(t)).norm();
    };

    auto coarse = run(50, 0.5);
    auto fine = run(100, 0.5);
    double e1 = bond_err(coarse, 0.5), e2 = bond_err(fine, 0.5);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));  // second order in h

    // center of the pair stays put
    CHECK(coarse.q[0] + coarse.q[2] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(coarse.q[1] + coarse.q[3] == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("position solve failure rejects without consuming an acceptance draw") {
    // relative momentum perpendicular to the bond is too large for any
    // multiplier to restore the bond length: the solve cannot converge
    auto spec = make_spec(2, 2, 10.0, 1.0, 1.0);
    DumbbellConstraints cons(1, 2, 10.0, 1.0);
    ZeroPotential pot(2);
    PhaseState s;
    s.q.resize(4);
    s.q << 4.5, 5.0, 5.5, 5.0;
    s.p.resize(4);
    s.p << 0.0, 50.0, 0.0, -50.0;

    auto out = rattle_substep(spec, pot, cons, 0, 0.1, {}, s);
    CHECK(!out.converged);
    CHECK(same_bits(out.state, s));

    Integrator chain(spec, Partition::per_dumbbell(1), pot, cons, Proposal::rattle(0.1), 0.0);
    PhaseState t = s;
    RngStream thermo(1), metro(2);
    RngStream metro_probe = metro;
    auto rec = chain.step(t, thermo, metro);
    CHECK(rec.solver_failures == 1);
    CHECK(rec.accepted == 0);
    CHECK(same_bits(t.q, s.q));
    // elementwise: the friction step at gamma 0 turns a -0.0 into +0.0
    CHECK((t.p.array() == (-s.p).array()).all());
    CHECK(metro.uniform() == metro_probe.uniform());  // no draw was taken
}

TEST_CASE("chains are bitwise deterministic in their seeds") {
    auto spec = make_spec(5, 2, 4.0, 1.0, 1.0);
    auto pot = LennardJonesFluid::truncated(5, 2, 4.0, 1.8);
    auto part = Partition::per_particle(5);
    auto s = random_fluid_state(spec, 61);

    auto run = [&](std::uint64_t thermo_seed, std::uint64_t metro_seed) {
        Integrator chain(spec, part, pot, Proposal::verlet(0.05), 1.0);
        PhaseState t = s;
        RngStream thermo(thermo_seed), metro(metro_seed);
        for (int k = 0; k < 40; ++k) chain.step(t, thermo, metro);
        return t;
    };
    CHECK(same_bits(run(1, 2), run(1, 2)));
    CHECK(!same_bits(run(1, 2), run(1, 3)));
}

TEST_CASE("step records") {
    auto spec = make_spec(4, 2, 4.0, 1.0, 1.0);
    auto pot = LennardJonesFluid::truncated(4, 2, 4.0, 1.8);
    Integrator chain(spec, Partition::per_particle(4), pot, Proposal::verlet(0.05), 1.0);
    auto s = random_fluid_state(spec, 71);
    RngStream thermo(1), metro(2);
    for (int t = 0; t < 25; ++t) {
        auto rec = chain.step(s, thermo, metro);
        CHECK(rec.proposed == 4);
        CHECK(rec.accepted >= 0);
        CHECK(rec.accepted <= 4);
        CHECK(rec.solver_failures == 0);
        CHECK(std::isfinite(rec.mean_delta_h));
    }
}

TEST_CASE("construction rejects inconsistent setups") {
    auto spec = make_spec(4, 2, 8.0, 1.0, 1.0);
    auto pot = LennardJonesFluid::truncated(4, 2, 8.0, 2.5);
    DumbbellConstraints cons(2, 2, 8.0, 1.0);
    LJSplit lj(4, 2, 8.0, 1.5, 2.5);
    auto part = Partition::per_particle(4);

    CHECK_THROWS_AS(Integrator(spec, part, pot, Proposal::verlet(0.0), 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(Integrator(spec, part, pot, Proposal::verlet(0.1), -1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(Integrator(spec, part, pot, Proposal::respa(0.1, 2), 1.0),
                    std::invalid_argument);  // no split supplied
    CHECK_THROWS_AS(Integrator(spec, part, lj.split, Proposal::verlet(0.1), 1.0),
                    std::invalid_argument);  // split implies multi rate
    CHECK_THROWS_AS(Integrator(spec, part, lj.split, Proposal::respa(0.1, 0), 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(Integrator(spec, part, pot, cons, Proposal::rattle(0.1), 1.0),
                    std::invalid_argument);  // needs the bonded-pair partition
    CHECK_THROWS_AS(
        Integrator(spec, Partition::per_dumbbell(1), pot, cons, Proposal::rattle(0.1), 1.0),
        std::invalid_argument);  // partition must cover the system
    auto bad = make_spec(3, 2, 8.0, 1.0, 1.0);
    CHECK_THROWS_AS(Integrator(bad, part, pot, Proposal::verlet(0.1), 1.0),
                    std::invalid_argument);
}

TEST_CASE("large steps: unpatched chain diverges, patched chain stays bounded") {
    auto spec = make_spec(4, 2, 3.0, 1.0 / 0.728, 1.0);
    auto pot = LennardJonesFluid::truncated(4, 2, 3.0, 1.5);
    auto part = Partition::trivial(4);
    const double h = 0.5;

    PhaseState s0;
    s0.q.resize(8);
    lattice_init(spec, s0.q);
    RngStream init(3);
    s0.p.resize(8);
    sample_maxwell(spec, init, s0.p);

    Integrator raw(spec, part, pot, Proposal::verlet(h), 1.0);
    PhaseState s = s0;
    RngStream thermo(4);
    bool diverged = false;
    for (int t = 0; t < 5000 && !diverged; ++t) {
        raw.step_unpatched(s, thermo);
        diverged = blew_up(hamiltonian(spec, s, pot));
    }
    CHECK(diverged);

    Integrator patched(spec, part, pot, Proposal::verlet(h), 1.0);
    s = s0;
    RngStream thermo2(4), metro(5);
    double max_h = -1e300;
    for (int t = 0; t < 5000; ++t) {
        patched.step(s, thermo2, metro);
        max_h = std::max(max_h, hamiltonian(spec, s, pot));
    }
    CHECK(max_h < 1e3);
}
