#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metromd/constraints.hpp"
#include "metromd/model.hpp"
#include "metromd/rng.hpp"
#include "metromd/thermostat.hpp"

using namespace metromd;

static SystemSpec make_spec(int n, int d, double beta, double m) {
    SystemSpec s;
    s.n_particles = n;
    s.dim = d;
    s.box_length = 10.0;
    s.beta = beta;
    s.mass = Eigen::VectorXd::Constant(n, m);
    return s;
}

TEST_CASE("decay and noise variance, frozen values") {
    // gamma = 1, h = 0.1, m = 1, beta = 1
    auto spec = make_spec(1, 1, 1.0, 1.0);
    auto params = OUParams::make(spec, 1.0, 0.1);
    CHECK(params.decay[0] == doctest::Approx(0.90483741803595957).epsilon(1e-15));
    CHECK(params.noise_std[0] * params.noise_std[0] ==
          doctest::Approx(0.18126924692201814).epsilon(1e-14));
}

TEST_CASE("update agrees with an Euler-Maruyama refinement") {
    // dp = -gamma p / m dt + sqrt(2 gamma / beta) dW, integrated with 1e4
    // explicit substeps: mean factor and variance must match the exact flow
    // within 1%.
    double gamma = 1.3, h = 0.7, m = 2.0, beta = 0.5;
    int n_sub = 10000;
    double dt = h / n_sub;
    double mean_factor = 1.0, var = 0.0;
    for (int k = 0; k < n_sub; ++k) {
        double a = 1.0 - gamma * dt / m;
        mean_factor *= a;
        var = a * a * var + (2.0 * gamma / beta) * dt;
    }
    auto spec = make_spec(1, 1, beta, m);
    auto params = OUParams::make(spec, gamma, h);
    CHECK(params.decay[0] == doctest::Approx(mean_factor).epsilon(0.01));
    CHECK(params.noise_std[0] * params.noise_std[0] == doctest::Approx(var).epsilon(0.01));
}

TEST_CASE("sampled moments match the advertised law") {
    double gamma = 0.8, h = 0.5, m = 1.5, beta = 2.0;
    auto spec = make_spec(1, 1, beta, m);
    auto params = OUParams::make(spec, gamma, h);
    RngStream rng(404);
    Eigen::VectorXd p(1), scratch(1);
    double p0 = 3.0;
    const int N = 400000;
    double s1 = 0.0, s2 = 0.0;
    for (int t = 0; t < N; ++t) {
        p[0] = p0;
        ou_step(params, rng, p, scratch);
        s1 += p[0];
        s2 += p[0] * p[0];
    }
    double mean = s1 / N;
    double var = s2 / N - mean * mean;
    CHECK(mean == doctest::Approx(params.decay[0] * p0).epsilon(0.005));
    CHECK(var ==
          doctest::Approx(params.noise_std[0] * params.noise_std[0]).epsilon(0.01));
}

TEST_CASE("semigroup identities of the exact flow") {
    auto spec = make_spec(3, 2, 1.7, 0.9);
    double gamma = 1.1;
    for (auto [h1, h2] : {std::pair{0.1, 0.2}, std::pair{0.05, 0.05}, std::pair{1.0, 0.3}}) {
        auto a = OUParams::make(spec, gamma, h1);
        auto b = OUParams::make(spec, gamma, h2);
        auto c = OUParams::make(spec, gamma, h1 + h2);
        for (int i = 0; i < spec.dof(); ++i) {
            CHECK(a.decay[i] * b.decay[i] == doctest::Approx(c.decay[i]).epsilon(1e-14));
            double comp = b.decay[i] * b.decay[i] * a.noise_std[i] * a.noise_std[i] +
                          b.noise_std[i] * b.noise_std[i];
            CHECK(comp == doctest::Approx(c.noise_std[i] * c.noise_std[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("gamma = 0 is the identity but still consumes draws") {
    auto spec = make_spec(2, 2, 1.0, 1.0);
    auto params = OUParams::make(spec, 0.0, 0.25);
    RngStream rng(9), ref(9);
    Eigen::VectorXd p(4), scratch(4);
    p << 1.5, -2.0, 0.25, 3.0;
    Eigen::VectorXd before = p;
    ou_step(params, rng, p, scratch);
    CHECK((p - before).lpNorm<Eigen::Infinity>() == 0.0);
    // stream advanced by exactly dof() gaussians
    for (int i = 0; i < 4; ++i) ref.gaussian();
    CHECK(rng.next_u64() == ref.next_u64());
}

TEST_CASE("strong friction limit resamples from the Maxwell law") {
    double m = 2.0, beta = 0.5;
    auto spec = make_spec(1, 1, beta, m);
    auto params = OUParams::make(spec, 1.0, 1e6);
    CHECK(params.decay[0] == 0.0);
    CHECK(params.noise_std[0] == doctest::Approx(std::sqrt(m / beta)).epsilon(1e-14));
}

TEST_CASE("constrained update: invariants hold sample by sample") {
    auto spec = make_spec(2, 2, 2.0, 1.0);
    DumbbellConstraints cons(1, 2, 10.0, 1.0);
    PhaseState s;
    s.q.resize(4);
    s.q << 1.0, 1.0, 2.0, 1.0;  // horizontal unit bond
    s.p.resize(4);
    s.p << 0.3, 0.5, 0.3, -0.5;  // tangency: relative momentum (0, 1) normal to... checked below
    // make tangent exactly
    project_to_manifold(spec, cons, s);
    RngStream rng(616);
    Eigen::VectorXd q0 = s.q;
    for (int t = 0; t < 2000; ++t) {
        constrained_ou_step(spec, cons, 0, 1.2, 0.4, rng, s);
        CHECK(std::abs(cons.tangency(spec, s.q, s.p, 0)) < 1e-12);
    }
    CHECK((s.q - q0).lpNorm<Eigen::Infinity>() == 0.0);  // positions untouched
}

TEST_CASE("constrained update: moments of the tangential law") {
    double m = 1.0, beta = 2.0, gamma = 1.5, h = 0.3;
    auto spec = make_spec(2, 2, beta, m);
    DumbbellConstraints cons(1, 2, 10.0, 1.0);
    PhaseState start;
    start.q.resize(4);
    start.q << 1.0, 1.0, 2.0, 1.0;  // bond along x
    start.p.resize(4);
    start.p << 0.4, 0.7, 0.4, -0.7;  // com drift + rotation, tangent by construction
    CHECK(std::abs(cons.tangency(spec, start.q, start.p, 0)) < 1e-14);

    double decay = std::exp(-gamma * h / m);
    double sig2 = m / beta * (1.0 - decay * decay);

    RngStream rng(2025);
    const int N = 200000;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(4, 4);
    for (int t = 0; t < N; ++t) {
        PhaseState s = start;
        constrained_ou_step(spec, cons, 0, gamma, h, rng, s);
        mean += s.p;
        cov += s.p * s.p.transpose();
    }
    mean /= N;
    cov = cov / N - mean * mean.transpose();

    CHECK((mean - decay * start.p).lpNorm<Eigen::Infinity>() < 0.01);
    // covariance = sig2 * P with P the tangent projection at q
    Eigen::MatrixXd P = constraint_projection(spec, cons, start.q, 0);
    CHECK((cov - sig2 * P).lpNorm<Eigen::Infinity>() < 0.01);
}

TEST_CASE("constrained update validates entry state") {
    auto spec = make_spec(2, 2, 1.0, 1.0);
    DumbbellConstraints cons(1, 2, 10.0, 1.0);
    RngStream rng(1);
    PhaseState s;
    s.q.resize(4);
    s.q << 1.0, 1.0, 2.5, 1.0;  // bond length 1.5: broken
    s.p = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(constrained_ou_step(spec, cons, 0, 1.0, 0.1, rng, s), std::logic_error);

    s.q << 1.0, 1.0, 2.0, 1.0;
    s.p << 1.0, 0.0, -1.0, 0.0;  // stretching momentum: not tangent
    CHECK_THROWS_AS(constrained_ou_step(spec, cons, 0, 1.0, 0.1, rng, s), std::logic_error);

    auto spec2 = spec;
    spec2.mass[1] = 3.0;
    s.p.setZero();
    CHECK_THROWS_AS(constrained_ou_step(spec2, cons, 0, 1.0, 0.1, rng, s),
                    std::invalid_argument);
}
