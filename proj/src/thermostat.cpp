#include "metromd/thermostat.hpp"

#include <cmath>
#include <stdexcept>

namespace metromd {

OUParams OUParams::make(const SystemSpec& spec, double gamma, double h) {
    if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
    if (!(h > 0.0)) throw std::invalid_argument("h must be > 0");
    OUParams out;
    out.decay.resize(spec.dof());
    out.noise_std.resize(spec.dof());
    for (int i = 0; i < spec.n_particles; ++i) {
        double m = spec.mass[i];
        double d = std::exp(-gamma * h / m);
        double s = std::sqrt(m / spec.beta * (1.0 - d * d));
        for (int k = 0; k < spec.dim; ++k) {
            out.decay[i * spec.dim + k] = d;
            out.noise_std[i * spec.dim + k] = s;
        }
    }
    return out;
}

void ou_step(const OUParams& params, RngStream& rng, Eigen::Ref<Eigen::VectorXd> p,
             Eigen::Ref<Eigen::VectorXd> noise_scratch) {
    rng.fill_gaussian(noise_scratch);
    p.array() =
        params.decay.array() * p.array() + params.noise_std.array() * noise_scratch.array();
}

void constrained_ou_step(const SystemSpec& spec, const DumbbellConstraints& cons, int j,
                         double gamma, double h, RngStream& rng, PhaseState& s,
                         double entry_tol) {
    if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
    int d = cons.dim();
    int a = 2 * j, b = 2 * j + 1;
    double ma = spec.mass[a], mb = spec.mass[b];
    if (std::abs(ma - mb) > 1e-12 * ma)
        throw std::invalid_argument("constrained thermostat needs equal masses per dumbbell");

    if (std::abs(cons.value(s.q, j)) > entry_tol)
        throw std::logic_error("thermostat entered with a broken bond");
    if (std::abs(cons.tangency(spec, s.q, s.p, j)) > entry_tol)
        throw std::logic_error("thermostat entered with a non-tangent momentum");

    double m = ma;
    double decay = std::exp(-gamma * h / m);
    double sigma = std::sqrt(m / spec.beta * (1.0 - decay * decay));

    // unit bond direction; the tangent projection is I - u u^T per endpoint pair
    using SetVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 6, 1>;
    SetVec u(2 * d), pj(2 * d), xi(2 * d);
    cons.gradient(s.q, j, u);
    u /= u.norm();

    for (int k = 0; k < d; ++k) {
        pj[k] = s.p[a * d + k];
        pj[d + k] = s.p[b * d + k];
    }
    rng.fill_gaussian(xi);

    // exp(-cP) p + sigma P xi with P x = x - u (u.x)
    pj += (decay - 1.0) * (pj - u * u.dot(pj));
    pj += sigma * (xi - u * u.dot(xi));

    for (int k = 0; k < d; ++k) {
        s.p[a * d + k] = pj[k];
        s.p[b * d + k] = pj[d + k];
    }
}

}  // namespace metromd
