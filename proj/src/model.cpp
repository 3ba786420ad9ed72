#include "metromd/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace metromd {

Eigen::VectorXd SystemSpec::mass_dof() const {
    Eigen::VectorXd m(dof());
    for (int i = 0; i < n_particles; ++i)
        for (int k = 0; k < dim; ++k) m[i * dim + k] = mass[i];
    return m;
}

Eigen::VectorXd SystemSpec::inv_mass_dof() const {
    return mass_dof().cwiseInverse();
}

void SystemSpec::validate() const {
    if (n_particles < 1) throw std::invalid_argument("n_particles must be >= 1");
    if (dim < 1 || dim > 3) throw std::invalid_argument("dim must be 1, 2 or 3");
    if (!(box_length > 0.0)) throw std::invalid_argument("box_length must be > 0");
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
    if (mass.size() != n_particles) throw std::invalid_argument("mass size != n_particles");
    for (int i = 0; i < n_particles; ++i)
        if (!(mass[i] > 0.0)) throw std::invalid_argument("masses must be > 0");
}

Partition Partition::trivial(int n_particles) {
    std::vector<int> members(n_particles);
    std::iota(members.begin(), members.end(), 0);
    return Partition(Kind::Trivial, std::move(members), {0, n_particles});
}

Partition Partition::per_particle(int n_particles) {
    std::vector<int> members(n_particles), offsets(n_particles + 1);
    std::iota(members.begin(), members.end(), 0);
    std::iota(offsets.begin(), offsets.end(), 0);
    return Partition(Kind::PerParticle, std::move(members), std::move(offsets));
}

Partition Partition::per_dumbbell(int n_dumbbells) {
    std::vector<int> members(2 * n_dumbbells), offsets(n_dumbbells + 1);
    std::iota(members.begin(), members.end(), 0);
    for (int j = 0; j <= n_dumbbells; ++j) offsets[j] = 2 * j;
    return Partition(Kind::PerDumbbell, std::move(members), std::move(offsets));
}

std::string_view Partition::kind_name() const {
    switch (kind_) {
        case Kind::Trivial: return "trivial";
        case Kind::PerParticle: return "per_particle";
        case Kind::PerDumbbell: return "per_dumbbell";
    }
    return "";
}

double wrap_scalar(double x, double box) {
    double w = std::fmod(x, box);
    if (w < 0.0) w += box;
    if (w >= box) w = 0.0;  // fmod can round up to box from just below zero
    return w;
}

void wrap_positions(Eigen::Ref<Eigen::VectorXd> q, double box) {
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = wrap_scalar(q[i], box);
}

void sample_maxwell(const SystemSpec& spec, RngStream& rng, Eigen::Ref<Eigen::VectorXd> p) {
    for (int i = 0; i < spec.n_particles; ++i) {
        double s = std::sqrt(spec.mass[i] / spec.beta);
        for (int k = 0; k < spec.dim; ++k) p[i * spec.dim + k] = s * rng.gaussian();
    }
}

void lattice_init(const SystemSpec& spec, Eigen::Ref<Eigen::VectorXd> q) {
    auto pow_int = [](long b, int e) { long r = 1; while (e--) r *= b; return r; };
    int s = 1;
    while (pow_int(s, spec.dim) < spec.n_particles) ++s;

    double a = spec.box_length / s;
    for (int i = 0; i < spec.n_particles; ++i) {
        int rem = i;
        for (int k = 0; k < spec.dim; ++k) {
            q[i * spec.dim + k] = wrap_scalar(a * (rem % s), spec.box_length);
            rem /= s;
        }
    }
}

}  // namespace metromd
