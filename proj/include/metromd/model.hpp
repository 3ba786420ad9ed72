#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "metromd/rng.hpp"

namespace metromd {

// Immutable description of the simulated system: n point particles in a
// periodic cubic box of edge box_length, inverse temperature beta, per
// particle masses.
struct SystemSpec {
    int n_particles = 0;
    int dim = 0;  // 1, 2 or 3
    double box_length = 0.0;
    double beta = 0.0;
    Eigen::VectorXd mass;  // size n_particles

    int dof() const { return n_particles * dim; }

    // per-dof expansions, [m0 m0 m1 m1 ...] for dim = 2
    Eigen::VectorXd mass_dof() const;
    Eigen::VectorXd inv_mass_dof() const;

    void validate() const;  // throws std::invalid_argument
};

// Positions live in [0, box_length)^dof, flattened particle-major:
// q[i*dim + k] is component k of particle i.
struct PhaseState {
    Eigen::VectorXd q;
    Eigen::VectorXd p;
};

// Disjoint cover of particle indices; the update sweep visits sets in
// ascending index order.
class Partition {
public:
    enum class Kind { Trivial, PerParticle, PerDumbbell };

    static Partition trivial(int n_particles);
    static Partition per_particle(int n_particles);
    // set j owns particles {2j, 2j+1}
    static Partition per_dumbbell(int n_dumbbells);

    int set_count() const { return static_cast<int>(offsets_.size()) - 1; }
    std::span<const int> set(int j) const {
        return {members_.data() + offsets_[j], static_cast<size_t>(offsets_[j + 1] - offsets_[j])};
    }
    int n_particles() const { return static_cast<int>(members_.size()); }
    Kind kind() const { return kind_; }
    std::string_view kind_name() const;

private:
    Partition(Kind kind, std::vector<int> members, std::vector<int> offsets)
        : kind_(kind), members_(std::move(members)), offsets_(std::move(offsets)) {}
    Kind kind_;
    std::vector<int> members_;   // concatenated set members
    std::vector<int> offsets_;   // set j = members[offsets[j] .. offsets[j+1])
};

// Periodic wrap into [0, box). The upper endpoint is excluded even when
// rounding lands exactly on box.
double wrap_scalar(double x, double box);
void wrap_positions(Eigen::Ref<Eigen::VectorXd> q, double box);

// Draw p with independent N(0, m_i/beta) components.
void sample_maxwell(const SystemSpec& spec, RngStream& rng, Eigen::Ref<Eigen::VectorXd> p);

// Place particles on a cubic lattice that fills the box: s = smallest integer
// with s^dim >= n, spacing box/s, sites filled x-fastest.
void lattice_init(const SystemSpec& spec, Eigen::Ref<Eigen::VectorXd> q);

}  // namespace metromd
