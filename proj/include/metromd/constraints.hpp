#pragma once

#include <Eigen/Core>

#include "metromd/model.hpp"

namespace metromd {

// Rigid pair bonds: dumbbell j ties particles (2j, 2j+1) to separation
// bond_length through g_j(q) = |delta_j|^2 - bond_length^2, with delta_j the
// minimum-image bond vector. One constraint per dumbbell; constraint j only
// touches the dofs of partition set j.
class DumbbellConstraints {
public:
    DumbbellConstraints(int n_dumbbells, int dim, double box, double bond_length);

    int count() const { return n_; }
    int dim() const { return dim_; }
    double bond_length() const { return len_; }

    int first_particle(int j) const { return 2 * j; }
    int second_particle(int j) const { return 2 * j + 1; }

    // minimum-image bond vector of dumbbell j, size dim
    void bond_vector(const Eigen::VectorXd& q, int j, Eigen::Ref<Eigen::VectorXd> delta) const;
    double value(const Eigen::VectorXd& q, int j) const;
    // gradient wrt the set-j dofs, [2 delta, -2 delta], size 2*dim
    void gradient(const Eigen::VectorXd& q, int j, Eigen::Ref<Eigen::VectorXd> grad) const;
    // grad g . M^-1 p for dumbbell j
    double tangency(const SystemSpec& spec, const Eigen::VectorXd& q, const Eigen::VectorXd& p,
                    int j) const;

    double max_abs_value(const Eigen::VectorXd& q) const;
    double max_abs_tangency(const SystemSpec& spec, const Eigen::VectorXd& q,
                            const Eigen::VectorXd& p) const;

    // intra-bond pairs, for potential exclusion lists
    std::vector<std::pair<int, int>> bonded_pairs() const;

private:
    int n_, dim_;
    double box_, len_;
};

// Pull every bond back to its length (rescaling about the midpoint) and
// remove the normal component of every bond's momentum. Idempotent; a state
// already on the manifold passes through unchanged.
void project_to_manifold(const SystemSpec& spec, const DumbbellConstraints& cons, PhaseState& s);

// P = I - grad g (grad g^T M^-1 grad g)^-1 grad g^T M^-1 on the set-j dofs
Eigen::MatrixXd constraint_projection(const SystemSpec& spec, const DumbbellConstraints& cons,
                                      const Eigen::VectorXd& q, int j);

}  // namespace metromd
