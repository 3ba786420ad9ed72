#pragma once

#include <Eigen/Core>

#include "metromd/constraints.hpp"
#include "metromd/model.hpp"
#include "metromd/rng.hpp"

namespace metromd {

// Exact h-flow of dp = -gamma M^-1 p dt + sqrt(2 gamma / beta) dW, applied
// componentwise:
//   p <- exp(-gamma h / m) p + eta,   Var(eta) = (m/beta)(1 - exp(-2 gamma h / m))
// gamma = 0 degenerates to the identity but still consumes one gaussian per
// dof, so seeded streams stay aligned across gamma values.
struct OUParams {
    Eigen::VectorXd decay;      // per dof
    Eigen::VectorXd noise_std;  // per dof

    static OUParams make(const SystemSpec& spec, double gamma, double h);
};

void ou_step(const OUParams& params, RngStream& rng, Eigen::Ref<Eigen::VectorXd> p,
             Eigen::Ref<Eigen::VectorXd> noise_scratch);

// Constrained analogue on the dofs of dumbbell j: the generator's M^-1 P
// replaces M^-1, so the exact flow is exp(-c P) p + sigma P xi with
// c = gamma h / m and P the tangent projection at q. Requires equal masses
// inside the set (P is then orthogonal and exp(-cP) = I + (exp(-c)-1) P).
// Bond positions are untouched and tangency is preserved exactly.
// Throws std::logic_error if the entry state violates the constraint.
void constrained_ou_step(const SystemSpec& spec, const DumbbellConstraints& cons, int j,
                         double gamma, double h, RngStream& rng, PhaseState& s,
                         double entry_tol = 1e-8);

}  // namespace metromd
