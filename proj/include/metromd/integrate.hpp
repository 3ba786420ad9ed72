#pragma once

#include <optional>
#include <span>

#include <Eigen/Core>

#include "metromd/constraints.hpp"
#include "metromd/model.hpp"
#include "metromd/potential.hpp"
#include "metromd/rng.hpp"
#include "metromd/thermostat.hpp"

namespace metromd {

struct RattleParams {
    double tol = 1e-12;  // |g| tolerance of the position-stage solve
    int max_iter = 50;
};

// One proposal kind per chain; h is the outer step everywhere.
struct Proposal {
    enum class Kind { Verlet, Respa, Rattle };
    Kind kind = Kind::Verlet;
    double h = 0.0;
    int n_fast = 1;  // Respa: inner steps per outer step, h_fast = h / n_fast
    RattleParams solver;

    static Proposal verlet(double h) { return {Kind::Verlet, h, 1, {}}; }
    static Proposal respa(double h, int n_fast) { return {Kind::Respa, h, n_fast, {}}; }
    static Proposal rattle(double h, RattleParams rp = {}) { return {Kind::Rattle, h, 1, rp}; }
};

// Per-step bookkeeping: one proposal per partition set. A failed constraint
// solve counts as a rejection and is excluded from mean_delta_h.
struct StepRecord {
    int proposed = 0;
    int accepted = 0;
    double mean_delta_h = 0.0;
    int solver_failures = 0;
};

// 1 ∧ exp(-beta dh); NaN maps to 0 so poisoned proposals are always rejected
double accept_probability(double delta_h, double beta);

// energy-threshold detector for the unpatched scheme; true on NaN as well
inline bool blew_up(double hamiltonian_value, double bound = 1e10) {
    return !(hamiltonian_value <= bound);
}

// Pure single-set proposal maps. They copy the state; the Integrator runs the
// same arithmetic in place. Sets must be a consecutive particle range, which
// every Partition constructor guarantees.
PhaseState verlet_substep(const SystemSpec& spec, const Potential& pot, std::span<const int> set,
                          double h, const PhaseState& in);
PhaseState respa_substep(const SystemSpec& spec, const PotentialSplit& split,
                         std::span<const int> set, double h, int n_fast, const PhaseState& in);

struct RattleOutcome {
    PhaseState state;
    bool converged = false;
    int iterations = 0;
};
RattleOutcome rattle_substep(const SystemSpec& spec, const Potential& pot,
                             const DumbbellConstraints& cons, int j, double h, RattleParams params,
                             const PhaseState& in);

// One chain's stepping machinery: a sweep of per-set proposals, each passed
// through the acceptance test (momentum flipped on rejection), followed by
// the exact friction/noise flow. step_unpatched commits every proposal
// unconditionally and is the scheme the acceptance test stabilizes.
class Integrator {
public:
    Integrator(const SystemSpec& spec, const Partition& part, const Potential& pot,
               Proposal prop, double gamma);
    Integrator(const SystemSpec& spec, const Partition& part, const PotentialSplit& split,
               Proposal prop, double gamma);
    Integrator(const SystemSpec& spec, const Partition& part, const Potential& pot,
               const DumbbellConstraints& cons, Proposal prop, double gamma);

    Integrator(const Integrator&) = delete;
    Integrator& operator=(const Integrator&) = delete;

    StepRecord step(PhaseState& s, RngStream& thermostat_rng, RngStream& metropolis_rng);
    StepRecord step_unpatched(PhaseState& s, RngStream& thermostat_rng);

    // recompute the full Hamiltonian around every substep and cross-check the
    // local energy defect (slow; for tests)
    void set_paranoid(bool on) { paranoid_ = on; }

    const Proposal& proposal() const { return prop_; }
    double gamma() const { return gamma_; }

private:
    StepRecord sweep(PhaseState& s, RngStream* metropolis_rng);
    // returns false on solver failure; on success state holds the proposal
    // for set j and *dh its energy defect, with backups saved in scratch
    bool propose_inplace(PhaseState& s, int j, double* dh);
    void propose_respa(PhaseState& s, int o, int len, std::span<const int> set, double* dh);
    bool propose_rattle(PhaseState& s, int j, double* dh);
    void thermostat(PhaseState& s, RngStream& rng);

    const SystemSpec* spec_;
    Partition part_;
    const Potential* pot_;  // total potential
    const PotentialSplit* split_ = nullptr;
    const DumbbellConstraints* cons_ = nullptr;
    Proposal prop_;
    double gamma_;
    bool paranoid_ = false;

    Eigen::VectorXd inv_mass_dof_;
    OUParams ou_;
    Eigen::VectorXd noise_;

    // per-substep scratch, sized to the largest set
    Eigen::VectorXd q0_, p0_, f0_, f1_, ph_, scratch_;

    // the single-rate proposal runs as the multi-rate one with this zero
    // fast part, so the two share one code path
    ZeroPotential zero_;
    std::optional<PotentialSplit> owned_split_;

    // slow-part energy/force reuse for the single-set partition: the
    // thermostat leaves q alone and a rejection restores it, so the values
    // carry across steps. Keyed to the exact bit pattern of q.
    bool cache_valid_ = false;
    Eigen::VectorXd cache_q_, cache_f_;
    double cache_e_ = 0.0;
    double last_e0_ = 0.0, last_e1_ = 0.0;  // energies behind f0_/f1_ on the whole-system path

    void validate_and_init();
};

}  // namespace metromd
