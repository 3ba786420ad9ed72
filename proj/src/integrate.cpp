#include "metromd/integrate.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace metromd {

double accept_probability(double delta_h, double beta) {
    if (std::isnan(delta_h)) return 0.0;  // poisoned proposal: never accept
    if (delta_h <= 0.0) return 1.0;
    return std::exp(-beta * delta_h);
}

namespace {

inline void kick(double* p, const double* f, int len, double c) {
    for (int i = 0; i < len; ++i) p[i] += c * f[i];
}

inline void drift(double* q, const double* p, const double* inv_m, int len, double h, double box) {
    for (int i = 0; i < len; ++i) q[i] = wrap_scalar(q[i] + h * inv_m[i] * p[i], box);
}

inline double kinetic(const double* p, const double* inv_m, int len) {
    double k = 0.0;
    for (int i = 0; i < len; ++i) k += 0.5 * p[i] * p[i] * inv_m[i];
    return k;
}

void require_consecutive(std::span<const int> set) {
    for (size_t k = 0; k < set.size(); ++k)
        if (set[k] != set[0] + static_cast<int>(k))
            throw std::invalid_argument("update sets must be consecutive particle ranges");
}

// Slow half kick, n_fast velocity-Verlet steps on the fast part, slow half
// kick; the energy defect uses the total energy. The single-rate proposal is
// this same map with a zero fast part and n_fast = 1, sharing every
// instruction, so that degeneracy is exact rather than up to rounding. The
// slow part goes through the two callbacks (energy returned, force filled),
// which lets the caller splice in a cached evaluation.
template <class SlowEF0, class SlowEF1>
double respa_core(const SystemSpec& spec, const PotentialSplit& split, std::span<const int> set,
                  int o, int len, const double* inv_m, double h, int n_fast, Eigen::VectorXd& q,
                  Eigen::VectorXd& p, Eigen::VectorXd& f0, Eigen::VectorXd& f1, SlowEF0&& ef0,
                  SlowEF1&& ef1) {
    double e0 = split.fast().set_energy(q, set) + ef0(f0);
    double k0 = kinetic(p.data() + o, inv_m, len);
    kick(p.data() + o, f0.data(), len, 0.5 * h);
    double hf = h / n_fast;
    for (int k = 0; k < n_fast; ++k) {
        split.fast().set_force(q, set, f1.head(len));
        kick(p.data() + o, f1.data(), len, 0.5 * hf);
        drift(q.data() + o, p.data() + o, inv_m, len, hf, spec.box_length);
        split.fast().set_force(q, set, f1.head(len));
        kick(p.data() + o, f1.data(), len, 0.5 * hf);
    }
    double e1 = split.fast().set_energy(q, set) + ef1(f1);
    kick(p.data() + o, f1.data(), len, 0.5 * h);
    double k1 = kinetic(p.data() + o, inv_m, len);
    return (e1 - e0) + (k1 - k0);
}

double respa_plain(const SystemSpec& spec, const PotentialSplit& split, std::span<const int> set,
                   int o, int len, const double* inv_m, double h, int n_fast, Eigen::VectorXd& q,
                   Eigen::VectorXd& p, Eigen::VectorXd& f0, Eigen::VectorXd& f1) {
    auto ef = [&](Eigen::VectorXd& f) {
        return split.slow().set_energy_and_force(q, set, f.head(len));
    };
    return respa_core(spec, split, set, o, len, inv_m, h, n_fast, q, p, f0, f1, ef, ef);
}

// position-stage and momentum-stage constraint solves around a leapfrog step
// of dumbbell j; on failure q and p are left exactly as found
struct RattleScratch {
    Eigen::VectorXd* f0;
    Eigen::VectorXd* f1;
    Eigen::VectorXd* g0;
    Eigen::VectorXd* g1;
};
bool rattle_inplace(const SystemSpec& spec, const Potential& pot, const DumbbellConstraints& cons,
                    int j, double h, RattleParams params, Eigen::VectorXd& q, Eigen::VectorXd& p,
                    RattleScratch sc, double* dh, int* iterations) {
    const int d = spec.dim;
    const int o = 2 * j * d, len = 2 * d;
    const int set_arr[2] = {2 * j, 2 * j + 1};
    std::span<const int> set(set_arr, 2);
    const double m = spec.mass[2 * j];
    const double box = spec.box_length;
    const double len0 = cons.bond_length();

    double e0 = pot.set_energy(q, set);
    double k0 = 0.0;
    for (int i = 0; i < len; ++i) k0 += 0.5 * p[o + i] * p[o + i] / m;
    pot.set_force(q, set, sc.f0->head(len));
    cons.gradient(q, j, sc.g0->head(len));
    const double* g0 = sc.g0->data();

    // unconstrained half kick
    double ph[6];
    for (int i = 0; i < len; ++i) ph[i] = p[o + i] + 0.5 * h * (*sc.f0)[i];

    // bond vector after the free drift, as a function of the position multiplier:
    //   delta*(lam) = du - (2 h^2 / m) lam delta0
    double delta0[3], du[3];
    for (int k = 0; k < d; ++k) {
        delta0[k] = 0.5 * g0[k];
        du[k] = delta0[k] + (h / m) * (ph[k] - ph[d + k]);
    }
    const double c = 2.0 * h * h / m;
    double lam1 = 0.0;
    bool converged = false;
    int it = 0;
    for (; it < params.max_iter; ++it) {
        double g = -len0 * len0;
        double slope = 0.0;
        for (int k = 0; k < d; ++k) {
            double ds = du[k] - c * lam1 * delta0[k];
            g += ds * ds;
            slope += ds * delta0[k];
        }
        if (std::abs(g) <= params.tol) {
            converged = true;
            break;
        }
        double gp = -2.0 * c * slope;
        if (!std::isfinite(g) || !std::isfinite(gp) || gp == 0.0) break;
        lam1 -= g / gp;
        if (!std::isfinite(lam1)) break;
    }
    if (iterations) *iterations = it;
    if (!converged) return false;

    // commit the half kick with the constraint force, then drift
    double q_backup[6];
    for (int i = 0; i < len; ++i) {
        ph[i] -= 0.5 * h * lam1 * g0[i];
        q_backup[i] = q[o + i];
        q[o + i] = wrap_scalar(q[o + i] + (h / m) * ph[i], box);
    }

    double e1 = pot.set_energy(q, set);
    pot.set_force(q, set, sc.f1->head(len));
    cons.gradient(q, j, sc.g1->head(len));
    const double* g1 = sc.g1->data();

    // second half kick, then remove the normal momentum component exactly
    double num = 0.0, den = 0.0;
    for (int i = 0; i < len; ++i) {
        ph[i] += 0.5 * h * (*sc.f1)[i];
        num += g1[i] * ph[i];
        den += g1[i] * g1[i];
    }
    den *= 0.5 * h;
    double lam2 = num / den;
    if (!std::isfinite(lam2)) {
        for (int i = 0; i < len; ++i) q[o + i] = q_backup[i];
        return false;
    }
    double k1 = 0.0;
    for (int i = 0; i < len; ++i) {
        p[o + i] = ph[i] - 0.5 * h * lam2 * g1[i];
        k1 += 0.5 * p[o + i] * p[o + i] / m;
    }
    *dh = (e1 - e0) + (k1 - k0);
    return true;
}

}  // namespace

PhaseState verlet_substep(const SystemSpec& spec, const Potential& pot, std::span<const int> set,
                          double h, const PhaseState& in) {
    require_consecutive(set);
    PhaseState out = in;
    ZeroPotential zero(spec.dim);
    PotentialSplit split(zero, pot);
    int o = set[0] * spec.dim;
    int len = static_cast<int>(set.size()) * spec.dim;
    Eigen::VectorXd inv_m = spec.inv_mass_dof();
    Eigen::VectorXd f0(len), f1(len);
    respa_plain(spec, split, set, o, len, inv_m.data() + o, h, 1, out.q, out.p, f0, f1);
    return out;
}

PhaseState respa_substep(const SystemSpec& spec, const PotentialSplit& split,
                         std::span<const int> set, double h, int n_fast, const PhaseState& in) {
    require_consecutive(set);
    if (n_fast < 1) throw std::invalid_argument("n_fast must be >= 1");
    PhaseState out = in;
    int o = set[0] * spec.dim;
    int len = static_cast<int>(set.size()) * spec.dim;
    Eigen::VectorXd inv_m = spec.inv_mass_dof();
    Eigen::VectorXd f0(len), f1(len);
    respa_plain(spec, split, set, o, len, inv_m.data() + o, h, n_fast, out.q, out.p, f0, f1);
    return out;
}

RattleOutcome rattle_substep(const SystemSpec& spec, const Potential& pot,
                             const DumbbellConstraints& cons, int j, double h, RattleParams params,
                             const PhaseState& in) {
    RattleOutcome out;
    out.state = in;
    Eigen::VectorXd f0(2 * spec.dim), f1(2 * spec.dim), g0(2 * spec.dim), g1(2 * spec.dim);
    double dh = 0.0;
    out.converged = rattle_inplace(spec, pot, cons, j, h, params, out.state.q, out.state.p,
                                   {&f0, &f1, &g0, &g1}, &dh, &out.iterations);
    return out;
}

Integrator::Integrator(const SystemSpec& spec, const Partition& part, const Potential& pot,
                       Proposal prop, double gamma)
    : spec_(&spec), part_(part), pot_(&pot), prop_(prop), gamma_(gamma), zero_(spec.dim) {
    if (prop.kind != Proposal::Kind::Verlet)
        throw std::invalid_argument("this constructor builds single-rate unconstrained proposals");
    owned_split_.emplace(zero_, pot);
    split_ = &*owned_split_;
    validate_and_init();
}

Integrator::Integrator(const SystemSpec& spec, const Partition& part, const PotentialSplit& split,
                       Proposal prop, double gamma)
    : spec_(&spec),
      part_(part),
      pot_(&split),
      split_(&split),
      prop_(prop),
      gamma_(gamma),
      zero_(spec.dim) {
    if (prop.kind != Proposal::Kind::Respa)
        throw std::invalid_argument("a potential split implies the multi-rate proposal");
    validate_and_init();
}

Integrator::Integrator(const SystemSpec& spec, const Partition& part, const Potential& pot,
                       const DumbbellConstraints& cons, Proposal prop, double gamma)
    : spec_(&spec),
      part_(part),
      pot_(&pot),
      cons_(&cons),
      prop_(prop),
      gamma_(gamma),
      zero_(spec.dim) {
    if (prop.kind != Proposal::Kind::Rattle)
        throw std::invalid_argument("constraints imply the constrained proposal");
    validate_and_init();
}

void Integrator::validate_and_init() {
    spec_->validate();
    if (part_.n_particles() != spec_->n_particles)
        throw std::invalid_argument("partition does not cover the system");
    if (!(prop_.h > 0.0)) throw std::invalid_argument("step size must be > 0");
    if (prop_.n_fast < 1) throw std::invalid_argument("n_fast must be >= 1");
    if (prop_.kind != Proposal::Kind::Respa && prop_.n_fast != 1)
        throw std::invalid_argument("only the multi-rate proposal takes inner steps");
    if (gamma_ < 0.0) throw std::invalid_argument("gamma must be >= 0");
    for (int j = 0; j < part_.set_count(); ++j) require_consecutive(part_.set(j));
    if (prop_.kind == Proposal::Kind::Rattle) {
        if (part_.kind() != Partition::Kind::PerDumbbell)
            throw std::invalid_argument("constrained proposals need the bonded-pair partition");
        if (cons_->count() != part_.set_count())
            throw std::invalid_argument("one constraint per update set");
        if (cons_->dim() != spec_->dim)
            throw std::invalid_argument("constraint dimension mismatch");
        if (!(prop_.solver.tol > 0.0) || prop_.solver.max_iter < 1)
            throw std::invalid_argument("bad constraint solver parameters");
        for (int j = 0; j < cons_->count(); ++j)
            if (std::abs(spec_->mass[2 * j] - spec_->mass[2 * j + 1]) > 1e-12 * spec_->mass[2 * j])
                throw std::invalid_argument("dumbbell endpoints need equal masses");
    }

    inv_mass_dof_ = spec_->inv_mass_dof();
    ou_ = OUParams::make(*spec_, gamma_, prop_.h);
    noise_.resize(spec_->dof());
    int max_len = 0;
    for (int j = 0; j < part_.set_count(); ++j)
        max_len = std::max(max_len, static_cast<int>(part_.set(j).size()) * spec_->dim);
    for (auto* v : {&q0_, &p0_, &f0_, &f1_, &ph_, &scratch_}) v->resize(max_len);
    cache_q_.resize(spec_->dof());
    cache_f_.resize(spec_->dof());
}

bool Integrator::propose_inplace(PhaseState& s, int j, double* dh) {
    auto set = part_.set(j);
    int o = set[0] * spec_->dim;
    int len = static_cast<int>(set.size()) * spec_->dim;
    if (prop_.kind == Proposal::Kind::Rattle) return propose_rattle(s, j, dh);
    propose_respa(s, o, len, set, dh);
    return true;
}

void Integrator::propose_respa(PhaseState& s, int o, int len, std::span<const int> set,
                               double* dh) {
    q0_.head(len) = s.q.segment(o, len);
    p0_.head(len) = s.p.segment(o, len);
    const double* inv_m = inv_mass_dof_.data() + o;
    if (len == spec_->dof()) {
        // whole-system set: the slow energy and force at the current q were
        // already computed when the previous step settled, so reuse them
        auto ef0 = [&](Eigen::VectorXd& f) {
            if (cache_valid_ &&
                std::memcmp(cache_q_.data(), s.q.data(), sizeof(double) * len) == 0) {
                f.head(len) = cache_f_;
                last_e0_ = cache_e_;
            } else {
                last_e0_ = split_->slow().set_energy_and_force(s.q, set, f.head(len));
            }
            return last_e0_;
        };
        auto ef1 = [&](Eigen::VectorXd& f) {
            last_e1_ = split_->slow().set_energy_and_force(s.q, set, f.head(len));
            return last_e1_;
        };
        *dh = respa_core(*spec_, *split_, set, o, len, inv_m, prop_.h, prop_.n_fast, s.q, s.p,
                         f0_, f1_, ef0, ef1);
    } else {
        *dh = respa_plain(*spec_, *split_, set, o, len, inv_m, prop_.h, prop_.n_fast, s.q, s.p,
                          f0_, f1_);
    }
}

bool Integrator::propose_rattle(PhaseState& s, int j, double* dh) {
    int o = 2 * j * spec_->dim, len = 2 * spec_->dim;
    q0_.head(len) = s.q.segment(o, len);
    p0_.head(len) = s.p.segment(o, len);
    return rattle_inplace(*spec_, *pot_, *cons_, j, prop_.h, prop_.solver, s.q, s.p,
                          {&f0_, &f1_, &ph_, &scratch_}, dh, nullptr);
}

StepRecord Integrator::sweep(PhaseState& s, RngStream* metropolis_rng) {
    StepRecord rec;
    rec.proposed = part_.set_count();
    double sum_dh = 0.0;
    int n_dh = 0;
    for (int j = 0; j < rec.proposed; ++j) {
        auto set = part_.set(j);
        int o = set[0] * spec_->dim;
        int len = static_cast<int>(set.size()) * spec_->dim;
        const bool whole_system = len == spec_->dof() && prop_.kind != Proposal::Kind::Rattle;

        double h_before = 0.0;
        if (paranoid_) h_before = hamiltonian(*spec_, s, *pot_);

        double dh = 0.0;
        bool ok = propose_inplace(s, j, &dh);
        if (!ok) {
            ++rec.solver_failures;
            if (metropolis_rng)  // a failed solve is a rejection
                for (int i = 0; i < len; ++i) s.p[o + i] = -p0_[i];
            continue;
        }

        if (paranoid_ && std::isfinite(dh)) {
            double h_after = hamiltonian(*spec_, s, *pot_);
            if (std::abs((h_after - h_before) - dh) > 1e-10 * std::max(1.0, std::abs(dh)))
                throw std::logic_error("local energy defect disagrees with the full Hamiltonian");
        }

        sum_dh += dh;
        ++n_dh;
        bool accept = true;
        if (metropolis_rng)
            accept = metropolis_rng->uniform() < accept_probability(dh, spec_->beta);
        if (accept) {
            ++rec.accepted;
            if (whole_system) {
                cache_q_ = s.q;
                cache_f_ = f1_.head(len);
                cache_e_ = last_e1_;
                cache_valid_ = true;
            }
        } else {
            s.q.segment(o, len) = q0_.head(len);
            for (int i = 0; i < len; ++i) s.p[o + i] = -p0_[i];
            if (whole_system) {
                cache_q_ = s.q;
                cache_f_ = f0_.head(len);
                cache_e_ = last_e0_;
                cache_valid_ = true;
            }
        }
    }
    rec.mean_delta_h = n_dh > 0 ? sum_dh / n_dh : 0.0;
    return rec;
}

void Integrator::thermostat(PhaseState& s, RngStream& rng) {
    if (prop_.kind == Proposal::Kind::Rattle) {
        for (int j = 0; j < cons_->count(); ++j)
            constrained_ou_step(*spec_, *cons_, j, gamma_, prop_.h, rng, s);
    } else {
        ou_step(ou_, rng, s.p, noise_);
    }
}

StepRecord Integrator::step(PhaseState& s, RngStream& thermostat_rng, RngStream& metropolis_rng) {
    StepRecord rec = sweep(s, &metropolis_rng);
    thermostat(s, thermostat_rng);
    return rec;
}

StepRecord Integrator::step_unpatched(PhaseState& s, RngStream& thermostat_rng) {
    StepRecord rec = sweep(s, nullptr);
    thermostat(s, thermostat_rng);
    return rec;
}

}  // namespace metromd
