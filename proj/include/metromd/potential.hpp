#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "metromd/model.hpp"

namespace metromd {

// Nearest periodic image of a coordinate difference; result in [-box/2, box/2].
inline double min_image(double dx, double box) {
    return dx - box * std::nearbyint(dx * (1.0 / box));
}

// Squared minimum-image distance between particles a and b of a flattened
// position vector.
double min_image_dist2(const Eigen::VectorXd& q, int a, int b, int dim, double box);

class Potential {
public:
    virtual ~Potential() = default;

    virtual double energy(const Eigen::VectorXd& q) const = 0;
    // f is overwritten with -grad U, sized like q
    virtual void force(const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> f) const = 0;
    virtual double energy_and_force(const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> f) const {
        force(q, f);
        return energy(q);
    }

    // Energy terms that involve at least one particle of `set`; a pair with
    // both ends inside the set is counted once. Differences of this quantity
    // across a move of `set` equal differences of the full energy.
    virtual double set_energy(const Eigen::VectorXd& q, std::span<const int> set) const = 0;
    // Force on the dofs of `set`, stacked in set order (size set.size()*dim).
    virtual void set_force(const Eigen::VectorXd& q, std::span<const int> set,
                           Eigen::Ref<Eigen::VectorXd> f_set) const = 0;
    virtual double set_energy_and_force(const Eigen::VectorXd& q, std::span<const int> set,
                                        Eigen::Ref<Eigen::VectorXd> f_set) const {
        set_force(q, set, f_set);
        return set_energy(q, set);
    }
};

// Pairwise 4(r^-12 - r^-6) fluid, truncated and shifted, periodic boundaries.
// A window [r_on, r_off) generalizes the plain truncation so the same class
// covers the time-scale split used by the multi-rate proposal:
//   truncated:  window [0, r_cut),        shift 4(r_cut^-12 - r_cut^-6)
//   fast part:  window [0, r_split),      shift at r_split
//   slow part:  window [r_split, r_cut),  shift at r_cut, constant inside r_split
// Energies are continuous across every window edge; fast + slow = truncated.
class LennardJonesFluid final : public Potential {
public:
    static LennardJonesFluid truncated(int n, int dim, double box, double r_cut,
                                       std::vector<std::pair<int, int>> excluded = {});
    static LennardJonesFluid fast_part(int n, int dim, double box, double r_split,
                                       std::vector<std::pair<int, int>> excluded = {});
    static LennardJonesFluid slow_part(int n, int dim, double box, double r_split, double r_cut,
                                       std::vector<std::pair<int, int>> excluded = {});

    // pair energy at squared separation r2; +inf at r2 == 0 when the window
    // includes the core, so overlapping proposals are always rejected
    double pair_energy(double r2) const {
        if (r2 >= off2_) return 0.0;
        if (r2 < on2_) return plateau_;
        if (r2 == 0.0) return std::numeric_limits<double>::infinity();
        double s2 = 1.0 / r2, s6 = s2 * s2 * s2;
        return 4.0 * (s6 * s6 - s6) - shift_;
    }
    // c such that the force on particle a from b is c * (q_a - q_b)
    double pair_coef(double r2) const {
        if (r2 >= off2_ || r2 < on2_) return 0.0;
        if (r2 == 0.0) return std::numeric_limits<double>::infinity();
        double s2 = 1.0 / r2, s6 = s2 * s2 * s2;
        return 24.0 * s2 * (2.0 * s6 * s6 - s6);
    }

    double energy(const Eigen::VectorXd& q) const override;
    void force(const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> f) const override;
    double energy_and_force(const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> f) const override;
    double set_energy(const Eigen::VectorXd& q, std::span<const int> set) const override;
    void set_force(const Eigen::VectorXd& q, std::span<const int> set,
                   Eigen::Ref<Eigen::VectorXd> f_set) const override;
    double set_energy_and_force(const Eigen::VectorXd& q, std::span<const int> set,
                                Eigen::Ref<Eigen::VectorXd> f_set) const override;

    int n() const { return n_; }
    int dim() const { return dim_; }
    double box() const { return box_; }
    double r_off() const { return std::sqrt(off2_); }

private:
    LennardJonesFluid(int n, int dim, double box, double r_on, double r_off, double shift_r,
                      std::vector<std::pair<int, int>> excluded);

    bool excluded(int a, int b) const { return excluded_partner_[a] == b; }

    template <int D>
    double energy_d(const double* q) const;
    template <int D>
    void force_d(const double* q, double* f) const;
    template <int D>
    double energy_and_force_d(const double* q, double* f) const;
    template <int D>
    double particle_scan(const double* q, int i, int skip, double* f_i) const;

    int n_, dim_;
    double box_, inv_box_;
    double on2_, off2_, shift_, plateau_;
    std::vector<int> excluded_partner_;  // -1, or the single particle whose pair term is dropped
};

// Separable well U(q) = sum over dofs of (1 - cos(2 pi x / box)); the Gibbs
// density factorizes and is cheap to integrate, which makes this the
// reference system for the stationarity checks.
class CosineWell final : public Potential {
public:
    CosineWell(int n, int dim, double box) : n_(n), dim_(dim), box_(box) {}
    double energy(const Eigen::VectorXd& q) const override;
    void force(const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> f) const override;
    double set_energy(const Eigen::VectorXd& q, std::span<const int> set) const override;
    void set_force(const Eigen::VectorXd& q, std::span<const int> set,
                   Eigen::Ref<Eigen::VectorXd> f_set) const override;

private:
    int n_, dim_;
    double box_;
};

class ZeroPotential final : public Potential {
public:
    explicit ZeroPotential(int dim) : dim_(dim) {}
    double energy(const Eigen::VectorXd&) const override { return 0.0; }
    void force(const Eigen::VectorXd&, Eigen::Ref<Eigen::VectorXd> f) const override {
        f.setZero();
    }
    double set_energy(const Eigen::VectorXd&, std::span<const int>) const override { return 0.0; }
    void set_force(const Eigen::VectorXd&, std::span<const int> set,
                   Eigen::Ref<Eigen::VectorXd> f_set) const override {
        f_set.head(static_cast<Eigen::Index>(set.size()) * dim_).setZero();
    }

private:
    int dim_;
};

// Fast/slow pair for the multi-rate proposal; the Potential interface on the
// split itself evaluates the total.
class PotentialSplit final : public Potential {
public:
    PotentialSplit(const Potential& fast, const Potential& slow) : fast_(&fast), slow_(&slow) {}
    const Potential& fast() const { return *fast_; }
    const Potential& slow() const { return *slow_; }

    double energy(const Eigen::VectorXd& q) const override {
        return fast_->energy(q) + slow_->energy(q);
    }
    void force(const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> f) const override;
    double set_energy(const Eigen::VectorXd& q, std::span<const int> set) const override {
        return fast_->set_energy(q, set) + slow_->set_energy(q, set);
    }
    void set_force(const Eigen::VectorXd& q, std::span<const int> set,
                   Eigen::Ref<Eigen::VectorXd> f_set) const override;

private:
    const Potential* fast_;
    const Potential* slow_;
};

// Owning fast+slow split of a truncated fluid at r_split.
struct LJSplit {
    LJSplit(int n, int dim, double box, double r_split, double r_cut,
            std::vector<std::pair<int, int>> excluded = {})
        : fast(LennardJonesFluid::fast_part(n, dim, box, r_split, excluded)),
          slow(LennardJonesFluid::slow_part(n, dim, box, r_split, r_cut, excluded)),
          split(fast, slow) {}
    LJSplit(const LJSplit&) = delete;
    LJSplit& operator=(const LJSplit&) = delete;

    LennardJonesFluid fast;
    LennardJonesFluid slow;
    PotentialSplit split;
};

double kinetic_energy(const SystemSpec& spec, const Eigen::VectorXd& p);
double kinetic_energy_set(const SystemSpec& spec, const Eigen::VectorXd& p,
                          std::span<const int> set);
double hamiltonian(const SystemSpec& spec, const PhaseState& state, const Potential& pot);

// Linked-cell index over the periodic box; bins must be at least `reach`
// wide so a half stencil covers every interacting pair. Usable only with
// >= 3 bins per dimension (otherwise stencil images alias).
struct CellList {
    int bins = 0;          // per dimension
    int dim = 0;
    double bin_size = 0.0;
    std::vector<int> head;  // first particle of each cell, -1 when empty
    std::vector<int> next;  // chain through particles, -1 terminates

    static bool usable(int dim, double box, double reach) {
        return static_cast<int>(std::floor(box / reach)) >= 3;
    }
    void build(const double* q, int n, int dim, double box, double reach);
    int cell_of(const double* x) const;

    // visit every unordered particle pair whose cells are within one bin
    template <class F>
    void for_each_pair(F&& fn) const;
};

}  // namespace metromd

#include "metromd/cell_list_impl.hpp"
