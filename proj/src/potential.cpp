#include "metromd/potential.hpp"

#include <numbers>
#include <stdexcept>

namespace metromd {

double min_image_dist2(const Eigen::VectorXd& q, int a, int b, int dim, double box) {
    double r2 = 0.0;
    for (int k = 0; k < dim; ++k) {
        double dx = min_image(q[a * dim + k] - q[b * dim + k], box);
        r2 += dx * dx;
    }
    return r2;
}

static double lj_raw(double r) {
    double s6 = 1.0 / (r * r * r * r * r * r);
    return 4.0 * (s6 * s6 - s6);
}

LennardJonesFluid::LennardJonesFluid(int n, int dim, double box, double r_on, double r_off,
                                     double shift_r, std::vector<std::pair<int, int>> excluded)
    : n_(n), dim_(dim), box_(box), inv_box_(1.0 / box) {
    if (n < 1) throw std::invalid_argument("fluid needs at least one particle");
    if (dim < 1 || dim > 3) throw std::invalid_argument("dim must be 1, 2 or 3");
    if (!(box > 0.0)) throw std::invalid_argument("box must be > 0");
    if (!(r_off > 0.0) || r_off > box / 2.0)
        throw std::invalid_argument("cutoff must satisfy 0 < r_cut <= box/2");
    if (r_on < 0.0 || r_on >= r_off)
        throw std::invalid_argument("window must satisfy 0 <= r_on < r_off");
    on2_ = r_on * r_on;
    off2_ = r_off * r_off;
    shift_ = lj_raw(shift_r);
    plateau_ = r_on > 0.0 ? lj_raw(r_on) - shift_ : 0.0;
    excluded_partner_.assign(n, -1);
    for (auto [a, b] : excluded) {
        if (a < 0 || b < 0 || a >= n || b >= n || a == b)
            throw std::invalid_argument("bad excluded pair");
        if ((excluded_partner_[a] != -1 && excluded_partner_[a] != b) ||
            (excluded_partner_[b] != -1 && excluded_partner_[b] != a))
            throw std::invalid_argument("a particle can only exclude one partner");
        excluded_partner_[a] = b;
        excluded_partner_[b] = a;
    }
}

LennardJonesFluid LennardJonesFluid::truncated(int n, int dim, double box, double r_cut,
                                               std::vector<std::pair<int, int>> excluded) {
    return LennardJonesFluid(n, dim, box, 0.0, r_cut, r_cut, std::move(excluded));
}

LennardJonesFluid LennardJonesFluid::fast_part(int n, int dim, double box, double r_split,
                                               std::vector<std::pair<int, int>> excluded) {
    return LennardJonesFluid(n, dim, box, 0.0, r_split, r_split, std::move(excluded));
}

LennardJonesFluid LennardJonesFluid::slow_part(int n, int dim, double box, double r_split,
                                               double r_cut,
                                               std::vector<std::pair<int, int>> excluded) {
    if (!(r_split > 0.0) || r_split >= r_cut)
        throw std::invalid_argument("slow part needs 0 < r_split < r_cut");
    return LennardJonesFluid(n, dim, box, r_split, r_cut, r_cut, std::move(excluded));
}

namespace {
// energy and force coefficient in one evaluation
struct PairEval {
    double e, c;
};
}  // namespace

inline PairEval pair_eval(double r2, double on2, double off2, double shift, double plateau) {
    if (r2 >= off2) return {0.0, 0.0};
    if (r2 < on2) return {plateau, 0.0};
    if (r2 == 0.0) {
        double inf = std::numeric_limits<double>::infinity();
        return {inf, inf};
    }
    double s2 = 1.0 / r2, s6 = s2 * s2 * s2, s12 = s6 * s6;
    return {4.0 * (s12 - s6) - shift, 24.0 * s2 * (2.0 * s12 - s6)};
}

template <int D>
double LennardJonesFluid::energy_d(const double* q) const {
    double e = 0.0;
    auto accum = [&](int i, int j) {
        if (excluded(i, j)) return;
        double r2 = 0.0;
        for (int k = 0; k < D; ++k) {
            double dx = q[i * D + k] - q[j * D + k];
            dx -= box_ * std::nearbyint(dx * inv_box_);
            r2 += dx * dx;
        }
        e += pair_energy(r2);
    };
    if (n_ >= 96 && CellList::usable(D, box_, r_off())) {
        CellList cl;
        cl.build(q, n_, D, box_, r_off());
        cl.for_each_pair(accum);
    } else {
        for (int i = 0; i < n_; ++i)
            for (int j = i + 1; j < n_; ++j) accum(i, j);
    }
    return e;
}

template <int D>
void LennardJonesFluid::force_d(const double* q, double* f) const {
    for (int i = 0; i < n_ * D; ++i) f[i] = 0.0;
    auto accum = [&](int i, int j) {
        if (excluded(i, j)) return;
        double d[D], r2 = 0.0;
        for (int k = 0; k < D; ++k) {
            double dx = q[i * D + k] - q[j * D + k];
            dx -= box_ * std::nearbyint(dx * inv_box_);
            d[k] = dx;
            r2 += dx * dx;
        }
        double c = pair_coef(r2);
        for (int k = 0; k < D; ++k) {
            f[i * D + k] += c * d[k];
            f[j * D + k] -= c * d[k];
        }
    };
    if (n_ >= 96 && CellList::usable(D, box_, r_off())) {
        CellList cl;
        cl.build(q, n_, D, box_, r_off());
        cl.for_each_pair(accum);
    } else {
        for (int i = 0; i < n_; ++i)
            for (int j = i + 1; j < n_; ++j) accum(i, j);
    }
}

template <int D>
double LennardJonesFluid::energy_and_force_d(const double* q, double* f) const {
    for (int i = 0; i < n_ * D; ++i) f[i] = 0.0;
    double e = 0.0;
    auto accum = [&](int i, int j) {
        if (excluded(i, j)) return;
        double d[D], r2 = 0.0;
        for (int k = 0; k < D; ++k) {
            double dx = q[i * D + k] - q[j * D + k];
            dx -= box_ * std::nearbyint(dx * inv_box_);
            d[k] = dx;
            r2 += dx * dx;
        }
        PairEval pe = pair_eval(r2, on2_, off2_, shift_, plateau_);
        e += pe.e;
        for (int k = 0; k < D; ++k) {
            f[i * D + k] += pe.c * d[k];
            f[j * D + k] -= pe.c * d[k];
        }
    };
    if (n_ >= 96 && CellList::usable(D, box_, r_off())) {
        CellList cl;
        cl.build(q, n_, D, box_, r_off());
        cl.for_each_pair(accum);
    } else {
        for (int i = 0; i < n_; ++i)
            for (int j = i + 1; j < n_; ++j) accum(i, j);
    }
    return e;
}

// pairs between particle i and everyone else; optional force on i only
template <int D>
double LennardJonesFluid::particle_scan(const double* q, int i, int skip, double* f_i) const {
    double e = 0.0;
    double acc[D];
    for (int k = 0; k < D; ++k) acc[k] = 0.0;
    const int excl = excluded_partner_[i];
    for (int j = 0; j < n_; ++j) {
        if (j == i || j == excl || j == skip) continue;
        double d[D], r2 = 0.0;
        for (int k = 0; k < D; ++k) {
            double dx = q[i * D + k] - q[j * D + k];
            dx -= box_ * std::nearbyint(dx * inv_box_);
            d[k] = dx;
            r2 += dx * dx;
        }
        if (f_i) {
            PairEval pe = pair_eval(r2, on2_, off2_, shift_, plateau_);
            e += pe.e;
            for (int k = 0; k < D; ++k) acc[k] += pe.c * d[k];
        } else {
            e += pair_energy(r2);
        }
    }
    if (f_i)
        for (int k = 0; k < D; ++k) f_i[k] = acc[k];
    return e;
}

double LennardJonesFluid::energy(const Eigen::VectorXd& q) const {
    switch (dim_) {
        case 1: return energy_d<1>(q.data());
        case 2: return energy_d<2>(q.data());
        default: return energy_d<3>(q.data());
    }
}

void LennardJonesFluid::force(const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> f) const {
    switch (dim_) {
        case 1: force_d<1>(q.data(), f.data()); break;
        case 2: force_d<2>(q.data(), f.data()); break;
        default: force_d<3>(q.data(), f.data());
    }
}

double LennardJonesFluid::energy_and_force(const Eigen::VectorXd& q,
                                           Eigen::Ref<Eigen::VectorXd> f) const {
    switch (dim_) {
        case 1: return energy_and_force_d<1>(q.data(), f.data());
        case 2: return energy_and_force_d<2>(q.data(), f.data());
        default: return energy_and_force_d<3>(q.data(), f.data());
    }
}

double LennardJonesFluid::set_energy(const Eigen::VectorXd& q, std::span<const int> set) const {
    if (static_cast<int>(set.size()) == n_) return energy(q);
    const double* qp = q.data();
    if (set.size() == 1) {
        switch (dim_) {
            case 1: return particle_scan<1>(qp, set[0], -1, nullptr);
            case 2: return particle_scan<2>(qp, set[0], -1, nullptr);
            default: return particle_scan<3>(qp, set[0], -1, nullptr);
        }
    }
    if (set.size() == 2) {
        int a = set[0], b = set[1];
        double e = 0.0;
        switch (dim_) {
            case 1:
                e = particle_scan<1>(qp, a, b, nullptr) + particle_scan<1>(qp, b, a, nullptr);
                break;
            case 2:
                e = particle_scan<2>(qp, a, b, nullptr) + particle_scan<2>(qp, b, a, nullptr);
                break;
            default:
                e = particle_scan<3>(qp, a, b, nullptr) + particle_scan<3>(qp, b, a, nullptr);
        }
        if (!excluded(a, b)) e += pair_energy(min_image_dist2(q, a, b, dim_, box_));
        return e;
    }
    // general cover: pairs with at least one end in the set, counted once
    std::vector<char> in_set(n_, 0);
    for (int i : set) in_set[i] = 1;
    double e = 0.0;
    for (int a : set)
        for (int j = 0; j < n_; ++j) {
            if (j == a || excluded(a, j)) continue;
            if (in_set[j] && j < a) continue;
            e += pair_energy(min_image_dist2(q, a, j, dim_, box_));
        }
    return e;
}

void LennardJonesFluid::set_force(const Eigen::VectorXd& q, std::span<const int> set,
                                  Eigen::Ref<Eigen::VectorXd> f_set) const {
    if (static_cast<int>(set.size()) == n_) {
        force(q, f_set);
        return;
    }
    const double* qp = q.data();
    for (size_t s = 0; s < set.size(); ++s) {
        switch (dim_) {
            case 1: particle_scan<1>(qp, set[s], -1, f_set.data() + s * dim_); break;
            case 2: particle_scan<2>(qp, set[s], -1, f_set.data() + s * dim_); break;
            default: particle_scan<3>(qp, set[s], -1, f_set.data() + s * dim_);
        }
    }
}

double LennardJonesFluid::set_energy_and_force(const Eigen::VectorXd& q, std::span<const int> set,
                                               Eigen::Ref<Eigen::VectorXd> f_set) const {
    if (static_cast<int>(set.size()) == n_) return energy_and_force(q, f_set);
    if (set.size() == 1) {
        const double* qp = q.data();
        switch (dim_) {
            case 1: return particle_scan<1>(qp, set[0], -1, f_set.data());
            case 2: return particle_scan<2>(qp, set[0], -1, f_set.data());
            default: return particle_scan<3>(qp, set[0], -1, f_set.data());
        }
    }
    set_force(q, set, f_set);
    return set_energy(q, set);
}

double CosineWell::energy(const Eigen::VectorXd& q) const {
    double two_pi = 2.0 * std::numbers::pi;
    double e = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) e += 1.0 - std::cos(two_pi * q[i] / box_);
    return e;
}

void CosineWell::force(const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> f) const {
    double two_pi = 2.0 * std::numbers::pi;
    for (Eigen::Index i = 0; i < q.size(); ++i)
        f[i] = -(two_pi / box_) * std::sin(two_pi * q[i] / box_);
}

double CosineWell::set_energy(const Eigen::VectorXd& q, std::span<const int> set) const {
    double two_pi = 2.0 * std::numbers::pi;
    double e = 0.0;
    for (int i : set)
        for (int k = 0; k < dim_; ++k) e += 1.0 - std::cos(two_pi * q[i * dim_ + k] / box_);
    return e;
}

void CosineWell::set_force(const Eigen::VectorXd& q, std::span<const int> set,
                           Eigen::Ref<Eigen::VectorXd> f_set) const {
    double two_pi = 2.0 * std::numbers::pi;
    for (size_t s = 0; s < set.size(); ++s)
        for (int k = 0; k < dim_; ++k)
            f_set[s * dim_ + k] = -(two_pi / box_) * std::sin(two_pi * q[set[s] * dim_ + k] / box_);
}

void PotentialSplit::force(const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> f) const {
    fast_->force(q, f);
    Eigen::VectorXd tmp(q.size());
    slow_->force(q, tmp);
    f += tmp;
}

void PotentialSplit::set_force(const Eigen::VectorXd& q, std::span<const int> set,
                               Eigen::Ref<Eigen::VectorXd> f_set) const {
    fast_->set_force(q, set, f_set);
    Eigen::VectorXd tmp(f_set.size());
    slow_->set_force(q, set, tmp);
    f_set += tmp;
}

double kinetic_energy(const SystemSpec& spec, const Eigen::VectorXd& p) {
    double k = 0.0;
    for (int i = 0; i < spec.n_particles; ++i) {
        double s = 0.0;
        for (int c = 0; c < spec.dim; ++c) s += p[i * spec.dim + c] * p[i * spec.dim + c];
        k += 0.5 * s / spec.mass[i];
    }
    return k;
}

double kinetic_energy_set(const SystemSpec& spec, const Eigen::VectorXd& p,
                          std::span<const int> set) {
    double k = 0.0;
    for (int i : set) {
        double s = 0.0;
        for (int c = 0; c < spec.dim; ++c) s += p[i * spec.dim + c] * p[i * spec.dim + c];
        k += 0.5 * s / spec.mass[i];
    }
    return k;
}

double hamiltonian(const SystemSpec& spec, const PhaseState& state, const Potential& pot) {
    return kinetic_energy(spec, state.p) + pot.energy(state.q);
}

void CellList::build(const double* q, int n, int d, double box, double reach) {
    dim = d;
    bins = static_cast<int>(std::floor(box / reach));
    if (bins < 3) throw std::logic_error("cell list needs >= 3 bins per dimension");
    bin_size = box / bins;
    int nc = 1;
    for (int k = 0; k < dim; ++k) nc *= bins;
    head.assign(nc, -1);
    next.assign(n, -1);
    for (int i = 0; i < n; ++i) {
        int c = cell_of(q + i * dim);
        next[i] = head[c];
        head[c] = i;
    }
}

int CellList::cell_of(const double* x) const {
    int c = 0;
    for (int k = dim - 1; k >= 0; --k) {
        int b = static_cast<int>(std::floor(x[k] / bin_size));
        if (b >= bins) b = bins - 1;
        if (b < 0) b = 0;
        c = c * bins + b;
    }
    return c;
}

}  // namespace metromd
