#include "metromd/constraints.hpp"

#include <cmath>
#include <stdexcept>

#include "metromd/potential.hpp"

namespace metromd {

DumbbellConstraints::DumbbellConstraints(int n_dumbbells, int dim, double box, double bond_length)
    : n_(n_dumbbells), dim_(dim), box_(box), len_(bond_length) {
    if (n_dumbbells < 1) throw std::invalid_argument("need at least one dumbbell");
    if (dim < 1 || dim > 3) throw std::invalid_argument("dim must be 1, 2 or 3");
    if (!(bond_length > 0.0)) throw std::invalid_argument("bond_length must be > 0");
    if (!(bond_length < box / 2.0))
        throw std::invalid_argument("bond_length must be < box/2 so the bond image is unique");
}

void DumbbellConstraints::bond_vector(const Eigen::VectorXd& q, int j,
                                      Eigen::Ref<Eigen::VectorXd> delta) const {
    int a = 2 * j, b = 2 * j + 1;
    for (int k = 0; k < dim_; ++k)
        delta[k] = min_image(q[a * dim_ + k] - q[b * dim_ + k], box_);
}

double DumbbellConstraints::value(const Eigen::VectorXd& q, int j) const {
    double r2 = min_image_dist2(q, 2 * j, 2 * j + 1, dim_, box_);
    return r2 - len_ * len_;
}

void DumbbellConstraints::gradient(const Eigen::VectorXd& q, int j,
                                   Eigen::Ref<Eigen::VectorXd> grad) const {
    int a = 2 * j, b = 2 * j + 1;
    for (int k = 0; k < dim_; ++k) {
        double d = min_image(q[a * dim_ + k] - q[b * dim_ + k], box_);
        grad[k] = 2.0 * d;
        grad[dim_ + k] = -2.0 * d;
    }
}

double DumbbellConstraints::tangency(const SystemSpec& spec, const Eigen::VectorXd& q,
                                     const Eigen::VectorXd& p, int j) const {
    int a = 2 * j, b = 2 * j + 1;
    double s = 0.0;
    for (int k = 0; k < dim_; ++k) {
        double d = min_image(q[a * dim_ + k] - q[b * dim_ + k], box_);
        s += 2.0 * d * (p[a * dim_ + k] / spec.mass[a] - p[b * dim_ + k] / spec.mass[b]);
    }
    return s;
}

double DumbbellConstraints::max_abs_value(const Eigen::VectorXd& q) const {
    double m = 0.0;
    for (int j = 0; j < n_; ++j) m = std::max(m, std::abs(value(q, j)));
    return m;
}

double DumbbellConstraints::max_abs_tangency(const SystemSpec& spec, const Eigen::VectorXd& q,
                                             const Eigen::VectorXd& p) const {
    double m = 0.0;
    for (int j = 0; j < n_; ++j) m = std::max(m, std::abs(tangency(spec, q, p, j)));
    return m;
}

std::vector<std::pair<int, int>> DumbbellConstraints::bonded_pairs() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(n_);
    for (int j = 0; j < n_; ++j) out.emplace_back(2 * j, 2 * j + 1);
    return out;
}

void project_to_manifold(const SystemSpec& spec, const DumbbellConstraints& cons, PhaseState& s) {
    int d = cons.dim();
    Eigen::VectorXd delta(d);
    for (int j = 0; j < cons.count(); ++j) {
        int a = 2 * j, b = 2 * j + 1;
        cons.bond_vector(s.q, j, delta);
        double r = delta.norm();
        if (!(r > 1e-12 * cons.bond_length()))
            throw std::invalid_argument("coincident dumbbell endpoints cannot be projected");

        // rescale about the midpoint in the bond's own image
        double scale = cons.bond_length() / r;
        for (int k = 0; k < d; ++k) {
            double mid = s.q[b * d + k] + 0.5 * delta[k];
            s.q[a * d + k] = wrap_scalar(mid + 0.5 * scale * delta[k], spec.box_length);
            s.q[b * d + k] = wrap_scalar(mid - 0.5 * scale * delta[k], spec.box_length);
        }

        // remove the momentum component normal to the (rescaled) bond
        cons.bond_vector(s.q, j, delta);
        double ma = spec.mass[a], mb = spec.mass[b];
        double denom = 4.0 * delta.squaredNorm() * (1.0 / ma + 1.0 / mb);
        double num = 0.0;
        for (int k = 0; k < d; ++k)
            num += 2.0 * delta[k] * (s.p[a * d + k] / ma - s.p[b * d + k] / mb);
        double lambda = num / denom;
        for (int k = 0; k < d; ++k) {
            s.p[a * d + k] -= lambda * 2.0 * delta[k];
            s.p[b * d + k] += lambda * 2.0 * delta[k];
        }
    }
}

Eigen::MatrixXd constraint_projection(const SystemSpec& spec, const DumbbellConstraints& cons,
                                      const Eigen::VectorXd& q, int j) {
    int d = cons.dim();
    Eigen::VectorXd grad(2 * d);
    cons.gradient(q, j, grad);
    Eigen::VectorXd minv(2 * d);
    for (int k = 0; k < d; ++k) {
        minv[k] = 1.0 / spec.mass[2 * j];
        minv[d + k] = 1.0 / spec.mass[2 * j + 1];
    }
    Eigen::VectorXd minv_grad = minv.cwiseProduct(grad);
    double denom = grad.dot(minv_grad);
    return Eigen::MatrixXd::Identity(2 * d, 2 * d) - (grad * minv_grad.transpose()) / denom;
}

}  // namespace metromd
