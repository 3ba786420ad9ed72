#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

#include <Eigen/Core>

#include "metromd/integrate.hpp"

namespace metromd {

// Streaming estimator of the momentum autocorrelation
//   A(tau_k) = < p(t) . p(t + k) >,  k = 0 .. n_lags - 1,
// averaged over every origin t whose full lag window fits inside the stream,
// so all lags share one origin count. Samples are buffered in a sliding
// history matrix and consumed in blocks as one matrix product per block.
class AutocorrAccumulator {
  public:
    AutocorrAccumulator(int n_dof, int n_lags);

    void add(const Eigen::Ref<const Eigen::VectorXd>& p);

    // fold another stream's accumulated pairs into this one
    void merge(AutocorrAccumulator& other);

    // origins accumulated so far
    std::int64_t count();

    // throws until at least one full window has closed
    Eigen::VectorXd estimate();

    int n_dof() const { return nu_; }
    int n_lags() const { return L_ + 1; }

  private:
    void flush();
    void compact();

    int nu_;
    int L_;
    int capacity_;
    Eigen::MatrixXd hist_;
    Eigen::MatrixXd gemm_;
    Eigen::VectorXd sums_;
    int filled_ = 0;
    int next_end_ = 0;  // first history column not yet consumed as a window end
    std::int64_t n_ = 0;
};

// sup_j |fine[j * stride] - coarse[j]| where stride = h_coarse / h_fine;
// both curves are read on the coarse lag grid starting at lag zero.
// Throws if the grids do not nest or share no lag.
double sup_diff_on_common_grid(const Eigen::VectorXd& fine, double h_fine,
                               const Eigen::VectorXd& coarse, double h_coarse);

// relative two-resolution gap
//   eps_h = sup over shared lags |A_h - A_2h| / sup over lags |A_ref|
// with A_h on lag grid k h, A_2h on k 2h, and A_ref the finest curve available
double richardson_error(const Eigen::VectorXd& A_h, double h, const Eigen::VectorXd& A_2h,
                        const Eigen::VectorXd& A_ref);

struct SlopeFit {
    double slope;
    double intercept;
};

// least-squares line through (log x_i, log y_i); all inputs must be positive
SlopeFit fit_loglog_slope(std::span<const double> x, std::span<const double> y);

// running totals over step records
struct AcceptanceStats {
    std::int64_t proposed = 0;
    std::int64_t accepted = 0;
    std::int64_t solver_failures = 0;

    void add(const StepRecord& rec) {
        proposed += rec.proposed;
        accepted += rec.accepted;
        solver_failures += rec.solver_failures;
    }
    double mean_acceptance() const {
        return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
    }
};

// regularized upper incomplete gamma Q(a, x)
double gamma_q(double a, double x);

// P(X > x) for X ~ chi-square with dof degrees of freedom
double chi2_sf(double x, int dof);

// Pearson statistic sum (count - expected)^2 / expected
double chi2_statistic(std::span<const std::int64_t> counts, std::span<const double> expected);

// composite Simpson rule on n subintervals (n is rounded up to even)
template <class F>
double simpson(F&& f, double a, double b, int n) {
    if (n < 2) throw std::invalid_argument("simpson: need at least 2 subintervals");
    if (n % 2 != 0) ++n;
    double dx = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * dx) * (i % 2 != 0 ? 4.0 : 2.0);
    return s * dx / 3.0;
}

// quadrature oracle for 1-dof torus densities:
//   < g > = integral g(x) exp(-beta u(x)) dx / Z  over [0, box_length)
template <class G, class U>
double gibbs_moment(G&& g, U&& u, double beta, double box_length, int n_nodes = 10000) {
    auto weight = [&](double x) { return std::exp(-beta * u(x)); };
    double z = simpson(weight, 0.0, box_length, n_nodes);
    double m = simpson([&](double x) { return g(x) * weight(x); }, 0.0, box_length, n_nodes);
    return m / z;
}

}  // namespace metromd
