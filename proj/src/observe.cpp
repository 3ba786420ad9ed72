#include "metromd/observe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace metromd {

namespace {

// history columns consumed per matrix product
constexpr int kFlushBlock = 256;

}  // namespace

AutocorrAccumulator::AutocorrAccumulator(int n_dof, int n_lags) : nu_(n_dof), L_(n_lags - 1) {
    if (n_dof < 1) throw std::invalid_argument("autocorr: n_dof must be positive");
    if (n_lags < 1) throw std::invalid_argument("autocorr: n_lags must be positive");
    // compaction keeps the trailing L_ columns, so the two regions must not overlap
    capacity_ = L_ + std::max(L_, 8 * kFlushBlock) + 1;
    hist_.resize(nu_, capacity_);
    gemm_.resize(kFlushBlock, L_ + kFlushBlock);
    sums_ = Eigen::VectorXd::Zero(L_ + 1);
}

void AutocorrAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& p) {
    if (p.size() != nu_) throw std::invalid_argument("autocorr: sample size mismatch");
    hist_.col(filled_) = p;
    ++filled_;
    if (filled_ == capacity_) {
        flush();
        compact();
    } else if (filled_ - next_end_ >= kFlushBlock) {
        flush();
    }
}

void AutocorrAccumulator::flush() {
    int estart = std::max(next_end_, L_);
    int nb = filled_ - estart;
    next_end_ = filled_;
    if (nb <= 0) return;
    // window ends e in [estart, filled); each contributes pairs
    // (e - L, e - L + k) for k = 0..L, all read from the history window
    auto origins = hist_.middleCols(estart - L_, nb);
    auto targets = hist_.middleCols(estart - L_, L_ + nb);
    gemm_.topLeftCorner(nb, L_ + nb).noalias() = origins.transpose() * targets;
    for (int k = 0; k <= L_; ++k) {
        double acc = 0.0;
        for (int r = 0; r < nb; ++r) acc += gemm_(r, r + k);
        sums_[k] += acc;
    }
    n_ += nb;
}

void AutocorrAccumulator::compact() {
    hist_.leftCols(L_) = hist_.rightCols(L_);
    filled_ = L_;
    next_end_ = L_;
}

void AutocorrAccumulator::merge(AutocorrAccumulator& other) {
    if (other.nu_ != nu_ || other.L_ != L_)
        throw std::invalid_argument("autocorr: merge shape mismatch");
    flush();
    other.flush();
    sums_ += other.sums_;
    n_ += other.n_;
}

std::int64_t AutocorrAccumulator::count() {
    flush();
    return n_;
}

Eigen::VectorXd AutocorrAccumulator::estimate() {
    flush();
    if (n_ == 0) throw std::logic_error("autocorr: no complete lag window in the stream");
    return sums_ / static_cast<double>(n_);
}

double sup_diff_on_common_grid(const Eigen::VectorXd& fine, double h_fine,
                               const Eigen::VectorXd& coarse, double h_coarse) {
    if (!(h_fine > 0.0) || !(h_coarse > 0.0))
        throw std::invalid_argument("sup_diff: lag spacings must be positive");
    auto stride = static_cast<Eigen::Index>(std::lround(h_coarse / h_fine));
    if (stride < 1 || std::abs(static_cast<double>(stride) * h_fine - h_coarse) > 1e-9 * h_coarse)
        throw std::invalid_argument("sup_diff: lag grids do not nest");
    double sup = 0.0;
    Eigen::Index shared = 0;
    for (Eigen::Index j = 0; j < coarse.size() && j * stride < fine.size(); ++j, ++shared)
        sup = std::max(sup, std::abs(fine[j * stride] - coarse[j]));
    if (shared == 0) throw std::invalid_argument("sup_diff: curves share no lag");
    return sup;
}

double richardson_error(const Eigen::VectorXd& A_h, double h, const Eigen::VectorXd& A_2h,
                        const Eigen::VectorXd& A_ref) {
    if (A_ref.size() == 0) throw std::invalid_argument("richardson: empty reference");
    double denom = A_ref.cwiseAbs().maxCoeff();
    if (!(denom > 0.0)) throw std::invalid_argument("richardson: reference has no scale");
    return sup_diff_on_common_grid(A_h, h, A_2h, 2.0 * h) / denom;
}

SlopeFit fit_loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("loglog fit: need two or more points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    auto n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw std::invalid_argument("loglog fit: inputs must be positive");
        double lx = std::log(x[i]);
        double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("loglog fit: abscissae are all equal");
    double slope = (n * sxy - sx * sy) / denom;
    return {slope, (sy - slope * sx) / n};
}

namespace {

// series for P(a, x), valid for x < a + 1
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// modified Lentz continued fraction for Q(a, x), valid for x >= a + 1
double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1e300;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_q: need a > 0 and x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double chi2_sf(double x, int dof) {
    if (dof < 1) throw std::invalid_argument("chi2_sf: dof must be positive");
    if (x <= 0.0) return 1.0;
    return gamma_q(0.5 * dof, 0.5 * x);
}

double chi2_statistic(std::span<const std::int64_t> counts, std::span<const double> expected) {
    if (counts.size() != expected.size() || counts.empty())
        throw std::invalid_argument("chi2_statistic: size mismatch");
    double stat = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (!(expected[i] > 0.0))
            throw std::invalid_argument("chi2_statistic: expected counts must be positive");
        double diff = static_cast<double>(counts[i]) - expected[i];
        stat += diff * diff / expected[i];
    }
    return stat;
}

}  // namespace metromd
