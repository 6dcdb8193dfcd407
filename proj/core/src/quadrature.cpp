#include "qrbsde/quadrature.hpp"

#include "qrbsde/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qrbsde {

GaussHermiteRule gauss_hermite(std::size_t order) {
    if (order == 0) throw ConfigError("quadrature order must be positive");
    const auto q = static_cast<Eigen::Index>(order);
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(q, q);
    for (Eigen::Index k = 1; k < q; ++k) {
        jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
        jacobi(k - 1, k) = jacobi(k, k - 1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    GaussHermiteRule rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    for (Eigen::Index k = 0; k < q; ++k) {
        rule.nodes[static_cast<std::size_t>(k)] = eig.eigenvalues()(k);
        const double v = eig.eigenvectors()(0, k);
        rule.weights[static_cast<std::size_t>(k)] = v * v;
    }
    // exact symmetry
    for (std::size_t k = 0; k < order / 2; ++k) {
        const std::size_t r = order - 1 - k;
        const double u = 0.5 * (rule.nodes[r] - rule.nodes[k]);
        const double w = 0.5 * (rule.weights[r] + rule.weights[k]);
        rule.nodes[k] = -u;
        rule.nodes[r] = u;
        rule.weights[k] = rule.weights[r] = w;
    }
    if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
    double total = 0.0;
    for (double w : rule.weights) total += w;
    for (double& w : rule.weights) w /= total;
    return rule;
}

double normal_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

double normal_mass(double a, double b) {
    if (b <= a) return 0.0;
    if (a >= 0.0) return 0.5 * (std::erfc(a / std::numbers::sqrt2) - std::erfc(b / std::numbers::sqrt2));
    if (b <= 0.0) return 0.5 * (std::erfc(-b / std::numbers::sqrt2) - std::erfc(-a / std::numbers::sqrt2));
    return 1.0 - 0.5 * std::erfc(-a / std::numbers::sqrt2) - 0.5 * std::erfc(b / std::numbers::sqrt2);
}

namespace {

double sign(double v) { return (v > 0.0) - (v < 0.0); }

double edge_slope(double d0, double d1) {
    double d = 0.5 * (3.0 * d0 - d1);
    if (sign(d) != sign(d0)) d = 0.0;
    else if (sign(d0) != sign(d1) && std::abs(d) > 3.0 * std::abs(d0)) d = 3.0 * d0;
    return d;
}

}  // namespace

MonotoneCubic::MonotoneCubic(double x_lo, double dx, std::vector<double> values)
    : x_lo_(x_lo), dx_(dx), values_(std::move(values)) {
    const std::size_t n = values_.size();
    if (n < 2 || !(dx > 0.0)) throw ConfigError("monotone cubic needs at least two nodes and positive spacing");
    slopes_.assign(n, 0.0);
    std::vector<double> secant(n - 1);
    for (std::size_t j = 0; j + 1 < n; ++j) secant[j] = (values_[j + 1] - values_[j]) / dx_;
    if (n == 2) {
        slopes_[0] = slopes_[1] = secant[0];
        return;
    }
    for (std::size_t j = 1; j + 1 < n; ++j) {
        const double a = secant[j - 1], b = secant[j];
        // uniform spacing: weighted harmonic mean reduces to the plain one
        slopes_[j] = (a * b <= 0.0) ? 0.0 : 2.0 / (1.0 / a + 1.0 / b);
    }
    slopes_[0] = edge_slope(secant[0], secant[1]);
    slopes_[n - 1] = edge_slope(secant[n - 2], secant[n - 3]);
}

double MonotoneCubic::operator()(double x) const {
    const std::size_t n = values_.size();
    const double u = (x - x_lo_) / dx_;
    if (!(u > 0.0)) return values_.front();
    if (u >= static_cast<double>(n - 1)) return values_.back();
    const auto j = std::min(static_cast<std::size_t>(u), n - 2);
    const double s = (u - static_cast<double>(j)) * dx_;
    const double delta = (values_[j + 1] - values_[j]) / dx_;
    const double c2 = (3.0 * delta - 2.0 * slopes_[j] - slopes_[j + 1]) / dx_;
    const double c3 = (slopes_[j] + slopes_[j + 1] - 2.0 * delta) / (dx_ * dx_);
    return values_[j] + s * (slopes_[j] + s * (c2 + s * c3));
}

void MonotoneCubic::gaussian_moments(double mu, double s, double& mean, double& first) const {
    constexpr double kWindow = 12.0;
    if (!(s > 0.0)) {
        mean = (*this)(mu);
        first = 0.0;
        return;
    }
    const std::size_t n = values_.size();
    const double lo = mu - kWindow * s;
    const double hi = mu + kWindow * s;
    mean = 0.0;
    first = 0.0;

    // left extrapolation: constant values_[0] on (-inf, x_lo]
    const double a_lo = (x_lo_ - mu) / s;
    if (a_lo > -kWindow) {
        const double top = std::min(a_lo, kWindow);
        mean += values_.front() * normal_mass(-kWindow, top);
        first += values_.front() * (normal_pdf(-kWindow) - normal_pdf(top));
    }
    const double a_hi = (x_hi() - mu) / s;
    if (a_hi < kWindow) {
        const double bottom = std::max(a_hi, -kWindow);
        mean += values_.back() * normal_mass(bottom, kWindow);
        first += values_.back() * (normal_pdf(bottom) - normal_pdf(kWindow));
    }
    if (a_hi <= -kWindow || a_lo >= kWindow) return;

    const double ulo = std::max(0.0, (lo - x_lo_) / dx_);
    const double uhi = std::min(static_cast<double>(n - 1), (hi - x_lo_) / dx_);
    const auto j0 = std::min(static_cast<std::size_t>(ulo), n - 2);
    const auto j1 = std::min(static_cast<std::size_t>(std::ceil(uhi)), n - 1);

    // In a cell [x_j, x_j + dx], x = mu + s u and p = sum_k c_k (x - x_j)^k
    // = sum_k c_k s^k (u - a)^k with a = (x_j - mu) / s. With
    // I_k = int_a^b (u - a)^k phi(u) du:
    //   I_0 = Phi(b) - Phi(a)
    //   I_1 = phi(a) - phi(b) - a I_0
    //   I_k = -(b - a)^{k-1} phi(b) + (k - 1) I_{k-2} - a I_{k-1},  k >= 2
    // and int (u - a)^k u phi = I_{k+1} + a I_k.
    for (std::size_t j = j0; j < j1; ++j) {
        const double xj = x_lo_ + dx_ * static_cast<double>(j);
        const double a = (xj - mu) / s;
        const double b = (xj + dx_ - mu) / s;
        const double w = b - a;
        const double pa = normal_pdf(a), pb = normal_pdf(b);
        double I[5];
        I[0] = normal_mass(a, b);
        I[1] = pa - pb - a * I[0];
        I[2] = -w * pb + I[0] - a * I[1];
        I[3] = -w * w * pb + 2.0 * I[1] - a * I[2];
        I[4] = -w * w * w * pb + 3.0 * I[2] - a * I[3];

        const double delta = (values_[j + 1] - values_[j]) / dx_;
        const double c[4] = {values_[j], slopes_[j], (3.0 * delta - 2.0 * slopes_[j] - slopes_[j + 1]) / dx_,
                             (slopes_[j] + slopes_[j + 1] - 2.0 * delta) / (dx_ * dx_)};
        double sk = 1.0;
        for (int k = 0; k < 4; ++k) {
            const double coef = c[k] * sk;
            mean += coef * I[k];
            first += coef * (I[k + 1] + a * I[k]);
            sk *= s;
        }
    }
}

double linear_interpolate(double x_lo, double dx, std::span<const double> values, double x) {
    const std::size_t n = values.size();
    const double u = (x - x_lo) / dx;
    if (!(u > 0.0)) return values.front();
    if (u >= static_cast<double>(n - 1)) return values.back();
    const auto j = std::min(static_cast<std::size_t>(u), n - 2);
    const double frac = u - static_cast<double>(j);
    return values[j] + frac * (values[j + 1] - values[j]);
}

}  // namespace qrbsde
