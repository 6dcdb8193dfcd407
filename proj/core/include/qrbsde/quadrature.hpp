#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qrbsde {

/// Gauss-Hermite rule for the standard normal density: sum_k w_k f(u_k)
/// approximates E[f(G)], G ~ N(0, 1). Weights sum to one.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Golub-Welsch on the probabilists' Hermite Jacobi matrix.
GaussHermiteRule gauss_hermite(std::size_t order);

double normal_pdf(double u);
double normal_cdf(double u);
/// Phi(b) - Phi(a) without cancellation in either tail.
double normal_mass(double a, double b);

/// Piecewise cubic Hermite interpolant on a uniform grid with Fritsch-Carlson
/// (PCHIP) slopes; constant beyond the end nodes. Shape-preserving: monotone
/// data stays monotone, no new extrema.
class MonotoneCubic {
public:
    MonotoneCubic() = default;
    MonotoneCubic(double x_lo, double dx, std::vector<double> values);

    double operator()(double x) const;

    std::size_t size() const { return values_.size(); }
    double x_lo() const { return x_lo_; }
    double dx() const { return dx_; }
    double x_hi() const { return x_lo_ + dx_ * static_cast<double>(values_.size() - 1); }
    double value(std::size_t j) const { return values_[j]; }
    double slope(std::size_t j) const { return slopes_[j]; }

    /// E[p(mu + s G)] and E[p(mu + s G) G] in closed form (cell-wise
    /// truncated Gaussian moments), integrating over G in [-12, 12].
    void gaussian_moments(double mu, double s, double& mean, double& first) const;

private:
    double x_lo_ = 0.0;
    double dx_ = 1.0;
    std::vector<double> values_;
    std::vector<double> slopes_;
};

/// Same as MonotoneCubic::operator() on the nodes of `values` with linear
/// interpolation; constant extrapolation.
double linear_interpolate(double x_lo, double dx, std::span<const double> values, double x);

}  // namespace qrbsde
