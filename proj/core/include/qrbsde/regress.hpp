#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace qrbsde {

struct BasisSpec {
    enum class Kind { polynomial, piecewise_constant };
    Kind kind = Kind::polynomial;
    std::size_t degree = 6;
    std::size_t cells = 32;
    double x_lo = -1.0;  // domain box, piecewise kind only
    double x_hi = 1.0;
    double ridge = 1e-8;

    static BasisSpec polynomial(std::size_t degree, double ridge = 1e-8);
    static BasisSpec piecewise(std::size_t cells, double x_lo, double x_hi, double ridge = 1e-8);

    /// Throws ConfigError on degree > 12, cells outside [1, 1e4], x_lo >= x_hi, ridge < 0.
    void validate() const;
    std::size_t dimension() const;
};

/// Feature map x -> phi(x). Polynomial features are monomials of the
/// standardized state (x - mean) / sd; piecewise features are one-hot cell
/// indicators with out-of-box states clamped to the edge cells.
class Basis {
public:
    Basis(const BasisSpec& spec, std::span<const double> xs);

    static Basis constant();

    std::size_t dimension() const { return dim_; }
    const BasisSpec& spec() const { return spec_; }
    double center() const { return mean_; }
    double scale() const { return sd_; }

    void features(double x, std::span<double> out) const;
    std::vector<double> features(double x) const;
    /// Index of the active cell (piecewise kind).
    std::size_t cell(double x) const;

private:
    Basis() = default;
    BasisSpec spec_;
    std::size_t dim_ = 1;
    double mean_ = 0.0;
    double sd_ = 1.0;
};

struct Interval {
    double lo;
    double hi;
};

struct RegressionFit {
    Basis basis = Basis::constant();
    std::vector<double> coefficients;
    double condition_number = 1.0;
    double rmse = 0.0;
    std::optional<Interval> clamp;
};

/// Least squares on a fixed design phi(xs); the factorization is shared
/// across right-hand sides.
class Regressor {
public:
    Regressor(Basis basis, std::span<const double> xs, double ridge);

    RegressionFit fit(std::span<const double> ys) const;
    std::size_t samples() const { return n_; }
    const Basis& basis() const { return basis_; }

private:
    Basis basis_;
    std::size_t n_ = 0;
    double ridge_ = 0.0;
    double condition_ = 1.0;
    // polynomial: QR of the ridge-augmented design
    Eigen::MatrixXd design_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
    // piecewise: cell of each sample and per-cell counts
    std::vector<std::size_t> cell_of_;
    std::vector<double> counts_;
};

/// Minimizes sum (ys - phi(xs) c)^2 + ridge |c|^2. At ridge 0 a rank-deficient
/// design is an error.
RegressionFit fit_least_squares(const Basis& basis, std::span<const double> xs, std::span<const double> ys,
                                double ridge);

/// phi(x) . c, clipped to `clamp` when given.
double evaluate_fit(const RegressionFit& fit, double x, std::optional<Interval> clamp = std::nullopt);

}  // namespace qrbsde
