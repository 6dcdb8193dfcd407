#include "qrbsde/regress.hpp"

#include "qrbsde/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qrbsde {

BasisSpec BasisSpec::polynomial(std::size_t degree, double ridge) {
    BasisSpec s;
    s.kind = Kind::polynomial;
    s.degree = degree;
    s.ridge = ridge;
    return s;
}

BasisSpec BasisSpec::piecewise(std::size_t cells, double x_lo, double x_hi, double ridge) {
    BasisSpec s;
    s.kind = Kind::piecewise_constant;
    s.cells = cells;
    s.x_lo = x_lo;
    s.x_hi = x_hi;
    s.ridge = ridge;
    return s;
}

void BasisSpec::validate() const {
    if (!(ridge >= 0.0)) throw ConfigError("ridge parameter must be nonnegative");
    if (kind == Kind::polynomial) {
        if (degree > 12) throw ConfigError("polynomial degree must be at most 12");
    } else {
        if (cells < 1 || cells > 10000) throw ConfigError("piecewise cell count must be in [1, 10000]");
        if (!(x_lo < x_hi)) throw ConfigError("basis domain needs x_lo < x_hi");
    }
}

std::size_t BasisSpec::dimension() const { return kind == Kind::polynomial ? degree + 1 : cells; }

Basis::Basis(const BasisSpec& spec, std::span<const double> xs) : spec_(spec) {
    spec.validate();
    if (xs.empty()) throw ConfigError("basis needs a non-empty state sample");
    dim_ = spec.dimension();
    if (spec.kind == BasisSpec::Kind::polynomial) {
        double sum = 0.0;
        for (double x : xs) sum += x;
        mean_ = sum / static_cast<double>(xs.size());
        double ss = 0.0;
        for (double x : xs) ss += (x - mean_) * (x - mean_);
        sd_ = std::sqrt(ss / static_cast<double>(xs.size()));
        if (spec.degree >= 1 && !(sd_ > 0.0))
            throw NumericError("degenerate state sample (zero variance) for a polynomial basis of degree >= 1");
        if (!(sd_ > 0.0)) sd_ = 1.0;
    }
}

Basis Basis::constant() {
    Basis b;
    b.spec_ = BasisSpec::polynomial(0, 0.0);
    b.dim_ = 1;
    return b;
}

std::size_t Basis::cell(double x) const {
    const double u = (x - spec_.x_lo) / (spec_.x_hi - spec_.x_lo) * static_cast<double>(spec_.cells);
    if (!(u > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(u), spec_.cells - 1);
}

void Basis::features(double x, std::span<double> out) const {
    if (spec_.kind == BasisSpec::Kind::polynomial) {
        const double u = (x - mean_) / sd_;
        double v = 1.0;
        for (std::size_t k = 0; k < dim_; ++k) {
            out[k] = v;
            v *= u;
        }
    } else {
        std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(dim_), 0.0);
        out[cell(x)] = 1.0;
    }
}

std::vector<double> Basis::features(double x) const {
    std::vector<double> out(dim_);
    features(x, out);
    return out;
}

Regressor::Regressor(Basis basis, std::span<const double> xs, double ridge)
    : basis_(std::move(basis)), n_(xs.size()), ridge_(ridge) {
    if (!(ridge >= 0.0)) throw ConfigError("ridge parameter must be nonnegative");
    const std::size_t d = basis_.dimension();
    if (n_ < d) throw ConfigError("regression needs at least as many samples as basis functions");

    if (basis_.spec().kind == BasisSpec::Kind::piecewise_constant) {
        cell_of_.resize(n_);
        counts_.assign(d, 0.0);
        for (std::size_t s = 0; s < n_; ++s) {
            cell_of_[s] = basis_.cell(xs[s]);
            counts_[cell_of_[s]] += 1.0;
        }
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (double c : counts_) {
            lo = std::min(lo, c + ridge_);
            hi = std::max(hi, c + ridge_);
        }
        if (lo == 0.0) throw NumericError("rank-deficient design (empty cell) at ridge 0; use a positive ridge");
        condition_ = std::sqrt(hi / lo);
        return;
    }

    const std::size_t rows = ridge_ > 0.0 ? n_ + d : n_;
    design_.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
    std::vector<double> phi(d);
    for (std::size_t s = 0; s < n_; ++s) {
        basis_.features(xs[s], phi);
        for (std::size_t k = 0; k < d; ++k) design_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)) = phi[k];
    }
    if (ridge_ > 0.0) {
        design_.bottomRows(static_cast<Eigen::Index>(d)).setZero();
        design_.bottomRows(static_cast<Eigen::Index>(d)).diagonal().setConstant(std::sqrt(ridge_));
    }
    qr_.compute(design_);
    if (ridge_ == 0.0 && qr_.rank() < static_cast<Eigen::Index>(d))
        throw NumericError("rank-deficient design at ridge 0; use a positive ridge");

    const auto di = static_cast<Eigen::Index>(d);
    const Eigen::MatrixXd R = qr_.matrixR().topLeftCorner(di, di).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
    const auto& sv = svd.singularValues();
    condition_ = sv(di - 1) > 0.0 ? sv(0) / sv(di - 1) : std::numeric_limits<double>::infinity();
}

RegressionFit Regressor::fit(std::span<const double> ys) const {
    if (ys.size() != n_) throw ConfigError("regression needs |xs| = |ys|");
    const std::size_t d = basis_.dimension();
    RegressionFit out;
    out.basis = basis_;
    out.condition_number = condition_;
    out.coefficients.assign(d, 0.0);

    double sse = 0.0;
    if (basis_.spec().kind == BasisSpec::Kind::piecewise_constant) {
        std::vector<double> sums(d, 0.0);
        for (std::size_t s = 0; s < n_; ++s) sums[cell_of_[s]] += ys[s];
        for (std::size_t k = 0; k < d; ++k) out.coefficients[k] = sums[k] / (counts_[k] + ridge_);
        for (std::size_t s = 0; s < n_; ++s) {
            const double r = ys[s] - out.coefficients[cell_of_[s]];
            sse += r * r;
        }
    } else {
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(design_.rows());
        for (std::size_t s = 0; s < n_; ++s) rhs(static_cast<Eigen::Index>(s)) = ys[s];
        const Eigen::VectorXd c = qr_.solve(rhs);
        for (std::size_t k = 0; k < d; ++k) out.coefficients[k] = c(static_cast<Eigen::Index>(k));
        const Eigen::VectorXd fitted = design_.topRows(static_cast<Eigen::Index>(n_)) * c;
        for (std::size_t s = 0; s < n_; ++s) {
            const double r = ys[s] - fitted(static_cast<Eigen::Index>(s));
            sse += r * r;
        }
    }
    out.rmse = std::sqrt(sse / static_cast<double>(n_));
    if (!std::isfinite(out.rmse)) throw NumericError("non-finite regression residual");
    return out;
}

RegressionFit fit_least_squares(const Basis& basis, std::span<const double> xs, std::span<const double> ys,
                                double ridge) {
    if (xs.size() != ys.size()) throw ConfigError("regression needs |xs| = |ys|");
    return Regressor(basis, xs, ridge).fit(ys);
}

double evaluate_fit(const RegressionFit& fit, double x, std::optional<Interval> clamp) {
    const std::size_t d = fit.basis.dimension();
    double v = 0.0;
    if (fit.basis.spec().kind == BasisSpec::Kind::piecewise_constant) {
        v = fit.coefficients[fit.basis.cell(x)];
    } else {
        const double u = (x - fit.basis.center()) / fit.basis.scale();
        // Horner
        for (std::size_t k = d; k-- > 0;) v = v * u + fit.coefficients[k];
    }
    if (clamp) v = std::clamp(v, clamp->lo, clamp->hi);
    return v;
}

}  // namespace qrbsde
