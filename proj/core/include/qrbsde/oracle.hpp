#pragma once

#include "qrbsde/forward.hpp"
#include "qrbsde/model.hpp"
#include "qrbsde/quadrature.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qrbsde {

// Noise-free references for the discrete scheme. X^pi has Gaussian one-step
// transitions (b frozen at the left end point, sigma deterministic), so the
// scheme's conditional expectations can be computed on a spatial grid.

enum class OneStepIntegration {
    gauss_hermite,  // q-point rule on the interpolant
    exact_cell,     // closed-form Gaussian moments of the interpolant; adaptive quadrature of g on the last step
};

struct SpaceGrid {
    std::vector<double> nodes;
    std::size_t order = 16;  // Gauss-Hermite order
    OneStepIntegration integration = OneStepIntegration::exact_cell;
    std::vector<std::string> warnings;

    std::size_t size() const { return nodes.size(); }
    double lo() const { return nodes.front(); }
    double hi() const { return nodes.back(); }
    double dx() const { return nodes[1] - nodes[0]; }
};

struct SpaceGridOptions {
    std::size_t nodes = 1601;
    std::size_t order = 16;
    OneStepIntegration integration = OneStepIntegration::exact_cell;
    double half_width_sd = 6.0;
};

/// Uniform nodes over x0 +- 6 sigma_bar sqrt(T). When the deterministic drift
/// path leaves that box the grid is extended at the same spacing and a
/// warning is recorded. Errors: nodes < 51, order < 7.
SpaceGrid make_space_grid(const ProblemSpec& spec, const TimeGrid& grid, const SpaceGridOptions& options = {});

struct GridSolution {
    std::vector<double> times;
    std::vector<double> nodes;
    std::size_t dim = 1;
    std::vector<double> y;   // [i][j]
    std::vector<double> z;   // [i][j][k], i < N; empty for the Snell oracle
    std::vector<double> dk;  // [i][j]
    std::string interpolation = "monotone-cubic";
    std::vector<std::string> warnings;

    std::size_t steps() const { return times.size() - 1; }
    std::size_t size() const { return nodes.size(); }
    double node_y(std::size_t i, std::size_t j) const { return y[i * nodes.size() + j]; }
    double node_z(std::size_t i, std::size_t j, std::size_t k = 0) const {
        return z[(i * nodes.size() + j) * dim + k];
    }
    double node_dk(std::size_t i, std::size_t j) const { return dk[i * nodes.size() + j]; }

    /// Interpolated slices.
    double y_at(std::size_t i, double x) const;
    double z_at(std::size_t i, double x, std::size_t k = 0) const;
    double y0(double x0) const { return y_at(0, x0); }
};

/// The scheme with exact conditional expectations: backward induction on the
/// space nodes, then the same implicit y-step, clamps and reflection as the
/// Monte Carlo scheme.
GridSolution exact_scheme_solve(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                                const SpaceGrid& space, const TruncationRadius& radius);

/// Pure quadratic driver f = (alpha/2)|z|^2: exp(alpha Y) is the discrete Snell
/// envelope of exp(alpha g(X)) over stopping times in R. Returns Y (and the
/// implied reflection increments); z is left empty.
GridSolution snell_cole_hopf(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                             const SpaceGrid& space);

/// Enumerates the full q^N Gauss-Hermite tree and runs the scheme recursion
/// on it without interpolation. N <= 4, q <= 9.
double brute_force_tiny(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                        std::size_t order, const TruncationRadius& radius);

/// Columns: i, j, t, x, y, z (z_1..z_m when m > 1), dk.
void write_grid_csv(std::ostream& out, const GridSolution& solution);

}  // namespace qrbsde
