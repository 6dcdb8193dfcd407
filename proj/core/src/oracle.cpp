#include "qrbsde/oracle.hpp"

#include "qrbsde/error.hpp"
#include "qrbsde/parallel.hpp"
#include "qrbsde/scheme.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

namespace qrbsde {

namespace {

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// One-step Gaussian transition of X^pi from node x at step i.
struct Transition {
    double mean;
    double sd;
    std::vector<double> direction;  // sigma / |sigma|, zero when sigma = 0
};

Transition transition(const ProblemSpec& spec, const TimeGrid& grid, std::size_t i, double x) {
    const double dt = grid.dt(i);
    const auto vol = spec.sigma(grid.times[i]);
    const double v = norm(vol);
    Transition tr{x + spec.b(grid.times[i], x) * dt, v * std::sqrt(dt), std::vector<double>(vol.size(), 0.0)};
    if (v > 0.0)
        for (std::size_t k = 0; k < vol.size(); ++k) tr.direction[k] = vol[k] / v;
    return tr;
}

// E[h(mean + sd G)] and E[h(mean + sd G) G] for an opaque h by adaptive
// Gauss-Kronrod on [-12, 12].
void adaptive_moments(const std::function<double(double)>& h, double mean, double sd, double& m0, double& m1) {
    if (!(sd > 0.0)) {
        m0 = h(mean);
        m1 = 0.0;
        return;
    }
    using boost::math::quadrature::gauss_kronrod;
    m0 = gauss_kronrod<double, 31>::integrate([&](double u) { return h(mean + sd * u) * normal_pdf(u); }, -12.0, 12.0,
                                              15, 1e-12);
    m1 = gauss_kronrod<double, 31>::integrate([&](double u) { return h(mean + sd * u) * u * normal_pdf(u); }, -12.0,
                                              12.0, 15, 1e-12);
}

template <typename H>
void rule_moments(const GaussHermiteRule& rule, const H& h, double mean, double sd, double& m0, double& m1) {
    m0 = 0.0;
    m1 = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double v = h(mean + sd * rule.nodes[q]);
        m0 += rule.weights[q] * v;
        m1 += rule.weights[q] * v * rule.nodes[q];
    }
}

struct NodeState {
    double y_tilde;
    double y;
    double dk;
};

// Scheme update at one node from the one-step moments m0 = E[Y'] and
// m1 = E[Y' G]: Z = direction * m1 / sqrt(dt), clamps as in the Monte Carlo scheme.
NodeState node_update(const ProblemSpec& truncated, double t, double x, double dt, double m0, double m1,
                      const std::vector<double>& direction, double M, double z_cap, double obstacle, bool reflect,
                      double* z_out) {
    const double zeta = m1 / std::sqrt(dt);
    for (std::size_t k = 0; k < direction.size(); ++k) z_out[k] = std::clamp(direction[k] * zeta, -z_cap, z_cap);
    const double e = std::clamp(m0, -M, M);
    const std::span<const double> z(z_out, direction.size());
    const PicardResult r = solve_implicit(e, dt, [&](double y) { return truncated.f(t, x, y, z); });
    const double yt = std::clamp(r.value, -M, M);
    NodeState s{yt, yt, 0.0};
    if (reflect && obstacle > yt) {
        s.y = obstacle;
        s.dk = obstacle - yt;
    }
    return s;
}

GridSolution empty_solution(const ProblemSpec& spec, const TimeGrid& grid, const SpaceGrid& space) {
    if (space.size() < 2) throw ConfigError("space grid needs nodes");
    GridSolution sol;
    sol.times = grid.times;
    sol.nodes = space.nodes;
    sol.dim = spec.m;
    sol.warnings = space.warnings;
    const std::size_t J = space.size();
    const std::size_t N = grid.steps();
    sol.y.assign((N + 1) * J, 0.0);
    sol.dk.assign((N + 1) * J, 0.0);
    return sol;
}

void check_schedule(const TimeGrid& grid, const ReflectionSchedule& schedule) {
    if (schedule.active.size() != grid.times.size()) throw ConfigError("reflection schedule does not match the grid");
}

}  // namespace

SpaceGrid make_space_grid(const ProblemSpec& spec, const TimeGrid& grid, const SpaceGridOptions& options) {
    if (options.nodes < 51) throw ConfigError("space grid needs at least 51 nodes");
    if (options.order < 7) throw ConfigError("Gauss-Hermite order must be at least 7");
    double sigma_bar = 0.0;
    for (double t : grid.times) sigma_bar = std::max(sigma_bar, norm(spec.sigma(t)));
    const double half = std::max(options.half_width_sd * sigma_bar * std::sqrt(spec.T), 0.5);

    SpaceGrid space;
    space.order = options.order;
    space.integration = options.integration;
    double lo = spec.x0 - half;
    double hi = spec.x0 + half;
    const double dx = (hi - lo) / static_cast<double>(options.nodes - 1);

    // deterministic drift path from x0 on the time grid
    double m = spec.x0, m_lo = m, m_hi = m;
    for (std::size_t i = 0; i < grid.steps(); ++i) {
        m += spec.b(grid.times[i], m) * grid.dt(i);
        m_lo = std::min(m_lo, m);
        m_hi = std::max(m_hi, m);
    }
    std::size_t extra_lo = 0, extra_hi = 0;
    if (m_lo - half < lo) extra_lo = static_cast<std::size_t>(std::ceil((lo - (m_lo - half)) / dx));
    if (m_hi + half > hi) extra_hi = static_cast<std::size_t>(std::ceil((m_hi + half - hi) / dx));
    if (extra_lo + extra_hi > 0) {
        std::ostringstream msg;
        msg << "drift carries X outside x0 +- " << options.half_width_sd << " sd; space grid extended by " << extra_lo
            << " nodes below and " << extra_hi << " above";
        space.warnings.push_back(msg.str());
    }
    const std::size_t J = options.nodes + extra_lo + extra_hi;
    lo -= dx * static_cast<double>(extra_lo);
    space.nodes.resize(J);
    for (std::size_t j = 0; j < J; ++j) space.nodes[j] = lo + dx * static_cast<double>(j);
    return space;
}

double GridSolution::y_at(std::size_t i, double x) const {
    const std::size_t J = nodes.size();
    std::vector<double> slice(y.begin() + static_cast<std::ptrdiff_t>(i * J),
                              y.begin() + static_cast<std::ptrdiff_t>((i + 1) * J));
    return MonotoneCubic(nodes.front(), nodes[1] - nodes[0], std::move(slice))(x);
}

double GridSolution::z_at(std::size_t i, double x, std::size_t k) const {
    const std::size_t J = nodes.size();
    std::vector<double> slice(J);
    for (std::size_t j = 0; j < J; ++j) slice[j] = node_z(i, j, k);
    return MonotoneCubic(nodes.front(), nodes[1] - nodes[0], std::move(slice))(x);
}

GridSolution exact_scheme_solve(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                                const SpaceGrid& space, const TruncationRadius& radius) {
    check_schedule(grid, schedule);
    check_scheme_preconditions(spec, grid);
    const ProblemSpec truncated = truncate_generator(spec, radius);
    GridSolution sol = empty_solution(spec, grid, space);
    const std::size_t J = space.size();
    const std::size_t N = grid.steps();
    const std::size_t m = spec.m;
    sol.z.assign(N * J * m, 0.0);
    const double M = y_bound(spec).M;
    const double z_cap = radius.value + 1.0;
    const GaussHermiteRule rule = gauss_hermite(space.order);

    std::vector<double> obstacle(J);
    for (std::size_t j = 0; j < J; ++j) obstacle[j] = spec.g(space.nodes[j]);
    for (std::size_t j = 0; j < J; ++j) sol.y[N * J + j] = obstacle[j];

    std::vector<int> failed(J, 0);
    for (std::size_t i = N; i-- > 0;) {
        const bool terminal = i + 1 == N;
        std::vector<double> next(sol.y.begin() + static_cast<std::ptrdiff_t>((i + 1) * J),
                                 sol.y.begin() + static_cast<std::ptrdiff_t>((i + 2) * J));
        const MonotoneCubic interp(space.lo(), space.dx(), std::move(next));
        const double t = grid.times[i];
        const double dt = grid.dt(i);
        const bool reflect = schedule.contains(i);

        parallel_for(J, [&](std::size_t j) {
            const double x = space.nodes[j];
            const Transition tr = transition(spec, grid, i, x);
            double m0, m1;
            if (space.integration == OneStepIntegration::exact_cell) {
                if (terminal) adaptive_moments(spec.obstacle, tr.mean, tr.sd, m0, m1);
                else interp.gaussian_moments(tr.mean, tr.sd, m0, m1);
            } else if (terminal) {
                rule_moments(rule, spec.obstacle, tr.mean, tr.sd, m0, m1);
            } else {
                rule_moments(rule, interp, tr.mean, tr.sd, m0, m1);
            }
            try {
                const NodeState s = node_update(truncated, t, x, dt, m0, m1, tr.direction, M, z_cap, obstacle[j],
                                                reflect, sol.z.data() + (i * J + j) * m);
                sol.y[i * J + j] = s.y;
                sol.dk[i * J + j] = s.dk;
            } catch (const NumericError&) {
                failed[j] = 1;
            }
        });
        for (std::size_t j = 0; j < J; ++j) {
            if (failed[j]) {
                std::ostringstream msg;
                msg << "grid oracle implicit step failed at step " << i << ", node " << j;
                throw NumericError(msg.str());
            }
        }
    }
    return sol;
}

GridSolution snell_cole_hopf(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                             const SpaceGrid& space) {
    if (spec.driver_kind != DriverKind::pure_quadratic)
        throw ConfigError("the Snell/Cole-Hopf oracle needs the pure quadratic driver f = (alpha/2)|z|^2");
    check_schedule(grid, schedule);
    GridSolution sol = empty_solution(spec, grid, space);
    const std::size_t J = space.size();
    const std::size_t N = grid.steps();
    const double alpha = spec.alpha;
    const GaussHermiteRule rule = gauss_hermite(space.order);

    std::vector<double> payoff(J), envelope(J);
    for (std::size_t j = 0; j < J; ++j) {
        payoff[j] = std::exp(alpha * spec.g(space.nodes[j]));
        envelope[j] = payoff[j];
        sol.y[N * J + j] = spec.g(space.nodes[j]);
    }
    const std::function<double(double)> terminal_payoff = [&](double x) { return std::exp(alpha * spec.g(x)); };

    for (std::size_t i = N; i-- > 0;) {
        const bool terminal = i + 1 == N;
        const MonotoneCubic interp(space.lo(), space.dx(), envelope);
        const bool reflect = schedule.contains(i);
        std::vector<double> updated(J);
        parallel_for(J, [&](std::size_t j) {
            const Transition tr = transition(spec, grid, i, space.nodes[j]);
            double m0, m1;
            if (space.integration == OneStepIntegration::exact_cell) {
                if (terminal) adaptive_moments(terminal_payoff, tr.mean, tr.sd, m0, m1);
                else interp.gaussian_moments(tr.mean, tr.sd, m0, m1);
            } else if (terminal) {
                rule_moments(rule, terminal_payoff, tr.mean, tr.sd, m0, m1);
            } else {
                rule_moments(rule, interp, tr.mean, tr.sd, m0, m1);
            }
            const double cont = m0;
            const double s = reflect ? std::max(payoff[j], cont) : cont;
            updated[j] = s;
            sol.y[i * J + j] = std::log(s) / alpha;
            sol.dk[i * J + j] = sol.y[i * J + j] - std::log(cont) / alpha;
        });
        envelope = std::move(updated);
    }
    return sol;
}

double brute_force_tiny(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                        std::size_t order, const TruncationRadius& radius) {
    const std::size_t N = grid.steps();
    if (N > 4) throw ConfigError("brute-force enumeration is limited to N <= 4");
    if (order == 0 || order > 9) throw ConfigError("brute-force quadrature order must be in [1, 9]");
    check_schedule(grid, schedule);
    check_scheme_preconditions(spec, grid);
    const ProblemSpec truncated = truncate_generator(spec, radius);
    const GaussHermiteRule rule = gauss_hermite(order);
    const double M = y_bound(spec).M;
    const double z_cap = radius.value + 1.0;
    std::vector<double> z(spec.m);

    std::function<double(std::size_t, double)> value = [&](std::size_t i, double x) -> double {
        if (i == N) return spec.g(x);
        const Transition tr = transition(spec, grid, i, x);
        double m0, m1;
        rule_moments(rule, [&](double x_next) { return value(i + 1, x_next); }, tr.mean, tr.sd, m0, m1);
        return node_update(truncated, grid.times[i], x, grid.dt(i), m0, m1, tr.direction, M, z_cap, spec.g(x),
                           schedule.contains(i), z.data())
            .y;
    };
    return value(0, spec.x0);
}

void write_grid_csv(std::ostream& out, const GridSolution& solution) {
    const std::size_t J = solution.size();
    const std::size_t N = solution.steps();
    const std::size_t m = solution.dim;
    out << "i,j,t,x,y";
    if (m == 1) out << ",z";
    else
        for (std::size_t k = 0; k < m; ++k) out << ",z_" << (k + 1);
    out << ",dk\n";
    out.precision(17);
    for (std::size_t i = 0; i <= N; ++i) {
        for (std::size_t j = 0; j < J; ++j) {
            out << i << ',' << j << ',' << solution.times[i] << ',' << solution.nodes[j] << ','
                << solution.node_y(i, j);
            for (std::size_t k = 0; k < m; ++k) {
                out << ',';
                if (i < N && !solution.z.empty()) out << solution.node_z(i, j, k);
            }
            out << ',' << solution.node_dk(i, j) << '\n';
        }
    }
}

}  // namespace qrbsde
