#include "qrbsde/model.hpp"

#include "qrbsde/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace qrbsde {

namespace {

double norm(std::span<const double> z) {
    double s = 0.0;
    for (double v : z) s += v * v;
    return std::sqrt(s);
}

double softplus(double u, double sharpness) {
    const double a = sharpness * u;
    // log(1 + e^a) without overflow
    return (a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a))) / sharpness;
}

constexpr double kSoftClipSharpness = 20.0;

struct PresetParams {
    double T = 1.0;
    double x0 = 1.0;
    double L = 1.0;
    double M_f = 0.0;
    double M_g = 0.5;
    double alpha = 1.0;
    double sigma = 0.3;
    double m = 1.0;
    double strike = 1.0;
    double drift_shift = 0.0;
    std::string obstacle = "clip";
};

double as_number(const std::string& key, const OverrideValue& v) {
    if (const double* d = std::get_if<double>(&v)) return *d;
    throw ConfigError("override '" + key + "' expects a number");
}

void apply(PresetParams& p, const Overrides& overrides, bool& L_overridden) {
    for (const auto& [key, value] : overrides) {
        if (key == "T") p.T = as_number(key, value);
        else if (key == "x0") p.x0 = as_number(key, value);
        else if (key == "L") { p.L = as_number(key, value); L_overridden = true; }
        else if (key == "M_f") p.M_f = as_number(key, value);
        else if (key == "M_g") p.M_g = as_number(key, value);
        else if (key == "alpha") p.alpha = as_number(key, value);
        else if (key == "sigma") p.sigma = as_number(key, value);
        else if (key == "m") p.m = as_number(key, value);
        else if (key == "strike") p.strike = as_number(key, value);
        else if (key == "drift_shift") p.drift_shift = as_number(key, value);
        else if (key == "obstacle") {
            const auto* s = std::get_if<std::string>(&value);
            if (!s || (*s != "clip" && *s != "soft-clip"))
                throw ConfigError("override 'obstacle' expects \"clip\" or \"soft-clip\"");
            p.obstacle = *s;
        } else {
            throw ConfigError("override of nonexistent field '" + key + "'");
        }
    }
}

}  // namespace

void check_constants(const ProblemSpec& spec) {
    if (!(spec.T > 0.0)) throw ConfigError("T must be positive");
    if (!(spec.L > 0.0)) throw ConfigError("L must be positive");
    if (!(spec.alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(spec.M_g >= 0.0)) throw ConfigError("M_g must be nonnegative");
    if (!(spec.M_f >= 0.0)) throw ConfigError("M_f must be nonnegative");
    if (spec.m < 1) throw ConfigError("Brownian dimension m must be at least 1");
}

std::vector<std::string> preset_names() {
    return {kPresetPureQuadratic, kPresetMixedQuadratic, kPresetLipschitz};
}

ProblemSpec build_preset(const std::string& name, const Overrides& overrides) {
    PresetParams p;
    if (name == kPresetPureQuadratic) {
        p.M_f = 0.0;
        p.alpha = 1.0;
    } else if (name == kPresetMixedQuadratic) {
        // 0.2|z| <= 0.1 + 0.1|z|^2 puts the linear-z term into M_f and alpha.
        p.M_f = 0.1;
        p.alpha = 1.2;
    } else if (name == kPresetLipschitz) {
        p.M_f = 0.1;
        p.alpha = 0.2;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }

    bool L_overridden = false;
    apply(p, overrides, L_overridden);
    if (p.m < 1.0 || p.m != std::floor(p.m)) throw ConfigError("override 'm' must be a positive integer");
    // g' of the soft clip is sharpness/4-Lipschitz.
    if (p.obstacle == "soft-clip" && !L_overridden) p.L = std::max(p.L, kSoftClipSharpness / 4.0);

    ProblemSpec spec;
    spec.preset = name;
    spec.overrides = overrides;
    spec.T = p.T;
    spec.x0 = p.x0;
    spec.L = p.L;
    spec.M_f = p.M_f;
    spec.M_g = p.M_g;
    spec.alpha = p.alpha;
    spec.m = static_cast<std::size_t>(p.m);

    const std::size_t m = spec.m;
    const double per_component = p.sigma / std::sqrt(static_cast<double>(m));
    spec.volatility = [m, per_component](double) { return std::vector<double>(m, per_component); };

    if (name == kPresetPureQuadratic) {
        spec.affine_drift = AffineDrift{p.drift_shift, 0.0};
    } else {
        spec.affine_drift = AffineDrift{0.5 + p.drift_shift, -0.5};
    }
    const AffineDrift drift = *spec.affine_drift;
    spec.drift = [drift](double, double x) { return drift.level + drift.slope * x; };

    const double cap = p.M_g;
    const double strike = p.strike;
    if (p.obstacle == "clip") {
        spec.obstacle_kind = ObstacleKind::clip;
        spec.obstacle = [cap, strike](double x) { return std::clamp(strike - x, 0.0, cap); };
    } else {
        spec.obstacle_kind = ObstacleKind::soft_clip;
        spec.obstacle = [cap, strike](double x) {
            const double u = strike - x;
            return softplus(u, kSoftClipSharpness) - softplus(u - cap, kSoftClipSharpness);
        };
    }

    const double alpha = p.alpha;
    if (name == kPresetPureQuadratic) {
        spec.driver_kind = DriverKind::pure_quadratic;
        spec.generator = [alpha](double, double, double, std::span<const double> z) {
            double s = 0.0;
            for (double v : z) s += v * v;
            return 0.5 * alpha * s;
        };
    } else if (name == kPresetMixedQuadratic) {
        spec.generator = [](double, double x, double y, std::span<const double> z) {
            double s = 0.0;
            for (double v : z) s += v * v;
            return -0.1 * y + 0.2 * std::sin(x) * z[0] + 0.5 * s;
        };
    } else {
        spec.generator = [](double, double, double y, std::span<const double> z) { return -0.1 * y + 0.2 * z[0]; };
    }
    check_constants(spec);
    return spec;
}

ProblemSpec with_overrides(const ProblemSpec& spec, const Overrides& extra) {
    Overrides merged = spec.overrides;
    for (const auto& [k, v] : extra) merged[k] = v;
    ProblemSpec out = build_preset(spec.preset, merged);
    if (spec.truncation_radius) out = truncate_generator(out, TruncationRadius::user(*spec.truncation_radius));
    return out;
}

YBound y_bound(const ProblemSpec& spec) {
    return YBound{std::exp(spec.M_f * spec.T) * (spec.M_g + spec.M_f * spec.T)};
}

TruncationRadius TruncationRadius::user(double value) {
    if (!(value > 0.0)) throw ConfigError("truncation radius M_z must be positive");
    return TruncationRadius{value, RadiusProvenance::user_supplied};
}

double truncation_profile(double r, double n) {
    if (r <= n) return r;
    return n + 1.0 - std::exp(-(r - n));
}

void smooth_truncation_inplace(std::span<double> z, double n) {
    if (!(n > 0.0)) throw ConfigError("truncation level n must be positive");
    const double r = norm(z);
    if (r <= n) return;
    const double scale = truncation_profile(r, n) / r;
    for (double& v : z) v *= scale;
}

std::vector<double> smooth_truncation(std::span<const double> z, double n) {
    std::vector<double> out(z.begin(), z.end());
    smooth_truncation_inplace(out, n);
    return out;
}

double smooth_truncation(double z, double n) {
    smooth_truncation_inplace(std::span<double>(&z, 1), n);
    return z;
}

ProblemSpec truncate_generator(const ProblemSpec& spec, const TruncationRadius& radius) {
    if (!(radius.value > 0.0)) throw ConfigError("truncation radius M_z must be positive");
    ProblemSpec out = spec;
    GeneratorFn base = spec.truncation_radius ? spec.base_generator : spec.generator;
    const double n = radius.value;
    out.base_generator = base;
    out.truncation_radius = n;
    out.generator = [base, n](double t, double x, double y, std::span<const double> z) {
        if (z.size() == 1) {
            const double h = smooth_truncation(z[0], n);
            return base(t, x, y, std::span<const double>(&h, 1));
        }
        const std::vector<double> h = smooth_truncation(z, n);
        return base(t, x, y, h);
    };
    out.truncated_lipschitz = TruncatedLipschitz{spec.L * (n + 2.0), spec.L, spec.L * (2.0 * n + 3.0)};
    return out;
}

// ---------------------------------------------------------------------------

SampleCloud default_cloud(const ProblemSpec& spec, std::size_t points) {
    SampleCloud c;
    c.points = points;
    c.x_lo = spec.x0 - 5.0;
    c.x_hi = spec.x0 + 5.0;
    c.y_abs = y_bound(spec).M + 1.0;
    c.z_abs = 5.0;
    return c;
}

bool AssumptionReport::holds(const std::string& assumption) const {
    auto it = passed.find(assumption);
    return it != passed.end() && it->second;
}

const InequalityCheck& AssumptionReport::check(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return c;
    throw Error("no assumption check named '" + name + "'");
}

namespace {

// Radical inverse in base b of index i (Halton sequence).
double halton(std::size_t i, unsigned base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

struct Point {
    double t, x, y, z;
};

class Tracker {
public:
    Tracker(std::string assumption, std::string name) {
        check_.assumption = std::move(assumption);
        check_.name = std::move(name);
    }

    void observe(double lhs, double rhs, const Point& a, const Point& b) {
        double ratio;
        if (rhs > 0.0) ratio = lhs / rhs;
        else ratio = lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        if (!std::isfinite(lhs)) ratio = std::numeric_limits<double>::infinity();
        if (ratio > check_.worst_ratio || first_) {
            first_ = false;
            check_.worst_ratio = ratio;
            check_.witness = Witness{a.t, a.x, a.y, a.z, b.t, b.x, b.y, b.z};
        }
    }

    InequalityCheck finish() {
        check_.passed = check_.worst_ratio <= 1.0 + kAssumptionSlack;
        return check_;
    }

private:
    InequalityCheck check_;
    bool first_ = true;
};

double vol_norm(const ProblemSpec& s, double t) {
    const auto v = s.sigma(t);
    return norm(v);
}

double vol_diff(const ProblemSpec& s, double t1, double t2) {
    const auto a = s.sigma(t1);
    const auto b = s.sigma(t2);
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(d);
}

}  // namespace

AssumptionReport validate_assumptions(const ProblemSpec& spec, const SampleCloud& cloud) {
    const std::size_t m = spec.m;
    // z is probed along the first Brownian direction.
    auto zvec = [m](double z) {
        std::vector<double> v(m, 0.0);
        v[0] = z;
        return v;
    };
    auto f = [&](const Point& p) {
        const auto z = zvec(p.z);
        return spec.f(p.t, p.x, p.y, z);
    };

    std::vector<Point> pts;
    pts.reserve(cloud.points + 16);
    for (std::size_t i = 1; i <= cloud.points; ++i) {
        pts.push_back({spec.T * halton(i, 2), cloud.x_lo + (cloud.x_hi - cloud.x_lo) * halton(i, 3),
                       -cloud.y_abs + 2.0 * cloud.y_abs * halton(i, 5), -cloud.z_abs + 2.0 * cloud.z_abs * halton(i, 7)});
    }
    for (int c = 0; c < 16; ++c) {
        pts.push_back({(c & 1) ? spec.T : 0.0, (c & 2) ? cloud.x_hi : cloud.x_lo, (c & 4) ? cloud.y_abs : -cloud.y_abs,
                       (c & 8) ? cloud.z_abs : -cloud.z_abs});
    }

    const double L = spec.L;
    const std::array<double, 3> steps = {1e-2, 1e-4, 1e-6};

    Tracker hx_bound("HX", "HX.drift_vol_bound");
    Tracker hx_lip("HX", "HX.drift_lipschitz");
    Tracker hf_g_bound("HF", "HF.obstacle_bound");
    Tracker hf_g_lip("HF", "HF.obstacle_lipschitz");
    Tracker hf_growth("HF", "HF.growth");
    Tracker hf_x("HF", "HF.x_lipschitz");
    Tracker hf_y("HF", "HF.y_lipschitz");
    Tracker hf_z("HF", "HF.z_local_lipschitz");
    Tracker ht("HT", "HT.time_holder");
    Tracker h1_bound("H1", "H1.derivative_bound");
    Tracker h1_lip("H1", "H1.derivative_lipschitz");
    Tracker h2_lip("H2", "H2.second_derivative_lipschitz");
    Tracker h2_vol("H2", "H2.vol_time_lipschitz");

    const double fd = 1e-5;
    auto g1 = [&](double x) { return (spec.g(x + fd) - spec.g(x - fd)) / (2.0 * fd); };
    // second differences lose accuracy at fd = 1e-5
    const double fd2 = 1e-3;
    auto g2 = [&](double x) { return (spec.g(x + fd2) - 2.0 * spec.g(x) + spec.g(x - fd2)) / (fd2 * fd2); };

    for (std::size_t k = 0; k < pts.size(); ++k) {
        const Point& p = pts[k];
        const Point& q = pts[(k + 1) % pts.size()];

        hx_bound.observe(std::abs(spec.b(p.t, 0.0)) + vol_norm(spec, p.t), L, p, p);

        Point px = p;
        px.x = q.x;
        if (px.x != p.x) {
            hx_lip.observe(std::abs(spec.b(p.t, p.x) - spec.b(p.t, px.x)), L * std::abs(p.x - px.x), p, px);
            hf_g_lip.observe(std::abs(spec.g(p.x) - spec.g(px.x)), L * std::abs(p.x - px.x), p, px);
            hf_x.observe(std::abs(f(p) - f(px)), L * (1.0 + std::abs(p.z)) * std::abs(p.x - px.x), p, px);
        }
        hf_g_bound.observe(std::abs(spec.g(p.x)), spec.M_g, p, p);
        hf_growth.observe(std::abs(f(p)), spec.M_f * (1.0 + std::abs(p.y)) + 0.5 * spec.alpha * p.z * p.z, p, p);

        Point py = p;
        py.y = q.y;
        if (py.y != p.y) hf_y.observe(std::abs(f(p) - f(py)), L * std::abs(p.y - py.y), p, py);

        Point pz = p;
        pz.z = q.z;
        if (pz.z != p.z)
            hf_z.observe(std::abs(f(p) - f(pz)), L * (1.0 + std::abs(p.z) + std::abs(pz.z)) * std::abs(p.z - pz.z), p, pz);

        for (double h : steps) {
            Point ph = p;
            ph.x = p.x + h;
            hx_lip.observe(std::abs(spec.b(p.t, p.x) - spec.b(p.t, ph.x)), L * h, p, ph);
            hf_g_lip.observe(std::abs(spec.g(p.x) - spec.g(ph.x)), L * h, p, ph);
            hf_x.observe(std::abs(f(p) - f(ph)), L * (1.0 + std::abs(p.z)) * h, p, ph);
            Point phy = p;
            phy.y = p.y + h;
            hf_y.observe(std::abs(f(p) - f(phy)), L * h, p, phy);
            Point phz = p;
            phz.z = p.z + h;
            hf_z.observe(std::abs(f(p) - f(phz)), L * (1.0 + std::abs(p.z) + std::abs(phz.z)) * h, p, phz);

            // time Hoelder: pair (s, t) = (t - h, t) when it fits in [0, T]
            if (p.t - h >= 0.0) {
                Point ps = p;
                ps.t = p.t - h;
                const double lhs = std::abs(spec.b(p.t, p.x) - spec.b(ps.t, p.x)) + vol_diff(spec, p.t, ps.t) +
                                   std::abs(f(p) - f(ps));
                ht.observe(lhs, L * std::sqrt(h), ps, p);
                h2_vol.observe(vol_diff(spec, p.t, ps.t), L * h, ps, p);
            }

            h1_lip.observe(std::abs(g1(p.x) - g1(ph.x)), L * h, p, ph);
            h2_lip.observe(std::abs(g2(p.x) - g2(ph.x)), L * h, p, ph);
        }
        h1_bound.observe(std::abs(g1(p.x)), L, p, p);
    }

    AssumptionReport report;
    report.cloud = cloud;
    report.cloud_points = pts.size();
    for (Tracker* t : {&hx_bound, &hx_lip, &hf_g_bound, &hf_g_lip, &hf_growth, &hf_x, &hf_y, &hf_z, &ht, &h1_bound,
                       &h1_lip, &h2_lip, &h2_vol})
        report.checks.push_back(t->finish());

    for (const char* a : {"HX", "HF", "HT", "H1", "H2"}) report.passed[a] = true;
    for (const auto& c : report.checks)
        if (!c.passed) report.passed[c.assumption] = false;
    // (H2) includes (H1).
    if (!report.passed["H1"]) report.passed["H2"] = false;
    return report;
}

}  // namespace qrbsde
