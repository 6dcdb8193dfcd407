#include "qrbsde/config.hpp"

#include "qrbsde/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace qrbsde {

using nlohmann::json;

std::string to_string(ExperimentKind kind) {
    switch (kind) {
    case ExperimentKind::solve: return "solve";
    case ExperimentKind::converge: return "converge";
    case ExperimentKind::reflection_sweep: return "reflection-sweep";
    case ExperimentKind::stability: return "stability";
    case ExperimentKind::diagnose: return "diagnose";
    case ExperimentKind::oracle: return "oracle";
    case ExperimentKind::validate: return "validate";
    }
    return "solve";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
    if (name == "solve") return ExperimentKind::solve;
    if (name == "converge" || name == "convergence") return ExperimentKind::converge;
    if (name == "reflection-sweep" || name == "reflect-sweep") return ExperimentKind::reflection_sweep;
    if (name == "stability") return ExperimentKind::stability;
    if (name == "diagnose") return ExperimentKind::diagnose;
    if (name == "oracle") return ExperimentKind::oracle;
    if (name == "validate") return ExperimentKind::validate;
    throw ConfigError("unknown experiment kind '" + name + "'");
}

namespace {

std::string method_name(OracleMethod m) {
    switch (m) {
    case OracleMethod::exact_scheme: return "exact_scheme";
    case OracleMethod::snell_cole_hopf: return "snell_cole_hopf";
    case OracleMethod::brute_force: return "brute_force";
    }
    return "exact_scheme";
}

[[noreturn]] void fail(const std::string& pointer, const std::string& what) {
    throw ConfigError("config error at " + (pointer.empty() ? std::string("/") : pointer) + ": " + what);
}

// A JSON object whose keys must all be consumed.
class Section {
public:
    Section(const json& j, std::string pointer) : j_(j), pointer_(std::move(pointer)) {
        if (!j_.is_object()) fail(pointer_, "expected an object");
    }

    std::string at(const std::string& key) const { return pointer_ + "/" + key; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::optional<double> number(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_number()) fail(at(key), "expected a number");
        const double d = v->get<double>();
        if (!std::isfinite(d)) fail(at(key), "expected a finite number");
        return d;
    }

    std::optional<std::size_t> count(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_number_integer() || v->get<long long>() < 0) fail(at(key), "expected a nonnegative integer");
        return static_cast<std::size_t>(v->get<long long>());
    }

    std::optional<std::string> string(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_string()) fail(at(key), "expected a string");
        return v->get<std::string>();
    }

    std::optional<bool> boolean(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_boolean()) fail(at(key), "expected true or false");
        return v->get<bool>();
    }

    std::optional<Section> object(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        return Section(*v, at(key));
    }

    template <typename T>
    std::optional<std::vector<T>> list(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_array() || v->empty()) fail(at(key), "expected a nonempty array");
        std::vector<T> out;
        for (std::size_t i = 0; i < v->size(); ++i) {
            const json& e = (*v)[i];
            const std::string p = at(key) + "/" + std::to_string(i);
            if constexpr (std::is_same_v<T, std::size_t>) {
                if (!e.is_number_integer() || e.get<long long>() <= 0) fail(p, "expected a positive integer");
                out.push_back(static_cast<std::size_t>(e.get<long long>()));
            } else {
                if (!e.is_number()) fail(p, "expected a number");
                out.push_back(e.get<double>());
            }
        }
        return out;
    }

    // Unknown keys are errors.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(at(it.key()), "unknown key '" + it.key() + "'");
    }

private:
    const json& j_;
    std::string pointer_;
    std::set<std::string> seen_;
};

ReflectionPolicy parse_reflection(const json& v, const std::string& pointer) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "all") return ReflectionPolicy::all();
        if (s.rfind("every-", 0) == 0) {
            const std::string digits = s.substr(6);
            if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
                fail(pointer, "expected \"every-K\" with a positive integer K");
            const std::size_t k = std::stoul(digits);
            if (k == 0) fail(pointer, "K in \"every-K\" must be positive");
            return ReflectionPolicy::every(k);
        }
        fail(pointer, "expected \"all\", \"every-K\" or an array of times");
    }
    if (v.is_array()) {
        std::vector<double> times;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) fail(pointer + "/" + std::to_string(i), "expected a number");
            times.push_back(v[i].get<double>());
        }
        return ReflectionPolicy::at(std::move(times));
    }
    fail(pointer, "expected \"all\", \"every-K\" or an array of times");
}

json reflection_json(const ReflectionPolicy& r) {
    switch (r.kind) {
    case ReflectionPolicy::Kind::all: return "all";
    case ReflectionPolicy::Kind::every_k: return "every-" + std::to_string(r.k);
    case ReflectionPolicy::Kind::explicit_times: return r.times;
    }
    return "all";
}

json overrides_json(const Overrides& o) {
    json j = json::object();
    for (const auto& [k, v] : o) {
        if (const double* d = std::get_if<double>(&v)) j[k] = *d;
        else j[k] = std::get<std::string>(v);
    }
    return j;
}

Overrides parse_overrides(const json& v, const std::string& pointer) {
    if (!v.is_object()) fail(pointer, "expected an object");
    Overrides o;
    for (auto it = v.begin(); it != v.end(); ++it) {
        if (it->is_number()) o[it.key()] = it->get<double>();
        else if (it->is_string()) o[it.key()] = it->get<std::string>();
        else fail(pointer + "/" + it.key(), "expected a number or a string");
    }
    return o;
}

}  // namespace

ProblemSpec RunConfig::spec() const {
    Overrides o = problem.overrides;
    if (grid.T) o["T"] = *grid.T;
    try {
        return build_preset(problem.preset, o);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config error at /problem: ") + e.what());
    }
}

RunConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    Section top(root, "");
    RunConfig c;

    if (auto s = top.object("problem")) {
        if (auto v = s->string("preset")) c.problem.preset = *v;
        if (const json* v = s->find("overrides")) c.problem.overrides = parse_overrides(*v, s->at("overrides"));
        s->finish();
    }
    if (auto s = top.object("grid")) {
        if (auto v = s->count("N")) c.grid.N = *v;
        c.grid.T = s->number("T");
        if (const json* v = s->find("reflection")) c.grid.reflection = parse_reflection(*v, s->at("reflection"));
        s->finish();
        if (c.grid.N == 0) fail("/grid/N", "must be positive");
        if (c.grid.T && c.problem.overrides.count("T")) {
            const auto* t = std::get_if<double>(&c.problem.overrides.at("T"));
            if (!t || *t != *c.grid.T) fail("/grid/T", "conflicts with /problem/overrides/T");
        }
    }
    if (auto s = top.object("mc")) {
        if (auto v = s->count("paths")) c.mc.paths = *v;
        if (auto v = s->count("seed")) c.mc.seed = *v;
        if (auto v = s->boolean("z_control_variate")) c.mc.z_control_variate = *v;
        if (auto b = s->object("basis")) {
            if (auto v = b->string("kind")) {
                if (*v == "polynomial") c.mc.basis.kind = BasisSpec::Kind::polynomial;
                else if (*v == "piecewise" || *v == "piecewise-constant")
                    c.mc.basis.kind = BasisSpec::Kind::piecewise_constant;
                else fail(b->at("kind"), "expected \"polynomial\" or \"piecewise\"");
            }
            if (auto v = b->count("degree")) c.mc.basis.degree = *v;
            if (auto v = b->count("cells")) c.mc.basis.cells = *v;
            if (auto v = b->number("ridge")) c.mc.basis.ridge = *v;
            if (auto v = b->list<double>("domain")) {
                if (v->size() != 2) fail(b->at("domain"), "expected [lo, hi]");
                c.mc.basis.x_lo = (*v)[0];
                c.mc.basis.x_hi = (*v)[1];
            }
            b->finish();
            try {
                c.mc.basis.validate();
            } catch (const ConfigError& e) {
                fail("/mc/basis", e.what());
            }
        }
        s->finish();
        if (c.mc.paths == 0) fail("/mc/paths", "must be positive");
    }
    if (auto s = top.object("truncation")) {
        if (const json* v = s->find("Mz")) {
            if (v->is_string() && v->get<std::string>() == "auto") c.mc.Mz.reset();
            else if (v->is_number() && v->get<double>() > 0.0) c.mc.Mz = v->get<double>();
            else fail(s->at("Mz"), "expected \"auto\" or a positive number");
        }
        s->finish();
    }
    if (auto s = top.object("oracle")) {
        if (auto v = s->count("nodes")) c.oracle.space.nodes = *v;
        if (auto v = s->count("order")) c.oracle.space.order = *v;
        if (auto v = s->number("half_width_sd")) c.oracle.space.half_width_sd = *v;
        if (auto v = s->string("integration")) {
            if (*v == "exact_cell") c.oracle.space.integration = OneStepIntegration::exact_cell;
            else if (*v == "gauss_hermite") c.oracle.space.integration = OneStepIntegration::gauss_hermite;
            else fail(s->at("integration"), "expected \"exact_cell\" or \"gauss_hermite\"");
        }
        if (auto v = s->count("eval_paths")) c.oracle.eval_paths = *v;
        if (auto v = s->count("eval_seed")) c.oracle.eval_seed = *v;
        s->finish();
        if (c.oracle.space.nodes < 51) fail("/oracle/nodes", "must be at least 51");
        if (c.oracle.space.order < 7) fail("/oracle/order", "must be at least 7");
        if (c.oracle.eval_paths == 0) fail("/oracle/eval_paths", "must be positive");
    }
    if (auto s = top.object("experiment")) {
        ExperimentConfig& e = c.experiment;
        if (auto v = s->string("kind")) {
            try {
                e.kind = parse_experiment_kind(*v);
            } catch (const ConfigError& err) {
                fail(s->at("kind"), err.what());
            }
        }
        if (auto v = s->list<std::size_t>("N_list")) e.N_list = *v;
        if (auto v = s->string("estimator")) {
            if (*v == "grid") e.estimator = ConvergenceEstimator::grid;
            else if (*v == "lsmc") e.estimator = ConvergenceEstimator::lsmc;
            else fail(s->at("estimator"), "expected \"grid\" or \"lsmc\"");
        }
        if (auto v = s->string("oracle")) {
            if (*v == "auto") e.oracle = OracleKind::automatic;
            else if (*v == "snell_cole_hopf") e.oracle = OracleKind::snell_cole_hopf;
            else if (*v == "exact_scheme") e.oracle = OracleKind::exact_scheme;
            else fail(s->at("oracle"), "expected \"auto\", \"snell_cole_hopf\" or \"exact_scheme\"");
        }
        if (auto v = s->list<std::size_t>("kappa_list")) e.kappa_list = *v;
        if (auto v = s->string("perturbation")) {
            if (*v == "drift-shift") e.perturbation = Perturbation::drift_shift;
            else if (*v == "euler-vs-exact") e.perturbation = Perturbation::euler_vs_exact;
            else fail(s->at("perturbation"), "expected \"drift-shift\" or \"euler-vs-exact\"");
        }
        if (auto v = s->list<double>("eps_list")) e.eps_list = *v;
        if (auto v = s->string("method")) {
            if (*v == "exact_scheme") e.method = OracleMethod::exact_scheme;
            else if (*v == "snell_cole_hopf") e.method = OracleMethod::snell_cole_hopf;
            else if (*v == "brute_force") e.method = OracleMethod::brute_force;
            else fail(s->at("method"), "expected \"exact_scheme\", \"snell_cole_hopf\" or \"brute_force\"");
        }
        if (auto v = s->count("brute_force_order")) e.brute_force_order = *v;
        e.min_slope = s->number("min_slope");
        s->finish();
    }
    if (auto s = top.object("output")) {
        c.output.dir = s->string("dir");
        if (auto v = s->boolean("dump_paths")) c.output.dump_paths = *v;
        if (const json* v = s->find("formats")) {
            if (!v->is_array()) fail(s->at("formats"), "expected an array");
            c.output.json = c.output.csv = false;
            for (std::size_t i = 0; i < v->size(); ++i) {
                const json& f = (*v)[i];
                if (f == "json") c.output.json = true;
                else if (f == "csv") c.output.csv = true;
                else fail(s->at("formats") + "/" + std::to_string(i), "expected \"json\" or \"csv\"");
            }
        }
        s->finish();
    }
    top.finish();
    validate_config(c);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

void validate_config(const RunConfig& c) {
    const ProblemSpec spec = c.spec();
    std::vector<std::size_t> grids{c.grid.N};
    const ExperimentKind kind = c.experiment.kind;
    if (kind == ExperimentKind::converge ||
        (kind == ExperimentKind::stability && c.experiment.perturbation == Perturbation::euler_vs_exact))
        grids = c.experiment.N_list;
    if (kind == ExperimentKind::converge) grids.push_back(2 * c.experiment.N_list.back());
    for (std::size_t N : grids) {
        const double ldt = spec.L * spec.T / static_cast<double>(N);
        if (ldt >= 1.0) {
            std::ostringstream msg;
            msg << "config error at /grid/N: L*dt = " << ldt << " >= 1 for N = " << N
                << "; the implicit y-step is a contraction only when L*dt < 1";
            throw ConfigError(msg.str());
        }
    }
    const bool monte_carlo = kind == ExperimentKind::solve || kind == ExperimentKind::diagnose ||
                             kind == ExperimentKind::stability ||
                             (kind == ExperimentKind::converge && c.experiment.estimator == ConvergenceEstimator::lsmc);
    const std::size_t d = c.mc.basis.dimension();
    if (monte_carlo && c.mc.paths < 10 * d) {
        std::ostringstream msg;
        msg << "config error at /mc/paths: " << c.mc.paths << " paths for a basis of dimension " << d
            << "; need at least " << 10 * d;
        throw ConfigError(msg.str());
    }
}

json to_json(const RunConfig& c) {
    json j;
    j["problem"] = {{"preset", c.problem.preset}, {"overrides", overrides_json(c.problem.overrides)}};
    j["grid"] = {{"N", c.grid.N}, {"reflection", reflection_json(c.grid.reflection)}};
    if (c.grid.T) j["grid"]["T"] = *c.grid.T;
    const BasisSpec& b = c.mc.basis;
    j["mc"] = {{"paths", c.mc.paths},
               {"seed", c.mc.seed},
               {"z_control_variate", c.mc.z_control_variate},
               {"basis",
                {{"kind", b.kind == BasisSpec::Kind::polynomial ? "polynomial" : "piecewise"},
                 {"degree", b.degree},
                 {"cells", b.cells},
                 {"domain", {b.x_lo, b.x_hi}},
                 {"ridge", b.ridge}}}};
    j["truncation"] = {{"Mz", c.mc.Mz ? json(*c.mc.Mz) : json("auto")}};
    j["oracle"] = {{"nodes", c.oracle.space.nodes},
                   {"order", c.oracle.space.order},
                   {"half_width_sd", c.oracle.space.half_width_sd},
                   {"integration",
                    c.oracle.space.integration == OneStepIntegration::exact_cell ? "exact_cell" : "gauss_hermite"},
                   {"eval_paths", c.oracle.eval_paths},
                   {"eval_seed", c.oracle.eval_seed}};
    const ExperimentConfig& e = c.experiment;
    j["experiment"] = {{"kind", to_string(e.kind)},
                       {"N_list", e.N_list},
                       {"estimator", to_string(e.estimator)},
                       {"oracle", to_string(e.oracle)},
                       {"kappa_list", e.kappa_list},
                       {"perturbation", to_string(e.perturbation)},
                       {"eps_list", e.eps_list},
                       {"method", method_name(e.method)},
                       {"brute_force_order", e.brute_force_order}};
    if (e.min_slope) j["experiment"]["min_slope"] = *e.min_slope;
    json formats = json::array();
    if (c.output.json) formats.push_back("json");
    if (c.output.csv) formats.push_back("csv");
    j["output"] = {{"formats", formats}, {"dump_paths", c.output.dump_paths}};
    if (c.output.dir) j["output"]["dir"] = *c.output.dir;
    return j;
}

std::string config_hash(const RunConfig& c) {
    json canonical = to_json(c);
    // where the outputs go does not change the results
    canonical["output"].erase("dir");
    const std::string text = canonical.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json to_json(const ProblemSpec& spec) {
    return {{"preset", spec.preset},
            {"overrides", overrides_json(spec.overrides)},
            {"constants",
             {{"L", spec.L},
              {"M_f", spec.M_f},
              {"M_g", spec.M_g},
              {"alpha", spec.alpha},
              {"T", spec.T},
              {"x0", spec.x0},
              {"m", spec.m},
              {"M", y_bound(spec).M}}}};
}

ProblemSpec spec_from_json(const json& j) {
    Section s(j, "/problem");
    const auto preset = s.string("preset");
    if (!preset) fail("/problem/preset", "missing");
    Overrides o;
    if (const json* v = s.find("overrides")) o = parse_overrides(*v, "/problem/overrides");
    s.find("constants");  // derived, ignored on input
    s.finish();
    return build_preset(*preset, o);
}

}  // namespace qrbsde
