#include "invstop/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "invstop/errors.hpp"

namespace invstop {

namespace {

using json = nlohmann::ordered_json;

std::string join(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
}

[[noreturn]] void field_error(const std::string& field, const std::string& msg) {
    throw ConfigError("config field '" + field + "': " + msg);
}

json& section(json& parent, const std::string& where, const std::string& key) {
    if (!parent.contains(key)) parent[key] = json::object();
    json& s = parent[key];
    if (!s.is_object()) field_error(join(where, key), "expected an object");
    return s;
}

double number(json& o, const std::string& where, const std::string& key,
              std::optional<double> def = std::nullopt) {
    if (!o.contains(key)) {
        if (!def) field_error(join(where, key), "missing");
        o[key] = *def;
    }
    if (!o[key].is_number()) field_error(join(where, key), "expected a number");
    const double v = o[key].get<double>();
    if (!std::isfinite(v)) field_error(join(where, key), "must be finite");
    return v;
}

std::optional<double> optional_number(json& o, const std::string& where, const std::string& key) {
    if (!o.contains(key) || o[key].is_null()) return std::nullopt;
    return number(o, where, key);
}

long integer(json& o, const std::string& where, const std::string& key, std::optional<long> def) {
    if (!o.contains(key)) {
        if (!def) field_error(join(where, key), "missing");
        o[key] = *def;
    }
    if (!o[key].is_number_integer()) field_error(join(where, key), "expected an integer");
    return o[key].get<long>();
}

bool boolean(json& o, const std::string& where, const std::string& key, bool def) {
    if (!o.contains(key)) o[key] = def;
    if (!o[key].is_boolean()) field_error(join(where, key), "expected true or false");
    return o[key].get<bool>();
}

std::string string(json& o, const std::string& where, const std::string& key,
                   std::optional<std::string> def = std::nullopt) {
    if (!o.contains(key)) {
        if (!def) field_error(join(where, key), "missing");
        o[key] = *def;
    }
    if (!o[key].is_string()) field_error(join(where, key), "expected a string");
    return o[key].get<std::string>();
}

struct Coefficient {
    Field field;
    double lipschitz;
};

/// constant {value} | affine {a, b} | ou {kappa, theta}
Coefficient coefficient(json& o, const std::string& where, bool allow_ou) {
    const auto family = string(o, where, "family");
    if (family == "constant") {
        const double v = number(o, where, "value");
        return {Field::constant(v), 0.0};
    }
    if (family == "affine") {
        const double a = number(o, where, "a", 0.0);
        const double b = number(o, where, "b", 0.0);
        return {Field::affine(a, b), std::abs(b)};
    }
    if (family == "ou" && allow_ou) {
        const double kappa = number(o, where, "kappa");
        const double theta = number(o, where, "theta", 0.0);
        return {Field::affine(kappa * theta, -kappa), std::abs(kappa)};
    }
    field_error(join(where, "family"), "unknown family '" + family + "'" +
                                           (allow_ou ? " (constant|affine|ou)" : " (constant|affine)"));
}

Problem parse_problem(json& o) {
    const std::string w = "problem";
    const double T = number(o, w, "horizon");
    if (!(T > 0.0)) field_error("problem.horizon", "must be positive");
    if (!o.contains("drift")) o["drift"] = json{{"family", "constant"}, {"value", 0.0}};
    if (!o.contains("volatility")) o["volatility"] = json{{"family", "constant"}, {"value", 1.0}};
    const auto mu = coefficient(section(o, w, "drift"), "problem.drift", true);
    const auto sigma = coefficient(section(o, w, "volatility"), "problem.volatility", false);
    double s0 = 0.0;
    if (sigma.field.is_constant(&s0) && s0 < 0.0)
        field_error("problem.volatility.value", "must be nonnegative");
    double lip = mu.lipschitz + sigma.lipschitz;
    if (!(lip > 0.0)) lip = 1.0;
    lip = number(o, w, "lipschitz", lip);
    if (!(lip > 0.0)) field_error("problem.lipschitz", "must be positive");

    if (!o.contains("flow")) o["flow"] = json{{"family", "affine"}, {"a", 0.0}, {"b", 0.0}};
    const auto flow = coefficient(section(o, w, "flow"), "problem.flow", false).field;

    if (!o.contains("terminal")) o["terminal"] = json{{"family", "zero"}};
    json& term = section(o, w, "terminal");
    const auto family = string(term, "problem.terminal", "family");
    PayoffSpec payoff;
    if (family == "zero") {
        payoff = PayoffSpec::flow_only(flow);
    } else if (family == "monomial") {
        const double c = number(term, "problem.terminal", "c", 1.0);
        const long n = integer(term, "problem.terminal", "n", std::nullopt);
        if (n < 0 || n > 16) field_error("problem.terminal.n", "must be between 0 and 16");
        payoff = PayoffSpec::monomial(c, static_cast<int>(n), flow);
    } else if (family == "product") {
        const double c = number(term, "problem.terminal", "c", 1.0);
        payoff = PayoffSpec::product(c, T, flow);
    } else {
        field_error("problem.terminal.family", "unknown family '" + family + "' (zero|monomial|product)");
    }
    return Problem(DiffusionSpec(mu.field, sigma.field, lip, T), std::move(payoff));
}

Barrier parse_barrier(json& o, double T, const std::filesystem::path& base) {
    try {
        if (o.contains("file")) {
            std::filesystem::path p = string(o, "barrier", "file");
            if (p.is_relative() && !base.empty()) p = base / p;
            o["file"] = p.string();
            auto b = load_barrier(p.string());
            if (b.horizon() < T) {
                std::vector<Knot> knots = b.knots();
                return Barrier(std::move(knots), b.interpolation(), T);
            }
            return b;
        }
        if (o.contains("constant")) return Barrier::constant(number(o, "barrier", "constant"), T);
        const auto interp = string(o, "barrier", "interpolation", "linear");
        Interpolation mode;
        if (interp == "constant")
            mode = Interpolation::constant;
        else if (interp == "linear")
            mode = Interpolation::linear;
        else
            field_error("barrier.interpolation", "expected constant or linear");
        if (!o.contains("knots") || !o["knots"].is_array())
            field_error("barrier", "expected 'file', 'constant' or 'knots'");
        std::vector<Knot> knots;
        std::size_t i = 0;
        for (auto& row : o["knots"]) {
            const std::string at = "barrier.knots[" + std::to_string(i++) + "]";
            if (!row.is_array() || (row.size() != 2 && row.size() != 3))
                field_error(at, "expected [t, value] or [t, value, left_value]");
            for (auto& v : row)
                if (!v.is_number()) field_error(at, "expected numbers");
            Knot k{row[0].get<double>(), row[1].get<double>(), std::nullopt};
            if (row.size() == 3) k.left = row[2].get<double>();
            knots.push_back(k);
        }
        return Barrier(std::move(knots), mode, T);
    } catch (const BarrierError& e) {
        throw ConfigError(std::string("config field 'barrier': ") + e.what());
    }
}

ReflectionScheme scheme(json& o, const std::string& where, const std::string& def) {
    const auto s = string(o, where, "scheme", def);
    if (s == "bridge") return ReflectionScheme::bridge;
    if (s == "projected") return ReflectionScheme::projected;
    field_error(join(where, "scheme"), "expected bridge or projected");
}

long positive(long v, const std::string& field, long minimum = 1) {
    if (v < minimum) field_error(field, "must be at least " + std::to_string(minimum));
    return v;
}

std::size_t line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                       std::optional<std::uint64_t> seed_override) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");

    RunConfig rc;
    if (seed_override) {
        rc.seed = *seed_override;
    } else if (root.contains("seed")) {
        if (!root["seed"].is_number_unsigned() && !root["seed"].is_number_integer())
            field_error("seed", "expected a nonnegative integer");
        rc.seed = root["seed"].get<std::uint64_t>();
    }
    root["seed"] = rc.seed;

    if (!root.contains("problem")) field_error("problem", "missing");
    rc.problem = parse_problem(section(root, "", "problem"));
    const double T = rc.problem->horizon();

    if (root.contains("barrier")) rc.barrier = parse_barrier(section(root, "", "barrier"), T, base_dir);

    json& mc = section(root, "", "mc");
    rc.mc.n_paths = positive(integer(mc, "mc", "n_paths", 10000), "mc.n_paths", 2);
    rc.mc.max_step = number(mc, "mc", "max_step", 1e-3);
    if (!(rc.mc.max_step > 0.0)) field_error("mc.max_step", "must be positive");
    rc.mc.scheme = scheme(mc, "mc", "bridge");
    rc.mc.seed = rc.seed;

    json& sim = section(root, "", "simulate");
    rc.simulate.n_paths = positive(integer(sim, "simulate", "n_paths", 10), "simulate.n_paths");
    rc.simulate.t0 = number(sim, "simulate", "t0", 0.0);
    if (!(rc.simulate.t0 >= 0.0 && rc.simulate.t0 < T)) field_error("simulate.t0", "must lie in [0,T)");
    rc.simulate.x0 = optional_number(sim, "simulate", "x0");
    rc.simulate.scheme = scheme(sim, "simulate", "projected");

    json& tr = section(root, "", "transfer");
    if (tr.contains("times")) {
        if (!tr["times"].is_array() || tr["times"].empty())
            field_error("transfer.times", "expected a non-empty array of times");
        rc.transfer.times.resize(static_cast<Eigen::Index>(tr["times"].size()));
        Eigen::Index i = 0;
        for (auto& v : tr["times"]) {
            if (!v.is_number()) field_error("transfer.times", "expected numbers");
            const double t = v.get<double>();
            if (!(t >= 0.0 && t <= T)) field_error("transfer.times", "times must lie in [0,T]");
            if (i > 0 && !(t > rc.transfer.times[i - 1])) field_error("transfer.times", "must be strictly increasing");
            rc.transfer.times[i++] = t;
        }
    } else {
        const long count = positive(integer(tr, "transfer", "count", 11), "transfer.count", 2);
        rc.transfer.times = Eigen::VectorXd::LinSpaced(count, 0.0, T);
        rc.transfer.times[count - 1] = T;
    }
    rc.transfer.closed_form = boolean(tr, "transfer", "closed_form", false);

    json& sv = section(root, "", "solver");
    const long nodes = positive(integer(sv, "solver", "nodes", 21), "solver.nodes", 2);
    rc.solver.time_grid = uniform_nodes(T, static_cast<int>(nodes));
    if (!sv.contains("bracket")) sv["bracket"] = json::array({-2.0, 2.0});
    if (!sv["bracket"].is_array() || sv["bracket"].size() != 2 || !sv["bracket"][0].is_number() ||
        !sv["bracket"][1].is_number())
        field_error("solver.bracket", "expected [x_lo, x_hi]");
    rc.solver.x_lo = sv["bracket"][0].get<double>();
    rc.solver.x_hi = sv["bracket"][1].get<double>();
    if (!(rc.solver.x_lo < rc.solver.x_hi)) field_error("solver.bracket", "need x_lo < x_hi");
    rc.solver.tol_x = number(sv, "solver", "tol_x", 1e-3);
    if (!(rc.solver.tol_x > 0.0)) field_error("solver.tol_x", "must be positive");
    rc.solver.max_bisections = static_cast<int>(positive(integer(sv, "solver", "max_bisections", 100), "solver.max_bisections"));
    rc.solver.residual_tol = number(sv, "solver", "residual_tol", 0.0);
    rc.solver.terminal = optional_number(sv, "solver", "terminal");
    rc.solver.allow_unbracketed = boolean(sv, "solver", "allow_unbracketed", false);
    rc.solver.mc = rc.mc;

    json& lat = section(root, "", "lattice");
    rc.lattice.dt = number(lat, "lattice", "dt", 1e-3);
    rc.lattice.dx = number(lat, "lattice", "dx", 0.04);
    if (!(rc.lattice.dt > 0.0) || !(rc.lattice.dx > 0.0)) field_error("lattice", "dt and dx must be positive");
    rc.lattice.x_min = optional_number(lat, "lattice", "x_min");
    rc.lattice.x_max = optional_number(lat, "lattice", "x_max");

    json& vf = section(root, "", "verify");
    const auto mode = string(vf, "verify", "transfer", "zero");
    if (mode == "zero")
        rc.verify.transfer = VerifyTransfer::zero;
    else if (mode == "computed")
        rc.verify.transfer = VerifyTransfer::computed;
    else if (mode == "file")
        rc.verify.transfer = VerifyTransfer::file;
    else
        field_error("verify.transfer", "expected zero, computed or file");
    if (rc.verify.transfer == VerifyTransfer::file) {
        std::filesystem::path p = string(vf, "verify", "transfer_file");
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        vf["transfer_file"] = p.string();
        rc.verify.transfer_file = p.string();
    }
    rc.verify.transfer_count = static_cast<int>(positive(integer(vf, "verify", "transfer_count", 41), "verify.transfer_count", 2));
    rc.verify.tol = number(vf, "verify", "tol", 0.01);
    rc.verify.strict = boolean(vf, "verify", "strict", false);
    rc.verify.write_surface = boolean(vf, "verify", "write_surface", false);

    json& pr = section(root, "", "properties");
    rc.properties.coarse = static_cast<int>(positive(integer(pr, "properties", "coarse", 20), "properties.coarse"));
    rc.properties.refine_step = number(pr, "properties", "refine_step", 0.01);
    if (!(rc.properties.refine_step > 0.0)) field_error("properties.refine_step", "must be positive");

    rc.resolved_json = root.dump(2);
    return rc;
}

RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path.parent_path(), seed_override);
}

}  // namespace invstop
