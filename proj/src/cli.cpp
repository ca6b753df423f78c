#include "invstop/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "invstop/barrier.hpp"
#include "invstop/boundary.hpp"
#include "invstop/config.hpp"
#include "invstop/errors.hpp"
#include "invstop/oracle.hpp"
#include "invstop/paths.hpp"
#include "invstop/transfer.hpp"

namespace invstop {

namespace {

namespace fs = std::filesystem;

struct Context {
    std::string command;
    RunConfig rc;
    fs::path out_dir;
    int workers;
    std::ostream& out;
};

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

void write_manifest(const Context& c) {
    nlohmann::ordered_json m;
    m["tool"] = "invstop";
    m["version"] = tool_version;
    m["command"] = c.command;
    m["seed"] = c.rc.seed;
    m["workers"] = c.workers;
    m["config"] = nlohmann::ordered_json::parse(c.rc.resolved_json);
    auto os = open_out(c.out_dir / "manifest.json");
    os << m.dump(2) << '\n';
}

const Barrier& need_barrier(const RunConfig& rc, const std::string& command) {
    if (!rc.barrier) throw ConfigError("config field 'barrier': required by " + command);
    return *rc.barrier;
}

int cmd_simulate(Context& c) {
    const auto& p = *c.rc.problem;
    const auto& b = need_barrier(c.rc, c.command);
    const auto& s = c.rc.simulate;
    const double T = p.horizon();
    const auto grid = TimeGrid::for_barrier(s.t0, T, c.rc.mc.max_step, b);
    const double x0 = s.x0.value_or(b.eval(s.t0));
    long hits = 0;
    double tau_sum = 0.0;
    const int width = std::max<int>(4, static_cast<int>(std::to_string(s.n_paths - 1).size()));
    for (long i = 0; i < s.n_paths; ++i) {
        const auto path = reflect(p, b, s.t0, x0, grid, NoiseStream{c.rc.seed, static_cast<std::uint64_t>(i)},
                                  s.scheme);
        bool hit = false;
        for (Eigen::Index k = 0; k < grid.size() && !hit; ++k) hit = path.x[k] >= b.eval(grid[k]);
        hits += hit ? 1 : 0;
        tau_sum += path.tau_b;
        std::ostringstream name;
        name << "path_" << std::setw(width) << std::setfill('0') << i << ".csv";
        auto os = open_out(c.out_dir / name.str());
        write_path_csv(os, path);
    }
    const double n = static_cast<double>(s.n_paths);
    auto os = open_out(c.out_dir / "simulate_summary.txt");
    for (std::ostream* o : {static_cast<std::ostream*>(&os), &c.out}) {
        *o << std::setprecision(10) << "paths=" << s.n_paths << '\n'
           << "hit_fraction=" << hits / n << '\n'
           << "mean_tau_b=" << tau_sum / n << '\n';
    }
    return exit_ok;
}

bool constant_barrier(const Barrier& b, double* value) {
    const auto& k = b.knots();
    for (std::size_t i = 0; i < k.size(); ++i)
        if (k[i].value != k[0].value || (i > 0 && b.knot_left(i) != k[0].value)) return false;
    *value = k[0].value;
    return true;
}

int cmd_transfer(Context& c) {
    const auto& p = *c.rc.problem;
    const auto& b = need_barrier(c.rc, c.command);
    const auto curve = transfer_curve(p, b, c.rc.transfer.times, c.rc.mc);
    Eigen::VectorXd cf;
    if (c.rc.transfer.closed_form) {
        double sigma = 0.0, level = 0.0;
        if (!p.is_brownian(&sigma) || !constant_barrier(b, &level))
            throw PreconditionError("closed form needs a driftless constant-volatility problem and a constant barrier");
        cf.resize(curve.times.size());
        for (Eigen::Index i = 0; i < cf.size(); ++i)
            cf[i] = closed_form_bm_transfer(sigma, level, p, curve.times[i]).value;
    }
    auto os = open_out(c.out_dir / "transfer.csv");
    write_transfer_csv(os, curve, c.rc.transfer.closed_form ? &cf : nullptr);
    write_transfer_csv(c.out, curve, c.rc.transfer.closed_form ? &cf : nullptr);
    return exit_ok;
}

int cmd_solve_boundary(Context& c) {
    const auto& p = *c.rc.problem;
    const auto sol = solve_boundary(p, c.rc.solver);
    {
        auto os = open_out(c.out_dir / "boundary.txt");
        write_barrier(os, sol.barrier);
    }
    {
        auto os = open_out(c.out_dir / "residual_audit.csv");
        write_audit_csv(os, sol);
    }
    auto os = open_out(c.out_dir / "solve_summary.txt");
    for (std::ostream* o : {static_cast<std::ostream*>(&os), &c.out}) {
        if (sol.hypotheses_violated)
            *o << "# hypotheses violated: single crossing fails at " << sol.crossing.fails_at.size()
               << " sampled pairs\n";
        *o << "t,b,residual,stderr,status,within_tolerance\n" << std::setprecision(12);
        for (const auto& n : sol.nodes)
            *o << n.report.t << ',' << n.report.x << ',' << n.report.residual << ','
               << n.report.std_error << ',' << to_string(n.status) << ','
               << (n.within_tolerance ? "yes" : "no") << '\n';
    }
    return exit_ok;
}

Lattice lattice_for(const Problem& p, const Barrier& b, const LatticeSection& s) {
    if (s.x_min && s.x_max) return Lattice(p, s.dt, s.dx, *s.x_min, *s.x_max);
    double lo = b.knots()[0].value, hi = lo;
    for (std::size_t i = 0; i < b.knots().size(); ++i) {
        lo = std::min(lo, b.knots()[i].value);
        hi = std::max(hi, b.knots()[i].value);
        if (i > 0) {
            lo = std::min(lo, b.knot_left(i));
            hi = std::max(hi, b.knot_left(i));
        }
    }
    return Lattice::covering(p, s.dt, s.dx, lo, hi);
}

int cmd_verify(Context& c) {
    const auto& p = *c.rc.problem;
    const auto& b = need_barrier(c.rc, c.command);
    const auto& v = c.rc.verify;
    std::optional<TransferCurve> curve;
    if (v.transfer == VerifyTransfer::computed) {
        curve = transfer_curve(p, b, property_times(b, v.transfer_count - 1, c.rc.properties.refine_step),
                               c.rc.mc);
        auto os = open_out(c.out_dir / "transfer.csv");
        write_transfer_csv(os, *curve);
    } else if (v.transfer == VerifyTransfer::file) {
        curve = load_transfer_csv(v.transfer_file);
        if (curve->left_limits.empty()) curve->left_limits = upward_jump_times(b, curve->times);
    }
    const auto lat = lattice_for(p, b, c.rc.lattice);
    const auto r = check_implementability(p, b, curve ? &*curve : nullptr, lat, v.tol, v.strict);
    if (v.write_surface) {
        auto os = open_out(c.out_dir / "value_surface.csv");
        write_surface_csv(os, dp_value(p, curve ? &*curve : nullptr, lat));
    }
    auto os = open_out(c.out_dir / "implementability.txt");
    for (std::ostream* o : {static_cast<std::ostream*>(&os), &c.out}) {
        *o << "lattice: dt=" << lat.dt() << " dx=" << lat.dx() << " x in [" << lat.x_min() << ", "
           << lat.x_max() << "]\n";
        write_implementability_report(*o, r, v.tol);
    }
    const bool ok = r.pass && (!r.strict_checked || r.strict_pass);
    return ok ? exit_ok : exit_verification;
}

int cmd_check_properties(Context& c) {
    const auto& p = *c.rc.problem;
    const auto& b = need_barrier(c.rc, c.command);
    const auto times = property_times(b, c.rc.properties.coarse, c.rc.properties.refine_step);
    const auto curve = transfer_curve(p, b, times, c.rc.mc);
    {
        auto os = open_out(c.out_dir / "transfer.csv");
        write_transfer_csv(os, curve);
    }
    const auto r = check_transfer_properties(curve, b);
    auto os = open_out(c.out_dir / "properties.txt");
    for (std::ostream* o : {static_cast<std::ostream*>(&os), &c.out}) {
        *o << std::setprecision(10);
        *o << "no_upward_jumps=" << (r.no_upward_jumps ? "pass" : "fail") << '\n'
           << "continuity=" << (r.continuity ? "pass" : "fail") << '\n'
           << "terminal_limit_zero=" << (r.terminal_limit_zero ? "pass" : "fail") << " (pi(T-)="
           << r.pi_T_minus << ", threshold " << r.pi_T_minus_threshold << ")\n";
        for (const auto& e : r.evidence)
            if (!e.ok)
                *o << "  t=" << e.t << " jump=" << e.jump << " threshold=" << e.threshold
                   << (e.check == JumpCheck::downward_only ? " (downward only)" : " (continuity)") << '\n';
    }
    return r.ok() ? exit_ok : exit_verification;
}

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("INVSTOP_SEED");
    if (!s || !*s) return std::nullopt;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used != std::string(s).size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(std::string("INVSTOP_SEED is not an unsigned integer: ") + s);
    }
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Inverse optimal stopping toolkit", "invstop"};
    app.fallthrough();
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    int workers = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--config", config_path, "JSON run configuration")->required();
    app.add_option("--seed", seed, "Seed (overrides INVSTOP_SEED and the config)");
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    const std::pair<const char*, int (*)(Context&)> commands[] = {
        {"simulate", cmd_simulate},
        {"transfer", cmd_transfer},
        {"solve-boundary", cmd_solve_boundary},
        {"verify", cmd_verify},
        {"check-properties", cmd_check_properties},
    };
    const char* help[] = {
        "Simulate reflected paths and write one CSV per path",
        "Estimate the implementing transfer on a time grid",
        "Solve the integral equation for the optimal stopping boundary",
        "Check implementability of a barrier on the lattice oracle",
        "Check jump and terminal properties of the transfer",
    };
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < std::size(commands); ++i)
        subs.push_back(app.add_subcommand(commands[i].first, help[i]));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (!seed) seed = env_seed();
        Context c{"", load_config(config_path, seed), out_dir, workers, out};
        c.rc.mc.workers = workers;
        c.rc.solver.mc.workers = workers;
        fs::create_directories(c.out_dir);
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!subs[i]->parsed()) continue;
            c.command = commands[i].first;
            write_manifest(c);
            return commands[i].second(c);
        }
        return exit_internal;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const BarrierError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const NoRootError& e) {
        err << "no root: " << e.what() << '\n';
        return exit_no_root;
    } catch (const PreconditionError& e) {
        err << "precondition failed: " << e.what() << '\n';
        return exit_precondition;
    } catch (const StabilityError& e) {
        err << "precondition failed: " << e.what() << '\n';
        return exit_precondition;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_internal;
    }
}

}  // namespace invstop
