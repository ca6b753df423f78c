#include "invstop/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "invstop/errors.hpp"
#include "kernels.hpp"

namespace invstop {

ResidualReport reflected_residual(const Problem& p, const Barrier& b_future, double t, double x,
                                  const MCConfig& cfg) {
    cfg.validate();
    const double T = p.horizon();
    if (!(t >= 0.0 && t <= T)) throw std::out_of_range("reflected_residual: t outside [0,T]");
    ResidualReport r{t, x, 0.0, 0.0, cfg.n_paths, false};
    const double cap = b_future.eval(t);
    const double xi = std::min(x, cap);
    r.clipped = xi != x;
    if (t == T) return r;
    const auto grid = TimeGrid::for_barrier(t, T, cfg.max_step, b_future);
    const auto plan = detail::make_plan(grid, &b_future);
    const auto v = detail::reflected_integrals(p, plan, xi, static_cast<std::size_t>(cfg.n_paths),
                                               cfg.seed, cfg.scheme, cfg.workers);
    const auto s = detail::sample_stats(v);
    r.residual = s.mean;
    r.std_error = s.stderr_;
    return r;
}

ResidualReport kjc_residual(const Problem& p, const Barrier& b, double t, const MCConfig& cfg) {
    cfg.validate();
    const double T = p.horizon();
    if (!(t >= 0.0 && t <= T)) throw std::out_of_range("kjc_residual: t outside [0,T]");
    const double x0 = b.eval(t);
    ResidualReport r{t, x0, 0.0, 0.0, cfg.n_paths, false};
    if (t == T) return r;
    const auto grid = TimeGrid::for_barrier(t, T, cfg.max_step, b);
    const auto plan = detail::make_plan(grid, &b);
    const auto v = detail::indicator_integrals(p, plan, x0, static_cast<std::size_t>(cfg.n_paths),
                                               cfg.seed, cfg.workers);
    const auto s = detail::sample_stats(v);
    r.residual = s.mean;
    r.std_error = s.stderr_;
    return r;
}

TerminalRoot terminal_boundary(const Problem& p, double x_lo, double x_hi, double tol_x) {
    if (!(x_lo < x_hi)) throw PreconditionError("terminal_boundary: need x_lo < x_hi");
    if (!(tol_x > 0.0)) throw PreconditionError("terminal_boundary: tol_x must be positive");
    const double T = p.horizon();
    TerminalRoot r;
    r.h_lo = generator_payoff(p, T, x_lo);
    r.h_hi = generator_payoff(p, T, x_hi);
    if (r.h_lo == 0.0 && r.h_hi == 0.0) return r;  // flat: no unique root
    if (r.h_lo == 0.0) {
        r.root = x_lo;
        return r;
    }
    if (r.h_hi == 0.0) {
        r.root = x_hi;
        return r;
    }
    if ((r.h_lo > 0.0) == (r.h_hi > 0.0)) return r;
    double lo = x_lo, hi = x_hi;
    const bool lo_positive = r.h_lo > 0.0;
    while (hi - lo > tol_x) {
        const double mid = 0.5 * (lo + hi);
        const double hm = generator_payoff(p, T, mid);
        if (hm == 0.0) {
            lo = hi = mid;
            break;
        }
        if ((hm > 0.0) == lo_positive)
            lo = mid;
        else
            hi = mid;
    }
    r.root = 0.5 * (lo + hi);
    return r;
}

Eigen::VectorXd uniform_nodes(double horizon, int n_nodes) {
    if (n_nodes < 2) throw PreconditionError("uniform_nodes: need at least two nodes");
    Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(n_nodes, 0.0, horizon);
    t[n_nodes - 1] = horizon;
    return t;
}

const char* to_string(NodeStatus s) {
    switch (s) {
    case NodeStatus::root:
        return "root";
    case NodeStatus::degenerate:
        return "degenerate";
    case NodeStatus::positive:
        return "no-sign-change(+)";
    case NodeStatus::negative:
        return "no-sign-change(-)";
    }
    return "?";
}

namespace {

void validate(const Problem& p, const SolverConfig& s) {
    s.mc.validate();
    const auto& g = s.time_grid;
    if (g.size() < 2) throw PreconditionError("solver grid needs at least two nodes");
    if (g[0] < 0.0 || g[g.size() - 1] != p.horizon())
        throw PreconditionError("solver grid must lie in [0,T] and end at T");
    for (Eigen::Index i = 1; i < g.size(); ++i)
        if (!(g[i] > g[i - 1])) throw PreconditionError("solver grid must be strictly increasing");
    if (!(s.x_lo < s.x_hi)) throw PreconditionError("solver bracket needs x_lo < x_hi");
    if (!(s.tol_x > 0.0)) throw PreconditionError("solver tol_x must be positive");
    if (s.max_bisections < 1) throw PreconditionError("solver max_bisections must be positive");
}

/// Linear barrier through (t_k, x) and the already solved nodes after t_k.
Barrier trial_barrier(const Eigen::VectorXd& nodes, Eigen::Index k, double x,
                      const std::vector<double>& solved) {
    std::vector<Knot> knots;
    if (nodes[k] > 0.0) knots.push_back({0.0, x, std::nullopt});
    knots.push_back({nodes[k], x, std::nullopt});
    for (Eigen::Index j = k + 1; j < nodes.size(); ++j)
        knots.push_back({nodes[j], solved[static_cast<std::size_t>(j)], std::nullopt});
    return Barrier(std::move(knots), Interpolation::linear);
}

std::string node_name(Eigen::Index k, double t) {
    std::ostringstream os;
    os << "node " << k << " (t=" << t << ")";
    return os.str();
}

}  // namespace

BoundarySolution solve_boundary(const Problem& p, const SolverConfig& scfg) {
    validate(p, scfg);
    const auto& nodes = scfg.time_grid;
    const Eigen::Index N = nodes.size() - 1;
    const double T = p.horizon();

    const double width = scfg.x_hi - scfg.x_lo;
    const auto crossing = check_single_crossing(
        p, nodes, Eigen::VectorXd::LinSpaced(201, scfg.x_lo - width, scfg.x_hi + width));

    std::vector<double> solved(static_cast<std::size_t>(N + 1), 0.0);
    std::vector<NodeResult> results(static_cast<std::size_t>(N + 1));
    std::vector<BisectionStep> audit;

    // Terminal node.
    {
        NodeResult& nr = results[static_cast<std::size_t>(N)];
        double bT;
        if (scfg.terminal) {
            bT = *scfg.terminal;
        } else {
            const auto tr = terminal_boundary(p, scfg.x_lo, scfg.x_hi, scfg.tol_x);
            if (tr.root) {
                bT = *tr.root;
            } else {
                std::ostringstream os;
                os << "terminal condition: h(T,x) has no sign change on [" << scfg.x_lo << ", "
                   << scfg.x_hi << "]: h(T,x_lo)=" << tr.h_lo << ", h(T,x_hi)=" << tr.h_hi
                   << "; supply the terminal boundary explicitly";
                if (!scfg.allow_unbracketed) throw NoRootError(os.str());
                if (tr.h_lo == 0.0 && tr.h_hi == 0.0) {
                    nr.status = NodeStatus::degenerate;
                    bT = scfg.x_lo;
                } else if (tr.h_lo > 0.0) {
                    nr.status = NodeStatus::positive;
                    bT = scfg.x_hi;
                } else {
                    nr.status = NodeStatus::negative;
                    bT = scfg.x_lo;
                }
            }
        }
        solved[static_cast<std::size_t>(N)] = bT;
        nr.report = {T, bT, 0.0, 0.0, 0, false};
    }

    for (Eigen::Index k = N - 1; k >= 0; --k) {
        const double t = nodes[k];
        MCConfig mc = scfg.mc;
        mc.seed = derive_seed(scfg.mc.seed, static_cast<std::uint64_t>(k));
        std::map<double, ResidualReport> seen;
        int iterate = 0;
        auto eval = [&](double x) {
            const auto rep = reflected_residual(p, trial_barrier(nodes, k, x, solved), t, x, mc);
            audit.push_back({t, iterate++, x, rep.residual, rep.std_error});
            seen.emplace(x, rep);
            return rep;
        };
        auto tolerance = [&](const ResidualReport& r) {
            return std::max(3.0 * r.std_error, scfg.residual_tol);
        };

        NodeResult& nr = results[static_cast<std::size_t>(k)];
        const auto r_lo = eval(scfg.x_lo);
        const auto r_hi = eval(scfg.x_hi);
        double x_star;
        if (r_lo.residual == 0.0 && r_hi.residual == 0.0) {
            nr.status = NodeStatus::degenerate;
            x_star = scfg.x_lo;
        } else if ((r_lo.residual > 0.0 && r_hi.residual > 0.0) ||
                   (r_lo.residual < 0.0 && r_hi.residual < 0.0) ||
                   (r_lo.residual < 0.0 && r_hi.residual > 0.0)) {
            const bool positive = r_lo.residual > 0.0 && r_hi.residual > 0.0;
            const bool negative = r_lo.residual < 0.0 && r_hi.residual < 0.0;
            std::ostringstream os;
            os << "no root at " << node_name(k, t) << ": residual(" << scfg.x_lo
               << ")=" << r_lo.residual << " +/- " << r_lo.std_error << ", residual(" << scfg.x_hi
               << ")=" << r_hi.residual << " +/- " << r_hi.std_error;
            if (!positive && !negative) {
                // Increasing across the bracket contradicts single crossing.
                if (crossing.holds)
                    throw NonMonotoneResidualError("residual increases across the bracket at " +
                                                   node_name(k, t));
                os << " (residual increasing; single crossing violated)";
            }
            if (!scfg.allow_unbracketed) throw NoRootError(os.str());
            nr.status = positive ? NodeStatus::positive : NodeStatus::negative;
            x_star = positive ? scfg.x_hi : scfg.x_lo;
        } else {
            double lo = scfg.x_lo, hi = scfg.x_hi;
            if (r_lo.residual == 0.0) hi = lo;
            else if (r_hi.residual == 0.0) lo = hi;
            int it = 0;
            while (hi - lo > scfg.tol_x) {
                if (it == scfg.max_bisections)
                    throw NoRootError("bisection did not reach tol_x within max_bisections at " +
                                      node_name(k, t));
                ++it;
                const double mid = 0.5 * (lo + hi);
                const double r = eval(mid).residual;
                if (r == 0.0) {
                    lo = hi = mid;
                    break;
                }
                if (r > 0.0)
                    lo = mid;
                else
                    hi = mid;
            }
            nr.bisections = it;
            x_star = 0.5 * (lo + hi);
        }
        auto found = seen.find(x_star);
        nr.report = found != seen.end() ? found->second : eval(x_star);
        nr.within_tolerance = std::abs(nr.report.residual) <= tolerance(nr.report);

        // Audit: with common noise the residual must be non-increasing in x.
        double prev_x = 0.0, prev_r = 0.0;
        bool first = true;
        for (const auto& [x, rep] : seen) {
            const double slack = 1e-12 * (std::abs(prev_r) + std::abs(rep.residual) + 1.0);
            if (!first && rep.residual > prev_r + slack && crossing.holds) {
                std::ostringstream os;
                os << "non-monotone residual at " << node_name(k, t) << ": residual(" << prev_x
                   << ")=" << prev_r << " < residual(" << x << ")=" << rep.residual;
                throw NonMonotoneResidualError(os.str());
            }
            prev_x = x;
            prev_r = rep.residual;
            first = false;
        }
        solved[static_cast<std::size_t>(k)] = x_star;
    }

    std::vector<Knot> knots;
    if (nodes[0] > 0.0) knots.push_back({0.0, solved[0], std::nullopt});
    for (Eigen::Index j = 0; j <= N; ++j) knots.push_back({nodes[j], solved[static_cast<std::size_t>(j)], std::nullopt});
    return BoundarySolution{Barrier(std::move(knots), Interpolation::linear), std::move(results),
                            std::move(audit), crossing, !crossing.holds};
}

void write_audit_csv(std::ostream& os, const BoundarySolution& s) {
    os << "node_time,iterate,x,residual,stderr\n" << std::setprecision(17);
    for (const auto& a : s.audit)
        os << a.node_time << ',' << a.iterate << ',' << a.x << ',' << a.residual << ',' << a.std_error
           << '\n';
}

}  // namespace invstop
