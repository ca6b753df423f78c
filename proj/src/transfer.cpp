#include "invstop/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "invstop/errors.hpp"
#include "kernels.hpp"

namespace invstop {

void MCConfig::validate() const {
    if (n_paths < 2) throw PreconditionError("MCConfig: n_paths must be at least 2");
    if (!(max_step > 0.0)) throw PreconditionError("MCConfig: max_step must be positive");
    if (workers < 1) throw PreconditionError("MCConfig: workers must be at least 1");
}

namespace {

void check_horizons(const Problem& p, const Barrier& b) {
    if (b.horizon() < p.horizon()) {
        std::ostringstream os;
        os << "barrier horizon " << b.horizon() << " ends before problem horizon " << p.horizon();
        throw PreconditionError(os.str());
    }
}

}  // namespace

Estimate estimate_transfer_at(const Problem& p, const Barrier& b, double t, const MCConfig& cfg) {
    cfg.validate();
    check_horizons(p, b);
    const double T = p.horizon();
    if (!(t >= 0.0 && t <= T)) {
        std::ostringstream os;
        os << "transfer requested at t=" << t << " outside [0," << T << "]";
        throw std::out_of_range(os.str());
    }
    if (t == T) return {0.0, 0.0};
    const auto grid = TimeGrid::for_barrier(t, T, cfg.max_step, b);
    const auto plan = detail::make_plan(grid, &b);
    const auto values = detail::reflected_integrals(p, plan, b.eval(t),
                                                    static_cast<std::size_t>(cfg.n_paths), cfg.seed,
                                                    cfg.scheme, cfg.workers);
    const auto s = detail::sample_stats(values);
    return {s.mean, s.stderr_};
}

double TransferCurve::value_at(double t) const {
    const Eigen::Index n = times.size();
    if (n == 0) throw std::logic_error("empty transfer curve");
    if (t <= times[0]) return pi[0];
    if (t >= times[n - 1]) return pi[n - 1];
    const double* first = times.data();
    const Eigen::Index i = std::upper_bound(first, first + n, t) - first - 1;
    if (t == times[i]) return pi[i];
    const double a = times[i], c = times[i + 1];
    for (const auto& l : left_limits) {
        if (!(l.t > a && l.t <= c)) continue;
        if (t >= l.t) return pi[i + 1];
        if (!l.value) return pi[i];
        const double left = l.value->mean;
        return left + (pi[i] - left) * std::sqrt((l.t - t) / (l.t - a));
    }
    return pi[i] + (pi[i + 1] - pi[i]) * (t - a) / (c - a);
}

std::vector<LeftLimit> upward_jump_times(const Barrier& b, const Eigen::VectorXd& times) {
    std::vector<LeftLimit> out;
    if (times.size() == 0) return out;
    for (const auto& j : b.jumps())
        if (j.size > 0.0 && j.t > times[0] && j.t <= times[times.size() - 1]) out.push_back({j.t, std::nullopt});
    return out;
}

TransferCurve transfer_curve(const Problem& p, const Barrier& b, const Eigen::VectorXd& times,
                             const MCConfig& cfg) {
    for (Eigen::Index i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw PreconditionError("transfer_curve: times must be strictly increasing");
    TransferCurve c{times, Eigen::VectorXd(times.size()), Eigen::VectorXd(times.size()),
                    upward_jump_times(b, times)};
    for (Eigen::Index i = 0; i < times.size(); ++i) {
        const auto e = estimate_transfer_at(p, b, times[i], cfg);
        c.pi[i] = e.mean;
        c.std_error[i] = e.std_error;
    }
    for (auto& l : c.left_limits) {
        if (l.t >= p.horizon()) {
            l.value = Estimate{0.0, 0.0};
            continue;
        }
        const auto grid = TimeGrid::for_barrier(l.t, p.horizon(), cfg.max_step, b);
        const auto plan = detail::make_plan(grid, &b);
        const auto values = detail::reflected_integrals(p, plan, b.eval_left(l.t),
                                                        static_cast<std::size_t>(cfg.n_paths), cfg.seed,
                                                        cfg.scheme, cfg.workers);
        const auto s = detail::sample_stats(values);
        l.value = Estimate{s.mean, s.stderr_};
    }
    return c;
}

Eigen::VectorXd property_times(const Barrier& b, int n_coarse, double refine_step) {
    if (n_coarse < 1) throw PreconditionError("property_times: n_coarse must be positive");
    const double T = b.horizon();
    std::vector<double> ts;
    for (int i = 0; i <= n_coarse; ++i) ts.push_back(T * i / n_coarse);
    for (const auto& k : b.knots()) {
        if (k.t <= 0.0 || k.t >= T) continue;
        for (int m = -3; m <= 3; ++m) ts.push_back(k.t + m * refine_step);
    }
    for (int m = 1; m <= 3; ++m) ts.push_back(T - m * refine_step);
    std::sort(ts.begin(), ts.end());
    std::vector<double> kept;
    for (double t : ts) {
        if (t < 0.0 || t > T) continue;
        if (!kept.empty() && t - kept.back() < 1e-9 * std::max(1.0, T)) {
            // Prefer exact knot times over nearby coarse points.
            for (const auto& k : b.knots())
                if (k.t == t) kept.back() = t;
            continue;
        }
        kept.push_back(t);
    }
    return Eigen::Map<Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size()));
}

ClosedFormValue closed_form_bm_transfer(double sigma, double b_const, const Problem& p, double t,
                                        const QuadratureConfig& q) {
    double s0 = 0.0;
    if (!p.is_brownian(&s0) || std::abs(s0 - sigma) > 1e-12 * std::max(1.0, std::abs(sigma)))
        throw PreconditionError(
            "closed_form_bm_transfer: problem must be driftless with constant volatility sigma");
    if (!(sigma > 0.0) || !std::isfinite(b_const))
        throw PreconditionError("closed_form_bm_transfer: need sigma > 0 and a finite barrier");
    const double T = p.horizon();
    if (!(t >= 0.0 && t <= T)) throw std::out_of_range("closed_form_bm_transfer: t outside [0,T]");
    if (t == T) return {};

    using boost::math::quadrature::gauss_kronrod;
    const double L = q.truncation_sd;
    const double two_phi = std::sqrt(2.0 / M_PI);
    double inner_err = 0.0;
    // E h(s, b - sigma sqrt(u) |Z|), u = s - t
    auto inner = [&](double s) {
        const double su = sigma * std::sqrt(s - t);
        double err = 0.0;
        const double v = gauss_kronrod<double, 31>::integrate(
            [&](double z) { return two_phi * std::exp(-0.5 * z * z) * generator_payoff(p, s, b_const - su * z); },
            0.0, L, q.max_depth, q.tolerance, &err);
        inner_err = std::max(inner_err, err);
        return v;
    };
    // s = t + v^2 removes the square-root behaviour at s = t.
    const double vmax = std::sqrt(T - t);
    double outer_err = 0.0;
    const double value = gauss_kronrod<double, 31>::integrate(
        [&](double v) { return 2.0 * v * inner(t + v * v); }, 0.0, vmax, q.max_depth, q.tolerance,
        &outer_err);

    double edge = 0.0;
    for (int i = 1; i <= 8; ++i) {
        const double s = t + (T - t) * i / 8.0;
        const double su = sigma * std::sqrt(s - t);
        edge = std::max({edge, std::abs(p.h(s, b_const - su * L)), std::abs(p.h(s, b_const - 2.0 * su * L))});
    }
    ClosedFormValue out;
    out.value = value;
    out.error_estimate = outer_err + inner_err * (T - t);
    out.tail_bound = std::erfc(L / std::sqrt(2.0)) * (T - t) * edge;
    return out;
}

namespace {

struct Stencil {
    double prediction;
    double variance;  // of the prediction
    bool ok = false;
};

}  // namespace

TransferPropertiesReport check_transfer_properties(const TransferCurve& curve, const Barrier& b) {
    TransferPropertiesReport r;
    const Eigen::Index n = curve.times.size();
    if (n == 0) return r;
    const double T = b.horizon();
    const auto& t = curve.times;
    const auto& pi = curve.pi;
    const auto& se = curve.std_error;
    const auto jumps = b.jumps();
    const double floor = 1e-12 * (1.0 + pi.cwiseAbs().maxCoeff());

    auto jump_in = [&](double a, double c) {  // signed jump size in (a, c]
        double s = 0.0;
        bool any = false;
        for (const auto& j : jumps)
            if (j.t > a && j.t <= c) {
                s += j.size;
                any = true;
            }
        return std::make_pair(any, s);
    };
    auto same_piece = [&](Eigen::Index i, Eigen::Index k) { return !jump_in(t[i], t[k]).first; };
    // Line through nodes i2 < i1, evaluated at x.
    auto extrapolate = [&](Eigen::Index i1, Eigen::Index i2, double x) {
        const double a = (x - t[i1]) / (t[i1] - t[i2]);
        return Stencil{(1.0 + a) * pi[i1] - a * pi[i2],
                       (1.0 + a) * (1.0 + a) * se[i1] * se[i1] + a * a * se[i2] * se[i2], true};
    };
    // Prediction of the left limit at x from nodes at or before `last`.
    auto left_limit = [&](Eigen::Index last, double x) {
        Stencil s{};
        double allowance = 0.0;
        if (last >= 1 && same_piece(last - 1, last)) {
            s = extrapolate(last, last - 1, x);
            if (last >= 2 && same_piece(last - 2, last))
                allowance = std::abs(s.prediction - extrapolate(last - 1, last - 2, x).prediction);
            else
                allowance = std::abs(pi[last] - pi[last - 1]);
        }
        return std::make_pair(s, allowance);
    };

    const Eigen::Index last_inner = t[n - 1] >= T ? n - 2 : n - 1;
    for (Eigen::Index j = 1; j <= last_inner; ++j) {
        auto [s, allowance] = left_limit(j - 1, t[j]);
        if (!s.ok) {
            // Zero-order prediction; the slope on the right bounds the drift over the gap.
            if (j + 1 >= n || !same_piece(j, j + 1)) continue;
            const double ratio = (t[j] - t[j - 1]) / (t[j + 1] - t[j]);
            s = Stencil{pi[j - 1],
                        se[j - 1] * se[j - 1] + ratio * ratio * (se[j + 1] * se[j + 1] + se[j] * se[j]), true};
            allowance = std::abs(pi[j + 1] - pi[j]) * ratio;
        }
        const auto [has_jump, size] = jump_in(t[j - 1], t[j]);
        const JumpCheck check = has_jump && size > 0.0 ? JumpCheck::downward_only : JumpCheck::continuity;
        const double J = pi[j] - s.prediction;
        const double thr = 3.0 * std::sqrt(se[j] * se[j] + s.variance) + allowance + floor;
        const bool ok = check == JumpCheck::downward_only ? J <= thr : std::abs(J) <= thr;
        if (J > thr) r.no_upward_jumps = false;
        if (check == JumpCheck::continuity && std::abs(J) > thr) r.continuity = false;
        r.evidence.push_back({t[j], J, thr, check, ok});
    }

    // Left limit at T from the nodes before T.
    const Eigen::Index m = t[n - 1] >= T ? n - 2 : n - 1;
    if (m >= 0) {
        auto [s, allowance] = left_limit(m, T);
        if (!s.ok) s = Stencil{pi[m], se[m] * se[m], true};
        r.pi_T_minus = s.prediction;
        r.pi_T_minus_threshold = 3.0 * std::sqrt(s.variance) + allowance + floor;
        r.terminal_limit_zero = std::abs(r.pi_T_minus) <= r.pi_T_minus_threshold;
    }
    return r;
}

void write_transfer_csv(std::ostream& os, const TransferCurve& curve,
                        const Eigen::VectorXd* closed_form) {
    os << "t,pi,stderr" << (closed_form ? ",closed_form" : "") << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < curve.times.size(); ++i) {
        os << curve.times[i] << ',' << curve.pi[i] << ',' << curve.std_error[i];
        if (closed_form) os << ',' << (*closed_form)[i];
        os << '\n';
    }
    for (const auto& l : curve.left_limits)
        if (l.value) os << "# left_limit," << l.t << ',' << l.value->mean << ',' << l.value->std_error << '\n';
}

namespace {

std::vector<double> parse_row(const std::string& line, int lineno) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
        try {
            row.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw ConfigError("transfer file line " + std::to_string(lineno) + ": not a number '" + cell + "'");
        }
    }
    return row;
}

}  // namespace

TransferCurve read_transfer_csv(std::istream& is) {
    std::string line;
    int lineno = 0;
    std::vector<double> t, v, s;
    std::vector<LeftLimit> left;
    bool header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("# left_limit,", 0) == 0) {
            const auto row = parse_row(line.substr(13), lineno);
            if (row.size() < 3)
                throw ConfigError("transfer file line " + std::to_string(lineno) + ": expected # left_limit,t,pi,stderr");
            left.push_back({row[0], Estimate{row[1], row[2]}});
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line.rfind("t,pi,stderr", 0) != 0)
                throw ConfigError("transfer file line " + std::to_string(lineno) +
                                  ": expected header 't,pi,stderr'");
            header = true;
            continue;
        }
        const auto row = parse_row(line, lineno);
        if (row.size() < 3)
            throw ConfigError("transfer file line " + std::to_string(lineno) + ": expected t,pi,stderr");
        t.push_back(row[0]);
        v.push_back(row[1]);
        s.push_back(row[2]);
    }
    if (t.empty()) throw ConfigError("transfer file has no rows");
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) throw ConfigError("transfer file: times must be strictly increasing");
    const auto map = [](std::vector<double>& x) {
        return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
    };
    return {map(t), map(v), map(s), std::move(left)};
}

TransferCurve load_transfer_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open transfer file: " + path);
    return read_transfer_csv(is);
}

}  // namespace invstop
