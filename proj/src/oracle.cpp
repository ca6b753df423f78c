#include "invstop/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "invstop/errors.hpp"
#include "kernels.hpp"

namespace invstop {

namespace {

struct Weights {
    double up, mid, down;
};

Weights weights(const Problem& p, double t, double x, double dt, double dx) {
    const double m = p.mu(t, x) * dt;
    const double s = p.sigma(t, x);
    const double q = (s * s * dt + m * m) / (dx * dx);
    return {0.5 * q + 0.5 * m / dx, 1.0 - q, 0.5 * q - 0.5 * m / dx};
}

}  // namespace

Lattice::Lattice(const Problem& p, double dt, double dx, double x_min, double x_max)
    : dx_(dx), x_min_(x_min), x_max_(x_max) {
    if (!(dt > 0.0) || !(dx > 0.0)) throw StabilityError("lattice steps must be positive");
    if (!(x_max > x_min + 2.0 * dx)) throw StabilityError("lattice needs at least three states");
    const double T = p.horizon();
    const auto n = static_cast<Eigen::Index>(std::ceil(T / dt * (1.0 - 1e-12)));
    dt_ = T / static_cast<double>(n);
    times_ = Eigen::VectorXd::LinSpaced(n + 1, 0.0, T);
    times_[n] = T;
    const auto m = static_cast<Eigen::Index>(std::floor((x_max - x_min) / dx * (1.0 + 1e-12)));
    states_.resize(m + 1);
    for (Eigen::Index j = 0; j <= m; ++j) states_[j] = x_min + static_cast<double>(j) * dx;
    x_max_ = states_[m];

    double worst = 0.0, wt = 0.0, wx = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index j = 0; j <= m; ++j) {
            const double t = times_[k], x = states_[j];
            const double s = p.sigma(t, x);
            max_courant_ = std::max(max_courant_, s * s * dt_ / (dx * dx));
            const auto w = weights(p, t, x, dt_, dx);
            const double bad = std::max({-w.up, -w.mid, -w.down, 0.0});
            if (!std::isfinite(w.up + w.mid + w.down) || bad > worst) {
                worst = std::isfinite(bad) ? bad : std::numeric_limits<double>::infinity();
                wt = t;
                wx = x;
                if (!std::isfinite(worst)) break;
            }
        }
    if (worst > 0.0) {
        std::ostringstream os;
        os << "unstable lattice (dt=" << dt_ << ", dx=" << dx << "): negative transition weight "
           << -worst << " at t=" << wt << ", x=" << wx << "; need (sigma^2 dt + (mu dt)^2)/dx^2 <= 1"
           << " and |mu| dx <= sigma^2 + mu^2 dt";
        throw StabilityError(os.str());
    }
}

Lattice Lattice::covering(const Problem& p, double dt, double dx, double x_lo, double x_hi,
                          double n_sd) {
    const double T = p.horizon();
    double s_sup = 0.0;
    for (int i = 0; i <= 8; ++i)
        for (int j = 0; j <= 8; ++j)
            s_sup = std::max(s_sup, std::abs(p.sigma(T * i / 8.0, x_lo + (x_hi - x_lo) * j / 8.0)));
    const double margin = n_sd * s_sup * std::sqrt(T) + 2.0 * dx;
    const double lo = std::floor((x_lo - margin) / dx) * dx;
    const double hi = std::ceil((x_hi + margin) / dx) * dx;
    return Lattice(p, dt, dx, lo, hi);
}

ValueSurface dp_value(const Problem& p, const TransferCurve* pi, const Lattice& lat) {
    const auto& ts = lat.times();
    const auto& xs = lat.states();
    const Eigen::Index n = ts.size(), m = xs.size();
    ValueSurface vs{ts, xs, Eigen::MatrixXd(n, m), Eigen::MatrixXd(n, m), StopMask(n, m)};
    const double dt = lat.dt(), dx = lat.dx();
    auto pi_at = [&](double t) { return pi ? pi->value_at(t) : 0.0; };
    auto stops = [](double v, double s) { return v - s <= 1e-9 * std::max(1.0, std::abs(s)); };

    for (Eigen::Index j = 0; j < m; ++j) {
        const double s = p.payoff().g(ts[n - 1], xs[j]) + pi_at(ts[n - 1]);
        vs.stop_value(n - 1, j) = s;
        vs.v(n - 1, j) = s;
        vs.stop(n - 1, j) = true;
    }
    for (Eigen::Index k = n - 2; k >= 0; --k) {
        const double t = ts[k];
        const double pk = pi_at(t);
        for (Eigen::Index j = 0; j < m; ++j) {
            const double s = p.payoff().g(t, xs[j]) + pk;
            vs.stop_value(k, j) = s;
            if (j == 0 || j == m - 1) {
                vs.v(k, j) = s;
                vs.stop(k, j) = true;
                continue;
            }
            const auto w = weights(p, t, xs[j], dt, dx);
            const double cont = p.payoff().f(t, xs[j]) * dt + w.up * vs.v(k + 1, j + 1) +
                                w.mid * vs.v(k + 1, j) + w.down * vs.v(k + 1, j - 1);
            const double v = std::max(s, cont);
            vs.v(k, j) = v;
            vs.stop(k, j) = stops(v, s);
        }
    }
    return vs;
}

ExtractedBoundary extract_boundary(const ValueSurface& vs) {
    const Eigen::Index n = vs.times.size(), m = vs.states.size();
    ExtractedBoundary out{Barrier::constant(0.0, vs.times[n - 1]), std::vector<bool>(n, false),
                          std::vector<bool>(n, false)};
    std::vector<Knot> knots;
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::Index first = -1;
        for (Eigen::Index j = 1; j < m - 1; ++j)
            if (vs.stop(k, j)) {
                first = j;
                break;
            }
        double b;
        if (first < 0) {
            out.no_stop[k] = true;
            b = vs.states[m - 1];
        } else {
            for (Eigen::Index j = first + 1; j < m - 1; ++j)
                if (!vs.stop(k, j)) {
                    std::ostringstream os;
                    os << "stop region is not an up-set at t=" << vs.times[k] << ": x="
                       << vs.states[first] << " stops but x=" << vs.states[j] << " continues";
                    throw StructureError(os.str());
                }
            if (first == 1) {
                out.all_stop[k] = true;
                b = vs.states[0];
            } else {
                b = vs.states[first];
            }
        }
        knots.push_back({vs.times[k], b, std::nullopt});
    }
    out.barrier = Barrier(std::move(knots), Interpolation::constant);
    return out;
}

ImplementabilityReport check_implementability(const Problem& p, const Barrier& b,
                                              const TransferCurve* pi, const Lattice& lat,
                                              double tol, bool strict) {
    const auto vs = dp_value(p, pi, lat);
    const auto& ts = lat.times();
    const auto& xs = lat.states();
    const Eigen::Index n = ts.size(), m = xs.size();
    const double dt = lat.dt(), dx = lat.dx();

    // Value of stopping on first reaching b, same lattice and weights.
    Eigen::VectorXd next = vs.stop_value.row(n - 1).transpose();
    Eigen::VectorXd cur(m);
    ImplementabilityReport r;
    auto record = [&](Eigen::Index k, const Eigen::VectorXd& w) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const double gap = vs.v(k, j) - w[j];
            if (gap > r.worst_gap) {
                r.worst_gap = gap;
                r.worst_t = ts[k];
                r.worst_x = xs[j];
            }
        }
    };
    record(n - 1, next);
    for (Eigen::Index k = n - 2; k >= 0; --k) {
        const double t = ts[k];
        const double bk = b.eval(t);
        for (Eigen::Index j = 0; j < m; ++j) {
            const double s = vs.stop_value(k, j);
            if (j == 0 || j == m - 1 || xs[j] >= bk) {
                cur[j] = s;
                continue;
            }
            const auto w = weights(p, t, xs[j], dt, dx);
            cur[j] = p.payoff().f(t, xs[j]) * dt + w.up * next[j + 1] + w.mid * next[j] +
                     w.down * next[j - 1];
        }
        record(k, cur);
        std::swap(cur, next);
    }
    r.pass = r.worst_gap <= tol;

    if (strict) {
        r.strict_checked = true;
        r.strict_pass = true;
        for (Eigen::Index k = 0; k + 1 < n && r.strict_pass; ++k) {
            const double bk = b.eval(ts[k]);
            for (Eigen::Index j = 1; j < m - 1; ++j)
                if (xs[j] < bk && vs.stop(k, j)) {
                    r.strict_pass = false;
                    r.strict_worst_t = ts[k];
                    r.strict_worst_x = xs[j];
                    break;
                }
        }
    }
    return r;
}

CdfCheckReport reflection_cdf_check(double sigma, double b_const, double t, double s,
                                    const MCConfig& cfg, double factor) {
    cfg.validate();
    if (!(sigma > 0.0) || !std::isfinite(b_const))
        throw PreconditionError("reflection_cdf_check: need sigma > 0 and a finite barrier");
    if (!(t >= 0.0 && s > t)) throw PreconditionError("reflection_cdf_check: need 0 <= t < s");
    const Problem p(DiffusionSpec(Field::constant(0.0), Field::constant(sigma), 1.0, s),
                    PayoffSpec::flow_only(Field::constant(0.0)));
    const Barrier b = Barrier::constant(b_const, s);
    const auto grid = TimeGrid::for_barrier(t, s, cfg.max_step, b);
    const auto plan = detail::make_plan(grid, &b);
    const auto n = static_cast<std::size_t>(cfg.n_paths);

    std::vector<double> y(n);
    detail::parallel_for(n, cfg.workers, [&](std::size_t i) {
        const NoiseStream stream{cfg.seed, i};
        NoiseGenerator gauss(stream, NoiseGenerator::Substream::gaussian);
        NoiseGenerator unif(stream, NoiseGenerator::Substream::uniform);
        double x = b_const;
        for (std::size_t k = 0; k < plan.dt.size(); ++k) {
            const double dW = plan.sqdt[k] * gauss.normal();
            const double u = cfg.scheme == ReflectionScheme::bridge ? unif.uniform() : 1.0;
            x = detail::reflect_step(p, cfg.scheme, plan.t[k], x, plan.dt[k], dW, plan.b[k],
                                     plan.b_left[k], plan.b[k + 1], u)
                    .y;
        }
        y[i] = x;
    });
    std::sort(y.begin(), y.end());

    const double scale = sigma * std::sqrt(s - t);
    CdfCheckReport r;
    r.n = cfg.n_paths;
    const double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::min(y[i], b_const);
        const double F = std::min(1.0, factor * 0.5 * std::erfc(-(x - b_const) / (scale * std::sqrt(2.0))));
        const double above = static_cast<double>(i + 1) / nn - F;
        const double below = F - static_cast<double>(i) / nn;
        r.sup_distance = std::max({r.sup_distance, std::abs(above), std::abs(below)});
    }
    r.critical = 1.63 / std::sqrt(nn);
    r.pass = r.sup_distance <= r.critical;
    return r;
}

void write_surface_csv(std::ostream& os, const ValueSurface& vs) {
    os << "t,x,v,stop\n" << std::setprecision(17);
    for (Eigen::Index k = 0; k < vs.times.size(); ++k)
        for (Eigen::Index j = 0; j < vs.states.size(); ++j)
            os << vs.times[k] << ',' << vs.states[j] << ',' << vs.v(k, j) << ','
               << (vs.stop(k, j) ? 1 : 0) << '\n';
}

void write_implementability_report(std::ostream& os, const ImplementabilityReport& r, double tol) {
    os << std::setprecision(10);
    os << "implementability: " << (r.pass ? "PASS" : "FAIL") << '\n';
    os << "  worst gap " << r.worst_gap << " at t=" << r.worst_t << ", x=" << r.worst_x
       << " (tolerance " << tol << ")\n";
    if (r.strict_checked) {
        os << "  strict: " << (r.strict_pass ? "PASS" : "FAIL");
        if (!r.strict_pass) os << " (indifference at t=" << r.strict_worst_t << ", x=" << r.strict_worst_x << ")";
        os << '\n';
    }
    os << "pass=" << (r.pass ? "true" : "false") << '\n';
    os << "worst_gap=" << r.worst_gap << '\n';
    if (r.strict_checked) os << "strict_pass=" << (r.strict_pass ? "true" : "false") << '\n';
}

}  // namespace invstop
