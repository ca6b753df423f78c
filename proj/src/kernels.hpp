#pragma once

// Fused per-path kernels shared by the path simulator and the Monte Carlo
// estimators. Every arithmetic step here must match paths.cpp exactly: the
// tests compare estimator integrals against trapezoids over reflect() output.

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "invstop/barrier.hpp"
#include "invstop/errors.hpp"
#include "invstop/model.hpp"
#include "invstop/paths.hpp"

namespace invstop::detail {

struct StepPlan {
    std::vector<double> t, dt, sqdt;
    std::vector<double> b;       // b(t_k), right values, k = 0..n
    std::vector<double> b_left;  // b(t_{k+1}-) for step k, k = 0..n-1
};

inline StepPlan make_plan(const TimeGrid& grid, const Barrier* barrier) {
    StepPlan plan;
    const auto n = static_cast<std::size_t>(grid.steps());
    plan.t.resize(n + 1);
    plan.dt.resize(n);
    plan.sqdt.resize(n);
    for (std::size_t k = 0; k <= n; ++k) plan.t[k] = grid[static_cast<Eigen::Index>(k)];
    for (std::size_t k = 0; k < n; ++k) {
        plan.dt[k] = plan.t[k + 1] - plan.t[k];
        plan.sqdt[k] = std::sqrt(plan.dt[k]);
    }
    if (barrier) {
        plan.b.resize(n + 1);
        plan.b_left.resize(n);
        for (std::size_t k = 0; k <= n; ++k) plan.b[k] = barrier->eval(plan.t[k]);
        for (std::size_t k = 0; k < n; ++k) plan.b_left[k] = barrier->eval_left(plan.t[k + 1]);
    }
    return plan;
}

struct StepResult {
    double pre;   // value before the final projection
    double y;     // reflected value at t_{k+1}
    double push;  // regulator increment over the step
};

/// One reflected step from x <= b_start. `u` is only read by the bridge scheme.
inline StepResult reflect_step(const Problem& p, ReflectionScheme scheme, double t, double x,
                               double dt, double dW, double b_start, double b_end_left,
                               double b_end, double u) {
    const double vol = p.sigma(t, x);
    const double pre = x + p.mu(t, x) * dt + vol * dW;
    if (scheme == ReflectionScheme::projected) {
        if (pre > b_end) return {pre, b_end, pre - b_end};
        return {pre, pre, 0.0};
    }
    // Maximum over the step of (free path - linear barrier), a Brownian bridge
    // between e0 and e1 with variance vol^2 dt.
    const double e0 = x - b_start;
    const double e1 = pre - b_end_left;
    const double var = vol * vol * dt;
    double m = std::max(e0, e1);
    if (var > 0.0) m = 0.5 * (e0 + e1 + std::sqrt((e1 - e0) * (e1 - e0) - 2.0 * var * std::log(u)));
    double push = std::max(0.0, m);
    double y = pre - push;
    if (y > b_end) {  // downward jump at t_{k+1}: absorbed onto the new level
        push += y - b_end;
        y = b_end;
    }
    return {pre - std::max(0.0, m), y, push};
}

[[noreturn]] inline void throw_non_finite_state(double t, long step) {
    std::ostringstream os;
    os << "non-finite state at step " << step << " (t=" << t << ")";
    throw SimulationError(os.str(), step);
}

/// Trapezoid of h along a reflected path started at xi = plan.b-feasible value.
template <bool Checked>
double reflected_integral(const Problem& p, const StepPlan& plan, double xi,
                          const NoiseStream& stream, ReflectionScheme scheme) {
    NoiseGenerator gauss(stream, NoiseGenerator::Substream::gaussian);
    NoiseGenerator unif(stream, NoiseGenerator::Substream::uniform);
    const std::size_t n = plan.dt.size();
    double x = xi;
    double h0 = Checked ? generator_payoff(p, plan.t[0], x) : p.h(plan.t[0], x);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dW = plan.sqdt[k] * gauss.normal();
        const double u = scheme == ReflectionScheme::bridge ? unif.uniform() : 1.0;
        const auto s = reflect_step(p, scheme, plan.t[k], x, plan.dt[k], dW, plan.b[k],
                                    plan.b_left[k], plan.b[k + 1], u);
        x = s.y;
        if (!std::isfinite(x)) throw_non_finite_state(plan.t[k + 1], static_cast<long>(k + 1));
        const double h1 = Checked ? generator_payoff(p, plan.t[k + 1], x) : p.h(plan.t[k + 1], x);
        acc += 0.5 * (h0 + h1) * plan.dt[k];
        h0 = h1;
    }
    return acc;
}

/// Trapezoid of h * 1{X <= b} along an unreflected path. The start point sits
/// on the barrier and contributes nothing (its indicator is a null event).
template <bool Checked>
double indicator_integral(const Problem& p, const StepPlan& plan, double x0,
                          const NoiseStream& stream) {
    NoiseGenerator gauss(stream, NoiseGenerator::Substream::gaussian);
    const std::size_t n = plan.dt.size();
    auto term = [&](std::size_t k, double x) {
        if (k == 0 ? x >= plan.b[0] : x > plan.b[k]) return 0.0;
        return Checked ? generator_payoff(p, plan.t[k], x) : p.h(plan.t[k], x);
    };
    double x = x0;
    double h0 = term(0, x);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dW = plan.sqdt[k] * gauss.normal();
        x = x + p.mu(plan.t[k], x) * plan.dt[k] + p.sigma(plan.t[k], x) * dW;
        if (!std::isfinite(x)) throw_non_finite_state(plan.t[k + 1], static_cast<long>(k + 1));
        const double h1 = term(k + 1, x);
        acc += 0.5 * (h0 + h1) * plan.dt[k];
        h0 = h1;
    }
    return acc;
}

/// fn(i) for i in [0, n) over `workers` threads with static chunks. The first
/// exception thrown by any worker is rethrown on the caller.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    const std::size_t w = std::max<std::size_t>(
        1, std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers))));
    if (w == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr first;
    std::mutex mtx;
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::size_t id = 0; id < w; ++id) {
        pool.emplace_back([&, id] {
            const std::size_t lo = n * id / w, hi = n * (id + 1) / w;
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mtx);
                if (!first) first = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first) std::rethrow_exception(first);
}

struct SampleStats {
    double mean;
    double stderr_;
};

/// Sequential summation keeps the result independent of the worker count.
inline SampleStats sample_stats(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

/// Per-path values of `kernel(stream)` for path indices 0..n-1 under `seed`.
/// A non-finite value is recomputed with `checked` to obtain a diagnostic.
template <class Fast, class Checked>
std::vector<double> per_path(std::size_t n, std::uint64_t seed, int workers, Fast&& fast,
                             Checked&& checked) {
    std::vector<double> out(n);
    parallel_for(n, workers, [&](std::size_t i) {
        const NoiseStream s{seed, i};
        double v = fast(s);
        if (!std::isfinite(v)) v = checked(s);
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "non-finite path integral on path " << i;
            throw EvaluationError(os.str());
        }
        out[i] = v;
    });
    return out;
}

inline std::vector<double> reflected_integrals(const Problem& p, const StepPlan& plan, double xi,
                                               std::size_t n, std::uint64_t seed,
                                               ReflectionScheme scheme, int workers) {
    return per_path(
        n, seed, workers,
        [&](const NoiseStream& s) { return reflected_integral<false>(p, plan, xi, s, scheme); },
        [&](const NoiseStream& s) { return reflected_integral<true>(p, plan, xi, s, scheme); });
}

inline std::vector<double> indicator_integrals(const Problem& p, const StepPlan& plan, double x0,
                                               std::size_t n, std::uint64_t seed, int workers) {
    return per_path(
        n, seed, workers,
        [&](const NoiseStream& s) { return indicator_integral<false>(p, plan, x0, s); },
        [&](const NoiseStream& s) { return indicator_integral<true>(p, plan, x0, s); });
}

}  // namespace invstop::detail
