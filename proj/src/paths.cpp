#include "invstop/paths.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "invstop/errors.hpp"
#include "kernels.hpp"

namespace invstop {

TimeGrid::TimeGrid(Eigen::VectorXd points) : points_(std::move(points)) {
    if (points_.size() < 1) throw std::invalid_argument("time grid needs at least one point");
    for (Eigen::Index k = 0; k < points_.size(); ++k) {
        if (!std::isfinite(points_[k])) throw std::invalid_argument("time grid has non-finite point");
        if (k > 0 && !(points_[k] > points_[k - 1]))
            throw std::invalid_argument("time grid must be strictly increasing");
    }
}

TimeGrid TimeGrid::build(double t_start, double t_end, double max_step,
                         std::span<const double> mandatory) {
    if (!(max_step > 0.0)) throw std::invalid_argument("max_step must be positive");
    if (!(t_end >= t_start)) throw std::invalid_argument("time grid end before start");
    std::vector<double> cuts{t_start};
    std::vector<double> inner;
    for (double m : mandatory)
        if (m > t_start && m < t_end) inner.push_back(m);
    std::sort(inner.begin(), inner.end());
    inner.erase(std::unique(inner.begin(), inner.end()), inner.end());
    cuts.insert(cuts.end(), inner.begin(), inner.end());
    if (t_end > t_start) cuts.push_back(t_end);

    std::vector<double> pts{t_start};
    for (std::size_t i = 1; i < cuts.size(); ++i) {
        const double a = cuts[i - 1], b = cuts[i];
        const auto n = std::max<long>(1, static_cast<long>(std::ceil((b - a) / max_step * (1.0 - 1e-12))));
        for (long j = 1; j < n; ++j) pts.push_back(a + (b - a) * static_cast<double>(j) / static_cast<double>(n));
        pts.push_back(b);
    }
    return TimeGrid(Eigen::Map<Eigen::VectorXd>(pts.data(), static_cast<Eigen::Index>(pts.size())));
}

TimeGrid TimeGrid::for_barrier(double t_start, double t_end, double max_step, const Barrier& b) {
    const auto knots = b.knot_times_in(t_start, t_end);
    return build(t_start, t_end, max_step, knots);
}

double TimeGrid::max_step() const {
    if (points_.size() < 2) return 0.0;
    const Eigen::Index n = points_.size();
    return (points_.tail(n - 1) - points_.head(n - 1)).maxCoeff();
}

Eigen::Index TimeGrid::index_of(double t) const {
    const double* first = points_.data();
    const double* last = first + points_.size();
    const double* it = std::lower_bound(first, last, t);
    if (it == last || *it != t) return -1;
    return it - first;
}

TimeGrid TimeGrid::tail(Eigen::Index from) const {
    if (from < 0 || from >= points_.size()) throw std::out_of_range("time grid tail index");
    return TimeGrid(points_.tail(points_.size() - from));
}

namespace {

std::array<std::uint32_t, 5> stream_words(std::uint64_t seed, std::uint64_t index, std::uint32_t tag) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
            static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), tag};
}

}  // namespace

NoiseGenerator::NoiseGenerator(const NoiseStream& s, Substream which) {
    const auto words = stream_words(s.seed, s.path_index, static_cast<std::uint32_t>(which));
    std::seed_seq seq(words.begin(), words.end());
    std::array<std::uint32_t, 3> state{};
    seq.generate(state.begin(), state.end());
    auto first = state.begin();
    engine_.seed(first, state.end());
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    const auto words = stream_words(seed, index, 0x73756273u);
    std::seed_seq seq(words.begin(), words.end());
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

Eigen::VectorXd brownian_increments(const TimeGrid& grid, const NoiseStream& stream) {
    NoiseGenerator gen(stream, NoiseGenerator::Substream::gaussian);
    Eigen::VectorXd dW(grid.steps());
    for (Eigen::Index k = 0; k < grid.steps(); ++k)
        dW[k] = std::sqrt(grid[k + 1] - grid[k]) * gen.normal();
    return dW;
}

Eigen::VectorXd bridge_uniforms(const TimeGrid& grid, const NoiseStream& stream) {
    NoiseGenerator gen(stream, NoiseGenerator::Substream::uniform);
    Eigen::VectorXd u(grid.steps());
    for (Eigen::Index k = 0; k < grid.steps(); ++k) u[k] = gen.uniform();
    return u;
}

Eigen::VectorXd simulate_unreflected(const Problem& p, double x0, const TimeGrid& grid,
                                     const Eigen::Ref<const Eigen::VectorXd>& dW) {
    if (dW.size() != grid.steps())
        throw PreconditionError("simulate_unreflected: one increment per grid step required");
    Eigen::VectorXd x(grid.size());
    x[0] = x0;
    for (Eigen::Index k = 0; k < grid.steps(); ++k) {
        const double t = grid[k], dt = grid[k + 1] - grid[k];
        x[k + 1] = x[k] + p.mu(t, x[k]) * dt + p.sigma(t, x[k]) * dW[k];
        if (!std::isfinite(x[k + 1])) detail::throw_non_finite_state(grid[k + 1], static_cast<long>(k + 1));
    }
    return x;
}

Eigen::VectorXd simulate_unreflected(const Problem& p, double t0, double x0, const TimeGrid& grid,
                                     const NoiseStream& stream) {
    const Eigen::Index i0 = grid.index_of(t0);
    if (i0 < 0) throw PreconditionError("simulate_unreflected: t0 is not a grid point");
    const TimeGrid sub = grid.tail(i0);
    return simulate_unreflected(p, x0, sub, brownian_increments(sub, stream));
}

ReflectedPath reflect(const Problem& p, const Barrier& b, double xi, const TimeGrid& grid,
                      const Eigen::Ref<const Eigen::VectorXd>& dW, const Eigen::VectorXd* uniforms,
                      ReflectionScheme scheme) {
    const double b0 = b.eval(grid.start());
    if (xi > b0) {
        std::ostringstream os;
        os << "reflect: start " << xi << " above barrier " << b0 << " at t=" << grid.start();
        throw PreconditionError(os.str());
    }
    for (double kt : b.knot_times_in(grid.start(), grid.end()))
        if (grid.index_of(kt) < 0) {
            std::ostringstream os;
            os << "reflect: barrier knot t=" << kt << " is not a grid point";
            throw PreconditionError(os.str());
        }
    if (dW.size() != grid.steps())
        throw PreconditionError("reflect: one increment per grid step required");
    if (scheme == ReflectionScheme::bridge && (!uniforms || uniforms->size() != grid.steps()))
        throw PreconditionError("reflect: bridge scheme needs one uniform per grid step");

    const auto plan = detail::make_plan(grid, &b);
    const Eigen::Index n = grid.steps();
    ReflectedPath out{grid, simulate_unreflected(p, xi, grid, dW), Eigen::VectorXd(n + 1),
                      Eigen::VectorXd(n + 1), Eigen::VectorXd(n + 1), grid.end()};
    out.x_pre[0] = xi;
    out.x_refl[0] = xi;
    out.l[0] = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const double u = scheme == ReflectionScheme::bridge ? (*uniforms)[k] : 1.0;
        const auto s = detail::reflect_step(p, scheme, plan.t[ku], out.x_refl[k], plan.dt[ku], dW[k],
                                            plan.b[ku], plan.b_left[ku], plan.b[ku + 1], u);
        if (!std::isfinite(s.y)) detail::throw_non_finite_state(plan.t[ku + 1], static_cast<long>(k + 1));
        out.x_pre[k + 1] = s.pre;
        out.x_refl[k + 1] = s.y;
        out.l[k + 1] = out.l[k] + s.push;
    }
    out.tau_b = hitting_time(out.x, b, grid);
    return out;
}

ReflectedPath reflect(const Problem& p, const Barrier& b, double t0, double xi,
                      const TimeGrid& grid, const NoiseStream& stream, ReflectionScheme scheme) {
    const Eigen::Index i0 = grid.index_of(t0);
    if (i0 < 0) throw PreconditionError("reflect: t0 is not a grid point");
    const TimeGrid sub = grid.tail(i0);
    const Eigen::VectorXd dW = brownian_increments(sub, stream);
    if (scheme == ReflectionScheme::bridge) {
        const Eigen::VectorXd u = bridge_uniforms(sub, stream);
        return reflect(p, b, xi, sub, dW, &u, scheme);
    }
    return reflect(p, b, xi, sub, dW, nullptr, scheme);
}

double hitting_time(const Eigen::Ref<const Eigen::VectorXd>& x, const Barrier& b,
                    const TimeGrid& grid) {
    if (x.size() != grid.size()) throw PreconditionError("hitting_time: path and grid differ in length");
    for (Eigen::Index k = 0; k < grid.size(); ++k)
        if (x[k] >= b.eval(grid[k])) return grid[k];
    return grid.end();
}

void write_path_csv(std::ostream& os, const ReflectedPath& path) {
    os << "t,x,x_refl,l\n" << std::setprecision(17);
    for (Eigen::Index k = 0; k < path.grid.size(); ++k)
        os << path.grid[k] << ',' << path.x[k] << ',' << path.x_refl[k] << ',' << path.l[k] << '\n';
}

}  // namespace invstop
