#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/taus88.hpp>
#include <boost/random/uniform_01.hpp>

#include "invstop/barrier.hpp"
#include "invstop/model.hpp"

namespace invstop {

/// Strictly increasing simulation times. Barrier knots inside the window are
/// always grid points so jumps are absorbed exactly when they happen.
class TimeGrid {
public:
    explicit TimeGrid(Eigen::VectorXd points);

    /// Splits [t_start, t_end] at the mandatory times, then each piece into
    /// equal steps no longer than max_step.
    static TimeGrid build(double t_start, double t_end, double max_step,
                          std::span<const double> mandatory = {});
    static TimeGrid for_barrier(double t_start, double t_end, double max_step, const Barrier& b);

    const Eigen::VectorXd& points() const { return points_; }
    Eigen::Index size() const { return points_.size(); }
    Eigen::Index steps() const { return points_.size() - 1; }
    double operator[](Eigen::Index k) const { return points_[k]; }
    double start() const { return points_[0]; }
    double end() const { return points_[points_.size() - 1]; }
    double max_step() const;

    /// Index of an exact grid point, or -1.
    Eigen::Index index_of(double t) const;
    /// Grid restricted to points[from..].
    TimeGrid tail(Eigen::Index from) const;

private:
    Eigen::VectorXd points_;
};

/// Identifies the noise of one path: (seed, path_index) fixes every draw.
struct NoiseStream {
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
};

/// Per-path engines. Gaussian increments and the uniforms used by the bridge
/// scheme come from separate substreams, so both schemes see the same dW.
class NoiseGenerator {
public:
    enum class Substream : std::uint32_t { gaussian = 0x6e6f726d, uniform = 0x756e6966 };

    NoiseGenerator(const NoiseStream& s, Substream which);

    double normal() { return normal_(engine_); }
    /// Uniform on (0, 1].
    double uniform() { return 1.0 - uniform_(engine_); }

private:
    boost::random::taus88 engine_;
    boost::random::normal_distribution<double> normal_;
    boost::random::uniform_01<double> uniform_;
};

/// Mixes a seed with an index into an independent 64-bit sub-seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

enum class ReflectionScheme {
    /// Euler step, then projection onto the barrier.
    projected,
    /// Euler step with the running maximum inside the step sampled from the
    /// Brownian bridge; exact at grid points for frozen coefficients and a
    /// barrier that is linear over the step.
    bridge,
};

/// dW_k ~ N(0, dt_k), deterministic in (seed, path_index).
Eigen::VectorXd brownian_increments(const TimeGrid& grid, const NoiseStream& stream);
/// U_k on (0,1], one per step; consumed by ReflectionScheme::bridge.
Eigen::VectorXd bridge_uniforms(const TimeGrid& grid, const NoiseStream& stream);

/// Euler–Maruyama from x0 at t0 (a grid point) to the grid end.
Eigen::VectorXd simulate_unreflected(const Problem& p, double t0, double x0, const TimeGrid& grid,
                                     const NoiseStream& stream);
/// Same, driven by explicit increments (one per step of `grid`).
Eigen::VectorXd simulate_unreflected(const Problem& p, double x0, const TimeGrid& grid,
                                     const Eigen::Ref<const Eigen::VectorXd>& dW);

struct ReflectedPath {
    TimeGrid grid;
    Eigen::VectorXd x;       // unreflected, same noise
    Eigen::VectorXd x_pre;   // reflected-state value before projection at each step
    Eigen::VectorXd x_refl;  // reflected
    Eigen::VectorXd l;       // regulator
    double tau_b;            // first grid time with x >= b, else grid end
};

/// Reflects the diffusion below `b`, starting from xi <= b(t0) at grid point t0.
/// Throws PreconditionError if xi > b(t0) or a barrier knot is missing from the grid.
ReflectedPath reflect(const Problem& p, const Barrier& b, double t0, double xi,
                      const TimeGrid& grid, const NoiseStream& stream,
                      ReflectionScheme scheme = ReflectionScheme::projected);

/// Same, driven by explicit noise; `uniforms` is required for the bridge scheme.
ReflectedPath reflect(const Problem& p, const Barrier& b, double xi, const TimeGrid& grid,
                      const Eigen::Ref<const Eigen::VectorXd>& dW,
                      const Eigen::VectorXd* uniforms = nullptr,
                      ReflectionScheme scheme = ReflectionScheme::projected);

/// First grid time with x >= b(t), else the grid end.
double hitting_time(const Eigen::Ref<const Eigen::VectorXd>& x, const Barrier& b,
                    const TimeGrid& grid);

/// CSV with columns t,x,x_refl,l.
void write_path_csv(std::ostream& os, const ReflectedPath& path);

}  // namespace invstop
