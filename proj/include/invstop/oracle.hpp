#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "invstop/barrier.hpp"
#include "invstop/model.hpp"
#include "invstop/transfer.hpp"

namespace invstop {

/// Explicit trinomial lattice on [0,T] x [x_min, x_max].
///
/// Transition weights match the local mean mu dt and variance sigma^2 dt:
///   p_up   = (v + m^2) / (2 dx^2) + m / (2 dx)
///   p_down = (v + m^2) / (2 dx^2) - m / (2 dx)
///   p_mid  = 1 - (v + m^2) / dx^2
class Lattice {
public:
    /// dt is shrunk so that T is a whole number of steps. Throws
    /// StabilityError naming the worst (t,x) when a weight leaves [0,1].
    Lattice(const Problem& p, double dt, double dx, double x_min, double x_max);

    /// Bounds widened by `n_sd` standard deviations of sigma_sup sqrt(T) around [x_lo, x_hi],
    /// then snapped so that x_lo and x_hi fall on nodes when they are multiples of dx.
    static Lattice covering(const Problem& p, double dt, double dx, double x_lo, double x_hi,
                            double n_sd = 6.0);

    double dt() const { return dt_; }
    double dx() const { return dx_; }
    double x_min() const { return x_min_; }
    double x_max() const { return x_max_; }
    const Eigen::VectorXd& times() const { return times_; }
    const Eigen::VectorXd& states() const { return states_; }
    /// Largest sigma^2 dt / dx^2 over the lattice.
    double max_courant() const { return max_courant_; }

private:
    double dt_, dx_, x_min_, x_max_;
    double max_courant_ = 0.0;
    Eigen::VectorXd times_, states_;
};

using StopMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct ValueSurface {
    Eigen::VectorXd times;   // rows
    Eigen::VectorXd states;  // columns
    Eigen::MatrixXd v;
    Eigen::MatrixXd stop_value;  // g + pi
    StopMask stop;               // v = g + pi within 1e-9 relative
};

/// Backward recursion v = max(g + pi, f dt + E v(next)). The first and last
/// state columns are clamped to the stopping value. `pi` may be null (zero transfer).
ValueSurface dp_value(const Problem& p, const TransferCurve* pi, const Lattice& lat);

struct ExtractedBoundary {
    Barrier barrier;             // piecewise constant on the lattice times
    std::vector<bool> all_stop;  // row stops everywhere: b = x_min, flagged
    std::vector<bool> no_stop;   // row never stops: b = x_max, flagged
};

/// Smallest interior state in the stop region per time row. Throws
/// StructureError if a row's stop region is not an up-set in x.
ExtractedBoundary extract_boundary(const ValueSurface& vs);

struct ImplementabilityReport {
    bool pass = false;
    double worst_gap = 0.0;  // max over nodes of v^pi - value of stopping at b
    double worst_t = 0.0;
    double worst_x = 0.0;
    bool strict_checked = false;
    bool strict_pass = false;
    double strict_worst_t = 0.0;  // first node below b found in the stop region
    double strict_worst_x = 0.0;
};

/// Compares the optimal value with the value of stopping on first reaching b.
ImplementabilityReport check_implementability(const Problem& p, const Barrier& b,
                                              const TransferCurve* pi, const Lattice& lat,
                                              double tol, bool strict = false);

struct CdfCheckReport {
    long n = 0;
    double sup_distance = 0.0;
    double critical = 0.0;  // 1.63 / sqrt(n)
    bool pass = false;
};

/// Kolmogorov–Smirnov distance between simulated X~_s^{t,b} for driftless
/// Brownian motion and factor * P[X_s <= x], x <= b.
CdfCheckReport reflection_cdf_check(double sigma, double b_const, double t, double s,
                                    const MCConfig& cfg, double factor = 2.0);

/// Columns t,x,v,stop.
void write_surface_csv(std::ostream& os, const ValueSurface& vs);
/// Plain-text summary followed by `pass=` and `worst_gap=` lines.
void write_implementability_report(std::ostream& os, const ImplementabilityReport& r, double tol);

}  // namespace invstop
