#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace invstop {

enum class Interpolation { constant, linear };

struct Knot {
    double t;
    double value;                 // b(t), the right value
    std::optional<double> left;   // b(t-), only meaningful at jump knots
};

struct Jump {
    double t;
    double size;  // b(t) - b(t-); negative for downward jumps
};

struct RegularityReport {
    bool ok = true;
    std::vector<std::string> violations;
    std::vector<Jump> jumps;
    double downward_jump_sum = 0.0;
};

/// Inspects a knot list without constructing a barrier.
RegularityReport validate_regular(std::span<const Knot> knots, Interpolation interp);

/// Càdlàg cut-off b : [0,T] -> R with finitely many knots.
///
/// Between knots the barrier is either flat (constant) or linear from the
/// right value at the left knot to the left limit at the right knot, so a
/// jump at a knot is never smeared over the preceding interval.
class Barrier {
public:
    /// The first knot must sit at t = 0. If `horizon` lies beyond the last
    /// knot, a terminal knot carrying the last value is appended.
    /// Throws BarrierError on unsorted, duplicate or non-finite knots.
    Barrier(std::vector<Knot> knots, Interpolation interp,
            std::optional<double> horizon = std::nullopt);

    static Barrier constant(double value, double horizon);

    /// b(t), right-continuous. Throws std::out_of_range outside [0,T].
    double eval(double t) const;
    double operator()(double t) const { return eval(t); }
    /// b(t-) for t in (0,T].
    double eval_left(double t) const;

    double horizon() const { return knots_.back().t; }
    Interpolation interpolation() const { return interp_; }
    const std::vector<Knot>& knots() const { return knots_; }
    /// Left limit at knot i (i >= 1) after resolving the interpolation rule.
    double knot_left(std::size_t i) const { return left_[i]; }

    /// Knot times strictly inside (a, b).
    std::vector<double> knot_times_in(double a, double b) const;
    /// Knots with b(t) != b(t-).
    std::vector<Jump> jumps() const;
    RegularityReport validate_regular() const;

private:
    std::size_t segment(double t) const;

    std::vector<Knot> knots_;
    std::vector<double> left_;
    Interpolation interp_;
};

/// `interpolation=constant|linear` header, then `t,value[,left_value]` rows.
void write_barrier(std::ostream& os, const Barrier& b);
Barrier read_barrier(std::istream& is);
void save_barrier(const std::string& path, const Barrier& b);
Barrier load_barrier(const std::string& path);

}  // namespace invstop
