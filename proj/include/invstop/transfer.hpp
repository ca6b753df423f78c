#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "invstop/barrier.hpp"
#include "invstop/model.hpp"
#include "invstop/paths.hpp"

namespace invstop {

struct MCConfig {
    long n_paths = 10000;
    std::uint64_t seed = 0;
    double max_step = 1e-3;
    /// Estimators default to the bridge scheme: unbiased at grid points for
    /// Brownian problems, so coarse steps stay accurate.
    ReflectionScheme scheme = ReflectionScheme::bridge;
    int workers = 1;

    /// Throws PreconditionError unless n_paths >= 2, max_step > 0, workers >= 1.
    void validate() const;
};

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// pi(t) = E int_t^T h(s, X~_s) ds with X~ started at b(t) and reflected below b.
/// t = T returns {0, 0} exactly.
Estimate estimate_transfer_at(const Problem& p, const Barrier& b, double t, const MCConfig& cfg);

/// pi(t-) at an upward barrier jump t. Without a value the curve holds the
/// left node's value up to t.
struct LeftLimit {
    double t;
    std::optional<Estimate> value;
};

/// Transfer sampled on a time grid.
///
/// Between nodes the curve is linear. On an interval containing an upward
/// barrier jump tau the curve is right-continuous: after tau it holds the right
/// node's value, before tau it runs from the left node to pi(tau-) like
/// sqrt(tau - t), since a path started on b just before tau falls about
/// sigma sqrt(tau - t) below b(tau-) by the jump.
struct TransferCurve {
    Eigen::VectorXd times;
    Eigen::VectorXd pi;
    Eigen::VectorXd std_error;
    std::vector<LeftLimit> left_limits;

    double value_at(double t) const;
};

/// Left limits at upward jumps of b inside (times[0], times[last]], without values.
std::vector<LeftLimit> upward_jump_times(const Barrier& b, const Eigen::VectorXd& times);

/// estimate_transfer_at at each time, all with cfg.seed: path i draws the same
/// noise from every start, so differences between nodes carry little noise.
/// At an upward jump tau of b, pi(tau-) is the transfer started from b(tau-) at tau.
TransferCurve transfer_curve(const Problem& p, const Barrier& b, const Eigen::VectorXd& times,
                             const MCConfig& cfg);

/// Equispaced times on [0, T], refined around every barrier knot and just
/// before T so check_transfer_properties has a stencil on each side.
Eigen::VectorXd property_times(const Barrier& b, int n_coarse, double refine_step);

struct QuadratureConfig {
    double tolerance = 1e-10;
    unsigned max_depth = 15;
    double truncation_sd = 8.0;
};

struct ClosedFormValue {
    double value = 0.0;
    double error_estimate = 0.0;  // adaptive Gauss–Kronrod estimate, both levels
    double tail_bound = 0.0;      // mass dropped by truncating the half-normal
};

/// Reflection-principle representation for driftless Brownian motion below a
/// constant barrier: X~_s = b - sigma |W_{s-t}|.
/// Throws PreconditionError unless p is driftless with constant volatility `sigma`.
ClosedFormValue closed_form_bm_transfer(double sigma, double b_const, const Problem& p, double t,
                                        const QuadratureConfig& q = {});

enum class JumpCheck { continuity, downward_only };

struct JumpEvidence {
    double t;
    double jump;       // pi(t) minus the extrapolated left limit
    double threshold;  // 3 standard errors plus the stencil allowance
    JumpCheck check;
    bool ok;
};

struct TransferPropertiesReport {
    bool no_upward_jumps = true;
    bool continuity = true;
    bool terminal_limit_zero = true;
    double pi_T_minus = 0.0;
    double pi_T_minus_threshold = 0.0;
    std::vector<JumpEvidence> evidence;

    bool ok() const { return no_upward_jumps && continuity && terminal_limit_zero; }
};

/// Jump-size tests on a sampled curve. At a time where b jumps up only
/// downward pi-jumps are allowed; everywhere else pi must be continuous.
/// The left limit at each node is the linear extrapolation from the two
/// previous nodes on the same side of any barrier jump.
TransferPropertiesReport check_transfer_properties(const TransferCurve& curve, const Barrier& b);

/// Columns t,pi,stderr and, when given, closed_form. Left limits follow as
/// comment lines `# left_limit,t,pi,stderr`, which read_transfer_csv restores.
void write_transfer_csv(std::ostream& os, const TransferCurve& curve,
                        const Eigen::VectorXd* closed_form = nullptr);
TransferCurve read_transfer_csv(std::istream& is);
TransferCurve load_transfer_csv(const std::string& path);

}  // namespace invstop
