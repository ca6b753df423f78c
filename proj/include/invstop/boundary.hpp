#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "invstop/barrier.hpp"
#include "invstop/model.hpp"
#include "invstop/transfer.hpp"

namespace invstop {

struct ResidualReport {
    double t = 0.0;
    double x = 0.0;
    double residual = 0.0;
    double std_error = 0.0;
    long n_paths = 0;
    bool clipped = false;  // start lowered onto b_future(t)
};

/// Phi(t,x) = E int_t^T h(s, X~_s^{t,x}) ds with reflection below b_future.
/// A start above b_future(t) is clipped onto it and reported.
ResidualReport reflected_residual(const Problem& p, const Barrier& b_future, double t, double x,
                                  const MCConfig& cfg);

/// Psi(t) = E int_t^T h(s, X_s) 1{X_s <= b(s)} ds along unreflected paths from b(t).
ResidualReport kjc_residual(const Problem& p, const Barrier& b, double t, const MCConfig& cfg);

struct TerminalRoot {
    std::optional<double> root;
    double h_lo = 0.0;
    double h_hi = 0.0;
};

/// Root of x -> h(T,x) on [x_lo, x_hi] by bisection; empty when h(T,.) keeps its sign.
TerminalRoot terminal_boundary(const Problem& p, double x_lo, double x_hi, double tol_x);

struct SolverConfig {
    Eigen::VectorXd time_grid;  // solver nodes, ascending, last = T
    double x_lo = -1.0;
    double x_hi = 1.0;
    double tol_x = 1e-6;
    MCConfig mc;
    int max_bisections = 100;
    double residual_tol = 0.0;
    std::optional<double> terminal;  // overrides terminal_boundary
    /// Record a bracket edge instead of throwing when a node has no sign change.
    bool allow_unbracketed = false;
};

/// Equispaced solver nodes on [0, T].
Eigen::VectorXd uniform_nodes(double horizon, int n_nodes);

enum class NodeStatus {
    root,
    degenerate,         // residual zero across the bracket: every x is a root
    positive,           // residual > 0 on the bracket: never stop, upper edge recorded
    negative,           // residual < 0 on the bracket: stop at once, lower edge recorded
};

struct NodeResult {
    ResidualReport report;  // residual at the recorded boundary value
    NodeStatus status = NodeStatus::root;
    int bisections = 0;
    bool within_tolerance = true;  // |residual| <= max(3 stderr, residual_tol)
};

struct BisectionStep {
    double node_time;
    int iterate;
    double x;
    double residual;
    double std_error;
};

struct BoundarySolution {
    Barrier barrier;
    std::vector<NodeResult> nodes;  // ascending in time, terminal node last
    std::vector<BisectionStep> audit;
    SingleCrossingReport crossing;
    bool hypotheses_violated = false;
};

/// Backward induction over the solver nodes with bisection on the residual at
/// each node. Node k draws all its paths from derive_seed(mc.seed, k), so every
/// trial value sees the same noise and the residual is monotone in x.
///
/// Throws NoRootError when a node (or the terminal condition) has no sign
/// change and allow_unbracketed is off, and NonMonotoneResidualError when the
/// bisection trace contradicts single crossing while it holds.
BoundarySolution solve_boundary(const Problem& p, const SolverConfig& scfg);

/// Columns node_time,iterate,x,residual,stderr.
void write_audit_csv(std::ostream& os, const BoundarySolution& s);

const char* to_string(NodeStatus s);

}  // namespace invstop
