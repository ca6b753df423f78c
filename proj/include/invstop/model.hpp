#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace invstop {

/// A real function of (time, state).
///
/// The closed families used by the config loader (affine in x and t, monomial
/// in x) are evaluated inline so the Monte Carlo inner loops stay free of
/// indirect calls; everything else goes through a user-supplied callable.
class Field {
public:
    using Fn = std::function<double(double, double)>;

    enum class Kind { affine, monomial, custom };

    Field() = default;

    static Field constant(double c) { return affine(c, 0.0); }
    /// a + b x + c t
    static Field affine(double a, double b, double c = 0.0);
    /// c x^n, n >= 0
    static Field monomial(double c, int n);
    static Field custom(Fn fn, std::string name = "custom");

    double operator()(double t, double x) const {
        switch (kind_) {
        case Kind::affine:
            return a_ + b_ * x + c_ * t;
        case Kind::monomial: {
            double r = a_;
            for (int i = 0; i < n_; ++i) r *= x;
            return r;
        }
        case Kind::custom:
            return fn_(t, x);
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    Kind kind() const { return kind_; }
    const std::string& name() const { return name_; }

    /// True when the field is identically zero by construction.
    bool is_zero() const;
    /// True when the field is a known constant; writes it to `value`.
    bool is_constant(double* value = nullptr) const;
    /// Exact Lipschitz constant in x for affine fields, +inf otherwise.
    double x_lipschitz() const;

private:
    Kind kind_ = Kind::affine;
    double a_ = 0.0, b_ = 0.0, c_ = 0.0;
    int n_ = 0;
    Fn fn_;
    std::string name_ = "zero";
};

/// dX = mu(t,X) dt + sigma(t,X) dW on [0, horizon].
struct DiffusionSpec {
    DiffusionSpec(Field mu, Field sigma, double lipschitz_bound, double horizon);

    Field mu;
    Field sigma;
    double lipschitz_bound;
    double horizon;
};

/// Flow payoff f and terminal payoff g with its partials, supplied by hand.
struct PayoffSpec {
    Field f;
    Field g, g_t, g_x, g_xx;
    /// Declared bound on |g_x| and |g_xx|; infinite for the monomials n >= 2.
    double derivative_bound = std::numeric_limits<double>::infinity();

    /// g = c x^n
    static PayoffSpec monomial(double c, int n, Field f = Field::constant(0.0));
    /// g = c x (T - t)
    static PayoffSpec product(double c, double horizon, Field f = Field::constant(0.0));
    /// g = 0, flow payoff only.
    static PayoffSpec flow_only(Field f);
};

class Problem {
public:
    Problem(DiffusionSpec diffusion, PayoffSpec payoff);

    const DiffusionSpec& diffusion() const { return diffusion_; }
    const PayoffSpec& payoff() const { return payoff_; }
    double horizon() const { return diffusion_.horizon; }

    double mu(double t, double x) const { return diffusion_.mu(t, x); }
    double sigma(double t, double x) const { return diffusion_.sigma(t, x); }

    /// f + (d/dt + L) g without finiteness checks; the hot path of every estimator.
    double h(double t, double x) const {
        const double s = diffusion_.sigma(t, x);
        return payoff_.f(t, x) + payoff_.g_t(t, x) + diffusion_.mu(t, x) * payoff_.g_x(t, x) +
               0.5 * s * s * payoff_.g_xx(t, x);
    }

    /// Driftless with a known constant volatility.
    bool is_brownian(double* sigma = nullptr) const;

private:
    DiffusionSpec diffusion_;
    PayoffSpec payoff_;
};

/// h(t,x) = f + g_t + mu g_x + sigma^2 g_xx / 2, checked.
/// Throws EvaluationError naming the first non-finite piece, std::out_of_range
/// for t outside [0,T].
double generator_payoff(const Problem& p, double t, double x);

struct CrossingViolation {
    double t;
    double x1, x2;
    double h1, h2;
};

struct SingleCrossingReport {
    bool holds = true;
    bool holds_strictly = true;
    std::vector<CrossingViolation> fails_at;
};

/// Checks x -> h(t,x) non-increasing on every adjacent pair of `states`
/// (ascending) at each of `times`.
SingleCrossingReport check_single_crossing(const Problem& p, const Eigen::VectorXd& times,
                                           const Eigen::VectorXd& states);

struct PartialsReport {
    double max_err_t = 0.0;
    double max_err_x = 0.0;
    double max_err_xx = 0.0;
    bool all_finite = true;
};

/// Central finite differences of g against the supplied partials at `points`
/// (one (t,x) pair per row).
PartialsReport check_payoff_partials(const PayoffSpec& payoff, const Eigen::MatrixX2d& points,
                                     double delta);

struct DiffusionCheckReport {
    bool sigma_nonnegative = true;
    bool lipschitz_ok = true;
    double worst_ratio = 0.0;  // max (|dmu| + |dsigma|) / |x - y|
};

/// Random spot check of sigma >= 0 and the declared Lipschitz bound on [0,T] x [-x_range, x_range].
DiffusionCheckReport spot_check_diffusion(const DiffusionSpec& d, int n_samples, std::uint64_t seed,
                                          double x_range = 10.0);

}  // namespace invstop
