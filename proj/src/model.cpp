#include "invstop/model.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "invstop/errors.hpp"

namespace invstop {

Field Field::affine(double a, double b, double c) {
    Field f;
    f.kind_ = Kind::affine;
    f.a_ = a;
    f.b_ = b;
    f.c_ = c;
    std::ostringstream os;
    os << "affine(" << a << " + " << b << "*x + " << c << "*t)";
    f.name_ = os.str();
    return f;
}

Field Field::monomial(double c, int n) {
    if (n < 0) throw std::invalid_argument("monomial exponent must be >= 0");
    Field f;
    f.kind_ = Kind::monomial;
    f.a_ = c;
    f.n_ = n;
    std::ostringstream os;
    os << c << "*x^" << n;
    f.name_ = os.str();
    return f;
}

Field Field::custom(Fn fn, std::string name) {
    if (!fn) throw std::invalid_argument("custom field needs a callable");
    Field f;
    f.kind_ = Kind::custom;
    f.fn_ = std::move(fn);
    f.name_ = std::move(name);
    return f;
}

bool Field::is_zero() const {
    double v = 0.0;
    return is_constant(&v) && v == 0.0;
}

bool Field::is_constant(double* value) const {
    bool constant = false;
    double v = 0.0;
    if (kind_ == Kind::affine && b_ == 0.0 && c_ == 0.0) {
        constant = true;
        v = a_;
    } else if (kind_ == Kind::monomial && (n_ == 0 || a_ == 0.0)) {
        constant = true;
        v = a_;
    }
    if (constant && value) *value = v;
    return constant;
}

double Field::x_lipschitz() const {
    if (kind_ == Kind::affine) return std::abs(b_);
    double v;
    if (is_constant(&v)) return 0.0;
    if (kind_ == Kind::monomial && n_ == 1) return std::abs(a_);
    return std::numeric_limits<double>::infinity();
}

DiffusionSpec::DiffusionSpec(Field mu_, Field sigma_, double lipschitz, double T)
    : mu(std::move(mu_)), sigma(std::move(sigma_)), lipschitz_bound(lipschitz), horizon(T) {
    if (!(lipschitz_bound > 0.0) || !std::isfinite(lipschitz_bound))
        throw std::invalid_argument("lipschitz bound must be a positive finite number");
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw std::invalid_argument("horizon must be a positive finite number");
}

PayoffSpec PayoffSpec::monomial(double c, int n, Field f) {
    PayoffSpec p;
    p.f = std::move(f);
    p.g = Field::monomial(c, n);
    p.g_t = Field::constant(0.0);
    p.g_x = n >= 1 ? Field::monomial(c * n, n - 1) : Field::constant(0.0);
    p.g_xx = n >= 2 ? Field::monomial(c * n * (n - 1), n - 2) : Field::constant(0.0);
    if (n <= 1) p.derivative_bound = std::abs(c * n);
    return p;
}

PayoffSpec PayoffSpec::product(double c, double T, Field f) {
    PayoffSpec p;
    p.f = std::move(f);
    p.g = Field::custom([c, T](double t, double x) { return c * x * (T - t); },
                        "product(x*(T-t))");
    p.g_t = Field::affine(0.0, -c);
    p.g_x = Field::affine(c * T, 0.0, -c);
    p.g_xx = Field::constant(0.0);
    p.derivative_bound = std::abs(c) * T;
    return p;
}

PayoffSpec PayoffSpec::flow_only(Field f) {
    PayoffSpec p;
    p.f = std::move(f);
    p.g = p.g_t = p.g_x = p.g_xx = Field::constant(0.0);
    p.derivative_bound = 0.0;
    return p;
}

Problem::Problem(DiffusionSpec diffusion, PayoffSpec payoff)
    : diffusion_(std::move(diffusion)), payoff_(std::move(payoff)) {}

bool Problem::is_brownian(double* sigma) const {
    double s = 0.0;
    if (!diffusion_.mu.is_zero() || !diffusion_.sigma.is_constant(&s)) return false;
    if (sigma) *sigma = s;
    return true;
}

namespace {

double checked(const Field& fn, const char* label, double t, double x) {
    const double v = fn(t, x);
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "non-finite " << label << " (" << fn.name() << ") at t=" << t << ", x=" << x;
        throw EvaluationError(os.str());
    }
    return v;
}

}  // namespace

double generator_payoff(const Problem& p, double t, double x) {
    if (!(t >= 0.0 && t <= p.horizon())) {
        std::ostringstream os;
        os << "generator_payoff: t=" << t << " outside [0," << p.horizon() << "]";
        throw std::out_of_range(os.str());
    }
    const auto& d = p.diffusion();
    const auto& g = p.payoff();
    const double f = checked(g.f, "f", t, x);
    const double gt = checked(g.g_t, "g_t", t, x);
    const double gx = checked(g.g_x, "g_x", t, x);
    const double gxx = checked(g.g_xx, "g_xx", t, x);
    const double mu = checked(d.mu, "mu", t, x);
    const double sigma = checked(d.sigma, "sigma", t, x);
    return f + gt + mu * gx + 0.5 * sigma * sigma * gxx;
}

SingleCrossingReport check_single_crossing(const Problem& p, const Eigen::VectorXd& times,
                                           const Eigen::VectorXd& states) {
    for (Eigen::Index j = 1; j < states.size(); ++j)
        if (!(states[j] > states[j - 1]))
            throw PreconditionError("check_single_crossing: states must be strictly ascending");

    SingleCrossingReport r;
    for (const double t : times) {
        double prev = generator_payoff(p, t, states[0]);
        for (Eigen::Index j = 1; j < states.size(); ++j) {
            const double cur = generator_payoff(p, t, states[j]);
            if (cur > prev) {
                r.holds = false;
                r.holds_strictly = false;
                r.fails_at.push_back({t, states[j - 1], states[j], prev, cur});
            } else if (cur == prev) {
                r.holds_strictly = false;
            }
            prev = cur;
        }
    }
    return r;
}

PartialsReport check_payoff_partials(const PayoffSpec& payoff, const Eigen::MatrixX2d& points,
                                     double delta) {
    PartialsReport r;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const double t = points(i, 0), x = points(i, 1);
        const double g0 = payoff.g(t, x);
        const double gxp = payoff.g(t, x + delta), gxm = payoff.g(t, x - delta);
        const double gtp = payoff.g(t + delta, x), gtm = payoff.g(t - delta, x);
        const double fd_x = (gxp - gxm) / (2.0 * delta);
        const double fd_xx = (gxp - 2.0 * g0 + gxm) / (delta * delta);
        const double fd_t = (gtp - gtm) / (2.0 * delta);
        const double sx = payoff.g_x(t, x), sxx = payoff.g_xx(t, x), st = payoff.g_t(t, x);
        if (!std::isfinite(sx) || !std::isfinite(sxx) || !std::isfinite(st)) r.all_finite = false;
        r.max_err_x = std::max(r.max_err_x, std::abs(sx - fd_x));
        r.max_err_xx = std::max(r.max_err_xx, std::abs(sxx - fd_xx));
        r.max_err_t = std::max(r.max_err_t, std::abs(st - fd_t));
    }
    return r;
}

DiffusionCheckReport spot_check_diffusion(const DiffusionSpec& d, int n_samples, std::uint64_t seed,
                                          double x_range) {
    DiffusionCheckReport r;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(0.0, d.horizon), ux(-x_range, x_range);
    for (int i = 0; i < n_samples; ++i) {
        const double t = ut(rng), x = ux(rng), y = ux(rng);
        const double sx = d.sigma(t, x), sy = d.sigma(t, y);
        if (sx < 0.0 || sy < 0.0) r.sigma_nonnegative = false;
        if (x == y) continue;
        const double ratio =
            (std::abs(d.mu(t, x) - d.mu(t, y)) + std::abs(sx - sy)) / std::abs(x - y);
        r.worst_ratio = std::max(r.worst_ratio, ratio);
    }
    // Relative slack for rounding in the difference quotients.
    r.lipschitz_ok = r.worst_ratio <= d.lipschitz_bound * (1.0 + 1e-12);
    return r;
}

}  // namespace invstop
