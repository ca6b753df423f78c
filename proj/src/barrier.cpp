#include "invstop/barrier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "invstop/errors.hpp"

namespace invstop {

namespace {

std::vector<double> resolve_left(std::span<const Knot> knots, Interpolation interp) {
    std::vector<double> left(knots.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 1; i < knots.size(); ++i) {
        if (interp == Interpolation::constant)
            left[i] = knots[i - 1].value;
        else
            left[i] = knots[i].left.value_or(knots[i].value);
    }
    return left;
}

}  // namespace

RegularityReport validate_regular(std::span<const Knot> knots, Interpolation interp) {
    RegularityReport r;
    auto fail = [&r](std::string msg) {
        r.ok = false;
        r.violations.push_back(std::move(msg));
    };
    if (knots.empty()) {
        fail("no knots");
        return r;
    }
    if (knots.front().t != 0.0) fail("first knot must be at t=0");
    if (knots.front().left) fail("left value given at t=0");
    for (std::size_t i = 0; i < knots.size(); ++i) {
        const auto& k = knots[i];
        std::ostringstream where;
        where << "knot " << i << " (t=" << k.t << ")";
        if (!std::isfinite(k.t) || !std::isfinite(k.value) || (k.left && !std::isfinite(*k.left)))
            fail("non-finite entry at " + where.str());
        if (i > 0 && !(k.t > knots[i - 1].t)) {
            fail(k.t == knots[i - 1].t ? "duplicate time at " + where.str()
                                       : "unsorted time at " + where.str());
        }
        if (i > 0 && interp == Interpolation::constant && k.left && *k.left != knots[i - 1].value)
            fail("left value at " + where.str() +
                 " contradicts piecewise-constant interpolation");
    }
    if (!r.ok) return r;

    const auto left = resolve_left(knots, interp);
    for (std::size_t i = 1; i < knots.size(); ++i) {
        const double size = knots[i].value - left[i];
        if (size != 0.0) {
            r.jumps.push_back({knots[i].t, size});
            if (size < 0.0) r.downward_jump_sum += -size;
        }
    }
    return r;
}

Barrier::Barrier(std::vector<Knot> knots, Interpolation interp, std::optional<double> horizon)
    : knots_(std::move(knots)), interp_(interp) {
    if (horizon && !knots_.empty() && *horizon > knots_.back().t)
        knots_.push_back({*horizon, knots_.back().value, std::nullopt});
    const auto report = invstop::validate_regular(knots_, interp_);
    if (!report.ok) {
        std::string msg = "invalid barrier:";
        for (const auto& v : report.violations) msg += " " + v + ";";
        throw BarrierError(msg);
    }
    left_ = resolve_left(knots_, interp_);
}

Barrier Barrier::constant(double value, double horizon) {
    return Barrier({{0.0, value, std::nullopt}, {horizon, value, std::nullopt}},
                   Interpolation::constant);
}

std::size_t Barrier::segment(double t) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                               [](double v, const Knot& k) { return v < k.t; });
    return static_cast<std::size_t>(std::distance(knots_.begin(), it)) - 1;
}

double Barrier::eval(double t) const {
    if (!(t >= 0.0 && t <= horizon())) {
        std::ostringstream os;
        os << "barrier evaluated at t=" << t << " outside [0," << horizon() << "]";
        throw std::out_of_range(os.str());
    }
    const std::size_t i = segment(t);
    if (i + 1 == knots_.size() || interp_ == Interpolation::constant) return knots_[i].value;
    const double t0 = knots_[i].t, t1 = knots_[i + 1].t;
    const double v0 = knots_[i].value;
    return v0 + (left_[i + 1] - v0) * (t - t0) / (t1 - t0);
}

double Barrier::eval_left(double t) const {
    if (!(t > 0.0 && t <= horizon())) {
        std::ostringstream os;
        os << "left limit requested at t=" << t << " outside (0," << horizon() << "]";
        throw std::out_of_range(os.str());
    }
    const std::size_t i = segment(t);
    if (knots_[i].t == t) return left_[i];
    return eval(t);
}

std::vector<double> Barrier::knot_times_in(double a, double b) const {
    std::vector<double> out;
    for (const auto& k : knots_)
        if (k.t > a && k.t < b) out.push_back(k.t);
    return out;
}

std::vector<Jump> Barrier::jumps() const { return validate_regular().jumps; }

RegularityReport Barrier::validate_regular() const {
    return invstop::validate_regular(knots_, interp_);
}

void write_barrier(std::ostream& os, const Barrier& b) {
    os << "interpolation=" << (b.interpolation() == Interpolation::constant ? "constant" : "linear")
       << '\n';
    const auto flags = os.flags();
    const auto prec = os.precision();
    os << std::setprecision(17);
    const auto& knots = b.knots();
    for (std::size_t i = 0; i < knots.size(); ++i) {
        os << knots[i].t << ',' << knots[i].value;
        if (i > 0 && b.knot_left(i) != knots[i].value) os << ',' << b.knot_left(i);
        os << '\n';
    }
    os.flags(flags);
    os.precision(prec);
}

Barrier read_barrier(std::istream& is) {
    std::string line;
    int lineno = 0;
    std::optional<Interpolation> interp;
    std::vector<Knot> knots;
    auto error = [&lineno](const std::string& msg) {
        return BarrierError("barrier file line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!interp) {
            if (line == "interpolation=constant")
                interp = Interpolation::constant;
            else if (line == "interpolation=linear")
                interp = Interpolation::linear;
            else
                throw error("expected 'interpolation=constant|linear' header, got '" + line + "'");
            continue;
        }
        std::vector<double> fields;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                fields.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t", used) != std::string::npos)
                    throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw error("not a number: '" + cell + "'");
            }
        }
        if (fields.size() != 2 && fields.size() != 3)
            throw error("expected t,value[,left_value]");
        Knot k{fields[0], fields[1], std::nullopt};
        if (fields.size() == 3) k.left = fields[2];
        knots.push_back(k);
    }
    if (!interp) throw BarrierError("barrier file: missing interpolation header");
    return Barrier(std::move(knots), *interp);
}

void save_barrier(const std::string& path, const Barrier& b) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write barrier file: " + path);
    write_barrier(os, b);
}

Barrier load_barrier(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open barrier file: " + path);
    return read_barrier(is);
}

}  // namespace invstop
