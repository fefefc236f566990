#include "da/payout.hpp"

#include <algorithm>
#include <cmath>

#include "da/errors.hpp"
#include "da/numerics.hpp"

namespace da {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// int_lo^hi e^{-delta t} * A e^{-decay (t - start)} dt, finite or infinite hi.
double exp_integral(double amp, double decay, double start, double lo, double hi, double delta) {
    if (amp == 0.0 || hi <= lo) return 0.0;
    double c = delta + decay;
    double head = amp * std::exp(-delta * lo - decay * (lo - start));
    if (hi == kInf) {
        if (c <= 0.0) return head > 0.0 ? kInf : -kInf;
        return head / c;
    }
    double len = hi - lo;
    return head * len * one_minus_exp_over(c * len);
}

// int_0^L x e^{-d x} dx
double ramp_integral(double d, double len) {
    double z = d * len;
    if (std::abs(z) < 1e-4) return len * len * (0.5 - z / 3.0 + z * z / 8.0);
    if (len == kInf) return d > 0.0 ? 1.0 / (d * d) : kInf;
    return (1.0 - std::exp(-z) * (1.0 + z)) / (d * d);
}

}  // namespace

double ExpPiece::rate(double t) const {
    if (t < start || t >= end) return 0.0;
    return scale * std::exp(-decay * (t - start));
}

double crra_utility(double c, double gamma) {
    if (gamma == 1.0) return std::log(c);
    if (gamma == 0.0) return c;
    return std::pow(c, 1.0 - gamma) / (1.0 - gamma);
}

double piece_discounted_flow(const ExpPiece& p, double a, double b, double delta) {
    double lo = std::max(a, p.start);
    double hi = std::min(b, p.end);
    return exp_integral(p.scale, p.decay, p.start, lo, hi, delta);
}

double piece_discounted_utility(const ExpPiece& p, double a, double b, double delta,
                                double gamma) {
    double lo = std::max(a, p.start);
    double hi = std::min(b, p.end);
    if (hi <= lo) return 0.0;
    if (p.scale <= 0.0) {
        if (gamma < 1.0) return 0.0;
        return -kInf;
    }
    if (gamma == 0.0) return exp_integral(p.scale, p.decay, p.start, lo, hi, delta);
    if (gamma == 1.0) {
        // int e^{-delta t} (ln A - decay (t - start)) dt
        double len = hi - lo;
        double i0 = exp_integral(1.0, 0.0, 0.0, lo, hi, delta);
        double i1 = std::exp(-delta * lo) * ((lo - p.start) * (len == kInf ? 1.0 / delta
                                                                           : len * one_minus_exp_over(delta * len)) +
                                             ramp_integral(delta, len));
        return std::log(p.scale) * i0 - p.decay * i1;
    }
    double amp = std::pow(p.scale, 1.0 - gamma) / (1.0 - gamma);
    return exp_integral(amp, p.decay * (1.0 - gamma), p.start, lo, hi, delta);
}

double PayoutCurve::rate(double t) const {
    double r = 0.0;
    for (const auto& p : pieces) r += p.rate(t);
    if (generic && t >= generic_start && t < generic_end) r += generic(t);
    return r;
}

double PayoutCurve::discounted_flow(double a, double b, double delta) const {
    double sum = 0.0;
    for (const auto& p : pieces) sum += piece_discounted_flow(p, a, b, delta);
    if (generic) {
        double lo = std::max(a, generic_start);
        double hi = std::min(b, generic_end);
        if (hi > lo) {
            auto f = [&](double u) { return std::exp(-delta * u) * generic(u); };
            sum += hi == kInf ? integrate_to_inf(f, lo).value : integrate(f, lo, hi).value;
        }
    }
    return sum;
}

double PayoutCurve::discounted_impulses(double a, double b, double delta) const {
    double sum = 0.0;
    for (const auto& imp : impulses)
        if (imp.time >= a && imp.time < b) sum += imp.amount * std::exp(-delta * imp.time);
    return sum;
}

double PayoutCurve::discounted_utility(double a, double b, double delta, double gamma) const {
    if (generic) {
        double lo = std::max(a, std::min(generic_start, b));
        double hi = std::min(b, generic_end);
        auto f = [&](double u) {
            double r = rate(u);
            return r > 0.0 ? std::exp(-delta * u) * crra_utility(r, gamma) : 0.0;
        };
        return hi > lo ? integrate(f, lo, hi).value : 0.0;
    }
    if (pieces.size() > 1) {
        // Overlapping pieces would need the utility of a sum; pieces here are disjoint.
        for (std::size_t k = 1; k < pieces.size(); ++k)
            if (pieces[k].start < pieces[k - 1].end)
                throw ValidationError("utility requires non-overlapping payout pieces");
    }
    double sum = 0.0;
    for (const auto& p : pieces) sum += piece_discounted_utility(p, a, b, delta, gamma);
    return sum;
}

PayoutCurve PayoutCurve::scaled(double c) const {
    PayoutCurve out = *this;
    for (auto& p : out.pieces) p.scale *= c;
    for (auto& imp : out.impulses) imp.amount *= c;
    if (generic) {
        auto g = generic;
        out.generic = [g, c](double t) { return c * g(t); };
    }
    return out;
}

}  // namespace da
