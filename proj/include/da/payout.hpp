#pragma once

#include <functional>
#include <limits>
#include <vector>

namespace da {

// rate(t) = scale * exp(-decay * (t - start)) on [start, end).
struct ExpPiece {
    double start = 0.0;
    double end = std::numeric_limits<double>::infinity();
    double scale = 0.0;
    double decay = 0.0;

    double rate(double t) const;
};

struct Impulse {
    double time = 0.0;
    double amount = 0.0;
};

// A participant's payment stream over one period: closed-form exponential
// pieces, discrete impulses, and optionally a generic rate integrated by quadrature.
struct PayoutCurve {
    std::vector<ExpPiece> pieces;
    std::vector<Impulse> impulses;
    std::function<double(double)> generic;
    double generic_start = 0.0;
    double generic_end = 0.0;

    bool empty() const { return pieces.empty() && impulses.empty() && !generic; }
    bool closed_form() const { return !generic; }

    double rate(double t) const;
    // Continuous part: int_a^b e^{-delta u} r(u) du.
    double discounted_flow(double a, double b, double delta) const;
    // Impulses with a <= time < b, discounted to 0.
    double discounted_impulses(double a, double b, double delta) const;
    // int_a^b e^{-delta u} U(r(u)) du over the continuous part, CRRA utility.
    double discounted_utility(double a, double b, double delta, double gamma) const;
    // Multiply every amount by c.
    PayoutCurve scaled(double c) const;
};

double crra_utility(double c, double gamma);

// Closed-form integrals over a single piece restricted to [a, b].
double piece_discounted_flow(const ExpPiece& p, double a, double b, double delta);
double piece_discounted_utility(const ExpPiece& p, double a, double b, double delta, double gamma);

}  // namespace da
