#pragma once

#include <functional>
#include <span>
#include <vector>

namespace da {

struct Quadrature {
    double value = 0.0;
    double error = 0.0;
};

// Adaptive Simpson on [a, b]. Throws NumericError when abs_tol is not reached.
Quadrature integrate(const std::function<double(double)>& f, double a, double b,
                     double abs_tol = 1e-10, int max_depth = 48);

// Integral over [a, inf) via t = a + x/(1-x). Integrand must decay.
Quadrature integrate_to_inf(const std::function<double(double)>& f, double a,
                            double abs_tol = 1e-10, int max_depth = 48);

// Empirical quantile, order statistic with linear interpolation. Sorts a copy.
double quantile(std::vector<double> xs, double p);
double quantile_sorted(std::span<const double> sorted, double p);

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};
MeanSe mean_se(std::span<const double> xs);

// Kahan-compensated sum.
double stable_sum(std::span<const double> xs);

// (1 - exp(-x)) / x, continuous at 0.
double one_minus_exp_over(double x);

}  // namespace da
