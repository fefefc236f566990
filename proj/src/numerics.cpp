#include "da/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "da/errors.hpp"

namespace da {

namespace {

struct Simpson {
    const std::function<double(double)>& f;
    int max_depth;
    double worst = 0.0;

    double step(double a, double b, double fa, double fm, double fb, double whole, double tol,
                int depth) {
        double m = 0.5 * (a + b);
        double lm = 0.5 * (a + m);
        double rm = 0.5 * (m + b);
        double flm = f(lm);
        double frm = f(rm);
        double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        double delta = left + right - whole;
        if (depth >= max_depth) {
            worst += std::abs(delta) / 15.0;
            return left + right + delta / 15.0;
        }
        // Force a few levels so narrow features are not skipped.
        if (depth >= 6 && std::abs(delta) <= 15.0 * tol) {
            worst += std::abs(delta) / 15.0;
            return left + right + delta / 15.0;
        }
        return step(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
               step(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
    }
};

}  // namespace

Quadrature integrate(const std::function<double(double)>& f, double a, double b, double abs_tol,
                     int max_depth) {
    if (b == a) return {};
    if (b < a) {
        Quadrature q = integrate(f, b, a, abs_tol, max_depth);
        return {-q.value, q.error};
    }
    Simpson s{f, max_depth};
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    double v = s.step(a, b, fa, fm, fb, whole, abs_tol, 0);
    if (!std::isfinite(v) || s.worst > 10.0 * abs_tol) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", s.worst);
        throw NumericError(std::string("quadrature tolerance not met, residual ") + buf, s.worst);
    }
    return {v, s.worst};
}

Quadrature integrate_to_inf(const std::function<double(double)>& f, double a, double abs_tol,
                            int max_depth) {
    auto g = [&](double x) {
        if (x >= 1.0) return 0.0;
        double one = 1.0 - x;
        double v = f(a + x / one) / (one * one);
        return std::isfinite(v) ? v : 0.0;
    };
    return integrate(g, 0.0, 1.0, abs_tol, max_depth);
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) return std::nan("");
    if (sorted.size() == 1) return sorted[0];
    double h = p * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::vector<double> xs, double p) {
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, p);
}

MeanSe mean_se(std::span<const double> xs) {
    if (xs.empty()) return {std::nan(""), std::nan("")};
    double n = static_cast<double>(xs.size());
    double mean = stable_sum(xs) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    double var = xs.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

double stable_sum(std::span<const double> xs) {
    double sum = 0.0, c = 0.0;
    for (double x : xs) {
        double y = x - c;
        double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    return sum;
}

double one_minus_exp_over(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - 0.5 * x;
    return -std::expm1(-x) / x;
}

}  // namespace da
