#include "da/transfers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "da/errors.hpp"

namespace da {

namespace {

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

TransferMatrix blank(std::size_t m, const char* method) {
    TransferMatrix t;
    t.m = m;
    t.alpha.assign(m * m, 0.0);
    t.method = method;
    return t;
}

void check_weights(std::span<const double> w) {
    for (double x : w)
        if (!(x >= 0.0) || !std::isfinite(x))
            throw ValidationError("weights must be finite and non-negative");
}

void require_feasible(std::span<const double> w) {
    FeasibilityReport r = feasibility(w);
    if (!r.pass) throw InfeasibleError(r.violated, r.violating_index);
}

// Columns of zero-weight deceased: shares proportional to recipients' weights.
void fill_zero_columns(TransferMatrix& t, std::span<const double> w) {
    std::size_t m = t.m;
    for (std::size_t j = 0; j < m; ++j) {
        if (w[j] > 0.0) continue;
        double others = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            if (i != j) others += w[i];
        for (std::size_t i = 0; i < m; ++i) {
            if (i == j) continue;
            t.at(i, j) = others > 0.0 ? w[i] / others : 1.0 / static_cast<double>(m - 1);
        }
    }
}

std::vector<std::size_t> positive_indices(std::span<const double> w) {
    std::vector<std::size_t> p;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) p.push_back(i);
    return p;
}

// x_ij for the positive-weight subset, closed form.
void closed_form_into(TransferMatrix& t, std::span<const double> w,
                      const std::vector<std::size_t>& pos) {
    double mm = static_cast<double>(pos.size());
    double total = 0.0;
    for (std::size_t i : pos) total += w[i];
    for (std::size_t a : pos)
        for (std::size_t b : pos) {
            if (a == b) continue;
            double x = ((mm - 1.0) * (w[a] + w[b]) - total) / ((mm - 1.0) * (mm - 2.0));
            t.at(a, b) = x / w[b];
        }
}

}  // namespace

double TransferMatrix::column_sum(std::size_t j) const {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        if (i != j) s += (*this)(i, j);
    return s;
}

double TransferMatrix::min_entry() const {
    double lo = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j) lo = std::min(lo, (*this)(i, j));
    return lo;
}

FeasibilityReport feasibility(std::span<const double> w) {
    if (w.size() < 2) throw DomainError("feasibility requires at least 2 survivors");
    check_weights(w);
    FeasibilityReport r;
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    double tol = 1e-12 * total;
    double worst = 0.0;
    r.slack.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        r.slack[i] = (total - w[i]) - w[i];
        if (r.slack[i] < -tol && (r.violating_index < 0 || r.slack[i] < worst)) {
            worst = r.slack[i];
            r.violating_index = static_cast<int>(i);
        }
    }
    if (r.violating_index >= 0) {
        r.pass = false;
        std::size_t i = static_cast<std::size_t>(r.violating_index);
        std::ostringstream os;
        os.precision(12);
        os << "peer " << i + 1 << ": sum of other weights ";
        bool first = true;
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (j == i) continue;
            os << (first ? "" : " + ") << w[j];
            first = false;
        }
        os << " = " << total - w[i] << " < w_" << i + 1 << " = " << w[i];
        r.violated = os.str();
    }
    return r;
}

LargeNReport feasibility_large_n(std::span<const double> w, std::size_t n_survivors) {
    if (n_survivors < 3) throw DomainError("large-n feasibility requires at least 3 survivors");
    if (w.size() != n_survivors) throw ValidationError("weight count must equal survivor count");
    check_weights(w);
    LargeNReport r;
    // The binding pair is the two smallest weights.
    std::size_t a = 0, b = 1;
    if (w[b] < w[a]) std::swap(a, b);
    for (std::size_t k = 2; k < w.size(); ++k) {
        if (w[k] < w[a]) {
            b = a;
            a = k;
        } else if (w[k] < w[b]) {
            b = k;
        }
    }
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    double n = static_cast<double>(n_survivors);
    double lhs = (n - 2.0) * (w[a] + w[b]);
    double rhs = total - w[a] - w[b];
    if (lhs < rhs - 1e-12 * total) {
        r.pass = false;
        r.i = static_cast<int>(std::min(a, b));
        r.j = static_cast<int>(std::max(a, b));
        r.violated = "pair (" + std::to_string(r.i + 1) + ", " + std::to_string(r.j + 1) +
                     "): " + fmt(n - 2.0) + " * (" + fmt(w[a]) + " + " + fmt(w[b]) + ") = " +
                     fmt(lhs) + " < " + fmt(rhs);
    }
    return r;
}

TransferMatrix solve_alpha_3peer(std::span<const double> w) {
    if (w.size() != 3) throw DomainError("3-peer solver requires exactly 3 survivors");
    check_weights(w);
    require_feasible(w);
    TransferMatrix t = blank(3, "closed-form-3peer");
    auto pos = positive_indices(w);
    if (pos.size() == 3) {
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t i = 0; i < 3; ++i) {
                if (i == j) continue;
                std::size_t l = 3 - i - j;
                t.at(i, j) = (w[i] + w[j] - w[l]) / (2.0 * w[j]);
            }
    } else if (pos.size() == 2) {
        // Feasibility forces the two positive weights to be equal.
        t.at(pos[0], pos[1]) = 1.0;
        t.at(pos[1], pos[0]) = 1.0;
    }
    fill_zero_columns(t, w);
    return t;
}

TransferMatrix solve_alpha_npeer_equal_theta(std::span<const double> w) {
    if (w.size() <= 3) {
        if (w.size() == 3) return solve_alpha_3peer(w);
        return solve_alpha(w);
    }
    check_weights(w);
    auto pos = positive_indices(w);
    if (pos.size() < w.size()) return solve_alpha_general(w);
    LargeNReport r = feasibility_large_n(w, w.size());
    if (!r.pass) throw InfeasibleError("closed form would be negative: " + r.violated, r.i);
    TransferMatrix t = blank(w.size(), "closed-form-npeer");
    closed_form_into(t, w, pos);
    return t;
}

TransferMatrix solve_alpha_unconstrained(std::span<const double> w) {
    if (w.size() < 3) throw DomainError("unconstrained solution requires at least 3 survivors");
    check_weights(w);
    TransferMatrix t = blank(w.size(), "unconstrained-min-norm");
    auto pos = positive_indices(w);
    if (pos.size() >= 3) {
        closed_form_into(t, w, pos);
    } else if (pos.size() == 2) {
        t.at(pos[0], pos[1]) = 1.0;
        t.at(pos[1], pos[0]) = 1.0;
    }
    fill_zero_columns(t, w);
    return t;
}

TransferMatrix solve_alpha_general(std::span<const double> w) {
    if (w.size() < 2) throw DomainError("transfer solver requires at least 2 survivors");
    check_weights(w);
    require_feasible(w);
    std::size_t m = w.size();
    TransferMatrix t = blank(m, "qp-min-norm");
    auto pos = positive_indices(w);
    std::size_t p = pos.size();
    if (p == 2) {
        t.at(pos[0], pos[1]) = 1.0;
        t.at(pos[1], pos[0]) = 1.0;
    } else if (p >= 3) {
        double wmax = 0.0;
        for (std::size_t i : pos) wmax = std::max(wmax, w[i]);
        Eigen::VectorXd v(static_cast<Eigen::Index>(p));
        for (std::size_t a = 0; a < p; ++a) v[static_cast<Eigen::Index>(a)] = w[pos[a]] / wmax;
        auto pi = static_cast<Eigen::Index>(p);
        Eigen::VectorXd u = v / static_cast<double>(p);

        auto gradient = [&](const Eigen::VectorXd& x) {
            Eigen::VectorXd g = v;
            for (Eigen::Index a = 0; a < pi; ++a)
                for (Eigen::Index b = 0; b < pi; ++b)
                    if (a != b) g[a] -= std::max(0.0, x[a] + x[b]);
            return g;
        };
        auto potential = [&](const Eigen::VectorXd& x) {
            double s = 0.0;
            for (Eigen::Index a = 0; a < pi; ++a)
                for (Eigen::Index b = a + 1; b < pi; ++b) {
                    double z = std::max(0.0, x[a] + x[b]);
                    s += 0.5 * z * z;
                }
            return s - v.dot(x);
        };

        Eigen::VectorXd g = gradient(u);
        int iter = 0;
        for (; iter < 500 && g.lpNorm<Eigen::Infinity>() > 1e-14; ++iter) {
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(pi, pi);
            for (Eigen::Index a = 0; a < pi; ++a)
                for (Eigen::Index b = 0; b < pi; ++b) {
                    if (a == b || u[a] + u[b] <= 0.0) continue;
                    h(a, a) += 1.0;
                    h(a, b) += 1.0;
                }
            h.diagonal().array() += 1e-12 + 1e-10 * g.lpNorm<Eigen::Infinity>();
            Eigen::VectorXd d = h.ldlt().solve(g);
            double phi = potential(u);
            double slope = g.dot(d);
            double step = 1.0;
            Eigen::VectorXd trial = u + d;
            while (potential(trial) > phi - 1e-4 * step * slope && step > 1e-12) {
                step *= 0.5;
                trial = u + step * d;
            }
            u = trial;
            g = gradient(u);
        }
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = 0; b < p; ++b) {
                if (a == b) continue;
                double x = std::max(0.0, u[static_cast<Eigen::Index>(a)] +
                                             u[static_cast<Eigen::Index>(b)]);
                t.at(pos[a], pos[b]) = x / v[static_cast<Eigen::Index>(b)];
            }
        double resid = g.lpNorm<Eigen::Infinity>();
        if (resid > 1e-10)
            throw NumericError("transfer QP did not converge, KKT residual " + fmt(resid), resid);
    }
    fill_zero_columns(t, w);
    return t;
}

TransferMatrix solve_alpha(std::span<const double> w) {
    if (w.size() < 2) throw DomainError("transfer solver requires at least 2 survivors");
    check_weights(w);
    if (w.size() == 2) {
        TransferMatrix t = blank(2, "single-recipient");
        t.at(0, 1) = 1.0;
        t.at(1, 0) = 1.0;
        return t;
    }
    require_feasible(w);
    if (w.size() == 3) return solve_alpha_3peer(w);
    auto pos = positive_indices(w);
    if (pos.size() == w.size() && feasibility_large_n(w, w.size()).pass)
        return solve_alpha_npeer_equal_theta(w);
    return solve_alpha_general(w);
}

MatrixResiduals matrix_residuals(const TransferMatrix& a, std::span<const double> w) {
    MatrixResiduals r;
    double wmax = *std::max_element(w.begin(), w.end());
    if (wmax <= 0.0) wmax = 1.0;
    for (std::size_t i = 0; i < a.m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.m; ++j)
            if (j != i) s += a(i, j) * w[j];
        if (w[i] > 0.0 || s != 0.0) r.balance = std::max(r.balance, std::abs(s - w[i]) / wmax);
        r.column = std::max(r.column, std::abs(a.column_sum(i) - 1.0));
    }
    return r;
}

}  // namespace da
