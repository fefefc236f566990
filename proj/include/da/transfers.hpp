#pragma once

#include <span>
#include <string>
#include <vector>

namespace da {

// alpha(i, j): share of deceased j's balance credited to recipient i.
// Indices are positions in the weight vector (the survivor set before the death).
struct TransferMatrix {
    std::size_t m = 0;
    std::vector<double> alpha;  // row-major m x m, zero diagonal
    std::vector<int> survivors;  // participant ids, optional context
    double asof = 0.0;
    std::string method;

    double operator()(std::size_t i, std::size_t j) const { return alpha[i * m + j]; }
    double& at(std::size_t i, std::size_t j) { return alpha[i * m + j]; }
    double column_sum(std::size_t j) const;
    double min_entry() const;
};

struct FeasibilityReport {
    bool pass = true;
    std::vector<double> slack;  // sum_{j != i} w_j - w_i
    int violating_index = -1;
    std::string violated;
};

struct LargeNReport {
    bool pass = true;
    int i = -1;
    int j = -1;
    std::string violated;
};

// sum_{j != i} w_j >= w_i for every i.
FeasibilityReport feasibility(std::span<const double> w);
// (n-2)(w_i + w_j) >= sum_{l != i, j} w_l for every pair.
LargeNReport feasibility_large_n(std::span<const double> w, std::size_t n_survivors);

TransferMatrix solve_alpha_3peer(std::span<const double> w);
TransferMatrix solve_alpha_npeer_equal_theta(std::span<const double> w);
// Minimum-norm nonnegative solution by quadratic programming.
TransferMatrix solve_alpha_general(std::span<const double> w);
// Minimum-norm solution of the equality constraints only; entries may be negative.
TransferMatrix solve_alpha_unconstrained(std::span<const double> w);
// Closed form when the large-n condition holds, QP when only the weaker
// condition holds; throws InfeasibleError otherwise. Two survivors: single recipient.
TransferMatrix solve_alpha(std::span<const double> w);

// max_i |sum_{j != i} alpha_i^j w_j - w_i| / max w, and max_j |column sum - 1|.
struct MatrixResiduals {
    double balance = 0.0;
    double column = 0.0;
};
MatrixResiduals matrix_residuals(const TransferMatrix& a, std::span<const double> w);

}  // namespace da
