#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "da/errors.hpp"
#include "da/transfers.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace da;

namespace {

void check_matrix(const TransferMatrix& a, const std::vector<double>& w, double tol) {
    auto r = matrix_residuals(a, w);
    CHECK(r.balance < tol);
    CHECK(r.column < tol);
    CHECK(a.min_entry() >= -tol);
    for (std::size_t i = 0; i < a.m; ++i) CHECK(a(i, i) == 0.0);
}

void check_equal(const TransferMatrix& a, const TransferMatrix& b, double tol) {
    REQUIRE(a.m == b.m);
    for (std::size_t i = 0; i < a.m; ++i)
        for (std::size_t j = 0; j < a.m; ++j) CHECK_THAT(a(i, j), WithinAbs(b(i, j), tol));
}

}  // namespace

TEST_CASE("feasibility of fairness weights", "[transfers]") {
    std::vector<double> ls{9.0, 10.8, 12.75};
    auto r = feasibility(ls);
    CHECK(r.pass);
    CHECK_THAT(r.slack[0], WithinRel(14.55, 1e-14));

    auto bad = feasibility(std::vector<double>{1.0, 1.0, 10.0});
    CHECK_FALSE(bad.pass);
    CHECK(bad.violating_index == 2);
    CHECK(bad.violated.find("peer 3") != std::string::npos);

    CHECK_FALSE(feasibility(std::vector<double>{1.0, 2.0}).pass);
    auto eq = feasibility(std::vector<double>{3.0, 3.0});
    CHECK(eq.pass);
    CHECK(eq.slack[0] == 0.0);
    CHECK_THROWS_AS(feasibility(std::vector<double>{1.0}), DomainError);
}

TEST_CASE("large-n feasibility", "[transfers]") {
    CHECK(feasibility_large_n(std::vector<double>{40, 45, 50}, 3).pass);
    auto r = feasibility_large_n(std::vector<double>{1, 1, 1, 100}, 4);
    CHECK_FALSE(r.pass);
    CHECK(r.i == 0);
    CHECK(r.j == 1);
    for (std::size_t n = 3; n < 12; ++n) CHECK(feasibility_large_n(std::vector<double>(n, 2.5), n).pass);
    CHECK_THROWS_AS(feasibility_large_n(std::vector<double>{1, 1}, 2), DomainError);
}

TEST_CASE("3-peer closed form reproduces the published coefficients", "[transfers]") {
    std::vector<double> w{40, 45, 50};
    auto a = solve_alpha_3peer(w);
    CHECK_THAT(a(0, 1), WithinAbs(7.0 / 18.0, 1e-12));
    CHECK_THAT(a(2, 1), WithinAbs(11.0 / 18.0, 1e-12));
    CHECK_THAT(a(1, 0), WithinAbs(7.0 / 16.0, 1e-12));
    CHECK_THAT(a(2, 0), WithinAbs(9.0 / 16.0, 1e-12));
    CHECK_THAT(a(0, 2), WithinAbs(9.0 / 20.0, 1e-12));
    CHECK_THAT(a(1, 2), WithinAbs(11.0 / 20.0, 1e-12));
    check_matrix(a, w, 1e-14);
    check_equal(solve_alpha_general(w), a, 1e-10);

    auto sym = solve_alpha_3peer(std::vector<double>{1, 1, 1});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) CHECK_THAT(sym(i, j), WithinAbs(0.5, 1e-15));

    std::vector<double> w2{2, 3, 4};
    auto b = solve_alpha_3peer(w2);
    CHECK_THAT(b(0, 1), WithinAbs(1.0 / 6.0, 1e-15));
    check_equal(solve_alpha_general(w2), b, 1e-10);
    CHECK_THROWS_AS(solve_alpha_3peer(std::vector<double>{1, 1, 10}), InfeasibleError);
}

TEST_CASE("n-peer closed form", "[transfers]") {
    auto h = solve_alpha_npeer_equal_theta(std::vector<double>(5, 7.0));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            if (i != j) CHECK_THAT(h(i, j), WithinAbs(0.25, 1e-15));

    std::vector<double> w{8 * 0.3, 9 * 0.3, 10 * 0.3, 9 * 0.3, 9 * 0.3};
    auto a = solve_alpha_npeer_equal_theta(w);
    check_equal(a, solve_alpha_general(w), 1e-10);
    check_matrix(a, w, 1e-12);

    std::vector<double> w4{3, 4, 4.5, 5};
    auto b = solve_alpha_npeer_equal_theta(w4);
    for (std::size_t j = 0; j < 4; ++j) CHECK_THAT(b.column_sum(j), WithinAbs(1.0, 1e-12));
    // Direct substitution: alpha_1^2 = ((m-1)(w1+w2) - W) / ((m-1)(m-2) w2) with m = 4, W = 16.5.
    CHECK_THAT(b(0, 1), WithinAbs((3.0 * 7.0 - 16.5) / (6.0 * 4.0), 1e-15));

    CHECK_THROWS_AS(solve_alpha_npeer_equal_theta(std::vector<double>{1, 1, 1, 100}), InfeasibleError);
}

TEST_CASE("QP solver with active non-negativity", "[transfers]") {
    std::vector<double> w{1, 1, 2, 3.5};
    auto a = solve_alpha_general(w);
    const double expected[4][4] = {{0, 0, 1.0 / 16, 0.25}, {0, 0, 1.0 / 16, 0.25}, {0.125, 0.125, 0, 0.5}, {0.875, 0.875, 0.875, 0}};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK_THAT(a(i, j), WithinAbs(expected[i][j], 1e-10));
    check_matrix(a, w, 1e-10);

    std::vector<double> w6{0.5, 1, 1, 1.5, 2, 5};
    auto b = solve_alpha_general(w6);
    CHECK_THAT(b(0, 5), WithinAbs(0.1, 1e-10));
    CHECK_THAT(b(3, 5), WithinAbs(7.0 / 30.0, 1e-10));
    CHECK_THAT(b(4, 3), WithinAbs(2.0 / 9.0, 1e-10));
    CHECK_THAT(b(5, 4), WithinAbs(0.75, 1e-10));
    CHECK_THAT(b(1, 4), WithinAbs(1.0 / 24.0, 1e-10));
    check_matrix(b, w6, 1e-10);

    auto u = solve_alpha_general(std::vector<double>(6, 1.0));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            if (i != j) CHECK_THAT(u(i, j), WithinAbs(0.2, 1e-12));

    try {
        solve_alpha_general(std::vector<double>{1, 1, 10});
        FAIL("expected infeasibility");
    } catch (const InfeasibleError& e) {
        CHECK(e.index() == 2);
    }
}

TEST_CASE("zero-weight survivors", "[transfers]") {
    std::vector<double> w{0.0, 2.0, 2.0, 2.0};
    auto a = solve_alpha_general(w);
    for (std::size_t j = 1; j < 4; ++j) CHECK(a(0, j) == 0.0);
    for (std::size_t j = 0; j < 4; ++j) CHECK_THAT(a.column_sum(j), WithinAbs(1.0, 1e-12));
    CHECK_THAT(a(1, 0), WithinAbs(1.0 / 3.0, 1e-15));
}

TEST_CASE("scale invariance", "[transfers][property]") {
    std::vector<double> w{1, 1, 2, 3.5};
    for (double c : {1e-6, 3.0, 1e7}) {
        std::vector<double> s = w;
        for (auto& x : s) x *= c;
        check_equal(solve_alpha_general(s), solve_alpha_general(w), 1e-11);
        std::vector<double> t{40 * c, 45 * c, 50 * c};
        check_equal(solve_alpha_3peer(t), solve_alpha_3peer(std::vector<double>{40, 45, 50}), 1e-14);
    }
}

TEST_CASE("closed forms agree with the QP on random feasible instances", "[transfers][property]") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    int compared = 0, qp_only = 0;
    for (int k = 0; k < 1000; ++k) {
        std::size_t n = 3 + static_cast<std::size_t>(k % 4);
        std::vector<double> w(n);
        for (auto& x : w) x = u(gen) * (k % 5 == 0 ? u(gen) * u(gen) : 1.0);
        if (!feasibility(w).pass) continue;
        auto qp = solve_alpha_general(w);
        check_matrix(qp, w, 1e-10);
        if (n == 3) {
            check_equal(solve_alpha_3peer(w), qp, 1e-8);
            ++compared;
        } else if (feasibility_large_n(w, n).pass) {
            check_equal(solve_alpha_npeer_equal_theta(w), qp, 1e-8);
            ++compared;
        } else {
            ++qp_only;
        }
    }
    CHECK(compared > 500);
    CHECK(qp_only > 0);
}

TEST_CASE("unconstrained min-norm may be negative but stays fair", "[transfers]") {
    std::vector<double> w{1, 1, 10};
    auto a = solve_alpha_unconstrained(w);
    auto r = matrix_residuals(a, w);
    CHECK(r.balance < 1e-12);
    CHECK(r.column < 1e-12);
    CHECK(a.min_entry() < 0.0);
}
