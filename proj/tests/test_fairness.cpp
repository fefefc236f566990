#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "da/errors.hpp"
#include "da/fairness.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace da;

namespace {

Pool constant_pool(const std::vector<double>& lambdas, const std::vector<double>& deposits) {
    Pool p;
    for (double l : lambdas) p.mortality.members.push_back(HazardModel::constant(l));
    p.deposits = deposits;
    return p;
}

Pool three_peer() { return constant_pool({0.03, 0.04, 0.05}, {300, 270, 255}); }
const Economics kEcon{0.06, 2.0 / 3.0};

FairnessOptions opts(std::size_t n, std::uint64_t seed) {
    FairnessOptions o;
    o.n_paths = n;
    o.seed = seed;
    return o;
}

std::vector<double> uniform_grid(double to, double step) {
    std::vector<double> g;
    for (int k = 0; k * step <= to + 1e-12; ++k) g.push_back(k * step);
    return g;
}

}  // namespace

TEST_CASE("lifetime fairness of the individual-rate optimal annuity", "[fairness][published]") {
    Pool p = three_peer();
    auto scheme = build_scheme(make_optimal_da("individual", Dissolution::dissolve_at_first_death), p, kEcon);
    auto rep = lifetime_fairness(*scheme, opts(40000, 11));
    CHECK(rep.pass);
    for (const auto& r : rep.participants) {
        CHECK(r.target == p.deposits[static_cast<std::size_t>(r.participant)]);
        CHECK(std::abs(r.residual) < 4.0 * r.se + 1e-9);
        CHECK(r.se > 0.0);
    }
}

TEST_CASE("lifetime fairness of a homogeneous transfer plan", "[fairness]") {
    Pool p = constant_pool({0.04, 0.04, 0.04, 0.04}, {250, 250, 250, 250});
    Economics e{0.03, 1.0};
    auto scheme = build_scheme(ftp_plan(p), p, e);
    auto rep = lifetime_fairness(*scheme, opts(40000, 5));
    CHECK(rep.pass);
    for (const auto& r : rep.participants) CHECK(std::abs(r.residual) < 4.0 * r.se + 1e-9);
}

TEST_CASE("DC drawdown forfeits at death and is not lifetime fair", "[fairness]") {
    Pool p = three_peer();
    auto scheme = build_scheme(make_dc_drawdown(), p, kEcon);
    auto rep = lifetime_fairness(*scheme, opts(20000, 3));
    CHECK_FALSE(rep.pass);
    for (const auto& r : rep.participants) CHECK(r.residual < -10.0 * r.se);
}

TEST_CASE("equitability fit", "[fairness]") {
    SECTION("homogeneous truncated tontine: equal shortfall") {
        Pool p = constant_pool({0.05, 0.05, 0.05}, {1000, 1000, 1000});
        Economics z{0.0, 1.0};
        auto spec = equitable_tontine(p, z, {1, 1, 1}, constant_schedule(1.0 / 20.0, 20.0), false,
                                      Dissolution::last_survivor_continues);
        auto rep = equitability_fit(*build_scheme(spec, p, z), opts(20000, 8));
        // What the last survivor has not drawn by death is forfeited.
        CHECK(rep.epsilon > 3.0 * rep.participants[0].se / 1000.0);
        CHECK(rep.pass);
    }
    SECTION("unequal tontine weights are not equitable") {
        Pool p = constant_pool({0.01, 0.01, 0.01, 0.01, 0.01}, {360, 360, 360, 360, 360});
        Economics z{0.0, 1.0};
        auto spec = equitable_tontine(p, z, {0.8, 1, 1, 1, 1}, constant_schedule(1.0 / 30.0, 30.0), true);
        spec.balance_policy = BalancePolicy::permit;
        auto rep = equitability_fit(*build_scheme(spec, p, z), opts(20000, 9));
        CHECK_FALSE(rep.pass);
        CHECK(rep.max_deviation > rep.tolerance);
    }
}

TEST_CASE("equitability epsilon solves the minimax fit", "[fairness][property]") {
    Pool p = constant_pool({0.02, 0.04, 0.07}, {200, 300, 500});
    Economics z{0.0, 1.0};
    auto spec = equitable_tontine(p, z, {1, 1, 1}, constant_schedule(1.0 / 15.0, 15.0), false);
    auto scheme = build_scheme(spec, p, z);
    auto life = lifetime_fairness(*scheme, opts(5000, 2));
    auto fit = equitability_fit(*scheme, opts(5000, 2));
    auto dev = [&](double eps) {
        double m = 0.0;
        for (const auto& r : life.participants) m = std::max(m, std::abs(r.estimate - (1.0 - eps) * r.target));
        return m;
    };
    CHECK_THAT(dev(fit.epsilon), WithinAbs(fit.max_deviation, 1e-9));
    for (double step : {-1e-3, -1e-5, 1e-5, 1e-3}) CHECK(dev(fit.epsilon + step) >= fit.max_deviation - 1e-9);
}

TEST_CASE("periodic fairness", "[fairness]") {
    SECTION("dominating annuity balances expected gains and losses") {
        Pool p = three_peer();
        auto scheme = build_scheme(da_dominating_dc(p, kEcon), p, kEcon);
        auto rep = periodic_fairness(*scheme, scheme->initial_state(), opts(40000, 21));
        CHECK(rep.pass);
        for (const auto& r : rep.participants) CHECK(std::abs(r.residual) < 4.0 * r.se + 1e-9);
    }
    SECTION("from a later state with one death") {
        Pool p = constant_pool({0.02, 0.03, 0.05, 0.06}, {300, 200, 250, 150});
        auto scheme = build_scheme(make_periodic_fair_da(), p, kEcon);
        auto r = run_path(*scheme, {{1, 4.0}, {0, 1e3}, {2, 1e3}, {3, 1e3}}, [] {
            PathOptions o;
            o.stop_at = 7.0;
            return o;
        }());
        REQUIRE(r.state.alive_count() == 3);
        auto rep = periodic_fairness(*scheme, r.state, opts(40000, 22));
        CHECK(rep.pass);
        CHECK(rep.participants[1].residual == 0.0);
        for (const auto& x : rep.participants) CHECK(std::abs(x.residual) < 4.0 * x.se + 1e-9);
    }
    SECTION("heterogeneous equitable tontine is not periodically fair") {
        Pool p = constant_pool({0.01, 0.05, 0.09}, {1000, 1000, 1000});
        Economics z{0.0, 1.0};
        auto spec = equitable_tontine(p, z, {1, 1, 1}, constant_schedule(0.04, 25.0), false);
        auto scheme = build_scheme(spec, p, z);
        auto rep = periodic_fairness(*scheme, scheme->initial_state(), opts(20000, 23));
        CHECK_FALSE(rep.pass);
        // The healthiest member gains from the others on average.
        CHECK(rep.participants[0].residual < -10.0 * rep.participants[0].se);
        CHECK(rep.participants[2].residual > 10.0 * rep.participants[2].se);
    }
}

TEST_CASE("periodic fairness needs a transfer period", "[fairness]") {
    Pool p = constant_pool({0.03, 0.04}, {100, 100});
    auto two = build_scheme(ftp_plan(p, Dissolution::dissolve_at_two_survivors), p, kEcon);
    CHECK_THROWS_AS(periodic_fairness(*two, two->initial_state(), opts(100, 1)), DomainError);
    Pool q = constant_pool({0.03}, {100});
    auto one = build_scheme(make_periodic_fair_da(), q, kEcon);
    CHECK_THROWS_AS(periodic_fairness(*one, one->initial_state(), opts(100, 1)), DomainError);
    CHECK_THROWS_AS(lifetime_fairness(*one, opts(1, 1)), ValidationError);
}

TEST_CASE("instantaneous fairness", "[fairness]") {
    auto grid = uniform_grid(20.0, 1.0);
    SECTION("instantaneous-fair annuity, three peers") {
        Pool p = three_peer();
        auto scheme = build_scheme(make_instantaneous_fair_da(), p, kEcon);
        auto rep = instantaneous_fairness(*scheme, grid, opts(40000, 31));
        CHECK(rep.pass);
        CHECK(rep.sup_residual < rep.tolerance);
        REQUIRE(rep.payout_rate.size() == 3);
        CHECK(rep.payout_rate[0].size() == grid.size() - 1);
        // Payout rate in the first bin is about lambda_i s_i.
        CHECK_THAT(rep.payout_rate[0][0], WithinRel(0.03 * 300.0, 0.15));
    }
    SECTION("homogeneous transfer plan") {
        Pool p = constant_pool({0.04, 0.04, 0.04, 0.04}, {250, 250, 250, 250});
        Economics e{0.03, 1.0};
        auto scheme = build_scheme(ftp_plan(p), p, e);
        auto rep = instantaneous_fairness(*scheme, grid, opts(40000, 32));
        CHECK(rep.pass);
    }
    SECTION("periodic-fair annuity pays faster than it forfeits") {
        Pool p = three_peer();
        auto scheme = build_scheme(make_periodic_fair_da(), p, kEcon);
        auto rep = instantaneous_fairness(*scheme, grid, opts(20000, 33));
        CHECK_FALSE(rep.pass);
        CHECK(rep.sup_residual > rep.tolerance);
        CHECK(rep.sup_time == 0.0);
    }
    CHECK_THROWS_AS(instantaneous_fairness(*build_scheme(make_periodic_fair_da(), three_peer(), kEcon), {1.0}, opts(10, 1)),
                    ValidationError);
}

TEST_CASE("fairness implications hold on sample schemes", "[fairness][property]") {
    // Instantaneous implies periodic implies lifetime for schemes passing the stronger notion.
    Pool p = three_peer();
    auto scheme = build_scheme(make_instantaneous_fair_da(), p, kEcon);
    auto inst = instantaneous_fairness(*scheme, uniform_grid(15.0, 1.0), opts(20000, 41));
    REQUIRE(inst.pass);
    CHECK(periodic_fairness(*scheme, scheme->initial_state(), opts(20000, 42)).pass);
    CHECK(lifetime_fairness(*scheme, opts(20000, 43)).pass);
}

TEST_CASE("standard errors shrink like one over root n", "[fairness][property]") {
    Pool p = three_peer();
    auto scheme = build_scheme(da_dominating_dc(p, kEcon), p, kEcon);
    auto a = lifetime_fairness(*scheme, opts(4000, 51));
    auto b = lifetime_fairness(*scheme, opts(16000, 52));
    for (std::size_t i = 0; i < 3; ++i)
        CHECK_THAT(a.participants[i].se / b.participants[i].se, WithinRel(2.0, 0.2));
}

TEST_CASE("estimates do not depend on the thread count", "[fairness][property]") {
    Pool p = three_peer();
    auto scheme = build_scheme(da_dominating_dc(p, kEcon), p, kEcon);
    auto o1 = opts(3000, 61);
    o1.threads = 1;
    auto o4 = opts(3000, 61);
    o4.threads = 4;
    auto a = lifetime_fairness(*scheme, o1);
    auto b = lifetime_fairness(*scheme, o4);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.participants[i].estimate == b.participants[i].estimate);
        CHECK(a.participants[i].se == b.participants[i].se);
    }
}

TEST_CASE("classification tables", "[fairness][published]") {
    auto t = classification_tables();
    REQUIRE(t.axioms.size() == 4);
    REQUIRE(t.fairness.size() == 6);
    CHECK(t.axioms[0].second == Marks{false, true, false});
    CHECK(t.axioms[1].second == Marks{false, true, false});
    CHECK(t.axioms[3].second == Marks{true, true, true});
    CHECK(t.fairness[0].second == FairMarks{true, false, false, false});
    CHECK(t.fairness[1].second == FairMarks{true, true, false, false});
    CHECK(t.fairness[4].second == FairMarks{true, true, true, false});
    CHECK(t.fairness[5].second == FairMarks{true, true, true, true});

    auto ft = classify(Family::ftp, Dissolution::dissolve_at_two_survivors);
    CHECK(ft.plan == "Fair transfer plans (Dissolve with two survivors)");
    CHECK(*ft.fairness == FairMarks{true, true, true, true});
    CHECK(*classify(Family::ftp, Dissolution::last_survivor_lump_sum).fairness == FairMarks{true, true, false, false});
    CHECK(*classify(Family::periodic_fair_da).fairness == FairMarks{true, true, true, false});
    CHECK(*classify(Family::instantaneous_fair_da).fairness == FairMarks{true, true, true, true});
    CHECK(classify(Family::equitable_tontine).plan == "Equitable tontine");
    CHECK(classify(Family::equitable_tontine, Dissolution::last_survivor_lump_sum).plan ==
          "Modified equitable tontines");
    auto gsa = classify(Family::gsa);
    CHECK(*gsa.axioms == Marks{false, true, false});
    CHECK_FALSE(gsa.fairness.has_value());
    CHECK_THROWS_AS(classify(Family::dc_drawdown), UnsupportedError);

    std::string md = to_markdown(t);
    CHECK(md.find("| Decentralized Annuities | ✓ | ✓ | ✓ |") != std::string::npos);
    CHECK(md.find("| Equitable tontine | ✓ | × | × | × |") != std::string::npos);
    CHECK(to_markdown(gsa).find("n/a") != std::string::npos);
}
