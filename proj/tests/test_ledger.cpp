#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "da/engine.hpp"
#include "da/errors.hpp"
#include "da/ledger.hpp"
#include "da/schemes.hpp"

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

}  // namespace

TEST_CASE("accrual with zero payout leaves balances unchanged at zero interest", "[ledger]") {
    PoolState s({100.0, 50.0}, 0.0);
    s.accrue(37.0);
    CHECK(s.accounts[0].cash_value == 100.0);
    CHECK(s.accounts[1].cash_value == 50.0);
    CHECK(audit_axiom2(s).pass);
}

TEST_CASE("exponential accrual matches a Riemann sum", "[ledger]") {
    const double theta = 0.105, delta = 0.06, s0 = 300.0;
    PoolState s({s0}, delta);
    s.set_payouts({exponential_payout(s0, theta, delta, 0.0)});
    s.accrue(1.0);
    // Oracle: midpoint Riemann sum of e^{-delta u} r(u) over [0, 1] with 1e5 steps.
    const int n = 100000;
    double sum = 0.0;
    for (int k = 0; k < n; ++k) {
        double u = (k + 0.5) / n;
        sum += std::exp(-delta * u) * theta * s0 * std::exp(-(theta - delta) * u) / n;
    }
    CHECK_THAT(s.accounts[0].cumulative_discounted_payment, WithinAbs(sum, 1e-8));
    CHECK_THAT(s.accounts[0].cash_value * std::exp(-delta), WithinRel(s0 * std::exp(-theta), 1e-13));
    CHECK(conservation_error(s) < 1e-12);
}

TEST_CASE("generic payouts accrue by quadrature", "[ledger]") {
    PoolState s({1000.0}, 0.03);
    PayoutCurve c;
    c.generic = [](double t) { return 10.0 + 2.0 * t; };
    c.generic_start = 0.0;
    c.generic_end = 1e9;
    s.set_payouts({c});
    s.accrue(5.0);
    // int_0^5 e^{-0.03u}(10 + 2u) du in closed form.
    const double d = 0.03;
    double i0 = (1.0 - std::exp(-5 * d)) / d;
    double i1 = (1.0 - std::exp(-5 * d) * (1.0 + 5 * d)) / (d * d);
    CHECK_THAT(s.accounts[0].cumulative_discounted_payment, WithinAbs(10 * i0 + 2 * i1, 1e-9));
}

TEST_CASE("initial transfers must net to zero", "[ledger]") {
    PoolState s({360, 360, 360, 360, 360}, 0.0, BalancePolicy::permit);
    s.apply_initial_transfers({-60, 15, 15, 15, 15});
    CHECK(s.accounts[0].cash_value == 300.0);
    CHECK(s.accounts[4].cash_value == 375.0);
    PoolState z({10, 20}, 0.0);
    z.apply_initial_transfers({0, 0});
    CHECK(z.accounts[1].cash_value == 20.0);
    CHECK_THROWS_AS(z.apply_initial_transfers({1, 0}), ValidationError);
}

TEST_CASE("death applies transfers and checks clearing", "[ledger]") {
    PoolState s({100, 200, 300}, 0.0);
    DeathEvent ok = make_death_event(s, 2, {{0, 0.25}, {1, 0.75}});
    PoolState after = apply_death(s, ok);
    CHECK(after.accounts[0].cash_value == 175.0);
    CHECK(after.accounts[1].cash_value == 425.0);
    CHECK_FALSE(after.accounts[2].alive);
    CHECK(after.death_count == 1);
    CHECK_THAT(after.accounts[0].cash_value + after.accounts[1].cash_value, WithinRel(600.0, 1e-15));

    DeathEvent bad = ok;
    bad.transfers[0].second += 1.0;
    CHECK_THROWS_AS(apply_death(s, bad), ValidationError);

    PoolState zero({100, 0}, 0.0);
    auto z = apply_death(zero, make_death_event(zero, 1, {{0, 1.0}}));
    CHECK(z.accounts[0].cash_value == 100.0);
}

TEST_CASE("reject policy errors on a negative balance", "[ledger]") {
    PoolState s({100.0}, 0.0, BalancePolicy::reject);
    PayoutCurve c;
    c.pieces.push_back({0.0, 1e9, 10.0, 0.0});
    s.set_payouts({c});
    CHECK_NOTHROW(s.accrue(10.0));
    CHECK_THROWS_AS(s.accrue(11.0), AxiomViolation);
}

TEST_CASE("classic tontine pitfall: overdraft by the short-lived", "[ledger][published]") {
    Pool pool = constant_pool({0.01, 0.01, 0.01}, {1000, 1000, 1000});
    Economics econ{0.0, 1.0};
    auto spec = equitable_tontine(pool, econ, {1.2, 1.0, 1.0}, constant_schedule(0.04, 25.0), false);
    auto scheme = build_scheme(spec, pool, econ);
    PathOptions opt;
    opt.keep_log = true;
    auto r = run_path(*scheme, {{0, 24.0}, {1, 40.0}, {2, 50.0}}, opt);
    const auto& log = r.state.log;
    // First accrual ends at t = 24 with all three alive.
    const LogEvent* at24 = nullptr;
    for (const auto& e : log)
        if (e.type == EventType::accrue && e.t == 24.0) {
            at24 = &e;
            break;
        }
    REQUIRE(at24 != nullptr);
    CHECK_THAT(at24->balances_after[0], WithinAbs(-80.0, 1e-9));
    CHECK_THAT(at24->balances_after[1], WithinAbs(100.0, 1e-9));
    CHECK_THAT(at24->balances_after[2], WithinAbs(100.0, 1e-9));
    REQUIRE(!r.state.deaths.empty());
    CHECK_THAT(r.state.deaths[0].pre_death_balance, WithinAbs(-80.0, 1e-9));
    for (const auto& [i, e] : r.state.deaths[0].transfers) CHECK_THAT(e, WithinAbs(-40.0, 1e-9));
    const LogEvent* post = nullptr;
    for (const auto& e : log)
        if (e.type == EventType::transfer && e.t == 24.0) post = &e;
    REQUIRE(post != nullptr);
    CHECK_THAT(post->balances_after[1], WithinAbs(60.0, 1e-9));
    CHECK_THAT(post->balances_after[2], WithinAbs(60.0, 1e-9));
    CHECK_FALSE(audit_axiom2(r.state).pass);
    CHECK(audit_axiom2(r.state).witness == 0);

    std::ostringstream os;
    write_event_log(r.state, os);
    CHECK(os.str().find("\"type\":\"death\"") != std::string::npos);
}

TEST_CASE("rebalanced tontine fails Axiom 1 for the last survivor", "[ledger][published]") {
    Pool pool = constant_pool({0.01, 0.01, 0.01, 0.01, 0.01}, {360, 360, 360, 360, 360});
    Economics econ{0.0, 1.0};
    auto spec = equitable_tontine(pool, econ, {0.8, 1, 1, 1, 1}, constant_schedule(1.0 / 30.0, 30.0), true);
    spec.balance_policy = BalancePolicy::permit;
    auto scheme = build_scheme(spec, pool, econ);
    auto st = scheme->initial_state();
    CHECK_THAT(st.accounts[0].cash_value, WithinAbs(300.0, 1e-9));
    for (int i = 1; i < 5; ++i) CHECK_THAT(st.accounts[static_cast<std::size_t>(i)].cash_value, WithinAbs(375.0, 1e-9));

    auto r = run_path(*scheme, {{1, 29.0}, {2, 29.0}, {3, 29.0}, {4, 29.0}, {0, 40.0}});
    for (int i = 1; i < 5; ++i)
        CHECK_THAT(r.state.accounts[static_cast<std::size_t>(i)].cumulative_discounted_payment, WithinAbs(362.5, 1e-9));
    auto a1 = audit_axiom1(r.state);
    CHECK(a1.witness == 0);
    CHECK_THAT(a1.lifetime_payments, WithinAbs(350.0, 1e-9));
    CHECK(a1.deposit == 360.0);
    CHECK_FALSE(a1.pass);
    CHECK_THAT(a1.transfer_sum, WithinAbs(-10.0, 1e-9));
    CHECK(audit_axiom2(r.state).pass);
    CHECK_FALSE(audit_axiom3(r.state).pass);
    CHECK(conservation_error(r.state) < 1e-12);
}

TEST_CASE("single participant pool passes Axiom 1", "[ledger]") {
    Pool pool = constant_pool({0.05}, {500});
    Economics econ{0.04, 2.0};
    auto scheme = build_scheme(make_periodic_fair_da(), pool, econ);
    auto r = run_path(*scheme, sample_death_times(pool.mortality, 1));
    auto a1 = audit_axiom1(r.state);
    CHECK(a1.pass);
    CHECK_THAT(a1.lifetime_payments, WithinRel(500.0, 1e-12));
}

TEST_CASE("degenerate all-zero transfers pass Axiom 3", "[ledger]") {
    PoolState s({100, 0, 0}, 0.0);
    s.apply_death(make_death_event(s, 1, {{0, 0.5}, {2, 0.5}}));
    CHECK(audit_axiom3(s).pass);
    CHECK(is_proper(s));
}

TEST_CASE("replay determinism of the event log", "[ledger][property]") {
    Pool pool = constant_pool({0.03, 0.04, 0.05}, {300, 270, 255});
    Economics econ{0.06, 2.0 / 3.0};
    auto scheme = build_scheme(da_dominating_dc(pool, econ), pool, econ);
    PathOptions o;
    o.keep_log = true;
    auto d = sample_death_times(pool.mortality, 77, 3);
    std::ostringstream a, b;
    write_event_log(run_path(*scheme, d, o).state, a);
    write_event_log(run_path(*scheme, d, o).state, b);
    CHECK(a.str() == b.str());
    CHECK(!a.str().empty());
}

TEST_CASE("a very long life under the DC drawdown keeps a nonnegative balance", "[ledger]") {
    Pool pool = constant_pool({0.02, 0.03}, {300, 200});
    Economics econ{0.06, 2.0 / 3.0};
    auto spec = make_dc_drawdown();
    spec.balance_policy = BalancePolicy::reject;
    auto scheme = build_scheme(spec, pool, econ);
    auto r = run_path(*scheme, {{1, 5.9}, {0, 456.9}});
    CHECK_THAT(r.state.accounts[0].cumulative_discounted_payment, WithinRel(300.0, 1e-12));
    CHECK(audit_axiom2(r.state).pass);
    CHECK(audit_axiom1(r.state).pass);
}
