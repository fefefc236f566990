#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "da/errors.hpp"
#include "da/montecarlo.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace da;

namespace {

Pool cohort_pool(const std::vector<double>& lambdas, const std::vector<double>& deposits, int size) {
    Pool p;
    for (std::size_t c = 0; c < lambdas.size(); ++c)
        for (int k = 0; k < size; ++k) {
            p.mortality.members.push_back(HazardModel::constant(lambdas[c]));
            p.deposits.push_back(deposits[c]);
        }
    return p;
}

Pool three_peer() {
    Pool p;
    for (double l : {0.03, 0.04, 0.05}) p.mortality.members.push_back(HazardModel::constant(l));
    p.deposits = {300, 270, 255};
    return p;
}

const Economics kEcon{0.06, 2.0 / 3.0};

}  // namespace

TEST_CASE("cohort engine reproduces the full engine", "[montecarlo]") {
    Pool p = cohort_pool({0.02, 0.04, 0.06}, {400, 270, 200}, 6);
    std::vector<SchemeSpec> specs{da_dominating_dc(p, kEcon), make_periodic_fair_da(),
                                  make_optimal_da("pooled", Dissolution::last_survivor_lump_sum),
                                  make_optimal_da("individual", Dissolution::dissolve_at_first_death)};
    for (const auto& spec : specs) {
        auto scheme = build_scheme(spec, p, kEcon);
        auto ce = CohortEngine::build(*scheme);
        REQUIRE(ce);
        CHECK(ce->cohorts() == 3);
        for (double stop : {std::numeric_limits<double>::infinity(), 25.0}) {
            PathOptions o;
            o.trace_all = true;
            o.stop_at = stop;
            for (std::uint64_t path = 0; path < 40; ++path) {
                auto deaths = sample_death_times(p.mortality, 4, path);
                auto a = run_path(*scheme, deaths, o);
                auto b = ce->run(deaths, o);
                REQUIRE(a.state.size() == b.state.size());
                CHECK(a.periods == b.periods);
                CHECK(a.state.ended == b.state.ended);
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const auto& x = a.state.accounts[i];
                    const auto& y = b.state.accounts[i];
                    CHECK(x.alive == y.alive);
                    CHECK(x.death_time == y.death_time);
                    CHECK_THAT(y.cash_value, WithinAbs(x.cash_value, 1e-9));
                    CHECK_THAT(y.cumulative_discounted_payment, WithinAbs(x.cumulative_discounted_payment, 1e-9));
                    CHECK_THAT(y.min_transfer, WithinAbs(x.min_transfer, 1e-9));
                    for (double t : {1.0, 10.0, 24.0})
                        CHECK_THAT(b.traces[i].cumulative_discounted(t, kEcon.delta),
                                   WithinAbs(a.traces[i].cumulative_discounted(t, kEcon.delta), 1e-9));
                    CHECK(a.traces[i].active_until == b.traces[i].active_until);
                }
                if (stop == std::numeric_limits<double>::infinity()) {
                    CHECK(audit_axiom1(a.state).pass == audit_axiom1(b.state).pass);
                    CHECK(conservation_error(b.state) < 1e-9);
                }
            }
        }
    }
    Pool het = three_peer();
    auto gsa_like = build_scheme(make_dc_drawdown(), het, kEcon);
    CHECK_FALSE(CohortEngine::build(*gsa_like));
}

TEST_CASE("simulation is deterministic and thread independent", "[montecarlo]") {
    SimulationConfig cfg;
    cfg.pool = three_peer();
    cfg.scheme = da_dominating_dc(cfg.pool, kEcon);
    cfg.econ = kEcon;
    cfg.n_paths = 3000;
    cfg.seed = 17;
    cfg.tracked = {0, 2};
    cfg.threads = 1;
    auto a = run(cfg);
    cfg.threads = 4;
    auto b = run(cfg);
    REQUIRE(a.series.size() == b.series.size());
    for (std::size_t s = 0; s < a.series.size(); ++s)
        for (std::size_t g = 0; g < a.grid.size(); ++g) {
            CHECK(a.series[s].bands[g].q10 == b.series[s].bands[g].q10);
            CHECK(a.series[s].bands[g].mean == b.series[s].bands[g].mean);
            CHECK(a.series[s].bands[g].n_effective == b.series[s].bands[g].n_effective);
        }
    cfg.n_paths = 1;
    auto c = run(cfg), d = run(cfg);
    CHECK(c.series[0].bands.back().q50 == d.series[0].bands.back().q50);
}

TEST_CASE("quantile bands are ordered and cumulative series grow", "[montecarlo][property]") {
    SimulationConfig cfg;
    cfg.pool = three_peer();
    cfg.scheme = da_dominating_dc(cfg.pool, kEcon);
    cfg.econ = kEcon;
    cfg.n_paths = 4000;
    cfg.tracked = {0, 1, 2};
    auto st = run(cfg);
    CHECK(st.grid.size() == 121);
    for (const auto& s : st.series) {
        for (const auto& b : s.bands) {
            CHECK(b.q10 <= b.q50);
            CHECK(b.q50 <= b.q90);
        }
        if (s.metric == "payments")
            for (std::size_t g = 1; g < s.bands.size(); ++g) CHECK(s.bands[g].q50 >= s.bands[g - 1].q50);
    }
    CHECK(st.find(0, "payments").bands[0].q90 == 0.0);
    CHECK(st.find(0, "payments").bands.back().n_effective == 4000);
    CHECK(st.find(0, "payments_alive").bands.back().n_effective < 4000);
}

TEST_CASE("DC drawdown bands conditional on survival have zero width", "[montecarlo][published]") {
    SimulationConfig cfg;
    cfg.pool = three_peer();
    cfg.scheme = make_dc_drawdown();
    cfg.econ = kEcon;
    cfg.n_paths = 2000;
    auto st = run(cfg);
    for (double t : {5.0, 17.5, 30.0}) {
        CHECK(band_width(st, 0, "utility_alive", t) == 0.0);
        CHECK(band_width(st, 0, "payments_alive", t) == 0.0);
    }
    CHECK(band_width(st, 0, "payments", 30.0) > 0.0);
    CHECK_THROWS_AS(band_width(st, 0, "payments", 30.1), ValidationError);
}

TEST_CASE("all-survive payments tend to the deposit", "[montecarlo][published]") {
    Pool p = three_peer();
    auto da = build_scheme(da_dominating_dc(p, kEcon), p, kEcon);
    PathOptions o;
    o.trace_all = true;
    auto r = run_path(*da, {{0, 1e4}, {1, 1e4}, {2, 1e4}}, o);
    auto dc = dc_trace(p.mortality.members[0], 300.0, kEcon, 1e4);
    CHECK_THAT(r.traces[0].cumulative_discounted(400.0, kEcon.delta), WithinAbs(300.0, 1e-6));
    CHECK_THAT(dc.cumulative_discounted(400.0, kEcon.delta), WithinAbs(300.0, 1e-6));
    // Peer 3 dying first pays more than peer 2 dying first, which pays more than no death.
    auto first3 = run_path(*da, {{2, 5.0}, {0, 1e4}, {1, 1e4}}, o);
    auto first2 = run_path(*da, {{1, 5.0}, {0, 1e4}, {2, 1e4}}, o);
    double t = 20.0;
    CHECK(first3.traces[0].cumulative_discounted(t, 0.06) > first2.traces[0].cumulative_discounted(t, 0.06));
    CHECK(first2.traces[0].cumulative_discounted(t, 0.06) > r.traces[0].cumulative_discounted(t, 0.06));
    CHECK(r.traces[0].cumulative_discounted(t, 0.06) >= dc.cumulative_discounted(t, 0.06));
}

TEST_CASE("DA dominating DC report", "[montecarlo]") {
    SimulationConfig cfg;
    cfg.pool = three_peer();
    cfg.scheme = da_dominating_dc(cfg.pool, kEcon);
    cfg.econ = kEcon;
    cfg.n_paths = 3000;
    cfg.tracked = {0, 1, 2};
    auto rep = compare_da_dc(cfg);
    CHECK(rep.points > 0);
    CHECK(rep.violations == 0);
    CHECK(rep.utility_ordering);

    cfg.scheme = make_optimal_da("pooled", Dissolution::dissolve_at_first_death);
    auto opt = compare_da_dc(cfg);
    CHECK(opt.violations > 0);
}

TEST_CASE("band narrowing with pool size", "[montecarlo]") {
    SimulationConfig small;
    small.pool = three_peer();
    small.scheme = da_dominating_dc(small.pool, kEcon);
    small.econ = kEcon;
    small.n_paths = 4000;
    small.grid = {0.0, 10.0, 20.0, 30.0};
    small.utility = false;
    SimulationConfig large = small;
    large.pool = cohort_pool({0.02, 0.03, 0.04, 0.05, 0.06}, {400, 300, 270, 255, 200}, 40);
    large.scheme = da_dominating_dc(large.pool, kEcon);
    large.tracked = {40};
    auto a = run(small);
    auto b = run(large);
    CHECK(b.cohort_engine);
    auto rep = band_narrowing(a, 0, b, 40);
    CHECK(rep.narrower);
}

TEST_CASE("configuration validation", "[montecarlo]") {
    SimulationConfig cfg;
    CHECK_THROWS_AS(run(cfg), ValidationError);
    cfg.pool = three_peer();
    cfg.scheme = make_dc_drawdown();
    cfg.n_paths = 0;
    CHECK_THROWS_AS(run(cfg), ValidationError);
    cfg.n_paths = 10;
    cfg.tracked = {7};
    CHECK_THROWS_AS(run(cfg), ValidationError);
    cfg.tracked = {0};
    cfg.grid = {0.0, 40.0};
    CHECK_THROWS_AS(run(cfg), ValidationError);
}

TEST_CASE("worker count from the environment", "[montecarlo]") {
    CHECK(engine_threads(3) == 3);
    setenv("DA_ENGINE_THREADS", "2", 1);
    CHECK(engine_threads() == 2);
    unsetenv("DA_ENGINE_THREADS");
    CHECK(engine_threads() >= 1);
}
