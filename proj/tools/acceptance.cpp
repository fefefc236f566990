// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "da/engine.hpp"
#include "da/errors.hpp"
#include "da/fairness.hpp"
#include "da/montecarlo.hpp"
#include "da/transfers.hpp"

using namespace da;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
    bool pass = true;
    std::string detail;
};

Pool constant_pool(const std::vector<double>& lambdas, const std::vector<double>& deposits) {
    Pool p;
    for (double l : lambdas) p.mortality.members.push_back(HazardModel::constant(l));
    p.deposits = deposits;
    return p;
}

Pool cohort_pool(const std::vector<double>& lambdas, const std::vector<double>& deposits, int size) {
    Pool p;
    for (std::size_t c = 0; c < lambdas.size(); ++c)
        for (int k = 0; k < size; ++k) {
            p.mortality.members.push_back(HazardModel::constant(lambdas[c]));
            p.deposits.push_back(deposits[c]);
        }
    return p;
}

Pool three_peer() { return constant_pool({0.03, 0.04, 0.05}, {300, 270, 255}); }
const Economics kEcon{0.06, 2.0 / 3.0};

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Outcome overdraft() {
    Outcome o;
    Pool pool = constant_pool({0.01, 0.01, 0.01}, {1000, 1000, 1000});
    Economics econ{0.0, 1.0};
    auto spec = equitable_tontine(pool, econ, {1.2, 1.0, 1.0}, constant_schedule(0.04, 25.0), false);
    spec.balance_policy = BalancePolicy::permit;
    auto scheme = build_scheme(spec, pool, econ);
    auto plan = scheme->plan_period(scheme->initial_state());
    double rates[3] = {45.0, 37.5, 37.5};
    for (std::size_t i = 0; i < 3; ++i) o.pass = o.pass && near(plan.payouts[i].rate(0.0), rates[i], 1e-9);
    PathOptions opt;
    opt.keep_log = true;
    auto r = run_path(*scheme, {{0, 24.0}, {1, 40.0}, {2, 50.0}}, opt);
    const LogEvent* at24 = nullptr;
    const LogEvent* after = nullptr;
    for (const auto& e : r.state.log) {
        if (!at24 && e.type == EventType::accrue && e.t == 24.0) at24 = &e;
        if (e.type == EventType::transfer && e.t == 24.0) after = &e;
    }
    if (!at24 || !after) return {false, "missing ledger events at t=24"};
    double bal[3] = {-80.0, 100.0, 100.0};
    for (std::size_t i = 0; i < 3; ++i) o.pass = o.pass && near(at24->balances_after[i], bal[i], 1e-9);
    o.pass = o.pass && near(after->balances_after[1], 60.0, 1e-9) && near(after->balances_after[2], 60.0, 1e-9);
    o.pass = o.pass && !audit_axiom2(r.state).pass;
    o.detail = "rates 45/37.5/37.5, balances -80/100/100 at t=24, survivors 60 after clearing";
    return o;
}

Outcome last_survivor() {
    Outcome o;
    Pool pool = constant_pool({0.01, 0.01, 0.01, 0.01, 0.01}, {360, 360, 360, 360, 360});
    Economics econ{0.0, 1.0};
    auto spec = equitable_tontine(pool, econ, {0.8, 1, 1, 1, 1}, constant_schedule(1.0 / 30.0, 30.0), true);
    spec.balance_policy = BalancePolicy::permit;
    auto scheme = build_scheme(spec, pool, econ);
    auto st = scheme->initial_state();
    o.pass = near(st.accounts[0].cash_value, 300.0, 1e-9);
    for (std::size_t i = 1; i < 5; ++i) o.pass = o.pass && near(st.accounts[i].cash_value, 375.0, 1e-9);
    auto at29 = run_path(*scheme, {{0, 1e3}, {1, 1e3}, {2, 1e3}, {3, 1e3}, {4, 1e3}}, [] {
        PathOptions p;
        p.stop_at = 29.0;
        return p;
    }());
    o.pass = o.pass && near(at29.state.accounts[0].cumulative_discounted_payment, 290.0, 1e-9);
    for (std::size_t i = 1; i < 5; ++i)
        o.pass = o.pass && near(at29.state.accounts[i].cumulative_discounted_payment, 362.5, 1e-9);
    auto r = run_path(*scheme, {{1, 29.0}, {2, 29.0}, {3, 29.0}, {4, 29.0}, {0, 40.0}});
    auto a1 = audit_axiom1(r.state);
    o.pass = o.pass && !a1.pass && a1.witness == 0 && near(a1.lifetime_payments, 350.0, 1e-9) && a1.deposit == 360.0;
    o.detail = "s(0) 300/375x4, payments at 29 = 290/362.5x4, witness 0 total " + fmt("%.9g", a1.lifetime_payments) +
               " < 360";
    return o;
}

Outcome coefficients() {
    Outcome o;
    Pool p = three_peer();
    auto scheme = build_scheme(da_dominating_dc(p, kEcon), p, kEcon);
    auto plan = scheme->plan_period(scheme->initial_state());
    if (!plan.alpha) return {false, "no transfer matrix at inception"};
    const TransferMatrix& a = *plan.alpha;
    // recipient, deceased, value
    struct Entry {
        std::size_t i, j;
        double v;
    };
    Entry expect[6] = {{0, 1, 7.0 / 18}, {2, 1, 11.0 / 18}, {1, 0, 7.0 / 16},
                       {2, 0, 9.0 / 16}, {0, 2, 9.0 / 20},  {1, 2, 11.0 / 20}};
    double worst = 0.0;
    for (const auto& e : expect) worst = std::max(worst, std::abs(a(e.i, e.j) - e.v));
    auto qp = solve_alpha_general(plan.weights);
    double qp_gap = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) qp_gap = std::max(qp_gap, std::abs(qp(i, j) - a(i, j)));
    double wgap = std::abs(plan.weights[0] - 40) + std::abs(plan.weights[1] - 45) + std::abs(plan.weights[2] - 50);
    o.pass = worst <= 1e-12 && qp_gap <= 1e-8 && wgap <= 1e-9;
    o.detail = "weights 40/45/50, max |alpha - exact| " + fmt("%.2e", worst) + ", QP gap " + fmt("%.2e", qp_gap);
    return o;
}

Outcome feasibility_check() {
    auto good = feasibility(std::vector<double>{9.0, 10.8, 12.75});
    auto bad = feasibility(std::vector<double>{1.0, 1.0, 10.0});
    Outcome o;
    o.pass = good.pass && !bad.pass && bad.violating_index == 2;
    o.detail = "(9, 10.8, 12.75) " + std::string(good.pass ? "passes" : "fails") + "; (1, 1, 10) violates index " +
               std::to_string(bad.violating_index) + ": " + bad.violated;
    return o;
}

Outcome optimal_payout() {
    GroupMortality g;
    for (double l : {0.02, 0.03, 0.045, 0.05, 0.07}) g.members.push_back(HazardModel::constant(l));
    double worst = 0.0;
    int cases = 0;
    for (double gamma : {0.5, 2.0 / 3.0, 1.0, 2.0, 10.0})
        for (unsigned mask = 0; mask < 32; ++mask) {
            std::vector<bool> alive(5);
            int k = 0;
            for (int i = 0; i < 5; ++i) k += (alive[static_cast<std::size_t>(i)] = (mask >> i) & 1u);
            if (k < 2) continue;
            Economics e{0.04, gamma};
            double closed = optimal_da_payout(g, e, 0.0, alive).nu;
            double quad = optimal_da_nu_numeric(g, e, 0.0, alive);
            worst = std::max(worst, std::abs(closed - quad) / quad);
            ++cases;
        }
    double q = optimal_da_period_fraction(0.12, kEcon);
    Pool p = three_peer();
    auto op = optimal_da_payout(p.mortality, kEcon, 0.0, {true, true, true}, p.deposits);
    Outcome o;
    o.pass = worst <= 1e-8 && std::abs(q - 1.0 / 3.0) <= 1e-15 && near(op.nu, 0.24, 1e-14);
    o.detail = std::to_string(cases) + " survivor sets, max relative gap " + fmt("%.2e", worst) + ", q = " +
               fmt("%.17g", q);
    return o;
}

Outcome dominance() {
    SimulationConfig cfg;
    cfg.pool = three_peer();
    cfg.econ = kEcon;
    cfg.scheme = da_dominating_dc(cfg.pool, kEcon);
    cfg.n_paths = 100000;
    cfg.seed = 6;
    cfg.horizon = 30.0;
    cfg.tracked = {0, 1, 2};
    cfg.summaries = false;
    cfg.utility = false;
    cfg.dc_dominance = true;
    auto stats = run(cfg);
    Outcome o;
    o.pass = stats.dominance_violations == 0 && stats.dominance_points > 0 && stats.aborted == 0;
    o.detail = std::to_string(stats.dominance_violations) + " violations in " + std::to_string(stats.dominance_points) +
               " (path, time) points over " + std::to_string(stats.n_paths) + " paths";
    return o;
}

Outcome fairness_residuals() {
    Pool p = three_peer();
    FairnessOptions fo;
    fo.n_paths = 1000000;
    fo.seed = 7;
    auto optimal = build_scheme(make_optimal_da("individual", Dissolution::dissolve_at_first_death), p, kEcon);
    auto life = lifetime_fairness(*optimal, fo);
    double worst_rel = 0.0;
    for (const auto& r : life.participants) worst_rel = std::max(worst_rel, std::abs(r.residual) / r.target);

    auto inst_scheme = build_scheme(make_instantaneous_fair_da(), p, kEcon);
    std::vector<double> grid;
    for (int k = 0; k <= 80; ++k) grid.push_back(0.5 * k);
    fo.seed = 8;
    auto inst = instantaneous_fairness(*inst_scheme, grid, fo);
    double limit = 2e-3 * (300.0 + 270.0 + 255.0) / 3.0;
    Outcome o;
    o.pass = worst_rel < 1e-2 && inst.sup_residual < limit;
    o.detail = "lifetime max |res|/s " + fmt("%.2e", worst_rel) + "; instantaneous sup " +
               fmt("%.4f", inst.sup_residual) + " < " + fmt("%.4f", limit) + " (0.5-year bins on [0, 40])";
    return o;
}

Outcome tables() {
    auto t = classification_tables();
    using M = Marks;
    using F = FairMarks;
    std::vector<std::pair<std::string, M>> ax{{"Equitable Tontines", {false, true, false}},
                                              {"GSA Plans", {false, true, false}},
                                              {"Fair Transfer Tontines", {true, true, true}},
                                              {"Decentralized Annuities", {true, true, true}}};
    std::vector<std::pair<std::string, F>> fair{
        {"Equitable tontine", {true, false, false, false}},
        {"Modified equitable tontines", {true, true, false, false}},
        {"Fair transfer plan (Continue to the last survivor)", {true, true, false, false}},
        {"Fair transfer plans (Dissolve with two survivors)", {true, true, true, true}},
        {"Fair decentralized annuities (Continue to the last survivor)", {true, true, true, false}},
        {"Fair decentralized annuities (Dissolve with two survivors)", {true, true, true, true}}};
    Outcome o;
    o.pass = t.axioms == ax && t.fairness == fair;
    auto row = [&](Family f, std::optional<Dissolution> d, const std::string& name) {
        auto r = classify(f, d);
        o.pass = o.pass && r.plan == name;
    };
    row(Family::equitable_tontine, std::nullopt, "Equitable tontine");
    row(Family::ftp, Dissolution::dissolve_at_two_survivors, "Fair transfer plans (Dissolve with two survivors)");
    row(Family::periodic_fair_da, Dissolution::last_survivor_lump_sum,
        "Fair decentralized annuities (Continue to the last survivor)");
    row(Family::instantaneous_fair_da, std::nullopt, "Fair decentralized annuities (Dissolve with two survivors)");
    o.detail = std::to_string(t.axioms.size()) + " axiom rows and " + std::to_string(t.fairness.size()) +
               " fairness rows match";
    return o;
}

Outcome narrowing() {
    SimulationConfig small;
    small.pool = three_peer();
    small.econ = kEcon;
    small.scheme = da_dominating_dc(small.pool, kEcon);
    small.n_paths = 100000;
    small.seed = 9;
    small.horizon = 30.0;
    small.grid_step = 1.0;
    small.utility = false;
    small.tracked = {0};
    SimulationConfig large = small;
    large.pool = cohort_pool({0.02, 0.03, 0.04, 0.05, 0.06}, {400, 300, 270, 255, 200}, 200);
    large.scheme = da_dominating_dc(large.pool, kEcon);
    large.tracked = {200};
    large.seed = 10;
    auto s = run(small);
    auto l = run(large);
    double ws = band_width(s, 0, "payments", 30.0);
    double wl = band_width(l, 200, "payments", 30.0);

    SimulationConfig dc = small;
    dc.scheme = make_dc_drawdown();
    dc.utility = true;
    dc.n_paths = 20000;
    auto d = run(dc);
    double dc_width = 0.0;
    for (double t : d.grid) dc_width = std::max(dc_width, band_width(d, 0, "utility_alive", t));
    Outcome o;
    o.pass = wl < ws && dc_width == 0.0 && l.cohort_engine;
    o.detail = "width at t=30: 1000 members " + fmt("%.4f", wl) + " < 3 peers " + fmt("%.4f", ws) +
               "; DC alive utility band width " + fmt("%g", dc_width);
    return o;
}

Outcome implication() {
    struct Case {
        std::string name;
        Pool pool;
        std::function<SchemeSpec()> spec;
    };
    std::vector<Case> cases;
    Pool p3 = three_peer();
    Pool het = constant_pool({0.02, 0.03, 0.05, 0.06}, {300, 200, 250, 150});
    Pool homo = constant_pool({0.04, 0.04, 0.04, 0.04, 0.04}, {250, 250, 250, 250, 250});
    Pool pw = Pool{};
    pw.mortality.members = {HazardModel::piecewise({0.0, 10.0}, {0.02, 0.06}), HazardModel::constant(0.04),
                            HazardModel::piecewise({0.0, 5.0, 15.0}, {0.01, 0.05, 0.1})};
    pw.deposits = {200, 300, 250};
    Pool two = constant_pool({0.03, 0.05}, {300, 200});
    for (const auto& [label, pool] : std::vector<std::pair<std::string, Pool>>{
             {"3peer", p3}, {"het4", het}, {"homo5", homo}, {"piecewise3", pw}}) {
        auto add = [&](std::string n, std::function<SchemeSpec()> s) {
            cases.push_back({label + "/" + n, pool, std::move(s)});
        };
        for (auto d : {Dissolution::dissolve_at_first_death, Dissolution::last_survivor_lump_sum,
                       Dissolution::dissolve_at_two_survivors})
            add(std::string("optimal-da pooled ") + to_string(d), [=] { return make_optimal_da("pooled", d); });
        add("optimal-da individual", [=] { return make_optimal_da("individual", Dissolution::dissolve_at_first_death); });
        for (auto d : {Dissolution::last_survivor_lump_sum, Dissolution::dissolve_at_two_survivors,
                       Dissolution::last_survivor_continues})
            add(std::string("periodic-fair-da ") + to_string(d), [=] {
                return make_periodic_fair_da(pool.mortality.all_constant() ? std::vector<double>{}
                                                                           : std::vector<double>{0.07},
                                             d);
            });
        add("instantaneous-fair-da", [=] { return make_instantaneous_fair_da(); });
        add("dc-drawdown", [=] { return make_dc_drawdown(); });
        add("gsa", [=] { return gsa_plan(pool, kEcon); });
        add("ftp two", [=] { return ftp_plan(pool, Dissolution::dissolve_at_two_survivors); });
        add("ftp last", [=] { return ftp_plan(pool, Dissolution::last_survivor_lump_sum); });
        std::vector<double> pi(pool.size(), 1.0);
        double rate = kEcon.delta / -std::expm1(-30.0 * kEcon.delta);
        add("tontine", [=] { return equitable_tontine(pool, kEcon, pi, constant_schedule(rate, 30.0), false); });
        pi[0] = 1.3;
        add("tontine rebalanced", [=] { return equitable_tontine(pool, kEcon, pi, constant_schedule(rate, 30.0), true); });
        if (pool.mortality.all_constant()) add("da-dominating-dc", [=] { return da_dominating_dc(pool, kEcon); });
    }
    cases.push_back({"2peer/two-peer-da", two,
                     [=] { return two_peer_periodic(two, 0.5 * two_peer_rho_max(two.mortality, two.deposits)); }});

    const std::size_t n_paths = 10000;
    std::size_t built = 0, skipped = 0, runs = 0, a3_pass = 0, a3_fail = 0, counter = 0, aborted = 0;
    std::string skipped_names;
    for (auto& c : cases) {
        std::unique_ptr<Scheme> scheme;
        try {
            SchemeSpec spec = c.spec();
            spec.balance_policy = BalancePolicy::permit;
            scheme = build_scheme(spec, c.pool, kEcon);
        } catch (const ValidationError&) {
            ++skipped;
            skipped_names += " " + c.name;
            continue;
        }
        ++built;
        std::vector<signed char> verdict(n_paths, 0);
        parallel_paths(n_paths, engine_threads(), [&](std::size_t path) {
            try {
                auto r = run_path(*scheme, sample_death_times(c.pool.mortality, 1010 + built, path));
                bool a3 = audit_axiom3(r.state).pass;
                bool a12 = audit_axiom1(r.state).pass && audit_axiom2(r.state).pass;
                verdict[path] = a3 ? (a12 ? 1 : 3) : 2;
            } catch (const InfeasibleError&) {
                verdict[path] = 0;
            }
        });
        for (auto v : verdict) {
            aborted += v == 0;
            a3_pass += v == 1 || v == 3;
            a3_fail += v == 2;
            counter += v == 3;
            runs += v != 0;
        }
    }
    Outcome o;
    o.pass = counter == 0 && a3_pass > 0 && a3_fail > 0 && built > 0;
    o.detail = std::to_string(built) + " schemes x " + std::to_string(n_paths) + " paths: " + std::to_string(a3_pass) +
               " runs pass Axiom 3, " + std::to_string(a3_fail) + " fail it, " + std::to_string(counter) +
               " counterexamples";
    if (aborted) o.detail += ", " + std::to_string(aborted) + " aborted";
    if (skipped) o.detail += "; not buildable:" + skipped_names;
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
        double time_limit;
    };
    std::vector<Criterion> criteria{
        {"pitfall regression, overdraft by the short-lived", overdraft, 1.0},
        {"pitfall regression, loss for the last survivor", last_survivor, kInf},
        {"transfer coefficients, three peers", coefficients, kInf},
        {"fairness feasibility", feasibility_check, kInf},
        {"optimal payout closed form vs quadrature", optimal_payout, kInf},
        {"DA dominates the DC drawdown pointwise", dominance, 120.0},
        {"fairness residuals", fairness_residuals, kInf},
        {"classification tables", tables, kInf},
        {"band narrowing with pool size", narrowing, kInf},
        {"Axiom 3 implies Axioms 1 and 2", implication, kInf},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (argc > 1 && std::to_string(k + 1) != argv[1]) continue;
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > criteria[k].time_limit) {
            o.pass = false;
            o.detail += "; over the time limit";
        }
        failed += !o.pass;
        std::printf("criterion %zu %s  %s: %s [%.2f s]\n", k + 1, o.pass ? "PASS" : "FAIL", criteria[k].name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
