#include "da/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "da/config.hpp"
#include "da/errors.hpp"
#include "da/fairness.hpp"
#include "da/transfers.hpp"

namespace da::cli {

using nlohmann::json;

namespace {


std::string fmt12(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

// Rounded to 12 significant digits; non-finite values become null or "inf".
json num(double x) {
    if (std::isnan(x)) return nullptr;
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return std::stod(fmt12(x));
}

json nums(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

json matrix_json(const TransferMatrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.m; ++i) {
        json r = json::array();
        for (std::size_t j = 0; j < m.m; ++j) r.push_back(num(m(i, j)));
        rows.push_back(r);
    }
    json o{{"method", m.method}, {"alpha", rows}};
    if (!m.survivors.empty()) o["survivors"] = m.survivors;
    return o;
}

json axiom_json(const AxiomReport& r) {
    json o{{"axiom", r.axiom}, {"pass", r.pass}, {"worst", num(r.worst)}};
    if (r.witness >= 0) {
        o["witness"] = r.witness;
        o["witness_time"] = num(r.witness_time);
    }
    if (r.axiom == 1) {
        o["lifetime_payments"] = num(r.lifetime_payments);
        o["deposit"] = num(r.deposit);
        o["transfer_sum"] = num(r.transfer_sum);
    }
    if (!r.detail.empty()) o["detail"] = r.detail;
    return o;
}

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::string out;
    std::string format;
    std::string audit;
};

void add_common(CLI::App* sc, Common& c) {
    sc->add_option("config", c.config, "Run config (.toml or .json)")->required();
    sc->add_option("--seed", c.seed, "Override simulation.seed");
    sc->add_option("--paths", c.paths, "Override simulation.n_paths");
    sc->add_option("--out", c.out, "Output directory (stdout when omitted)");
    sc->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    sc->add_option("--audit", c.audit, "Negative balance policy: strict rejects, permit records")
        ->check(CLI::IsMember({"strict", "permit"}));
}

RunConfig load(const Common& c) {
    RunConfig rc = load_config(c.config);
    if (c.seed) rc.sim.seed = *c.seed;
    if (c.paths) rc.sim.n_paths = *c.paths;
    if (!c.audit.empty())
        rc.sim.scheme.balance_policy = c.audit == "strict" ? BalancePolicy::reject : BalancePolicy::permit;
    if (!c.out.empty()) rc.output.dir = c.out;
    if (!c.format.empty()) rc.output.formats = {c.format};
    rc.sim.validate();
    return rc;
}

json config_echo(const RunConfig& rc) {
    const SimulationConfig& s = rc.sim;
    return json{{"participants", s.pool.size()},
                {"scheme", rc.scheme_block},
                {"economics", {{"delta", num(s.econ.delta)}, {"gamma", num(s.econ.gamma)}}},
                {"simulation",
                 {{"n_paths", s.n_paths},
                  {"seed", s.seed},
                  {"horizon", num(s.horizon)},
                  {"grid_step", num(s.grid_step)},
                  {"tracked", s.tracked}}}};
}

json inception_json(const Scheme& scheme) {
    PoolState st = scheme.initial_state();
    PeriodPlan plan = scheme.plan_period(st);
    json o;
    std::vector<double> rates;
    for (const auto& c : plan.payouts) rates.push_back(c.rate(0.0));
    o["cash_values"] = nums(st.balances());
    o["payout_rates"] = nums(rates);
    if (plan.dissolve) o["dissolve"] = plan.reason;
    if (!plan.weights.empty()) o["weights"] = nums(plan.weights);
    if (plan.alpha) o["transfer_coefficients"] = matrix_json(*plan.alpha);
    return o;
}

json scenario_json(const Scheme& scheme, const Scenario& sc) {
    PathOptions opt;
    opt.keep_log = true;
    opt.stop_at = sc.stop_at;
    PathResult r = run_path(scheme, sc.deaths, opt);
    const PoolState& st = r.state;
    json deaths = json::array();
    for (const auto& ev : st.deaths) {
        json tr = json::array();
        for (const auto& [i, e] : ev.transfers) tr.push_back({{"participant", i}, {"amount", num(e)}});
        json d{{"t", num(ev.time)},
               {"participant", ev.deceased},
               {"pre_death_balance", num(ev.pre_death_balance)},
               {"transfers", tr}};
        // Balances right after the clearing at this death.
        for (const auto& l : st.log)
            if (l.t == ev.time && (l.type == EventType::death || l.type == EventType::transfer))
                d["balances_after"] = nums(l.balances_after);
        deaths.push_back(d);
    }
    std::vector<double> cum;
    for (const auto& a : st.accounts) cum.push_back(a.cumulative_discounted_payment);
    json o{{"name", sc.name},
           {"time", num(st.time)},
           {"deaths", deaths},
           {"balances", nums(st.balances())},
           {"cumulative_discounted_payments", nums(cum)},
           {"axiom1", axiom_json(audit_axiom1(st))},
           {"axiom2", axiom_json(audit_axiom2(st))},
           {"axiom3", axiom_json(audit_axiom3(st))},
           {"conservation_error", num(conservation_error(st))},
           {"flags", r.flags}};
    return o;
}

void write_csv(std::ostream& os, const PathStats& stats, int participant) {
    os << "t,metric,q10,q50,q90,mean,n_effective\n";
    for (const auto& s : stats.series) {
        if (s.participant != participant) continue;
        for (std::size_t k = 0; k < stats.grid.size(); ++k) {
            const Band& b = s.bands[k];
            os << fmt12(stats.grid[k]) << ',' << s.metric << ',' << fmt12(b.q10) << ',' << fmt12(b.q50) << ','
               << fmt12(b.q90) << ',' << fmt12(b.mean) << ',' << b.n_effective << '\n';
        }
    }
}

json series_json(const PathStats& stats) {
    json a = json::array();
    for (const auto& s : stats.series) {
        std::vector<double> q10, q50, q90, mean;
        std::vector<std::size_t> ne;
        for (const auto& b : s.bands) {
            q10.push_back(b.q10);
            q50.push_back(b.q50);
            q90.push_back(b.q90);
            mean.push_back(b.mean);
            ne.push_back(b.n_effective);
        }
        a.push_back({{"participant", s.participant},
                     {"metric", s.metric},
                     {"q10", nums(q10)},
                     {"q50", nums(q50)},
                     {"q90", nums(q90)},
                     {"mean", nums(mean)},
                     {"n_effective", ne}});
    }
    return a;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw ValidationError("cannot write '" + p.string() + "'");
    return f;
}

bool wants(const RunConfig& rc, const char* f) {
    return std::find(rc.output.formats.begin(), rc.output.formats.end(), f) != rc.output.formats.end();
}

void emit_json(const RunConfig& rc, const json& doc, const std::string& file, std::ostream& out) {
    if (rc.output.dir.empty()) {
        out << doc.dump(2) << '\n';
        return;
    }
    std::filesystem::create_directories(rc.output.dir);
    auto f = open_out(std::filesystem::path(rc.output.dir) / file);
    f << doc.dump(2) << '\n';
}

int cmd_simulate(const Common& c, std::ostream& out) {
    RunConfig rc = load(c);
    auto scheme = build_scheme(rc.sim.scheme, rc.sim.pool, rc.sim.econ);
    json summary;
    summary["config"] = config_echo(rc);
    summary["inception"] = inception_json(*scheme);
    PathStats stats = run(rc.sim);
    summary["engine"] = {{"cohort", stats.cohort_engine}, {"threads", stats.threads}};
    summary["counters"] = {{"n_paths", stats.n_paths},
                           {"flagged", stats.flagged},
                           {"improper", stats.improper},
                           {"aborted", stats.aborted},
                           {"dominance_points", stats.dominance_points},
                           {"dominance_violations", stats.dominance_violations},
                           {"sample_flags", stats.sample_flags}};
    json audit;
    if (stats.audits)
        audit["paths"] = {{"axiom1_fail", stats.audits->axiom1_fail},
                          {"axiom2_fail", stats.audits->axiom2_fail},
                          {"axiom3_fail", stats.audits->axiom3_fail},
                          {"worst_conservation", num(stats.audits->worst_conservation)}};
    json scen = json::array();
    for (const auto& sc : rc.scenarios) scen.push_back(scenario_json(*scheme, sc));
    audit["scenarios"] = scen;
    summary["audit"] = audit;

    if (rc.output.dir.empty()) {
        if (wants(rc, "json") || !wants(rc, "csv")) {
            summary["series"] = series_json(stats);
            out << summary.dump(2) << '\n';
        } else {
            for (int p : rc.sim.tracked) {
                out << "# participant " << p << '\n';
                write_csv(out, stats, p);
            }
        }
        return ok;
    }
    namespace fs = std::filesystem;
    fs::path dir(rc.output.dir);
    fs::create_directories(dir);
    if (wants(rc, "csv"))
        for (int p : rc.sim.tracked) {
            auto f = open_out(dir / ("stats_participant_" + std::to_string(p) + ".csv"));
            write_csv(f, stats, p);
        }
    if (wants(rc, "json")) {
        summary["series"] = series_json(stats);
        auto f = open_out(dir / "summary.json");
        f << summary.dump(2) << '\n';
    }
    for (const auto& sc : rc.scenarios) {
        PathOptions opt;
        opt.keep_log = true;
        opt.stop_at = sc.stop_at;
        auto f = open_out(dir / ("events_" + sc.name + ".jsonl"));
        write_event_log(run_path(*scheme, sc.deaths, opt).state, f);
    }
    for (std::size_t k = 0; k < rc.output.event_log_samples && k < rc.sim.n_paths; ++k) {
        PathOptions opt;
        opt.keep_log = true;
        opt.stop_at = rc.sim.horizon;
        auto f = open_out(dir / ("events_path_" + std::to_string(k) + ".jsonl"));
        write_event_log(run_path(*scheme, sample_death_times(rc.sim.pool.mortality, rc.sim.seed, k), opt).state, f);
    }
    return ok;
}

int cmd_audit(const Common& c, const std::string& axioms, std::ostream& out) {
    RunConfig rc = load(c);
    std::set<int> which;
    for (char ch : axioms) {
        if (ch == ',' || ch == ' ') continue;
        if (ch < '1' || ch > '3') throw ValidationError("--axioms takes a list drawn from 1,2,3");
        which.insert(ch - '0');
    }
    auto scheme = build_scheme(rc.sim.scheme, rc.sim.pool, rc.sim.econ);
    SimulationConfig sim = rc.sim;
    sim.audit = true;
    sim.summaries = false;
    sim.utility = false;
    PathStats stats = run(sim);
    json paths{{"n_paths", stats.n_paths},
               {"aborted", stats.aborted},
               {"worst_conservation", num(stats.audits->worst_conservation)}};
    std::size_t fails[3] = {stats.audits->axiom1_fail, stats.audits->axiom2_fail, stats.audits->axiom3_fail};
    for (int a : which) paths["axiom" + std::to_string(a) + "_fail"] = fails[a - 1];
    json scen = json::array();
    for (const auto& sc : rc.scenarios) {
        json s = scenario_json(*scheme, sc);
        for (int a = 1; a <= 3; ++a)
            if (!which.count(a)) s.erase("axiom" + std::to_string(a));
        scen.push_back(s);
    }
    json doc{{"config", config_echo(rc)}, {"paths", paths}, {"scenarios", scen}};
    emit_json(rc, doc, "audit.json", out);
    return ok;
}

json fairness_json(const FairnessReport& r) {
    json parts = json::array();
    for (const auto& p : r.participants)
        parts.push_back({{"participant", p.participant},
                         {"target", num(p.target)},
                         {"estimate", num(p.estimate)},
                         {"se", num(p.se)},
                         {"residual", num(p.residual)},
                         {"pass", p.pass}});
    json o{{"notion", r.notion},
           {"pass", r.pass},
           {"tolerance", num(r.tolerance)},
           {"n_paths", r.n_paths},
           {"flagged", r.flagged},
           {"participants", parts}};
    if (r.notion == "equitability") {
        o["epsilon"] = num(r.epsilon);
        o["max_deviation"] = num(r.max_deviation);
    }
    if (r.notion == "instantaneous") {
        json pr = json::array(), fr = json::array(), se = json::array();
        for (std::size_t i = 0; i < r.payout_rate.size(); ++i) {
            pr.push_back(nums(r.payout_rate[i]));
            fr.push_back(nums(r.forfeit_rate[i]));
            se.push_back(nums(r.residual_se[i]));
        }
        o["grid"] = nums(r.grid);
        o["payout_rate"] = pr;
        o["forfeit_rate"] = fr;
        o["residual_se"] = se;
        o["sup_residual"] = num(r.sup_residual);
        o["sup_participant"] = r.sup_participant;
        o["sup_time"] = num(r.sup_time);
    }
    return o;
}

int cmd_fairness(const Common& c, const std::string& notion, std::optional<double> tol, std::ostream& out) {
    RunConfig rc = load(c);
    auto scheme = build_scheme(rc.sim.scheme, rc.sim.pool, rc.sim.econ);
    FairnessOptions fo;
    fo.n_paths = rc.sim.n_paths;
    fo.seed = rc.sim.seed;
    fo.threads = rc.sim.threads;
    fo.engine = rc.sim.engine;
    if (tol) fo.tolerance = *tol;
    FairnessReport rep;
    if (notion == "lifetime") rep = lifetime_fairness(*scheme, fo);
    else if (notion == "equitability") rep = equitability_fit(*scheme, fo);
    else if (notion == "periodic") rep = periodic_fairness(*scheme, scheme->initial_state(), fo);
    else rep = instantaneous_fairness(*scheme, rc.sim.evaluation_grid(), fo);
    json doc = fairness_json(rep);
    doc["config"] = config_echo(rc);
    emit_json(rc, doc, "fairness_" + notion + ".json", out);
    return ok;
}

int cmd_classify(const std::string& family, const std::string& dissolution, std::ostream& out) {
    if (family.empty() || family == "all") {
        out << to_markdown(classification_tables());
        return ok;
    }
    std::optional<Dissolution> d;
    if (!dissolution.empty()) d = parse_dissolution(dissolution);
    out << to_markdown(classify(parse_family(family), d));
    return ok;
}

int cmd_solve_transfers(const std::string& arg, std::istream& in, std::ostream& out) {
    std::string text = arg;
    if (arg == "-") {
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    } else if (!arg.empty() && arg[0] == '@') {
        std::ifstream f(arg.substr(1));
        if (!f) throw ValidationError("cannot read '" + arg.substr(1) + "'");
        std::stringstream ss;
        ss << f.rdbuf();
        text = ss.str();
    }
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("JSON parse error: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("weights") || !doc["weights"].is_array() || doc.size() != 1)
        throw ValidationError("expected {\"weights\": [...]}");
    std::vector<double> w;
    for (const auto& x : doc["weights"]) {
        if (!x.is_number()) throw ValidationError("weights must be numbers");
        w.push_back(x.get<double>());
    }
    if (w.size() < 2) throw ValidationError("need at least two weights");
    for (double x : w)
        if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("weights must be finite and >= 0");
    TransferMatrix m = solve_alpha(w);
    auto res = matrix_residuals(m, w);
    json o = matrix_json(m);
    o["weights"] = nums(w);
    o["residuals"] = {{"balance", num(res.balance)}, {"column", num(res.column)}};
    out << o.dump(2) << '\n';
    return ok;
}

}  // namespace

int main(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Decentralized annuity engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "da_engine 1.0");

    Common sim_c, audit_c, fair_c;
    auto* sim = app.add_subcommand("simulate", "Monte Carlo quantile bands, counters and scenario audits");
    add_common(sim, sim_c);

    auto* aud = app.add_subcommand("audit", "Axiom audits on sampled paths and scenarios");
    add_common(aud, audit_c);
    std::string axioms = "1,2,3";
    aud->add_option("--axioms", axioms, "Axioms to report, e.g. 1,3");

    auto* fair = app.add_subcommand("fairness", "Fairness residual report");
    add_common(fair, fair_c);
    std::string notion = "lifetime";
    std::optional<double> tol;
    fair->add_option("--notion", notion, "Fairness notion")
        ->check(CLI::IsMember({"lifetime", "equitability", "periodic", "instantaneous"}));
    fair->add_option("--tolerance", tol, "Residual tolerance in currency units");

    auto* cls = app.add_subcommand("classify", "Rationality and fairness classification tables");
    std::string family, dissolution;
    cls->add_option("family", family, "Plan family; omit for both full tables");
    cls->add_option("--dissolution", dissolution, "Dissolution variant");

    auto* solve = app.add_subcommand("solve-transfers", "Transfer coefficients for period weights");
    std::string weights;
    solve->add_option("weights", weights, "JSON {\"weights\": [...]}, @file, or - for stdin")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? ok : invalid;
    }

    try {
        if (*sim) return cmd_simulate(sim_c, out);
        if (*aud) return cmd_audit(audit_c, axioms, out);
        if (*fair) return cmd_fairness(fair_c, notion, tol, out);
        if (*cls) return cmd_classify(family, dissolution, out);
        if (*solve) return cmd_solve_transfers(weights, in, out);
    } catch (const InfeasibleError& e) {
        err << "infeasible: " << e.what();
        if (e.index() >= 0) err << " (index " << e.index() << ")";
        err << '\n';
        return infeasible;
    } catch (const AxiomViolation& e) {
        err << "axiom violation: " << e.what() << '\n';
        return infeasible;
    } catch (const ValidationError& e) {
        err << "invalid input: " << e.what() << '\n';
        return invalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return invalid;
    }
    return invalid;
}

}  // namespace da::cli
