#include "da/config.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "da/errors.hpp"

namespace da {

using nlohmann::json;

namespace {

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ValidationError(where + " must be a table");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : obj.items())
        if (!ok.count(k)) throw ValidationError("unknown key '" + k + "' in " + where);
}

const json& required(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ValidationError("missing key '" + std::string(key) + "' in " + where);
    return obj.at(key);
}

double number(const json& v, const std::string& what) {
    if (!v.is_number()) throw ValidationError(what + " must be a number");
    return v.get<double>();
}

std::vector<double> numbers(const json& v, const std::string& what) {
    if (!v.is_array()) throw ValidationError(what + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) out.push_back(number(x, what));
    return out;
}

long long integer(const json& v, const std::string& what) {
    if (!v.is_number_integer()) throw ValidationError(what + " must be an integer");
    return v.get<long long>();
}

std::size_t count(const json& v, const std::string& what) {
    long long n = integer(v, what);
    if (n < 0) throw ValidationError(what + " must be >= 0");
    return static_cast<std::size_t>(n);
}

std::string text(const json& v, const std::string& what) {
    if (!v.is_string()) throw ValidationError(what + " must be a string");
    return v.get<std::string>();
}

bool flag(const json& v, const std::string& what) {
    if (!v.is_boolean()) throw ValidationError(what + " must be true or false");
    return v.get<bool>();
}

HazardModel parse_hazard(const json& h, const std::string& where, const std::string& base_dir) {
    only_keys(h, where, {"constant", "breaks", "rates", "qx", "life_table", "entry_age"});
    if (h.contains("constant")) {
        if (h.size() != 1) throw ValidationError(where + ": 'constant' excludes other keys");
        return HazardModel::constant(number(h["constant"], where + ".constant"));
    }
    if (h.contains("rates")) {
        if (!h.contains("breaks") || h.size() != 2) throw ValidationError(where + ": piecewise needs exactly breaks and rates");
        return HazardModel::piecewise(numbers(h["breaks"], where + ".breaks"), numbers(h["rates"], where + ".rates"));
    }
    if (h.contains("qx")) {
        if (h.size() != 1) throw ValidationError(where + ": 'qx' excludes other keys");
        return HazardModel::tabular(numbers(h["qx"], where + ".qx"));
    }
    if (h.contains("life_table")) {
        if (!h.contains("entry_age") || h.size() != 2) throw ValidationError(where + ": life_table needs entry_age");
        std::filesystem::path p = text(h["life_table"], where + ".life_table");
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        return HazardModel::from_life_table(p.string(), number(h["entry_age"], where + ".entry_age"));
    }
    throw ValidationError(where + ": hazard needs one of constant, breaks/rates, qx, life_table");
}

Pool parse_group(const json& g, const std::string& base_dir) {
    only_keys(g, "group", {"cohorts"});
    const json& cohorts = required(g, "cohorts", "group");
    if (!cohorts.is_array() || cohorts.empty()) throw ValidationError("group.cohorts must be a non-empty array");
    Pool pool;
    for (std::size_t c = 0; c < cohorts.size(); ++c) {
        std::string where = "group.cohorts[" + std::to_string(c) + "]";
        const json& co = cohorts[c];
        only_keys(co, where, {"count", "deposit", "hazard"});
        std::size_t n = co.contains("count") ? count(co["count"], where + ".count") : 1;
        if (n == 0) throw ValidationError(where + ".count must be >= 1");
        double s = number(required(co, "deposit", where), where + ".deposit");
        if (!(s >= 0.0) || !std::isfinite(s)) throw DomainError(where + ".deposit must be finite and >= 0");
        HazardModel h = parse_hazard(required(co, "hazard", where), where + ".hazard", base_dir);
        for (std::size_t k = 0; k < n; ++k) {
            pool.mortality.members.push_back(h);
            pool.deposits.push_back(s);
        }
    }
    return pool;
}

std::vector<ExpPiece> parse_schedule(const json& s) {
    only_keys(s, "scheme.params.schedule", {"rate", "horizon", "times", "values"});
    if (s.contains("rate"))
        return constant_schedule(number(s["rate"], "schedule.rate"),
                                 number(required(s, "horizon", "scheme.params.schedule"), "schedule.horizon"));
    return tabulated_schedule(numbers(required(s, "times", "scheme.params.schedule"), "schedule.times"),
                              numbers(required(s, "values", "scheme.params.schedule"), "schedule.values"));
}

SchemeSpec parse_scheme(const json& s, const Pool& pool, const Economics& econ) {
    only_keys(s, "scheme", {"family", "dissolution", "balance_policy", "on_infeasible", "params"});
    Family family = parse_family(text(required(s, "family", "scheme"), "scheme.family"));
    std::optional<Dissolution> dis;
    if (s.contains("dissolution")) dis = parse_dissolution(text(s["dissolution"], "scheme.dissolution"));
    json p = s.value("params", json::object());
    only_keys(p, "scheme.params", {"theta", "payout", "rho", "two_peer_rho_fraction", "pi", "schedule", "rebalance"});

    auto reject_others = [&](std::initializer_list<const char*> allowed) {
        only_keys(p, std::string("scheme.params for ") + to_string(family), allowed);
    };
    SchemeSpec spec;
    switch (family) {
        case Family::optimal_da:
            reject_others({"payout"});
            spec = make_optimal_da(p.contains("payout") ? text(p["payout"], "params.payout") : "pooled",
                                   dis.value_or(default_dissolution(family)));
            break;
        case Family::periodic_fair_da:
            reject_others({"theta", "two_peer_rho_fraction"});
            spec = make_periodic_fair_da(p.contains("theta") ? numbers(p["theta"], "params.theta") : std::vector<double>{},
                                         dis.value_or(default_dissolution(family)));
            if (p.contains("two_peer_rho_fraction"))
                spec.two_peer_rho_fraction = number(p["two_peer_rho_fraction"], "params.two_peer_rho_fraction");
            break;
        case Family::instantaneous_fair_da:
            reject_others({});
            spec = make_instantaneous_fair_da();
            break;
        case Family::two_peer_da:
            reject_others({"rho"});
            spec = two_peer_periodic(pool, number(required(p, "rho", "scheme.params"), "params.rho"));
            break;
        case Family::da_dominating_dc:
            reject_others({});
            spec = da_dominating_dc(pool, econ);
            break;
        case Family::dc_drawdown:
            reject_others({});
            spec = make_dc_drawdown();
            break;
        case Family::equitable_tontine:
            reject_others({"pi", "schedule", "rebalance"});
            spec = equitable_tontine(pool, econ, p.contains("pi") ? numbers(p["pi"], "params.pi") : std::vector<double>{},
                                     parse_schedule(required(p, "schedule", "scheme.params")),
                                     p.contains("rebalance") ? flag(p["rebalance"], "params.rebalance") : true,
                                     dis.value_or(default_dissolution(family)));
            break;
        case Family::gsa:
            reject_others({});
            spec = gsa_plan(pool, econ);
            break;
        case Family::ftp:
            reject_others({});
            spec = dis ? ftp_plan(pool, *dis) : ftp_plan(pool);
            break;
    }
    if (dis) spec.dissolution = *dis;
    if (s.contains("balance_policy")) {
        std::string b = text(s["balance_policy"], "scheme.balance_policy");
        if (b == "reject") spec.balance_policy = BalancePolicy::reject;
        else if (b == "permit") spec.balance_policy = BalancePolicy::permit;
        else throw ValidationError("scheme.balance_policy must be reject or permit");
    }
    if (s.contains("on_infeasible")) {
        std::string b = text(s["on_infeasible"], "scheme.on_infeasible");
        if (b == "dissolve") spec.on_infeasible = InfeasiblePolicy::dissolve;
        else if (b == "abort") spec.on_infeasible = InfeasiblePolicy::abort;
        else throw ValidationError("scheme.on_infeasible must be dissolve or abort");
    }
    return spec;
}

EngineChoice parse_engine(const std::string& s) {
    if (s == "automatic") return EngineChoice::automatic;
    if (s == "full") return EngineChoice::full;
    if (s == "cohort") return EngineChoice::cohort;
    throw ValidationError("simulation.engine must be automatic, full or cohort");
}

void parse_simulation(const json& s, SimulationConfig& cfg) {
    only_keys(s, "simulation", {"n_paths", "seed", "horizon", "grid_step", "grid", "tracked", "utility",
                                "dc_dominance", "audit", "engine", "threads"});
    if (s.contains("n_paths")) cfg.n_paths = count(s["n_paths"], "simulation.n_paths");
    if (s.contains("seed")) cfg.seed = static_cast<std::uint64_t>(integer(s["seed"], "simulation.seed"));
    if (s.contains("horizon")) cfg.horizon = number(s["horizon"], "simulation.horizon");
    if (s.contains("grid_step")) cfg.grid_step = number(s["grid_step"], "simulation.grid_step");
    if (s.contains("grid")) cfg.grid = numbers(s["grid"], "simulation.grid");
    if (s.contains("tracked")) {
        cfg.tracked.clear();
        for (const auto& v : s["tracked"]) cfg.tracked.push_back(static_cast<int>(integer(v, "simulation.tracked")));
    }
    if (s.contains("utility")) cfg.utility = flag(s["utility"], "simulation.utility");
    if (s.contains("dc_dominance")) cfg.dc_dominance = flag(s["dc_dominance"], "simulation.dc_dominance");
    if (s.contains("audit")) cfg.audit = flag(s["audit"], "simulation.audit");
    if (s.contains("engine")) cfg.engine = parse_engine(text(s["engine"], "simulation.engine"));
    if (s.contains("threads")) cfg.threads = static_cast<unsigned>(count(s["threads"], "simulation.threads"));
}

Scenario parse_scenario(const json& s, std::size_t index, std::size_t pool_size) {
    std::string where = "scenarios[" + std::to_string(index) + "]";
    only_keys(s, where, {"name", "deaths", "stop_at"});
    Scenario sc;
    sc.name = s.contains("name") ? text(s["name"], where + ".name") : "scenario" + std::to_string(index);
    if (s.contains("stop_at")) sc.stop_at = number(s["stop_at"], where + ".stop_at");
    const json& d = required(s, "deaths", where);
    if (!d.is_array()) throw ValidationError(where + ".deaths must be an array");
    std::vector<bool> seen(pool_size, false);
    for (const auto& e : d) {
        only_keys(e, where + ".deaths[]", {"participant", "time"});
        long long p = integer(required(e, "participant", where), where + ".participant");
        if (p < 0 || static_cast<std::size_t>(p) >= pool_size) throw ValidationError(where + ": participant out of range");
        if (seen[static_cast<std::size_t>(p)]) throw ValidationError(where + ": participant listed twice");
        seen[static_cast<std::size_t>(p)] = true;
        double t = number(required(e, "time", where), where + ".time");
        if (!(t >= 0.0)) throw DomainError(where + ": death time must be >= 0");
        sc.deaths.push_back({static_cast<int>(p), t});
    }
    sort_deaths(sc.deaths);
    return sc;
}

json node_to_json(const toml::node& n) {
    if (auto t = n.as_table()) {
        json o = json::object();
        for (const auto& [k, v] : *t) o[std::string(k.str())] = node_to_json(v);
        return o;
    }
    if (auto a = n.as_array()) {
        json o = json::array();
        for (const auto& v : *a) o.push_back(node_to_json(v));
        return o;
    }
    if (auto v = n.as_integer()) return v->get();
    if (auto v = n.as_floating_point()) return v->get();
    if (auto v = n.as_boolean()) return v->get();
    if (auto v = n.as_string()) return v->get();
    throw ValidationError("unsupported TOML value (dates and times are not accepted)");
}

}  // namespace

json toml_to_json(std::string_view text) {
    try {
        return node_to_json(toml::parse(text));
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
        throw ValidationError(os.str());
    }
}

RunConfig parse_config(const json& doc, const std::string& base_dir) {
    only_keys(doc, "config", {"group", "scheme", "economics", "simulation", "scenarios", "output"});
    RunConfig rc;
    SimulationConfig& cfg = rc.sim;
    cfg.pool = parse_group(required(doc, "group", "config"), base_dir);

    const json& e = required(doc, "economics", "config");
    only_keys(e, "economics", {"delta", "gamma"});
    cfg.econ.delta = number(required(e, "delta", "economics"), "economics.delta");
    if (e.contains("gamma")) {
        const json& g = e["gamma"];
        cfg.econ.gamma = g.is_string() && g.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                      : number(g, "economics.gamma");
    }
    if (!(cfg.econ.delta >= 0.0)) throw DomainError("economics.delta must be >= 0");
    if (!(cfg.econ.gamma >= 0.0)) throw DomainError("economics.gamma must be >= 0");

    rc.scheme_block = required(doc, "scheme", "config");
    cfg.scheme = parse_scheme(rc.scheme_block, cfg.pool, cfg.econ);
    if (doc.contains("simulation")) parse_simulation(doc["simulation"], cfg);

    if (doc.contains("scenarios")) {
        const json& s = doc["scenarios"];
        if (!s.is_array()) throw ValidationError("scenarios must be an array of tables");
        for (std::size_t i = 0; i < s.size(); ++i) rc.scenarios.push_back(parse_scenario(s[i], i, cfg.pool.size()));
    }
    if (doc.contains("output")) {
        const json& o = doc["output"];
        only_keys(o, "output", {"dir", "formats", "event_log_samples"});
        if (o.contains("dir")) rc.output.dir = text(o["dir"], "output.dir");
        if (o.contains("formats")) {
            rc.output.formats.clear();
            for (const auto& f : o["formats"]) {
                std::string s = text(f, "output.formats");
                if (s != "csv" && s != "json") throw ValidationError("output.formats entries must be csv or json");
                rc.output.formats.push_back(s);
            }
        }
        if (o.contains("event_log_samples"))
            rc.output.event_log_samples = count(o["event_log_samples"], "output.event_log_samples");
    }
    cfg.validate();
    return rc;
}

RunConfig parse_config_toml(std::string_view text, const std::string& base_dir) {
    return parse_config(toml_to_json(text), base_dir);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string base = std::filesystem::path(path).parent_path().string();
    if (base.empty()) base = ".";
    if (std::filesystem::path(path).extension() == ".toml") return parse_config_toml(ss.str(), base);
    json doc;
    try {
        doc = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("JSON parse error: ") + e.what());
    }
    return parse_config(doc, base);
}

}  // namespace da
