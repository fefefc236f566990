#include "da/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "da/errors.hpp"
#include "da/ledger.hpp"
#include "da/numerics.hpp"

namespace da {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_traced(const PathOptions& o, std::size_t i) {
    return o.trace_all ||
           std::find(o.traced.begin(), o.traced.end(), static_cast<int>(i)) != o.traced.end();
}

Band summarize(std::vector<double>& xs) {
    Band b;
    b.n_effective = xs.size();
    if (xs.empty()) {
        b.q10 = b.q50 = b.q90 = b.mean = std::numeric_limits<double>::quiet_NaN();
        return b;
    }
    std::sort(xs.begin(), xs.end());
    b.q10 = quantile_sorted(xs, 0.1);
    b.q50 = quantile_sorted(xs, 0.5);
    b.q90 = quantile_sorted(xs, 0.9);
    b.mean = stable_sum(xs) / static_cast<double>(xs.size());
    return b;
}

std::size_t grid_index(const std::vector<double>& grid, double t) {
    for (std::size_t k = 0; k < grid.size(); ++k)
        if (std::abs(grid[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return k;
    throw ValidationError("time " + std::to_string(t) + " is not on the evaluation grid");
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::vector<double> SimulationConfig::evaluation_grid() const {
    if (!grid.empty()) return grid;
    std::vector<double> g;
    std::size_t steps = static_cast<std::size_t>(std::llround(horizon / grid_step));
    for (std::size_t k = 0; k <= steps; ++k) g.push_back(std::min(horizon, static_cast<double>(k) * grid_step));
    if (g.back() < horizon) g.push_back(horizon);
    return g;
}

void SimulationConfig::validate() const {
    if (pool.size() == 0) throw ValidationError("pool is empty");
    if (n_paths < 1) throw ValidationError("n_paths must be >= 1");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be positive and finite");
    if (grid.empty() && !(grid_step > 0.0)) throw ValidationError("grid_step must be > 0");
    for (double t : grid)
        if (!(t >= 0.0 && t <= horizon)) throw ValidationError("grid times must lie in [0, horizon]");
    for (int i : tracked)
        if (i < 0 || static_cast<std::size_t>(i) >= pool.size())
            throw ValidationError("tracked participant " + std::to_string(i) + " out of range");
}

const Series& PathStats::find(int participant, const std::string& metric) const {
    for (const auto& s : series)
        if (s.participant == participant && s.metric == metric) return s;
    throw ValidationError("no series '" + metric + "' for participant " + std::to_string(participant));
}

// ---------------------------------------------------------------------------
// Workers

unsigned engine_threads(unsigned requested) {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (requested > 0) return requested;
    if (const char* env = std::getenv("DA_ENGINE_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<unsigned>(std::min<long>(v, 4096));
    }
    return hw;
}

void parallel_paths(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body,
                    std::size_t chunk) {
    threads = std::max(1u, threads);
    chunk = std::max<std::size_t>(1, chunk);
    std::size_t batches = (n + chunk - 1) / chunk;
    if (threads == 1 || batches <= 1) {
        for (std::size_t p = 0; p < n; ++p) body(p);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            std::size_t b = next.fetch_add(1);
            if (b >= batches) return;
            try {
                for (std::size_t p = b * chunk; p < std::min(n, (b + 1) * chunk); ++p) body(p);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next = batches;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    unsigned count = static_cast<unsigned>(std::min<std::size_t>(threads, batches));
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Cohort engine

std::optional<CohortEngine> CohortEngine::build(const Scheme& scheme) {
    const SchemeSpec& sp = scheme.spec();
    const Pool& pool = scheme.pool();
    const Economics& e = scheme.economics();
    if (sp.family != Family::periodic_fair_da && sp.family != Family::optimal_da &&
        sp.family != Family::da_dominating_dc)
        return std::nullopt;
    if (!sp.base.empty() || !pool.mortality.all_constant() || !(e.gamma > 0.0)) return std::nullopt;
    if (sp.family == Family::periodic_fair_da && !sp.theta.empty() && sp.theta.size() != pool.size())
        return std::nullopt;
    bool pooled = sp.family == Family::optimal_da && sp.payout == "pooled";

    CohortEngine ce(scheme);
    ce.cohort_of_.resize(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        double lam = pool.mortality.members[i].constant_rate();
        double theta = std::numeric_limits<double>::quiet_NaN();
        if (!pooled) {
            theta = (sp.family == Family::periodic_fair_da && !sp.theta.empty()) ? sp.theta[i]
                                                                                 : e.delta + lam / e.gamma;
            if (!std::isfinite(theta)) return std::nullopt;
        }
        int found = -1;
        for (std::size_t c = 0; c < ce.lambda_.size(); ++c) {
            bool same_theta = pooled || ce.theta_[c] == theta;
            if (ce.lambda_[c] == lam && ce.deposit_[c] == pool.deposits[i] && same_theta) {
                found = static_cast<int>(c);
                break;
            }
        }
        if (found < 0) {
            found = static_cast<int>(ce.lambda_.size());
            ce.lambda_.push_back(lam);
            ce.deposit_.push_back(pool.deposits[i]);
            ce.theta_.push_back(theta);
            ce.size_.push_back(0);
        }
        ce.cohort_of_[i] = found;
        ++ce.size_[static_cast<std::size_t>(found)];
    }
    return ce;
}

PathResult CohortEngine::run(const std::vector<Death>& deaths, const PathOptions& o) const {
    if (o.keep_log) return run_path(*scheme_, deaths, o);
    const Pool& pool = scheme_->pool();
    const Economics& econ = scheme_->economics();
    const double delta = econ.delta;
    const std::size_t n = pool.size();
    const std::size_t C = lambda_.size();

    std::vector<int> count(size_);
    std::vector<double> bal(deposit_), cum(C, 0.0), dtr(C, 0.0), mtr(C, 0.0), mbal(deposit_), dmbal(deposit_);
    std::vector<double> theta(C), w(C);
    std::vector<char> alive(n, 1);
    std::vector<double> p_cum(n, 0.0), p_dtr(n, 0.0), p_mtr(n, 0.0), p_mbal(n, 0.0), p_dmbal(n, 0.0), p_death(n, kInf);
    std::vector<char> traced(n, 0);
    for (std::size_t i = 0; i < n; ++i) traced[i] = is_traced(o, i) ? 1 : 0;
    // Cohort-level transfers are not expanded per member in these events.
    std::vector<DeathEvent> events;

    PathResult r;
    r.traces.resize(n);
    double T = 0.0;
    std::size_t m = n;
    std::size_t next = 0;

    auto build_state = [&]() {
        PoolState st(pool.deposits, delta, scheme_->spec().balance_policy, false);
        st.time = T;
        st.death_count = static_cast<int>(n - m);
        st.deaths = events;
        for (std::size_t i = 0; i < n; ++i) {
            Account& a = st.accounts[i];
            auto c = static_cast<std::size_t>(cohort_of_[i]);
            if (alive[i]) {
                a.cash_value = bal[c];
                a.cumulative_discounted_payment = cum[c];
                a.discounted_transfers = dtr[c];
                a.min_transfer = mtr[c];
                a.min_balance = mbal[c];
                a.min_discounted_balance = dmbal[c];
            } else {
                a.alive = false;
                a.cash_value = 0.0;
                a.death_time = p_death[i];
                a.cumulative_discounted_payment = p_cum[i];
                a.discounted_transfers = p_dtr[i];
                a.min_transfer = p_mtr[i];
                a.min_balance = p_mbal[i];
                a.min_discounted_balance = p_dmbal[i];
            }
        }
        return st;
    };

    auto finish = [&](PoolState st) {
        for (; next < deaths.size(); ++next) {
            auto i = static_cast<std::size_t>(deaths[next].participant);
            if (st.accounts[i].death_time == kInf) st.accounts[i].death_time = deaths[next].time;
            if (traced[i] && r.traces[i].death_time == kInf) r.traces[i].death_time = deaths[next].time;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!traced[i]) continue;
            auto& tr = r.traces[i];
            tr.active_until = std::min(tr.death_time, st.end_time);
            std::sort(tr.jumps.begin(), tr.jumps.end(),
                      [](const TraceJump& a, const TraceJump& b) { return a.time < b.time; });
        }
        r.state = std::move(st);
        return std::move(r);
    };

    auto fallback = [&]() {
        std::vector<Death> rest(deaths.begin() + static_cast<std::ptrdiff_t>(next), deaths.end());
        return continue_path(*scheme_, build_state(), rest, o, std::move(r));
    };

    const bool pooled = std::isnan(theta_.front());
    while (true) {
        if (m <= 3) return fallback();
        double lambda_total = 0.0;
        for (std::size_t c = 0; c < C; ++c) lambda_total += count[c] * lambda_[c];
        double W = 0.0, wmax = 0.0;
        bool zero = false;
        for (std::size_t c = 0; c < C; ++c) {
            theta[c] = pooled ? delta + lambda_total / econ.gamma : theta_[c];
            if (count[c] == 0) continue;
            w[c] = std::max(0.0, lambda_[c] * bal[c] / (theta[c] + lambda_total));
            zero = zero || w[c] == 0.0;
            W += count[c] * w[c];
            wmax = std::max(wmax, w[c]);
        }
        if (zero || (W - wmax) - wmax < -1e-12 * W) return fallback();
        // Two smallest weights among survivors, counting multiplicity.
        double a = kInf, b = kInf;
        for (std::size_t c = 0; c < C; ++c) {
            if (count[c] == 0) continue;
            if (w[c] < a) {
                b = count[c] >= 2 ? w[c] : a;
                a = w[c];
            } else if (w[c] < b) {
                b = w[c];
            }
        }
        double md = static_cast<double>(m);
        if ((md - 2.0) * (a + b) < (W - a - b) - 1e-12 * W) return fallback();
        ++r.periods;

        double Tn = next < deaths.size() ? deaths[next].time : kInf;
        double until = std::min(Tn, o.stop_at);
        for (std::size_t i = 0; i < n; ++i) {
            if (!traced[i] || !alive[i]) continue;
            auto c = static_cast<std::size_t>(cohort_of_[i]);
            if (theta[c] > 0.0 && Tn > T)
                r.traces[i].pieces.push_back({T, Tn, theta[c] * bal[c], theta[c] - delta});
        }
        if (std::isfinite(until) && until > T) {
            for (std::size_t c = 0; c < C; ++c) {
                if (count[c] == 0) continue;
                double disc = bal[c] * std::exp(-delta * T);
                double paid = theta[c] > 0.0 ? disc * -std::expm1(-theta[c] * (until - T)) : 0.0;
                bal[c] = remaining(disc, paid) * std::exp(delta * until);
                cum[c] += paid;
                mbal[c] = std::min(mbal[c], bal[c]);
                dmbal[c] = std::min(dmbal[c], remaining(disc, paid));
            }
            T = until;
        }
        if (Tn > o.stop_at || Tn == kInf) return finish(build_state());

        auto p = static_cast<std::size_t>(deaths[next].participant);
        auto d = static_cast<std::size_t>(cohort_of_[p]);
        ++next;
        double pre = bal[d];
        events.push_back({T, static_cast<int>(p), pre, {}, 0.0});
        p_cum[p] = cum[d];
        p_dtr[p] = dtr[d];
        p_mtr[p] = mtr[d];
        p_mbal[p] = mbal[d];
        p_dmbal[p] = dmbal[d];
        p_death[p] = T;
        alive[p] = 0;
        if (traced[p]) r.traces[p].death_time = T;
        --count[d];
        --m;
        double disc = std::exp(-delta * T);
        double denom = (md - 1.0) * (md - 2.0);
        for (std::size_t c = 0; c < C; ++c) {
            if (count[c] == 0) continue;
            double x = ((md - 1.0) * (w[c] + w[d]) - W) / denom;
            double e = x / w[d] * pre;
            bal[c] += e;
            dtr[c] += e * disc;
            mtr[c] = std::min(mtr[c], e);
            mbal[c] = std::min(mbal[c], bal[c]);
            dmbal[c] = std::min(dmbal[c], bal[c] * disc);
        }
        if (scheme_->dissolution() == Dissolution::dissolve_at_first_death) {
            PoolState st = build_state();
            st.snapshot_entitlements();
            for (int i : st.alive_indices()) {
                double amount = st.accounts[static_cast<std::size_t>(i)].cash_value;
                st.pay_lump_sum(i);
                if (traced[static_cast<std::size_t>(i)])
                    r.traces[static_cast<std::size_t>(i)].jumps.push_back({T, amount, JumpKind::lump_sum});
            }
            st.end_scheme();
            return finish(std::move(st));
        }
    }
}

// ---------------------------------------------------------------------------
// Path driver

PathSimulator::PathSimulator(const Scheme& scheme, EngineChoice choice) : scheme_(&scheme) {
    if (choice == EngineChoice::full) return;
    auto ce = CohortEngine::build(scheme);
    if (choice == EngineChoice::cohort) {
        if (!ce) throw ValidationError("scheme is not eligible for the cohort engine");
        cohort_ = std::move(ce);
        return;
    }
    // Aggregation only pays off once cohorts are much smaller than the pool.
    if (ce && scheme.pool().size() >= 16 && ce->cohorts() * 4 <= scheme.pool().size()) cohort_ = std::move(ce);
}

PathResult PathSimulator::simulate(const std::vector<Death>& deaths, const PathOptions& options) const {
    if (cohort_) return cohort_->run(deaths, options);
    return run_path(*scheme_, deaths, options);
}

PathResult PathSimulator::simulate(std::uint64_t seed, std::uint64_t path, const PathOptions& options) const {
    return simulate(sample_death_times(scheme_->pool().mortality, seed, path), options);
}

// ---------------------------------------------------------------------------
// Simulation

PaymentTrace dc_trace(const HazardModel& model, double deposit, const Economics& econ, double death_time) {
    PaymentTrace tr;
    PayoutCurve c = dc_drawdown(model, deposit, econ);
    for (const auto& p : c.pieces) {
        if (p.start >= death_time) break;
        ExpPiece q = p;
        q.end = std::min(p.end, death_time);
        tr.pieces.push_back(q);
    }
    for (const auto& imp : c.impulses)
        if (imp.time < death_time) tr.jumps.push_back({imp.time, imp.amount, JumpKind::impulse});
    tr.death_time = death_time;
    tr.active_until = death_time;
    return tr;
}

namespace {

struct PathRecord {
    bool aborted = false;
    bool flagged = false;
    bool improper = false;
    std::string flag;
    bool a1 = true, a2 = true, a3 = true;
    double conservation = 0.0;
    std::size_t dom_points = 0;
    std::size_t dom_violations = 0;
};

}  // namespace

PathStats run(const SimulationConfig& cfg) {
    cfg.validate();
    auto scheme = build_scheme(cfg.scheme, cfg.pool, cfg.econ);
    PathSimulator sim(*scheme, cfg.engine);
    const auto grid = cfg.evaluation_grid();
    const std::size_t G = grid.size();
    const std::size_t N = cfg.n_paths;
    const std::size_t K = cfg.tracked.size();
    const double delta = cfg.econ.delta;
    const bool utility = cfg.utility && std::isfinite(cfg.econ.gamma);

    PathOptions opt;
    opt.traced = cfg.tracked;
    if (!cfg.audit) opt.stop_at = cfg.horizon;

    std::vector<PayoutCurve> dc;
    if (cfg.dc_dominance)
        for (int i : cfg.tracked) {
            auto ii = static_cast<std::size_t>(i);
            dc.push_back(dc_drawdown(cfg.pool.mortality.members[ii], cfg.pool.deposits[ii], cfg.econ));
        }

    // values[(k * G + g) * N + path]
    std::vector<double> pay, util, death;
    if (cfg.summaries) {
        pay.assign(K * G * N, 0.0);
        if (utility) util.assign(K * G * N, 0.0);
    }
    death.assign(K * N, kInf);
    std::vector<PathRecord> rec(N);
    unsigned threads = engine_threads(cfg.threads);

    parallel_paths(N, threads, [&](std::size_t path) {
        PathRecord& pr = rec[path];
        PathResult res;
        try {
            res = sim.simulate(cfg.seed, path, opt);
        } catch (const InfeasibleError& e) {
            pr.aborted = true;
            pr.flag = e.what();
            return;
        }
        pr.flagged = res.flagged;
        pr.improper = res.improper_transfer;
        if (!res.flags.empty()) pr.flag = res.flags.front();
        if (cfg.audit) {
            pr.a1 = audit_axiom1(res.state).pass;
            pr.a2 = audit_axiom2(res.state).pass;
            pr.a3 = audit_axiom3(res.state).pass;
            pr.conservation = conservation_error(res.state);
        }
        for (std::size_t k = 0; k < K; ++k) {
            const auto& tr = res.traces[static_cast<std::size_t>(cfg.tracked[k])];
            death[k * N + path] = tr.death_time;
            if (cfg.summaries)
                for (std::size_t g = 0; g < G; ++g) {
                    pay[(k * G + g) * N + path] = tr.cumulative_discounted(grid[g], delta);
                    if (utility)
                        util[(k * G + g) * N + path] = tr.cumulative_discounted_utility(grid[g], delta, cfg.econ.gamma);
                }
            if (cfg.dc_dominance)
                for (double t : grid) {
                    if (t >= tr.active_until) break;
                    ++pr.dom_points;
                    double c = dc[k].rate(t);
                    if (tr.rate(t) < c - 1e-12 * std::max(1.0, c)) ++pr.dom_violations;
                }
        }
    });

    PathStats st;
    st.grid = grid;
    st.n_paths = N;
    st.cohort_engine = sim.cohort();
    st.threads = threads;
    AuditCounts ac;
    for (const auto& pr : rec) {
        st.aborted += pr.aborted;
        st.flagged += pr.flagged;
        st.improper += pr.improper;
        if (!pr.flag.empty() && st.sample_flags.size() < 5) st.sample_flags.push_back(pr.flag);
        st.dominance_points += pr.dom_points;
        st.dominance_violations += pr.dom_violations;
        if (cfg.audit && !pr.aborted) {
            ac.axiom1_fail += !pr.a1;
            ac.axiom2_fail += !pr.a2;
            ac.axiom3_fail += !pr.a3;
            ac.worst_conservation = std::max(ac.worst_conservation, pr.conservation);
        }
    }
    if (cfg.audit) st.audits = ac;
    if (!cfg.summaries) return st;

    std::vector<double> buf;
    buf.reserve(N);
    auto collect = [&](const std::vector<double>& src, std::size_t k, std::size_t g, bool conditional) {
        buf.clear();
        for (std::size_t p = 0; p < N; ++p) {
            if (rec[p].aborted) continue;
            if (conditional && !(death[k * N + p] > grid[g])) continue;
            buf.push_back(src[(k * G + g) * N + p]);
        }
        return summarize(buf);
    };
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<std::pair<std::string, const std::vector<double>*>> metrics{{"payments", &pay}};
        if (utility) metrics.emplace_back("utility", &util);
        for (const auto& [name, src] : metrics)
            for (bool cond : {false, true}) {
                Series s;
                s.participant = cfg.tracked[k];
                s.metric = cond ? name + "_alive" : name;
                for (std::size_t g = 0; g < G; ++g) s.bands.push_back(collect(*src, k, g, cond));
                st.series.push_back(std::move(s));
            }
    }
    return st;
}

DominanceReport compare_da_dc(const SimulationConfig& cfg) {
    cfg.validate();
    auto scheme = build_scheme(cfg.scheme, cfg.pool, cfg.econ);
    PathSimulator sim(*scheme, cfg.engine);
    const auto grid = cfg.evaluation_grid();
    const std::size_t N = cfg.n_paths;
    const std::size_t K = cfg.tracked.size();
    const bool utility = std::isfinite(cfg.econ.gamma);
    PathOptions opt;
    opt.traced = cfg.tracked;
    opt.stop_at = cfg.horizon;

    std::vector<PayoutCurve> dc;
    for (int i : cfg.tracked) {
        auto ii = static_cast<std::size_t>(i);
        dc.push_back(dc_drawdown(cfg.pool.mortality.members[ii], cfg.pool.deposits[ii], cfg.econ));
    }
    std::vector<std::size_t> points(N, 0), viol(N, 0);
    std::vector<double> du(K * N, 0.0), cu(K * N, 0.0);
    parallel_paths(N, engine_threads(cfg.threads), [&](std::size_t path) {
        auto deaths = sample_death_times(cfg.pool.mortality, cfg.seed, path);
        PathResult res = sim.simulate(deaths, opt);
        for (std::size_t k = 0; k < K; ++k) {
            auto i = static_cast<std::size_t>(cfg.tracked[k]);
            const auto& tr = res.traces[i];
            for (double t : grid) {
                if (t >= tr.active_until) break;
                ++points[path];
                double c = dc[k].rate(t);
                if (tr.rate(t) < c - 1e-12 * std::max(1.0, c)) ++viol[path];
            }
            if (utility) {
                du[k * N + path] = tr.cumulative_discounted_utility(cfg.horizon, cfg.econ.delta, cfg.econ.gamma);
                PaymentTrace d = dc_trace(cfg.pool.mortality.members[i], cfg.pool.deposits[i], cfg.econ, tr.active_until);
                cu[k * N + path] = d.cumulative_discounted_utility(cfg.horizon, cfg.econ.delta, cfg.econ.gamma);
            }
        }
    });
    DominanceReport rep;
    for (std::size_t p = 0; p < N; ++p) {
        rep.points += points[p];
        rep.violations += viol[p];
    }
    rep.fraction = rep.points ? static_cast<double>(rep.violations) / static_cast<double>(rep.points) : 0.0;
    if (utility)
        for (std::size_t k = 0; k < K; ++k) {
            std::span<const double> a(du.data() + k * N, N), b(cu.data() + k * N, N);
            rep.da_utility.push_back(stable_sum(a) / static_cast<double>(N));
            rep.dc_utility.push_back(stable_sum(b) / static_cast<double>(N));
            rep.utility_ordering = rep.utility_ordering && rep.da_utility.back() >= rep.dc_utility.back();
        }
    return rep;
}

double band_width(const PathStats& stats, int participant, const std::string& metric, double t) {
    const Band& b = stats.find(participant, metric).bands[grid_index(stats.grid, t)];
    return b.q90 - b.q10;
}

NarrowingReport band_narrowing(const PathStats& small, int small_participant, const PathStats& large,
                               int large_participant, const std::string& metric) {
    NarrowingReport rep;
    for (double t : small.grid) {
        std::size_t g;
        try {
            g = grid_index(large.grid, t);
        } catch (const ValidationError&) {
            continue;
        }
        double ws = band_width(small, small_participant, metric, t);
        const Band& b = large.find(large_participant, metric).bands[g];
        double wl = b.q90 - b.q10;
        rep.grid.push_back(t);
        rep.small_width.push_back(ws);
        rep.large_width.push_back(wl);
        if (t > 0.0 && wl > ws * (1.0 + 1e-12)) rep.narrower = false;
    }
    if (rep.grid.empty()) throw ValidationError("band narrowing needs a shared grid");
    if (!(rep.large_width.back() < rep.small_width.back())) rep.narrower = false;
    return rep;
}

}  // namespace da
