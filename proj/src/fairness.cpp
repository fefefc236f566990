#include "da/fairness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "da/errors.hpp"
#include "da/rng.hpp"

namespace da {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kPathsPerBatch = 1024;
constexpr std::uint32_t kRestartPurpose = 1;

struct Moments {
    std::vector<double> mean;
    std::vector<double> se;
};

// Per-batch Welford accumulators merged in batch order, so results do not depend on threads.
Moments batched_moments(std::size_t n_paths, std::size_t n_values, unsigned threads,
                        const std::function<void(std::size_t, double*)>& fill) {
    std::size_t batches = (n_paths + kPathsPerBatch - 1) / kPathsPerBatch;
    std::vector<double> bmean(batches * n_values, 0.0), bm2(batches * n_values, 0.0);
    std::vector<std::size_t> bcount(batches, 0);
    parallel_paths(
        batches, engine_threads(threads),
        [&](std::size_t b) {
            std::vector<double> x(n_values);
            double* mean = bmean.data() + b * n_values;
            double* m2 = bm2.data() + b * n_values;
            std::size_t k = 0;
            for (std::size_t p = b * kPathsPerBatch; p < std::min(n_paths, (b + 1) * kPathsPerBatch); ++p) {
                std::fill(x.begin(), x.end(), 0.0);
                fill(p, x.data());
                ++k;
                for (std::size_t v = 0; v < n_values; ++v) {
                    double d = x[v] - mean[v];
                    mean[v] += d / static_cast<double>(k);
                    m2[v] += d * (x[v] - mean[v]);
                }
            }
            bcount[b] = k;
        },
        1);
    Moments out;
    out.mean.assign(n_values, 0.0);
    std::vector<double> m2(n_values, 0.0);
    double n = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        double nb = static_cast<double>(bcount[b]);
        if (nb == 0.0) continue;
        double tot = n + nb;
        for (std::size_t v = 0; v < n_values; ++v) {
            double d = bmean[b * n_values + v] - out.mean[v];
            out.mean[v] += d * nb / tot;
            m2[v] += bm2[b * n_values + v] + d * d * n * nb / tot;
        }
        n = tot;
    }
    out.se.assign(n_values, 0.0);
    if (n > 1.0)
        for (std::size_t v = 0; v < n_values; ++v) out.se[v] = std::sqrt(m2[v] / (n - 1.0) / n);
    return out;
}

double mean_deposit(const Pool& pool) {
    double s = 0.0;
    for (double d : pool.deposits) s += d;
    return s / static_cast<double>(pool.size());
}

double pick_tolerance(const FairnessOptions& o, const Pool& pool, double fraction) {
    return std::isnan(o.tolerance) ? fraction * mean_deposit(pool) : o.tolerance;
}

void check_options(const FairnessOptions& o) {
    if (o.n_paths < 2) throw ValidationError("fairness estimates need at least 2 paths");
}

// Chebyshev fit of a single epsilon: minimize max_i |a_i + b_i eps| with b_i >= 0.
double chebyshev_epsilon(const std::vector<double>& a, const std::vector<double>& b) {
    double lo = kInf, hi = -kInf;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (b[i] > 0.0) {
            lo = std::min(lo, -a[i] / b[i]);
            hi = std::max(hi, -a[i] / b[i]);
        }
    if (!std::isfinite(lo)) return 0.0;
    // g(eps) = max(a + b eps) - max(-a - b eps) is non-decreasing.
    auto g = [&](double e) {
        double up = -kInf, down = -kInf;
        for (std::size_t i = 0; i < a.size(); ++i) {
            up = std::max(up, a[i] + b[i] * e);
            down = std::max(down, -a[i] - b[i] * e);
        }
        return up - down;
    };
    for (int it = 0; it < 200 && hi > lo; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (g(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

FairnessReport lifetime_fairness(const Scheme& scheme, const FairnessOptions& o) {
    check_options(o);
    const Pool& pool = scheme.pool();
    const std::size_t n = pool.size();
    PathSimulator sim(scheme, o.engine);
    std::atomic<std::size_t> flagged{0};
    Moments m = batched_moments(o.n_paths, n, o.threads, [&](std::size_t path, double* x) {
        PathResult r = sim.simulate(o.seed, path, PathOptions{});
        if (r.flagged) ++flagged;
        for (std::size_t i = 0; i < n; ++i) x[i] = r.state.accounts[i].cumulative_discounted_payment;
    });
    FairnessReport rep;
    rep.notion = "lifetime";
    rep.n_paths = o.n_paths;
    rep.flagged = flagged;
    rep.tolerance = pick_tolerance(o, pool, 1e-2);
    for (std::size_t i = 0; i < n; ++i) {
        ParticipantResidual pr;
        pr.participant = static_cast<int>(i);
        pr.target = pool.deposits[i];
        pr.estimate = m.mean[i];
        pr.se = m.se[i];
        pr.residual = m.mean[i] - pool.deposits[i];
        pr.pass = std::abs(pr.residual) < rep.tolerance + 3.0 * pr.se;
        rep.pass = rep.pass && pr.pass;
        rep.participants.push_back(pr);
    }
    return rep;
}

FairnessReport equitability_fit(const Scheme& scheme, const FairnessOptions& o) {
    FairnessReport life = lifetime_fairness(scheme, o);
    FairnessReport rep;
    rep.notion = "equitability";
    rep.n_paths = life.n_paths;
    rep.flagged = life.flagged;
    rep.tolerance = life.tolerance;
    std::vector<double> a, b;
    double worst_se = 0.0;
    for (const auto& p : life.participants) {
        a.push_back(p.estimate - p.target);
        b.push_back(p.target);
        worst_se = std::max(worst_se, p.se);
    }
    rep.epsilon = chebyshev_epsilon(a, b);
    rep.max_deviation = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ParticipantResidual pr = life.participants[i];
        pr.target = (1.0 - rep.epsilon) * pr.target;
        pr.residual = pr.estimate - pr.target;
        pr.pass = std::abs(pr.residual) < rep.tolerance + 3.0 * pr.se;
        rep.max_deviation = std::max(rep.max_deviation, std::abs(pr.residual));
        rep.participants.push_back(pr);
    }
    rep.pass = rep.max_deviation < rep.tolerance + 3.0 * worst_se;
    return rep;
}

FairnessReport periodic_fairness(const Scheme& scheme, const PoolState& start, const FairnessOptions& o) {
    check_options(o);
    const Pool& pool = scheme.pool();
    const std::size_t n = pool.size();
    if (start.size() != n) throw ValidationError("state does not match the scheme's pool");
    int alive = start.alive_count();
    if (scheme.pooled() &&
        (alive <= 1 || (scheme.dissolution() == Dissolution::dissolve_at_two_survivors && alive <= 2)))
        throw DomainError("no transfer period starts from this state");
    if (start.ended) throw DomainError("scheme has already ended in this state");
    const double delta = scheme.economics().delta;
    Philox rng(o.seed);
    std::atomic<std::size_t> flagged{0};
    Moments m = batched_moments(o.n_paths, n, o.threads, [&](std::size_t path, double* x) {
        int dec = -1;
        double T = kInf;
        for (std::size_t i = 0; i < n; ++i) {
            if (!start.accounts[i].alive) continue;
            double u = rng.uniform(path, static_cast<std::uint32_t>(i), kRestartPurpose);
            double t = pool.mortality.members[i].sample(u, start.time);
            if (t < T) {
                T = t;
                dec = static_cast<int>(i);
            }
        }
        PoolState st = start;
        st.keep_log = false;
        PeriodPlan plan = scheme.plan_period(st);
        plan.start = st.time;
        if (plan.dissolve) {
            ++flagged;
            return;
        }
        if (dec < 0 || !std::isfinite(T)) return;
        st.set_payouts(std::move(plan.payouts));
        st.accrue(T);
        std::vector<double> pre = st.balances();
        DeathOutcome out = scheme.on_death(st, plan, dec);
        if (out.improper || !out.flag.empty()) ++flagged;
        st.apply_death(out.event);
        double disc = std::exp(-delta * T);
        for (std::size_t i = 0; i < n; ++i) {
            if (!start.accounts[i].alive) continue;
            double post = st.accounts[i].alive ? st.accounts[i].cash_value : 0.0;
            x[i] = disc * (pre[i] - post);
        }
    });
    FairnessReport rep;
    rep.notion = "periodic";
    rep.n_paths = o.n_paths;
    rep.flagged = flagged;
    rep.tolerance = pick_tolerance(o, pool, 1e-2);
    for (std::size_t i = 0; i < n; ++i) {
        ParticipantResidual pr;
        pr.participant = static_cast<int>(i);
        pr.estimate = m.mean[i];
        pr.se = m.se[i];
        pr.residual = m.mean[i];
        pr.pass = std::abs(pr.residual) < rep.tolerance + 3.0 * pr.se;
        rep.pass = rep.pass && pr.pass;
        rep.participants.push_back(pr);
    }
    return rep;
}

FairnessReport instantaneous_fairness(const Scheme& scheme, const std::vector<double>& grid,
                                      const FairnessOptions& o) {
    check_options(o);
    if (grid.size() < 2) throw ValidationError("instantaneous fairness needs at least one bin");
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] > grid[k - 1])) throw ValidationError("grid must be strictly increasing");
    const Pool& pool = scheme.pool();
    const std::size_t n = pool.size();
    const std::size_t K = grid.size() - 1;
    const double delta = scheme.economics().delta;
    PathSimulator sim(scheme, o.engine);
    PathOptions opt;
    opt.trace_all = true;
    opt.stop_at = grid.back();
    auto bin_of = [&](double t) -> std::ptrdiff_t {
        if (t < grid.front() || t >= grid.back()) return -1;
        return std::upper_bound(grid.begin(), grid.end(), t) - grid.begin() - 1;
    };
    std::atomic<std::size_t> flagged{0};
    // Layout per participant i: [lhs bins | rhs bins | diff bins].
    Moments m = batched_moments(o.n_paths, n * 3 * K, o.threads, [&](std::size_t path, double* x) {
        PathResult r = sim.simulate(o.seed, path, opt);
        if (r.flagged || r.improper_transfer) ++flagged;
        for (std::size_t i = 0; i < n; ++i) {
            double* lhs = x + i * 3 * K;
            const auto& tr = r.traces[i];
            for (const auto& p : tr.pieces) {
                for (std::size_t k = 0; k < K; ++k) {
                    double a = std::max(p.start, grid[k]), b = std::min(p.end, grid[k + 1]);
                    if (b > a) lhs[k] += piece_discounted_flow(p, a, b, delta);
                }
            }
            for (const auto& j : tr.jumps) {
                if (j.kind == JumpKind::lump_sum) continue;
                auto k = bin_of(j.time);
                if (k >= 0) lhs[k] += j.amount * std::exp(-delta * j.time);
            }
        }
        for (const auto& ev : r.state.deaths) {
            auto k = bin_of(ev.time);
            if (k < 0) continue;
            double* rhs = x + static_cast<std::size_t>(ev.deceased) * 3 * K + K;
            rhs[k] += ev.pre_death_balance * std::exp(-delta * ev.time);
        }
        for (std::size_t i = 0; i < n; ++i) {
            double* base = x + i * 3 * K;
            for (std::size_t k = 0; k < K; ++k) {
                double width = grid[k + 1] - grid[k];
                base[k] /= width;
                base[K + k] /= width;
                base[2 * K + k] = base[k] - base[K + k];
            }
        }
    });
    FairnessReport rep;
    rep.notion = "instantaneous";
    rep.n_paths = o.n_paths;
    rep.flagged = flagged;
    rep.tolerance = pick_tolerance(o, pool, 2e-3);
    rep.grid = grid;
    rep.payout_rate.assign(n, std::vector<double>(K));
    rep.forfeit_rate.assign(n, std::vector<double>(K));
    rep.residual_se.assign(n, std::vector<double>(K));
    for (std::size_t i = 0; i < n; ++i) {
        ParticipantResidual pr;
        pr.participant = static_cast<int>(i);
        for (std::size_t k = 0; k < K; ++k) {
            std::size_t base = i * 3 * K;
            rep.payout_rate[i][k] = m.mean[base + k];
            rep.forfeit_rate[i][k] = m.mean[base + K + k];
            rep.residual_se[i][k] = m.se[base + 2 * K + k];
            double res = m.mean[base + 2 * K + k];
            if (std::abs(res) >= rep.tolerance + 3.0 * rep.residual_se[i][k]) pr.pass = false;
            if (std::abs(res) > std::abs(pr.residual)) {
                pr.residual = res;
                pr.se = rep.residual_se[i][k];
            }
            if (std::abs(res) > rep.sup_residual) {
                rep.sup_residual = std::abs(res);
                rep.sup_participant = static_cast<int>(i);
                rep.sup_time = grid[k];
            }
        }
        pr.estimate = pr.residual;
        rep.pass = rep.pass && pr.pass;
        rep.participants.push_back(pr);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Classification

namespace {

const char* kEquitable = "Equitable tontine";
const char* kModified = "Modified equitable tontines";
const char* kFtpContinue = "Fair transfer plan (Continue to the last survivor)";
const char* kFtpDissolve = "Fair transfer plans (Dissolve with two survivors)";
const char* kDaContinue = "Fair decentralized annuities (Continue to the last survivor)";
const char* kDaDissolve = "Fair decentralized annuities (Dissolve with two survivors)";

const char* kAxEquitable = "Equitable Tontines";
const char* kAxGsa = "GSA Plans";
const char* kAxFtp = "Fair Transfer Tontines";
const char* kAxDa = "Decentralized Annuities";

const char* mark(bool b) { return b ? "✓" : "×"; }

}  // namespace

ClassTables classification_tables() {
    ClassTables t;
    t.axioms = {{kAxEquitable, {false, true, false}},
                {kAxGsa, {false, true, false}},
                {kAxFtp, {true, true, true}},
                {kAxDa, {true, true, true}}};
    t.fairness = {{kEquitable, {true, false, false, false}},
                  {kModified, {true, true, false, false}},
                  {kFtpContinue, {true, true, false, false}},
                  {kFtpDissolve, {true, true, true, true}},
                  {kDaContinue, {true, true, true, false}},
                  {kDaDissolve, {true, true, true, true}}};
    return t;
}

ClassRow classify(Family family, std::optional<Dissolution> dissolution) {
    ClassTables t = classification_tables();
    auto ax = [&](const char* name) {
        for (const auto& [k, v] : t.axioms)
            if (k == name) return v;
        throw ValidationError("missing axiom row");
    };
    auto fair = [&](const char* name) {
        for (const auto& [k, v] : t.fairness)
            if (k == name) return v;
        throw ValidationError("missing fairness row");
    };
    Dissolution resolved = dissolution.value_or(default_dissolution(family));
    bool two = resolved == Dissolution::dissolve_at_two_survivors;
    ClassRow row;
    switch (family) {
        case Family::equitable_tontine: {
            bool modified = dissolution && *dissolution == Dissolution::last_survivor_lump_sum;
            row.plan = modified ? kModified : kEquitable;
            row.axioms = ax(kAxEquitable);
            row.fairness = fair(modified ? kModified : kEquitable);
            return row;
        }
        case Family::gsa:
            row.plan = kAxGsa;
            row.axioms = ax(kAxGsa);
            return row;
        case Family::ftp:
            row.plan = two ? kFtpDissolve : kFtpContinue;
            row.axioms = ax(kAxFtp);
            row.fairness = fair(two ? kFtpDissolve : kFtpContinue);
            return row;
        case Family::optimal_da:
        case Family::periodic_fair_da:
        case Family::instantaneous_fair_da:
        case Family::two_peer_da:
        case Family::da_dominating_dc: {
            row.plan = two ? kDaDissolve : kDaContinue;
            row.axioms = ax(kAxDa);
            row.fairness = fair(two ? kDaDissolve : kDaContinue);
            return row;
        }
        case Family::dc_drawdown:
            break;
    }
    throw UnsupportedError(std::string("no published classification for ") + to_string(family));
}

std::string to_markdown(const ClassTables& t) {
    std::ostringstream os;
    os << "| | Axiom 1 | Axiom 2 | Axiom 3 |\n|---|---|---|---|\n";
    for (const auto& [name, m] : t.axioms)
        os << "| " << name << " | " << mark(m[0]) << " | " << mark(m[1]) << " | " << mark(m[2]) << " |\n";
    os << "\n| | Equitability | Lifetime fairness | Periodic fairness | Instantaneous fairness |\n"
       << "|---|---|---|---|---|\n";
    for (const auto& [name, m] : t.fairness)
        os << "| " << name << " | " << mark(m[0]) << " | " << mark(m[1]) << " | " << mark(m[2]) << " | "
           << mark(m[3]) << " |\n";
    return os.str();
}

std::string to_markdown(const ClassRow& row) {
    std::ostringstream os;
    os << "| Plan | Axiom 1 | Axiom 2 | Axiom 3 | Equitability | Lifetime fairness | Periodic fairness | "
          "Instantaneous fairness |\n|---|---|---|---|---|---|---|---|\n| "
       << row.plan;
    for (int k = 0; k < 3; ++k) os << " | " << (row.axioms ? mark((*row.axioms)[static_cast<std::size_t>(k)]) : "n/a");
    for (int k = 0; k < 4; ++k)
        os << " | " << (row.fairness ? mark((*row.fairness)[static_cast<std::size_t>(k)]) : "n/a");
    os << " |\n";
    return os.str();
}

}  // namespace da
