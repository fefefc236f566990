#include "da/engine.hpp"

#include <algorithm>
#include <cmath>

#include "da/errors.hpp"

namespace da {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool traced(const PathOptions& o, std::size_t i) {
    return o.trace_all ||
           std::find(o.traced.begin(), o.traced.end(), static_cast<int>(i)) != o.traced.end();
}

void trace_period(PathResult& r, const PathOptions& o, const PoolState& state, double from,
                  double to) {
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (!state.accounts[i].alive || !traced(o, i)) continue;
        const PayoutCurve& c = state.payouts[i];
        if (!c.closed_form()) throw UnsupportedError("payment traces need closed-form payouts");
        auto& tr = r.traces[i];
        for (const auto& p : c.pieces) {
            double lo = std::max(from, p.start);
            double hi = std::min(to, p.end);
            if (hi <= lo) continue;
            double scale = p.rate(lo);
            if (!tr.pieces.empty()) {
                // Extend an unchanged stream instead of splitting it at a period boundary.
                ExpPiece& last = tr.pieces.back();
                if (last.end == lo && last.decay == p.decay &&
                    last.scale * std::exp(-last.decay * (lo - last.start)) == scale) {
                    last.end = hi;
                    continue;
                }
            }
            ExpPiece q = p;
            q.scale = scale;
            q.start = lo;
            q.end = hi;
            tr.pieces.push_back(q);
        }
        for (const auto& imp : c.impulses)
            if (imp.time >= from && imp.time < to)
                tr.jumps.push_back({imp.time, imp.amount, JumpKind::impulse});
    }
}

void dissolve(PathResult& r, const PathOptions& o, PoolState& state) {
    state.snapshot_entitlements();
    for (int i : state.alive_indices()) {
        double amount = state.accounts[static_cast<std::size_t>(i)].cash_value;
        state.pay_lump_sum(i);
        if (traced(o, static_cast<std::size_t>(i)))
            r.traces[static_cast<std::size_t>(i)].jumps.push_back({state.time, amount, JumpKind::lump_sum});
    }
    state.end_scheme();
}

}  // namespace

double PaymentTrace::cumulative_discounted(double t, double delta, bool with_lump_sums) const {
    double sum = 0.0;
    for (const auto& p : pieces) {
        if (p.start >= t) break;
        sum += piece_discounted_flow(p, p.start, std::min(t, p.end), delta);
    }
    for (const auto& j : jumps) {
        if (j.time > t) break;
        if (!with_lump_sums && j.kind == JumpKind::lump_sum) continue;
        sum += j.amount * std::exp(-delta * j.time);
    }
    return sum;
}

double PaymentTrace::cumulative_discounted_utility(double t, double delta, double gamma) const {
    double sum = 0.0;
    for (const auto& p : pieces) {
        if (p.start >= t) break;
        sum += piece_discounted_utility(p, p.start, std::min(t, p.end), delta, gamma);
    }
    return sum;
}

double PaymentTrace::rate(double t) const {
    for (const auto& p : pieces)
        if (t >= p.start && t < p.end) return p.rate(t);
    return 0.0;
}

PathResult continue_path(const Scheme& scheme, PoolState state, const std::vector<Death>& deaths,
                         const PathOptions& o, PathResult r) {
    r.traces.resize(state.size());
    std::size_t next = 0;
    const Dissolution policy = scheme.dissolution();
    const bool pooled = scheme.pooled();

    while (true) {
        int alive = state.alive_count();
        if (alive == 0) break;
        if (alive == 1) state.snapshot_entitlements();
        if (pooled) {
            if (policy == Dissolution::dissolve_at_two_survivors && alive <= 2) {
                dissolve(r, o, state);
                break;
            }
            if (alive == 1 && policy != Dissolution::last_survivor_continues) {
                dissolve(r, o, state);
                break;
            }
        }
        PeriodPlan plan = scheme.plan_period(state);
        plan.start = state.time;
        ++r.periods;
        if (plan.dissolve) {
            r.flagged = true;
            r.flags.push_back(plan.reason);
            dissolve(r, o, state);
            break;
        }
        state.set_payouts(std::move(plan.payouts));
        while (next < deaths.size() && !state.accounts[static_cast<std::size_t>(deaths[next].participant)].alive)
            ++next;
        double T = next < deaths.size() ? deaths[next].time : kInf;
        if (T > o.stop_at || T == kInf) {
            double until = std::min(o.stop_at, T);
            // The trace runs on to the next death so rates at the stop time stay defined.
            trace_period(r, o, state, state.time, T);
            if (std::isfinite(until)) state.accrue(until);
            break;
        }
        trace_period(r, o, state, state.time, T);
        state.accrue(T);
        int dec = deaths[next].participant;
        ++next;
        DeathOutcome out = scheme.on_death(state, plan, dec);
        state.apply_death(out.event);
        if (traced(o, static_cast<std::size_t>(dec))) r.traces[static_cast<std::size_t>(dec)].death_time = T;
        if (out.improper) r.improper_transfer = true;
        if (!out.flag.empty()) {
            r.flagged = true;
            r.flags.push_back(out.flag);
        }
        if (out.pay_transfers) {
            for (const auto& [i, e] : out.event.transfers) {
                state.pay(i, e);
                if (traced(o, static_cast<std::size_t>(i)))
                    r.traces[static_cast<std::size_t>(i)].jumps.push_back({T, e, JumpKind::transfer_payment});
            }
        }
        if (pooled && (policy == Dissolution::dissolve_at_first_death || out.dissolve_after)) {
            if (state.alive_count() > 0) dissolve(r, o, state);
            else state.end_scheme();
            break;
        }
    }
    if (!state.ended && state.alive_count() == 0) state.end_scheme();

    // Record every remaining lifetime for auditing, without ledger effect.
    for (; next < deaths.size(); ++next) {
        auto i = static_cast<std::size_t>(deaths[next].participant);
        if (state.accounts[i].death_time == kInf) state.accounts[i].death_time = deaths[next].time;
        if (traced(o, i) && r.traces[i].death_time == kInf) r.traces[i].death_time = deaths[next].time;
    }
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (!traced(o, i)) continue;
        auto& tr = r.traces[i];
        tr.active_until = std::min(tr.death_time, state.end_time);
        std::sort(tr.jumps.begin(), tr.jumps.end(),
                  [](const TraceJump& a, const TraceJump& b) { return a.time < b.time; });
    }
    r.state = std::move(state);
    return r;
}

PathResult run_path(const Scheme& scheme, const std::vector<Death>& deaths, const PathOptions& o) {
    PoolState st = scheme.initial_state(o.keep_log);
    return continue_path(scheme, std::move(st), deaths, o, PathResult{});
}

}  // namespace da
