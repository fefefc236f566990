#include "da/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "da/errors.hpp"
#include "da/numerics.hpp"

namespace da {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

struct Segment {
    double start;
    double end;
    double rate;
    double cum;  // cumulative hazard from asof to start
};

// Piecewise-constant aggregate hazard of the alive members from asof.
std::vector<Segment> group_segments(const GroupMortality& group, const std::vector<bool>& alive,
                                    double asof) {
    std::set<double> cuts{asof};
    for (std::size_t i = 0; i < group.size(); ++i) {
        if (!alive[i]) continue;
        for (double b : group.members[i].breaks())
            if (b > asof) cuts.insert(b);
    }
    std::vector<double> pts(cuts.begin(), cuts.end());
    std::vector<Segment> out;
    double cum = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        double start = pts[k];
        double end = k + 1 < pts.size() ? pts[k + 1] : kInf;
        double rate = 0.0;
        for (std::size_t i = 0; i < group.size(); ++i)
            if (alive[i]) rate += group.members[i].hazard(start);
        out.push_back({start, end, rate, cum});
        if (end < kInf) cum += rate * (end - start);
    }
    return out;
}

double group_survival(const GroupMortality& group, const std::vector<bool>& alive, double asof,
                      double t) {
    double s = 1.0;
    for (std::size_t i = 0; i < group.size(); ++i)
        if (alive[i]) s *= group.members[i].survival(asof, t);
    return s;
}

std::vector<bool> alive_mask(const PoolState& state) {
    std::vector<bool> m(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) m[i] = state.accounts[i].alive;
    return m;
}

// Restrict a curve to [t, inf), re-anchoring pieces that straddle t.
PayoutCurve tail_from(const PayoutCurve& c, double t) {
    PayoutCurve out;
    for (const auto& p : c.pieces) {
        if (p.end <= t) continue;
        ExpPiece q = p;
        if (q.start < t) {
            q.scale = p.rate(t);
            q.start = t;
        }
        out.pieces.push_back(q);
    }
    for (const auto& imp : c.impulses)
        if (imp.time >= t) out.impulses.push_back(imp);
    return out;
}

double present_value_at(const PayoutCurve& c, double t, double delta) {
    return std::exp(delta * t) * (c.discounted_flow(t, kInf, delta) + c.discounted_impulses(t, kInf, delta));
}

bool same_model(const HazardModel& a, const HazardModel& b) {
    return a.breaks() == b.breaks() && a.rates() == b.rates();
}

// Shares of deceased j over the other entries of `plan.survivors`.
std::vector<std::pair<int, double>> shares_from(const TransferMatrix& a,
                                                const std::vector<int>& survivors, int deceased) {
    auto it = std::find(survivors.begin(), survivors.end(), deceased);
    if (it == survivors.end()) throw ValidationError("deceased not in period survivor set");
    std::size_t j = static_cast<std::size_t>(std::distance(survivors.begin(), it));
    std::vector<std::pair<int, double>> out;
    for (std::size_t i = 0; i < survivors.size(); ++i)
        if (i != j) out.emplace_back(survivors[i], a(i, j));
    return out;
}

DeathEvent residue_event(const PoolState& state, int deceased) {
    DeathEvent ev;
    ev.time = state.time;
    ev.deceased = deceased;
    ev.pre_death_balance = state.accounts[static_cast<std::size_t>(deceased)].cash_value;
    ev.forfeited = ev.pre_death_balance;
    return ev;
}

}  // namespace

const char* to_string(Family f) {
    switch (f) {
        case Family::optimal_da: return "optimal-da";
        case Family::periodic_fair_da: return "periodic-fair-da";
        case Family::instantaneous_fair_da: return "instantaneous-fair-da";
        case Family::two_peer_da: return "two-peer-da";
        case Family::da_dominating_dc: return "da-dominating-dc";
        case Family::dc_drawdown: return "dc-drawdown";
        case Family::equitable_tontine: return "equitable-tontine";
        case Family::gsa: return "gsa";
        case Family::ftp: return "ftp";
    }
    return "unknown";
}

const char* to_string(Dissolution d) {
    switch (d) {
        case Dissolution::last_survivor_lump_sum: return "last-survivor-lump-sum";
        case Dissolution::dissolve_at_two_survivors: return "dissolve-at-two-survivors";
        case Dissolution::dissolve_at_first_death: return "dissolve-at-first-death";
        case Dissolution::last_survivor_continues: return "last-survivor-continues";
    }
    return "unknown";
}

Family parse_family(const std::string& s) {
    for (Family f : {Family::optimal_da, Family::periodic_fair_da, Family::instantaneous_fair_da,
                     Family::two_peer_da, Family::da_dominating_dc, Family::dc_drawdown,
                     Family::equitable_tontine, Family::gsa, Family::ftp})
        if (s == to_string(f)) return f;
    throw ValidationError("unknown scheme family '" + s + "'");
}

Dissolution parse_dissolution(const std::string& s) {
    for (Dissolution d : {Dissolution::last_survivor_lump_sum, Dissolution::dissolve_at_two_survivors,
                          Dissolution::dissolve_at_first_death, Dissolution::last_survivor_continues})
        if (s == to_string(d)) return d;
    throw ValidationError("unknown dissolution policy '" + s + "'");
}

Dissolution default_dissolution(Family f) {
    switch (f) {
        case Family::optimal_da: return Dissolution::dissolve_at_first_death;
        case Family::instantaneous_fair_da: return Dissolution::dissolve_at_two_survivors;
        case Family::two_peer_da: return Dissolution::dissolve_at_first_death;
        default: return Dissolution::last_survivor_lump_sum;
    }
}

// ---------------------------------------------------------------------------
// Payout primitives

OptimalPayout optimal_da_payout(const GroupMortality& group, const Economics& econ, double asof,
                                const std::vector<bool>& alive,
                                const std::vector<double>& balances) {
    if (!(econ.gamma >= 0.0)) throw DomainError("risk aversion must be >= 0");
    if (alive.size() != group.size()) throw ValidationError("alive mask size mismatch");
    if (std::none_of(alive.begin(), alive.end(), [](bool b) { return b; }))
        throw DomainError("optimal payout needs a nonempty survivor set");
    OptimalPayout out;
    if (econ.gamma == 0.0) {
        out.nu = kInf;
        out.unit.impulses.push_back({asof, 1.0});
    } else {
        double inv = 1.0 / econ.gamma;
        for (const auto& s : group_segments(group, alive, asof))
            out.unit.pieces.push_back({s.start, s.end, std::exp(-s.cum * inv), s.rate * inv});
        double pv = present_value_at(out.unit, asof, econ.delta);
        if (!(pv > 0.0) || !std::isfinite(pv))
            throw DomainError("optimal payout not normalizable (zero interest and no mortality)");
        out.nu = 1.0 / pv;
        for (auto& p : out.unit.pieces) p.scale *= out.nu;
    }
    if (!balances.empty()) {
        double total = 0.0;
        std::vector<double> ls(group.size(), 0.0);
        for (std::size_t i = 0; i < group.size(); ++i)
            if (alive[i]) {
                ls[i] = group.members[i].hazard(asof) * balances[i];
                total += ls[i];
            }
        for (std::size_t i = 0; i < group.size(); ++i)
            if (alive[i] && ls[i] > total - ls[i] + 1e-12 * total) {
                out.proper = false;
                out.violating = static_cast<int>(i);
            }
    }
    return out;
}

double optimal_da_nu_numeric(const GroupMortality& group, const Economics& econ, double asof,
                             const std::vector<bool>& alive) {
    if (!(econ.gamma > 0.0)) throw DomainError("numeric normalization needs gamma > 0");
    double inv = 1.0 / econ.gamma;
    auto f = [&](double u) {
        return std::exp(-econ.delta * u) * std::pow(group_survival(group, alive, asof, asof + u), inv);
    };
    return 1.0 / integrate_to_inf(f, 0.0, 1e-12).value;
}

double optimal_da_period_fraction(double lambda_total, const Economics& econ) {
    return lambda_total / (econ.delta + (1.0 + 1.0 / econ.gamma) * lambda_total);
}

PayoutCurve dc_drawdown(const HazardModel& model, double deposit, const Economics& econ) {
    GroupMortality g{{model}};
    return optimal_da_payout(g, econ, 0.0, {true}).unit.scaled(deposit);
}

PayoutCurve exponential_payout(double balance, double theta, double delta, double start) {
    PayoutCurve c;
    if (theta == kInf) {
        c.impulses.push_back({start, balance});
    } else if (theta > 0.0) {
        c.pieces.push_back({start, kInf, theta * balance, theta - delta});
    }
    return c;
}

double ls_weight_constant(double lambda_i, double balance, double theta, double lambda_total) {
    if (theta == kInf) return 0.0;
    return lambda_i * balance / (theta + lambda_total);
}

double period_weight(const GroupMortality& group, const std::vector<bool>& alive, int i,
                     double balance, const PayoutCurve& curve, double asof, double delta) {
    std::size_t ii = static_cast<std::size_t>(i);
    double grow = std::exp(delta * asof);
    auto integrand = [&](double u) {
        double t = asof + u;
        double paid = grow * (curve.discounted_flow(asof, t, delta) +
                              curve.discounted_impulses(asof, t, delta));
        double b = balance - paid;
        double f = group.members[ii].conditional_density(asof, t);
        if (f == 0.0) return 0.0;
        for (std::size_t j = 0; j < group.size(); ++j)
            if (j != ii && alive[j]) f *= group.members[j].survival(asof, t);
        return b * f;
    };
    return integrate_to_inf(integrand, 0.0, 1e-10 * std::max(1.0, balance)).value;
}

double two_peer_rho_max(const GroupMortality& group, const std::vector<double>& balances,
                        double asof) {
    if (group.size() != 2) throw DomainError("two-peer scheme needs exactly two participants");
    double best = kInf;
    for (int i = 0; i < 2; ++i) {
        const HazardModel& mi = group.members[static_cast<std::size_t>(i)];
        const HazardModel& mj = group.members[static_cast<std::size_t>(1 - i)];
        double p;
        if (mi.is_constant() && mj.is_constant()) {
            double tot = mi.constant_rate() + mj.constant_rate();
            p = tot > 0.0 ? mi.constant_rate() / tot : 0.0;
        } else {
            p = integrate_to_inf(
                    [&](double u) {
                        return mi.conditional_density(asof, asof + u) * mj.survival(asof, asof + u);
                    },
                    0.0, 1e-12)
                    .value;
        }
        best = std::min(best, balances[static_cast<std::size_t>(i)] * p);
    }
    return best;
}

TwoPeerCalibration calibrate_two_peer(const GroupMortality& group,
                                      const std::vector<double>& balances, double rho,
                                      double asof) {
    TwoPeerCalibration cal;
    cal.rho_max = two_peer_rho_max(group, balances, asof);
    if (!(rho >= 0.0) || rho > cal.rho_max * (1.0 + 1e-12))
        throw DomainError("risk share " + fmt(rho) + " outside [0, " + fmt(cal.rho_max) + "]");
    cal.theta.assign(2, kInf);
    if (rho == 0.0) return cal;
    for (int i = 0; i < 2; ++i) {
        std::size_t ii = static_cast<std::size_t>(i);
        const HazardModel& mi = group.members[ii];
        const HazardModel& mj = group.members[1 - ii];
        double s = balances[ii];
        if (mi.is_constant() && mj.is_constant()) {
            double tot = mi.constant_rate() + mj.constant_rate();
            cal.theta[ii] = std::max(0.0, mi.constant_rate() * s / rho - tot);
            continue;
        }
        auto ls = [&](double theta) {
            return s * integrate_to_inf(
                           [&](double u) {
                               return std::exp(-theta * u) * mi.conditional_density(asof, asof + u) *
                                      mj.survival(asof, asof + u);
                           },
                           0.0, 1e-13)
                           .value;
        };
        double f0 = ls(0.0) - rho;
        if (f0 <= 1e-10 * s) {
            cal.theta[ii] = 0.0;
            continue;
        }
        double hi = 1.0;
        while (ls(hi) - rho > 0.0 && hi < 1e6) hi *= 2.0;
        std::uintmax_t iters = 200;
        auto root = boost::math::tools::toms748_solve(
            [&](double th) { return ls(th) - rho; }, 0.0, hi, f0, ls(hi) - rho,
            boost::math::tools::eps_tolerance<double>(50), iters);
        cal.theta[ii] = 0.5 * (root.first + root.second);
        double resid = std::abs(ls(cal.theta[ii]) - rho);
        if (resid > 1e-10 * std::max(1.0, s))
            throw NumericError("two-peer calibration residual " + fmt(resid), resid);
    }
    return cal;
}

std::vector<ExpPiece> constant_schedule(double rate, double horizon) {
    if (!(rate >= 0.0) || !(horizon > 0.0)) throw ValidationError("d(.) needs rate >= 0, horizon > 0");
    return {{0.0, horizon, rate, 0.0}};
}

std::vector<ExpPiece> tabulated_schedule(const std::vector<double>& times,
                                         const std::vector<double>& values) {
    if (times.size() != values.size() + 1 || values.empty())
        throw ValidationError("tabulated d(.) needs len(times) = len(values) + 1");
    std::vector<ExpPiece> out;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (!(times[k + 1] > times[k])) throw ValidationError("d(.) times must increase");
        if (!(values[k] >= 0.0)) throw ValidationError("d(.) values must be >= 0");
        out.push_back({times[k], times[k + 1], values[k], 0.0});
    }
    if (times.front() != 0.0) throw ValidationError("d(.) must start at t = 0");
    return out;
}

double schedule_present_value(const std::vector<ExpPiece>& d, double delta, double from) {
    double sum = 0.0;
    for (const auto& p : d) sum += piece_discounted_flow(p, from, kInf, delta);
    return sum * std::exp(delta * from);
}

double gsa_r0(const HazardModel& model, double s0, double delta) {
    if (model.is_constant()) {
        double z = model.constant_rate() + delta;
        if (!(z > 0.0)) throw DomainError("GSA annuity factor diverges");
        return s0 * -std::expm1(-z);
    }
    double sum = 0.0;
    for (int m = 0; m < 100000; ++m) {
        double term = model.survival(m) * std::exp(-delta * m);
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return s0 / sum;
}

// ---------------------------------------------------------------------------
// Spec builders

SchemeSpec make_optimal_da(const std::string& payout, Dissolution dissolution) {
    if (payout != "pooled" && payout != "individual")
        throw ValidationError("optimal-da payout must be 'pooled' or 'individual'");
    SchemeSpec s;
    s.family = Family::optimal_da;
    s.payout = payout;
    s.dissolution = dissolution;
    return s;
}

SchemeSpec make_periodic_fair_da(std::vector<double> theta, Dissolution dissolution) {
    for (double t : theta)
        if (!(t >= 0.0)) throw DomainError("theta must be >= 0");
    SchemeSpec s;
    s.family = Family::periodic_fair_da;
    s.theta = std::move(theta);
    s.dissolution = dissolution;
    return s;
}

SchemeSpec make_instantaneous_fair_da() {
    SchemeSpec s;
    s.family = Family::instantaneous_fair_da;
    s.dissolution = Dissolution::dissolve_at_two_survivors;
    return s;
}

SchemeSpec two_peer_periodic(const Pool& pool, double rho) {
    if (pool.size() != 2) throw DomainError("two-peer scheme needs exactly two participants");
    SchemeSpec s;
    s.family = Family::two_peer_da;
    s.dissolution = Dissolution::dissolve_at_first_death;
    s.rho = rho;
    s.theta = calibrate_two_peer(pool.mortality, pool.deposits, rho).theta;
    return s;
}

SchemeSpec da_dominating_dc(const Pool& pool, const Economics& econ,
                            const std::vector<PayoutCurve>& base) {
    if (!base.empty()) {
        if (base.size() != pool.size()) throw ValidationError("one base drawdown per participant");
        for (std::size_t i = 0; i < base.size(); ++i) {
            double pv = present_value_at(base[i], 0.0, econ.delta);
            if (pv > pool.deposits[i] * (1.0 + 1e-8))
                throw ValidationError("base drawdown exceeds the DC budget for participant " +
                                      std::to_string(i));
        }
    }
    SchemeSpec s;
    s.family = Family::da_dominating_dc;
    s.dissolution = Dissolution::last_survivor_lump_sum;
    for (std::size_t i = 0; i < base.size(); ++i)
        s.base.push_back(base[i].scaled(1.0 / pool.deposits[i]));
    return s;
}

SchemeSpec make_dc_drawdown() {
    SchemeSpec s;
    s.family = Family::dc_drawdown;
    s.dissolution = Dissolution::last_survivor_continues;
    return s;
}

SchemeSpec equitable_tontine(const Pool& pool, const Economics& econ, std::vector<double> pi,
                             std::vector<ExpPiece> d, bool rebalance, Dissolution dissolution) {
    if (pi.empty()) pi.assign(pool.size(), 1.0);
    if (pi.size() != pool.size()) throw ValidationError("one tontine weight per participant");
    for (double p : pi)
        if (!(p > 0.0)) throw DomainError("tontine weights must be > 0");
    double pv = schedule_present_value(d, econ.delta);
    if (std::abs(pv - 1.0) > 1e-8)
        throw ValidationError("payout schedule d(.) not normalized: present value " + fmt(pv));
    SchemeSpec s;
    s.family = Family::equitable_tontine;
    s.pi = std::move(pi);
    s.d = std::move(d);
    s.rebalance = rebalance;
    s.dissolution = dissolution;
    if (!rebalance) s.balance_policy = BalancePolicy::permit;
    return s;
}

SchemeSpec gsa_plan(const Pool& pool, const Economics& econ) {
    for (std::size_t i = 1; i < pool.size(); ++i)
        if (pool.deposits[i] != pool.deposits[0] ||
            !same_model(pool.mortality.members[i], pool.mortality.members[0]))
            throw UnsupportedError("GSA is defined for homogeneous cohorts only");
    gsa_r0(pool.mortality.members.at(0), pool.deposits.at(0), econ.delta);
    SchemeSpec s;
    s.family = Family::gsa;
    return s;
}

SchemeSpec ftp_plan(const Pool& pool, Dissolution dissolution) {
    (void)pool;
    SchemeSpec s;
    s.family = Family::ftp;
    s.dissolution = dissolution;
    return s;
}

// ---------------------------------------------------------------------------
// Runtime schemes

Scheme::Scheme(SchemeSpec spec, Pool pool, Economics econ)
    : spec_(std::move(spec)), pool_(std::move(pool)), econ_(econ) {
    if (pool_.size() == 0) throw ValidationError("pool is empty");
    if (pool_.mortality.size() != pool_.size())
        throw ValidationError("one mortality model per participant required");
    if (!(econ_.gamma >= 0.0)) throw DomainError("risk aversion must be >= 0");
}

std::vector<double> Scheme::initial_transfers() const {
    return std::vector<double>(pool_.size(), 0.0);
}

PoolState Scheme::initial_state(bool keep_log) const {
    PoolState st(pool_.deposits, econ_.delta, spec_.balance_policy, keep_log);
    auto e0 = initial_transfers();
    bool nonzero = std::any_of(e0.begin(), e0.end(), [&](double e) { return std::abs(e) > st.tolerance(); });
    if (nonzero) {
        if (spec_.balance_policy != BalancePolicy::permit)
            throw ValidationError("nonzero inception transfers require the permit balance policy");
        st.apply_initial_transfers(e0);
    }
    return st;
}

DeathOutcome Scheme::on_death(const PoolState& state, const PeriodPlan& plan, int deceased) const {
    DeathOutcome out;
    if (state.alive_count() <= 1) {
        out.event = residue_event(state, deceased);
        return out;
    }
    if (!plan.alpha) throw ValidationError("period plan carries no transfer matrix");
    out.event = make_death_event(state, deceased, shares_from(*plan.alpha, plan.survivors, deceased));
    return out;
}

namespace {

// Payout set once per period; transfers from period-start weights.
class PeriodicScheme : public Scheme {
public:
    PeriodicScheme(SchemeSpec spec, Pool pool, Economics econ)
        : Scheme(std::move(spec), std::move(pool), econ) {
        const auto& g = pool_.mortality;
        if (spec_.family == Family::two_peer_da) {
            if (pool_.size() != 2) throw DomainError("two-peer scheme needs exactly two participants");
            if (spec_.theta.empty()) {
                if (std::isnan(spec_.rho)) throw ValidationError("two-peer scheme needs rho");
                spec_.theta = calibrate_two_peer(g, pool_.deposits, spec_.rho).theta;
            }
        }
        if (spec_.family == Family::periodic_fair_da && !spec_.theta.empty()) {
            if (spec_.theta.size() == 1) spec_.theta.assign(pool_.size(), spec_.theta[0]);
            if (spec_.theta.size() != pool_.size())
                throw ValidationError("theta must be scalar or one per participant");
            for (double t : spec_.theta)
                if (!(t >= 0.0)) throw DomainError("theta must be >= 0");
        }
        if (spec_.family == Family::periodic_fair_da && spec_.theta.empty() && !g.all_constant())
            throw ValidationError("periodic-fair-da default theta needs constant forces; give theta");
        if (spec_.family == Family::da_dominating_dc || spec_.family == Family::optimal_da ||
            spec_.family == Family::periodic_fair_da) {
            if (spec_.family == Family::optimal_da && spec_.payout != "pooled" &&
                spec_.payout != "individual")
                throw ValidationError("optimal-da payout must be 'pooled' or 'individual'");
        }
        if (spec_.family == Family::da_dominating_dc) {
            if (!spec_.base.empty() && spec_.base.size() != pool_.size())
                throw ValidationError("one base drawdown per participant");
            for (std::size_t i = 0; i < pool_.size(); ++i)
                base_.push_back(spec_.base.empty() ? dc_drawdown(g.members[i], 1.0, econ_) : spec_.base[i]);
        }
    }

    PeriodPlan plan_period(const PoolState& state) const override {
        PeriodPlan plan;
        const auto& g = pool_.mortality;
        double T = state.time;
        auto alive = alive_mask(state);
        plan.survivors = state.alive_indices();
        std::size_t m = plan.survivors.size();
        plan.payouts.resize(state.size());
        double lambda_total = 0.0;
        bool constant = true;
        for (int i : plan.survivors) {
            const auto& h = g.members[static_cast<std::size_t>(i)];
            constant = constant && h.is_constant();
            lambda_total += h.hazard(T);
        }

        std::vector<double> theta(state.size(), std::numeric_limits<double>::quiet_NaN());
        bool exponential = true;
        switch (spec_.family) {
            case Family::periodic_fair_da:
                if (m == 2) {
                    std::vector<double> bal{state.accounts[static_cast<std::size_t>(plan.survivors[0])].cash_value,
                                            state.accounts[static_cast<std::size_t>(plan.survivors[1])].cash_value};
                    GroupMortality pair{{g.members[static_cast<std::size_t>(plan.survivors[0])],
                                         g.members[static_cast<std::size_t>(plan.survivors[1])]}};
                    double rmax = two_peer_rho_max(pair, bal, T);
                    auto cal = calibrate_two_peer(pair, bal, spec_.two_peer_rho_fraction * rmax, T);
                    theta[static_cast<std::size_t>(plan.survivors[0])] = cal.theta[0];
                    theta[static_cast<std::size_t>(plan.survivors[1])] = cal.theta[1];
                } else {
                    for (int i : plan.survivors) {
                        auto ii = static_cast<std::size_t>(i);
                        theta[ii] = spec_.theta.empty()
                                        ? econ_.delta + g.members[ii].constant_rate() / econ_.gamma
                                        : spec_.theta[ii];
                    }
                }
                break;
            case Family::two_peer_da:
                for (int i : plan.survivors) theta[static_cast<std::size_t>(i)] = spec_.theta[static_cast<std::size_t>(i)];
                break;
            case Family::optimal_da:
            case Family::da_dominating_dc:
                if (constant && econ_.gamma > 0.0 && spec_.base.empty()) {
                    for (int i : plan.survivors) {
                        auto ii = static_cast<std::size_t>(i);
                        double lam = (spec_.family == Family::optimal_da && spec_.payout == "pooled")
                                         ? lambda_total
                                         : g.members[ii].constant_rate();
                        theta[ii] = econ_.delta + lam / econ_.gamma;
                    }
                } else if (econ_.gamma == 0.0) {
                    for (int i : plan.survivors) theta[static_cast<std::size_t>(i)] = kInf;
                } else {
                    exponential = false;
                }
                break;
            default:
                throw ValidationError("not a periodic family");
        }

        if (exponential) {
            for (int i : plan.survivors) {
                auto ii = static_cast<std::size_t>(i);
                plan.payouts[ii] = exponential_payout(state.accounts[ii].cash_value, theta[ii], econ_.delta, T);
            }
        } else if (spec_.family == Family::optimal_da && spec_.payout == "pooled") {
            auto unit = optimal_da_payout(g, econ_, T, alive).unit;
            for (int i : plan.survivors)
                plan.payouts[static_cast<std::size_t>(i)] = unit.scaled(state.accounts[static_cast<std::size_t>(i)].cash_value);
        } else {
            for (int i : plan.survivors) {
                auto ii = static_cast<std::size_t>(i);
                PayoutCurve unit;
                if (spec_.family == Family::da_dominating_dc) {
                    unit = tail_from(base_[ii], T);
                    unit = unit.scaled(1.0 / present_value_at(unit, T, econ_.delta));
                } else {
                    std::vector<bool> solo(state.size(), false);
                    solo[ii] = true;
                    unit = optimal_da_payout(g, econ_, T, solo).unit;
                }
                plan.payouts[ii] = unit.scaled(state.accounts[ii].cash_value);
            }
        }

        if (m < 2) return plan;
        plan.weights.resize(m);
        for (std::size_t a = 0; a < m; ++a) {
            auto ii = static_cast<std::size_t>(plan.survivors[a]);
            double bal = state.accounts[ii].cash_value;
            if (exponential && constant)
                plan.weights[a] = ls_weight_constant(g.members[ii].constant_rate(), bal, theta[ii], lambda_total);
            else
                plan.weights[a] = period_weight(g, alive, plan.survivors[a], bal, plan.payouts[ii], T, econ_.delta);
            plan.weights[a] = std::max(0.0, plan.weights[a]);
        }
        if (m == 2) {
            plan.alpha = solve_alpha(plan.weights);
            return plan;
        }
        FeasibilityReport fr = feasibility(plan.weights);
        if (!fr.pass) {
            std::string msg = "transfer weights infeasible at t=" + fmt(T) + ": " + fr.violated;
            if (spec_.on_infeasible == InfeasiblePolicy::abort) throw InfeasibleError(msg, fr.violating_index);
            plan.dissolve = true;
            plan.reason = msg;
            return plan;
        }
        plan.alpha = solve_alpha(plan.weights);
        plan.alpha->survivors = plan.survivors;
        plan.alpha->asof = T;
        return plan;
    }

private:
    std::vector<PayoutCurve> base_;
};

class InstantaneousFairScheme : public Scheme {
public:
    InstantaneousFairScheme(SchemeSpec spec, Pool pool, Economics econ)
        : Scheme(std::move(spec), std::move(pool), econ) {
        if (spec_.dissolution != Dissolution::dissolve_at_two_survivors)
            throw ValidationError("instantaneous-fair-da requires dissolution = dissolve-at-two-survivors");
    }

    PeriodPlan plan_period(const PoolState& state) const override {
        PeriodPlan plan;
        double T = state.time;
        plan.survivors = state.alive_indices();
        plan.payouts.resize(state.size());
        for (int i : plan.survivors) {
            auto ii = static_cast<std::size_t>(i);
            const HazardModel& h = pool_.mortality.members[ii];
            double bal = state.accounts[ii].cash_value;
            plan.weights.push_back(bal);
            GroupMortality solo{{h}};
            for (const auto& s : group_segments(solo, {true}, T)) {
                double scale = bal * s.rate * std::exp(-s.cum + econ_.delta * (s.start - T));
                plan.payouts[ii].pieces.push_back({s.start, s.end, scale, s.rate - econ_.delta});
            }
        }
        return plan;
    }

    DeathOutcome on_death(const PoolState& state, const PeriodPlan& plan, int deceased) const override {
        DeathOutcome out;
        std::size_t m = plan.survivors.size();
        if (state.alive_count() <= 1) {
            out.event = residue_event(state, deceased);
            return out;
        }
        double T0 = state.time;
        double start = plan.start;
        std::vector<double> w(m);
        for (std::size_t a = 0; a < m; ++a) {
            auto ii = static_cast<std::size_t>(plan.survivors[a]);
            w[a] = plan.weights[a] * pool_.mortality.members[ii].conditional_density(start, T0);
        }
        TransferMatrix alpha;
        if (m == 2) {
            alpha = solve_alpha(w);
        } else if (feasibility(w).pass) {
            alpha = solve_alpha(w);
        } else {
            alpha = solve_alpha_unconstrained(w);
            out.improper = alpha.min_entry() < 0.0;
            out.flag = "instantaneous weights infeasible at t=" + fmt(T0);
        }
        out.event = make_death_event(state, deceased, shares_from(alpha, plan.survivors, deceased));
        return out;
    }
};

class EquitableTontineScheme : public Scheme {
public:
    EquitableTontineScheme(SchemeSpec spec, Pool pool, Economics econ)
        : Scheme(std::move(spec), std::move(pool), econ) {
        if (spec_.pi.empty()) spec_.pi.assign(pool_.size(), 1.0);
        if (spec_.pi.size() != pool_.size()) throw ValidationError("one tontine weight per participant");
        double pv = schedule_present_value(spec_.d, econ_.delta);
        if (std::abs(pv - 1.0) > 1e-8)
            throw ValidationError("payout schedule d(.) not normalized: present value " + fmt(pv));
        total_ = std::accumulate(pool_.deposits.begin(), pool_.deposits.end(), 0.0);
    }

    std::vector<double> initial_transfers() const override {
        std::vector<double> e0(pool_.size(), 0.0);
        if (!spec_.rebalance) return e0;
        auto share = shares(std::vector<bool>(pool_.size(), true));
        for (std::size_t i = 0; i < e0.size(); ++i) e0[i] = share[i] * total_ - pool_.deposits[i];
        return e0;
    }

    PeriodPlan plan_period(const PoolState& state) const override {
        PeriodPlan plan;
        plan.survivors = state.alive_indices();
        plan.payouts.resize(state.size());
        auto share = shares(alive_mask(state));
        PayoutCurve d;
        d.pieces = spec_.d;
        d = tail_from(d, state.time);
        for (int i : plan.survivors) {
            auto ii = static_cast<std::size_t>(i);
            plan.payouts[ii] = d.scaled(share[ii] * total_);
        }
        return plan;
    }

    DeathOutcome on_death(const PoolState& state, const PeriodPlan& plan, int deceased) const override {
        (void)plan;
        DeathOutcome out;
        if (state.alive_count() <= 1) {
            out.event = residue_event(state, deceased);
            return out;
        }
        auto after = alive_mask(state);
        after[static_cast<std::size_t>(deceased)] = false;
        auto share = shares(after);
        DeathEvent ev;
        ev.time = state.time;
        ev.deceased = deceased;
        ev.pre_death_balance = state.accounts[static_cast<std::size_t>(deceased)].cash_value;
        double fund = 0.0;
        for (const auto& a : state.accounts)
            if (a.alive) fund += a.cash_value;
        for (std::size_t i = 0; i < state.size(); ++i) {
            if (!after[i]) continue;
            double e = spec_.rebalance ? share[i] * fund - state.accounts[i].cash_value
                                       : share[i] * ev.pre_death_balance;
            ev.transfers.emplace_back(static_cast<int>(i), e);
        }
        out.event = std::move(ev);
        return out;
    }

private:
    std::vector<double> shares(const std::vector<bool>& alive) const {
        std::vector<double> out(pool_.size(), 0.0);
        double denom = 0.0;
        for (std::size_t i = 0; i < pool_.size(); ++i)
            if (alive[i]) denom += spec_.pi[i] * pool_.deposits[i];
        for (std::size_t i = 0; i < pool_.size(); ++i)
            if (alive[i] && denom > 0.0) out[i] = spec_.pi[i] * pool_.deposits[i] / denom;
        return out;
    }

    double total_ = 0.0;
};

class GsaScheme : public Scheme {
public:
    GsaScheme(SchemeSpec spec, Pool pool, Economics econ)
        : Scheme(std::move(spec), std::move(pool), econ) {
        gsa_plan(pool_, econ_);
        r0_ = gsa_r0(pool_.mortality.members[0], pool_.deposits[0], econ_.delta);
    }

    PeriodPlan plan_period(const PoolState& state) const override {
        PeriodPlan plan;
        plan.survivors = state.alive_indices();
        plan.payouts.resize(state.size());
        double n = static_cast<double>(pool_.size());
        double alive = static_cast<double>(plan.survivors.size());
        const HazardModel& h = pool_.mortality.members[0];
        PayoutCurve c;
        double first = std::ceil(state.time);
        double ref = h.survival(first);
        for (double m = first; m < 1e5; m += 1.0) {
            double p = h.survival(m);
            if (p <= 1e-16 * ref * std::exp(econ_.delta * (m - first))) break;
            c.impulses.push_back({m, p * n / alive * r0_});
        }
        for (int i : plan.survivors) plan.payouts[static_cast<std::size_t>(i)] = c;
        return plan;
    }

    DeathOutcome on_death(const PoolState& state, const PeriodPlan& plan, int deceased) const override {
        (void)plan;
        DeathOutcome out;
        int others = state.alive_count() - 1;
        if (others <= 0) {
            out.event = residue_event(state, deceased);
            return out;
        }
        std::vector<std::pair<int, double>> sh;
        for (int i : state.alive_indices())
            if (i != deceased) sh.emplace_back(i, 1.0 / others);
        out.event = make_death_event(state, deceased, sh);
        return out;
    }

private:
    double r0_ = 0.0;
};

class FtpScheme : public Scheme {
public:
    using Scheme::Scheme;

    PeriodPlan plan_period(const PoolState& state) const override {
        PeriodPlan plan;
        plan.survivors = state.alive_indices();
        plan.payouts.resize(state.size());
        return plan;
    }

    DeathOutcome on_death(const PoolState& state, const PeriodPlan& plan, int deceased) const override {
        DeathOutcome out;
        out.pay_transfers = true;
        std::vector<int> surv = state.alive_indices();
        std::size_t m = surv.size();
        if (m <= 1) {
            out.event = residue_event(state, deceased);
            return out;
        }
        std::vector<double> w(m);
        for (std::size_t a = 0; a < m; ++a) {
            auto ii = static_cast<std::size_t>(surv[a]);
            w[a] = pool_.mortality.members[ii].hazard(state.time) * state.accounts[ii].cash_value;
        }
        (void)plan;
        TransferMatrix alpha;
        if (m == 2 || feasibility(w).pass) {
            alpha = solve_alpha(w);
        } else {
            FeasibilityReport fr = feasibility(w);
            std::string msg = "fair transfer weights infeasible at t=" + fmt(state.time) + ": " + fr.violated;
            if (spec_.on_infeasible == InfeasiblePolicy::abort) throw InfeasibleError(msg, fr.violating_index);
            // Proportional split keeps transfers non-negative; the pool then dissolves.
            alpha.m = m;
            alpha.alpha.assign(m * m, 0.0);
            for (std::size_t j = 0; j < m; ++j) {
                double others = 0.0;
                for (std::size_t i = 0; i < m; ++i)
                    if (i != j) others += w[i];
                for (std::size_t i = 0; i < m; ++i)
                    if (i != j) alpha.at(i, j) = others > 0.0 ? w[i] / others : 1.0 / static_cast<double>(m - 1);
            }
            out.dissolve_after = true;
            out.flag = msg;
        }
        out.event = make_death_event(state, deceased, shares_from(alpha, surv, deceased));
        return out;
    }
};

class DcScheme : public Scheme {
public:
    DcScheme(SchemeSpec spec, Pool pool, Economics econ) : Scheme(std::move(spec), std::move(pool), econ) {
        for (std::size_t i = 0; i < pool_.size(); ++i)
            curves_.push_back(dc_drawdown(pool_.mortality.members[i], pool_.deposits[i], econ_));
    }

    bool pooled() const override { return false; }

    PeriodPlan plan_period(const PoolState& state) const override {
        PeriodPlan plan;
        plan.survivors = state.alive_indices();
        plan.payouts.resize(state.size());
        for (int i : plan.survivors) plan.payouts[static_cast<std::size_t>(i)] = curves_[static_cast<std::size_t>(i)];
        return plan;
    }

    DeathOutcome on_death(const PoolState& state, const PeriodPlan& plan, int deceased) const override {
        (void)plan;
        DeathOutcome out;
        out.event = residue_event(state, deceased);
        return out;
    }

private:
    std::vector<PayoutCurve> curves_;
};

}  // namespace

std::unique_ptr<Scheme> build_scheme(const SchemeSpec& spec, const Pool& pool, const Economics& econ) {
    if (pool.size() == 0) throw ValidationError("pool is empty");
    switch (spec.family) {
        case Family::optimal_da:
        case Family::periodic_fair_da:
        case Family::two_peer_da:
        case Family::da_dominating_dc:
            return std::make_unique<PeriodicScheme>(spec, pool, econ);
        case Family::instantaneous_fair_da:
            return std::make_unique<InstantaneousFairScheme>(spec, pool, econ);
        case Family::equitable_tontine:
            return std::make_unique<EquitableTontineScheme>(spec, pool, econ);
        case Family::gsa:
            return std::make_unique<GsaScheme>(spec, pool, econ);
        case Family::ftp:
            return std::make_unique<FtpScheme>(spec, pool, econ);
        case Family::dc_drawdown:
            return std::make_unique<DcScheme>(spec, pool, econ);
    }
    throw ValidationError("unknown family");
}

}  // namespace da
