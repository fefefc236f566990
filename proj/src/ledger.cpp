#include "da/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "da/errors.hpp"

namespace da {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

}  // namespace

double remaining(double discounted_balance, double paid) {
    double r = discounted_balance - paid;
    if (std::abs(r) <= 1e-13 * (std::abs(discounted_balance) + std::abs(paid))) return 0.0;
    return r;
}

const char* to_string(EventType t) {
    switch (t) {
        case EventType::accrue: return "accrue";
        case EventType::initial_transfer: return "initial_transfer";
        case EventType::death: return "death";
        case EventType::transfer: return "transfer";
        case EventType::payment: return "payment";
        case EventType::lump_sum: return "lump_sum";
        case EventType::forfeit: return "forfeit";
    }
    return "unknown";
}

PoolState::PoolState(const std::vector<double>& deposits, double delta_, BalancePolicy policy_,
                     bool keep_log_)
    : delta(delta_), policy(policy_), keep_log(keep_log_) {
    if (deposits.empty()) throw ValidationError("pool must have at least one participant");
    if (!std::isfinite(delta)) throw ValidationError("force of interest must be finite");
    for (double s : deposits) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("deposits must be >= 0");
        Account a;
        a.deposit = s;
        a.cash_value = s;
        a.min_balance = s;
        a.min_discounted_balance = s;
        accounts.push_back(a);
    }
    payouts.resize(accounts.size());
}

double PoolState::pool_size() const {
    double sum = 0.0;
    for (const auto& a : accounts) sum += a.deposit;
    return sum > 0.0 ? sum : 1.0;
}

int PoolState::alive_count() const {
    return static_cast<int>(
        std::count_if(accounts.begin(), accounts.end(), [](const Account& a) { return a.alive; }));
}

std::vector<int> PoolState::alive_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < accounts.size(); ++i)
        if (accounts[i].alive) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<double> PoolState::balances() const {
    std::vector<double> out(accounts.size());
    for (std::size_t i = 0; i < accounts.size(); ++i) out[i] = accounts[i].cash_value;
    return out;
}

double PoolState::discounted_total() const {
    double sum = discounted_forfeits;
    double disc = std::exp(-delta * time);
    for (const auto& a : accounts) {
        sum += a.cumulative_discounted_payment;
        if (a.alive) sum += a.cash_value * disc;
    }
    return sum;
}

void PoolState::set_payouts(std::vector<PayoutCurve> curves) {
    if (curves.size() != accounts.size())
        throw ValidationError("one payout curve per participant required");
    payouts = std::move(curves);
}

void PoolState::record(EventType type, int participant, double amount) {
    if (!keep_log) return;
    log.push_back({time, type, participant, amount, balances()});
}

void PoolState::checkpoint(int i) {
    Account& a = accounts[static_cast<std::size_t>(i)];
    a.min_balance = std::min(a.min_balance, a.cash_value);
    double disc = a.cash_value * std::exp(-delta * time);
    a.min_discounted_balance = std::min(a.min_discounted_balance, disc);
    if (policy == BalancePolicy::reject && disc < -tolerance()) {
        throw AxiomViolation("negative balance " + fmt(a.cash_value) + " for participant " +
                             std::to_string(i) + " at t=" + fmt(time));
    }
}

void PoolState::accrue(double to) {
    if (to < time) throw DomainError("accrue: target time precedes current time");
    if (to == time) {
        // Impulses due exactly now are paid on the next positive-length accrual.
        return;
    }
    double from = time;
    double total = 0.0;
    for (std::size_t i = 0; i < accounts.size(); ++i) {
        Account& a = accounts[i];
        if (!a.alive) continue;
        const PayoutCurve& c = payouts[i];
        double paid = 0.0;
        if (!c.empty()) paid = c.discounted_flow(from, to, delta) + c.discounted_impulses(from, to, delta);
        double disc = remaining(a.cash_value * std::exp(-delta * from), paid);
        a.cash_value = disc * std::exp(delta * to);
        a.cumulative_discounted_payment += paid;
        total += paid;
    }
    time = to;
    for (std::size_t i = 0; i < accounts.size(); ++i)
        if (accounts[i].alive) checkpoint(static_cast<int>(i));
    record(EventType::accrue, -1, total);
}

void PoolState::apply_initial_transfers(const std::vector<double>& e0) {
    if (e0.size() != accounts.size()) throw ValidationError("initial transfers: size mismatch");
    double sum = 0.0, scale = 0.0;
    for (double e : e0) {
        sum += e;
        scale += std::abs(e);
    }
    if (std::abs(sum) > tolerance())
        throw ValidationError("initial transfers must sum to zero, got " + fmt(sum));
    for (std::size_t i = 0; i < accounts.size(); ++i) {
        accounts[i].cash_value += e0[i];
        accounts[i].initial_transfer += e0[i];
        accounts[i].min_balance = std::min(accounts[i].min_balance, accounts[i].cash_value);
        if (e0[i] != 0.0) record(EventType::initial_transfer, static_cast<int>(i), e0[i]);
    }
    for (std::size_t i = 0; i < accounts.size(); ++i) checkpoint(static_cast<int>(i));
    (void)scale;
}

void PoolState::apply_death(const DeathEvent& ev) {
    if (ev.deceased < 0 || static_cast<std::size_t>(ev.deceased) >= accounts.size())
        throw ValidationError("death: participant index out of range");
    Account& dead = accounts[static_cast<std::size_t>(ev.deceased)];
    if (!dead.alive) throw ValidationError("death: participant already dead");
    if (ev.time < time - 1e-12) throw ValidationError("death: time precedes ledger time");
    if (ev.time > time) accrue(ev.time);
    double tol = tolerance();
    if (std::abs(ev.pre_death_balance - dead.cash_value) > tol)
        throw ValidationError("death: pre-death balance does not match ledger");
    double sum = ev.forfeited;
    for (const auto& [i, e] : ev.transfers) {
        if (i == ev.deceased || i < 0 || static_cast<std::size_t>(i) >= accounts.size() ||
            !accounts[static_cast<std::size_t>(i)].alive)
            throw ValidationError("death: transfer to a non-survivor");
        sum += e;
    }
    if (std::abs(sum - dead.cash_value) > tol)
        throw ValidationError("clearing violated: transfers " + fmt(sum) + " vs balance " +
                              fmt(dead.cash_value));
    double disc = std::exp(-delta * time);
    dead.alive = false;
    dead.death_time = time;
    dead.cash_value = 0.0;
    ++death_count;
    record(EventType::death, ev.deceased, ev.pre_death_balance);
    // Residual rounding from the clearing check goes to the forfeited bucket.
    discounted_forfeits += (ev.pre_death_balance - (sum - ev.forfeited)) * disc;
    if (ev.forfeited != 0.0) record(EventType::forfeit, ev.deceased, ev.forfeited);
    for (const auto& [i, e] : ev.transfers) {
        Account& a = accounts[static_cast<std::size_t>(i)];
        a.cash_value += e;
        a.discounted_transfers += e * disc;
        a.min_transfer = std::min(a.min_transfer, e);
        record(EventType::transfer, i, e);
    }
    for (const auto& [i, e] : ev.transfers) checkpoint(i);
    deaths.push_back(ev);
}

void PoolState::pay(int i, double amount, EventType type) {
    Account& a = accounts[static_cast<std::size_t>(i)];
    if (!a.alive) throw ValidationError("payment to a dead participant");
    a.cash_value -= amount;
    a.cumulative_discounted_payment += amount * std::exp(-delta * time);
    record(type, i, amount);
    checkpoint(i);
}

void PoolState::pay_lump_sum(int i) {
    pay(i, accounts[static_cast<std::size_t>(i)].cash_value, EventType::lump_sum);
    accounts[static_cast<std::size_t>(i)].cash_value = 0.0;
}

void PoolState::snapshot_entitlements() {
    if (!std::isnan(entitlement_time)) return;
    entitlement_time = time;
    double disc = std::exp(-delta * time);
    for (auto& a : accounts)
        if (a.alive) a.entitlement = a.cumulative_discounted_payment + a.cash_value * disc;
}

void PoolState::end_scheme() {
    snapshot_entitlements();
    ended = true;
    end_time = time;
}

PoolState accrue(PoolState state, double to) {
    state.accrue(to);
    return state;
}

PoolState apply_initial_transfers(PoolState state, const std::vector<double>& e0) {
    state.apply_initial_transfers(e0);
    return state;
}

PoolState apply_death(PoolState state, const DeathEvent& event) {
    state.apply_death(event);
    return state;
}

DeathEvent make_death_event(const PoolState& state, int deceased,
                            const std::vector<std::pair<int, double>>& shares) {
    DeathEvent ev;
    ev.time = state.time;
    ev.deceased = deceased;
    ev.pre_death_balance = state.accounts[static_cast<std::size_t>(deceased)].cash_value;
    for (const auto& [i, a] : shares) ev.transfers.emplace_back(i, a * ev.pre_death_balance);
    if (shares.empty()) ev.forfeited = ev.pre_death_balance;
    return ev;
}

AxiomReport audit_axiom1(const PoolState& h) {
    AxiomReport r;
    r.axiom = 1;
    // Longest-lived participant; ties resolved toward the highest index (last to die).
    int last = -1;
    double best = -kInf;
    for (std::size_t i = 0; i < h.accounts.size(); ++i) {
        if (h.accounts[i].death_time >= best) {
            best = h.accounts[i].death_time;
            last = static_cast<int>(i);
        }
    }
    const Account& a = h.accounts[static_cast<std::size_t>(last)];
    r.witness = last;
    r.witness_time = h.entitlement_time;
    r.deposit = a.deposit;
    r.lifetime_payments = std::isnan(a.entitlement) ? a.cumulative_discounted_payment
                                                    : a.entitlement;
    r.transfer_sum = a.initial_transfer + a.discounted_transfers;
    r.worst = r.lifetime_payments - a.deposit;
    r.pass = r.worst >= -1e-9 * std::max(a.deposit, 1e-300);
    std::ostringstream os;
    os.precision(12);
    os << "last survivor " << last << ": discounted payments " << r.lifetime_payments
       << (r.pass ? " >= " : " < ") << "deposit " << a.deposit;
    r.detail = os.str();
    return r;
}

AxiomReport audit_axiom2(const PoolState& s) {
    AxiomReport r;
    r.axiom = 2;
    double tol = s.tolerance();
    // Judged on discounted balances so that rounding is not amplified by e^{delta t}.
    double worst_disc = kInf;
    for (std::size_t i = 0; i < s.accounts.size(); ++i) {
        const Account& a = s.accounts[i];
        double d = std::min(a.min_discounted_balance,
                            a.alive ? a.cash_value * std::exp(-s.delta * s.time) : kInf);
        if (r.witness < 0 || d < worst_disc) {
            worst_disc = d;
            r.witness = static_cast<int>(i);
            r.worst = std::min(a.min_balance, a.alive ? a.cash_value : kInf);
        }
    }
    r.pass = worst_disc >= -tol;
    std::ostringstream os;
    os.precision(12);
    os << "minimum balance " << r.worst << " (participant " << r.witness << ")";
    r.detail = os.str();
    return r;
}

AxiomReport audit_axiom3(const PoolState& h) {
    AxiomReport r;
    r.axiom = 3;
    double tol = h.tolerance();
    for (std::size_t i = 0; i < h.accounts.size(); ++i) {
        const Account& a = h.accounts[i];
        double margin = std::min(a.min_transfer, -std::abs(a.initial_transfer));
        if (r.witness < 0 || margin < r.worst) {
            r.worst = margin;
            r.witness = static_cast<int>(i);
        }
    }
    r.pass = r.worst >= -tol;
    std::ostringstream os;
    os.precision(12);
    os << "most negative transfer or nonzero inception transfer " << r.worst << " (participant "
       << r.witness << ")";
    r.detail = os.str();
    return r;
}

bool is_proper(const PoolState& h) { return audit_axiom3(h).pass; }

double conservation_error(const PoolState& s) {
    double deposits = 0.0;
    for (const auto& a : s.accounts) deposits += a.deposit;
    return std::abs(s.discounted_total() - deposits) / s.pool_size();
}

void write_event_log(const PoolState& state, std::ostream& out) {
    for (const auto& e : state.log) {
        nlohmann::json j;
        j["t"] = e.t;
        j["type"] = to_string(e.type);
        j["participant"] = e.participant;
        j["amount"] = e.amount;
        j["balances_after"] = e.balances_after;
        out << j.dump() << '\n';
    }
}

}  // namespace da
