#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "da/payout.hpp"

namespace da {

enum class BalancePolicy { reject, permit };

struct Account {
    double deposit = 0.0;
    double cash_value = 0.0;
    double cumulative_discounted_payment = 0.0;
    bool alive = true;
    double death_time = std::numeric_limits<double>::infinity();
    double initial_transfer = 0.0;
    // sum_k e_i^{(k)} e^{-delta T_k}
    double discounted_transfers = 0.0;
    double min_transfer = 0.0;
    double min_balance = 0.0;
    double min_discounted_balance = 0.0;
    // Payments through the scheme end plus balance held then, discounted to 0.
    double entitlement = std::numeric_limits<double>::quiet_NaN();
};

struct DeathEvent {
    double time = 0.0;
    int deceased = -1;
    double pre_death_balance = 0.0;
    std::vector<std::pair<int, double>> transfers;
    // Amount leaving the pool (estate of an unpooled account, or residue with no survivors).
    double forfeited = 0.0;
};

enum class EventType { accrue, initial_transfer, death, transfer, payment, lump_sum, forfeit };
const char* to_string(EventType t);

struct LogEvent {
    double t = 0.0;
    EventType type = EventType::accrue;
    int participant = -1;
    double amount = 0.0;
    std::vector<double> balances_after;
};

// Discounted balance left after paying `paid`; differences below rounding are zero.
double remaining(double discounted_balance, double paid);

class PoolState {
public:
    PoolState() = default;
    PoolState(const std::vector<double>& deposits, double delta,
              BalancePolicy policy = BalancePolicy::reject, bool keep_log = false);

    double time = 0.0;
    double delta = 0.0;
    int death_count = 0;
    BalancePolicy policy = BalancePolicy::reject;
    bool keep_log = false;
    std::vector<Account> accounts;
    std::vector<DeathEvent> deaths;
    std::vector<LogEvent> log;
    // Current payout per participant; empty curve means no payment.
    std::vector<PayoutCurve> payouts;
    // Discounted value that left the pool without being paid to a member.
    double discounted_forfeits = 0.0;
    bool ended = false;
    double end_time = std::numeric_limits<double>::infinity();
    double entitlement_time = std::numeric_limits<double>::quiet_NaN();

    std::size_t size() const { return accounts.size(); }
    double pool_size() const;
    double tolerance() const { return 1e-9 * pool_size(); }
    int alive_count() const;
    std::vector<int> alive_indices() const;
    std::vector<double> balances() const;
    // Discounted payments + discounted live balances + discounted forfeits.
    double discounted_total() const;

    void set_payouts(std::vector<PayoutCurve> curves);
    void accrue(double to);
    void apply_initial_transfers(const std::vector<double>& e0);
    void apply_death(const DeathEvent& event);
    // Pays an amount out of participant i's balance at the current time.
    void pay(int i, double amount, EventType type = EventType::payment);
    void pay_lump_sum(int i);
    // Records the Axiom 1 entitlement snapshot for all live participants.
    void snapshot_entitlements();
    void end_scheme();

private:
    void checkpoint(int i);
    void record(EventType type, int participant, double amount);
};

PoolState accrue(PoolState state, double to);
PoolState apply_initial_transfers(PoolState state, const std::vector<double>& e0);
PoolState apply_death(PoolState state, const DeathEvent& event);

// Builds the event for deceased j with e_i = share_i * pre-death balance.
DeathEvent make_death_event(const PoolState& state, int deceased,
                            const std::vector<std::pair<int, double>>& shares);

struct AxiomReport {
    int axiom = 0;
    bool pass = true;
    double worst = 0.0;  // most negative margin
    int witness = -1;
    double witness_time = std::numeric_limits<double>::quiet_NaN();
    // Axiom 1 details
    double lifetime_payments = std::numeric_limits<double>::quiet_NaN();
    double deposit = std::numeric_limits<double>::quiet_NaN();
    double transfer_sum = std::numeric_limits<double>::quiet_NaN();
    std::string detail;
};

AxiomReport audit_axiom1(const PoolState& history);
AxiomReport audit_axiom2(const PoolState& state);
AxiomReport audit_axiom3(const PoolState& history);
bool is_proper(const PoolState& history);
// |discounted_total - sum of deposits| relative to pool size.
double conservation_error(const PoolState& state);

void write_event_log(const PoolState& state, std::ostream& out);

}  // namespace da
