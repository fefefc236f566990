#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "da/ledger.hpp"
#include "da/mortality.hpp"
#include "da/payout.hpp"
#include "da/transfers.hpp"

namespace da {

enum class Family {
    optimal_da,
    periodic_fair_da,
    instantaneous_fair_da,
    two_peer_da,
    da_dominating_dc,
    dc_drawdown,
    equitable_tontine,
    gsa,
    ftp,
};

enum class Dissolution {
    last_survivor_lump_sum,
    dissolve_at_two_survivors,
    dissolve_at_first_death,
    // Lone survivor keeps drawing; balance left at death is forfeited.
    last_survivor_continues,
};

enum class InfeasiblePolicy { dissolve, abort };

const char* to_string(Family f);
const char* to_string(Dissolution d);
Family parse_family(const std::string& s);
Dissolution parse_dissolution(const std::string& s);
Dissolution default_dissolution(Family f);

struct Economics {
    double delta = 0.0;
    // Risk aversion; 0 is risk neutral, infinity is interest-only.
    double gamma = 1.0;
};

struct Pool {
    GroupMortality mortality;
    std::vector<double> deposits;

    std::size_t size() const { return deposits.size(); }
};

struct SchemeSpec {
    Family family = Family::optimal_da;
    Dissolution dissolution = Dissolution::last_survivor_lump_sum;
    InfeasiblePolicy on_infeasible = InfeasiblePolicy::dissolve;
    BalancePolicy balance_policy = BalancePolicy::reject;

    // periodic-fair-da / two-peer-da: discounted-balance decay rates per participant.
    // Empty for periodic-fair-da means delta + lambda_i / gamma.
    std::vector<double> theta;
    // optimal-da: "pooled" (common rate from the survivor set) or "individual".
    std::string payout = "pooled";
    // two-peer-da risk-share level, and the fraction of its upper bound used by
    // periodic-fair-da once two survivors remain.
    double rho = std::numeric_limits<double>::quiet_NaN();
    double two_peer_rho_fraction = 0.5;
    // equitable-tontine
    std::vector<double> pi;
    std::vector<ExpPiece> d;  // total payout schedule per unit of pooled deposit
    bool rebalance = true;
    // da-dominating-dc: base drawdowns per unit deposit; empty means the optimal DC drawdown.
    std::vector<PayoutCurve> base;
};

struct OptimalPayout {
    double nu = 0.0;
    // Payout per unit of period-start balance, absolute time.
    PayoutCurve unit;
    bool closed_form = true;
    // Properness: lambda_i s_i <= sum_{j != i} lambda_j s_j.
    bool proper = true;
    int violating = -1;
};

// Normalized optimal payout r^k(u) = nu (_u p^k)^{1/gamma} for the survivor set `alive`
// from `asof`. Closed form for piecewise-constant hazards.
OptimalPayout optimal_da_payout(const GroupMortality& group, const Economics& econ, double asof,
                                const std::vector<bool>& alive,
                                const std::vector<double>& balances = {});
// Same normalization by adaptive quadrature of the group survival function.
double optimal_da_nu_numeric(const GroupMortality& group, const Economics& econ, double asof,
                             const std::vector<bool>& alive);
// q = Lambda / (delta + (1 + 1/gamma) Lambda), expected fraction paid in a period (constant force).
double optimal_da_period_fraction(double lambda_total, const Economics& econ);

// Optimal DC drawdown c(t) = kappa (_t p_0)^{1/gamma} s with int e^{-delta t} c = s.
PayoutCurve dc_drawdown(const HazardModel& model, double deposit, const Economics& econ);

// Exponential payout with discounted-balance decay theta from `start`.
PayoutCurve exponential_payout(double balance, double theta, double delta, double start);

// LS weight: E[discounted remaining balance at death; participant i dies first].
double ls_weight_constant(double lambda_i, double balance, double theta, double lambda_total);
// General hazards: quadrature of the balance path implied by `curve` over [asof, inf).
double period_weight(const GroupMortality& group, const std::vector<bool>& alive, int i,
                     double balance, const PayoutCurve& curve, double asof, double delta);

struct TwoPeerCalibration {
    double rho_max = 0.0;
    std::vector<double> theta;  // infinity means immediate refund
};
TwoPeerCalibration calibrate_two_peer(const GroupMortality& group,
                                      const std::vector<double>& balances, double rho,
                                      double asof = 0.0);
double two_peer_rho_max(const GroupMortality& group, const std::vector<double>& balances,
                        double asof = 0.0);

// Spec builders. Each validates its parameter domain.
SchemeSpec make_optimal_da(const std::string& payout = "pooled",
                           Dissolution dissolution = Dissolution::dissolve_at_first_death);
SchemeSpec make_periodic_fair_da(std::vector<double> theta = {},
                                 Dissolution dissolution = Dissolution::last_survivor_lump_sum);
SchemeSpec make_instantaneous_fair_da();
SchemeSpec two_peer_periodic(const Pool& pool, double rho);
SchemeSpec da_dominating_dc(const Pool& pool, const Economics& econ,
                            const std::vector<PayoutCurve>& base = {});
SchemeSpec make_dc_drawdown();
SchemeSpec equitable_tontine(const Pool& pool, const Economics& econ, std::vector<double> pi,
                             std::vector<ExpPiece> d, bool rebalance = true,
                             Dissolution dissolution = Dissolution::last_survivor_lump_sum);
SchemeSpec gsa_plan(const Pool& pool, const Economics& econ);
SchemeSpec ftp_plan(const Pool& pool,
                    Dissolution dissolution = Dissolution::dissolve_at_two_survivors);

// d(t) = rate on [0, horizon).
std::vector<ExpPiece> constant_schedule(double rate, double horizon);
// Step function: values[k] on [times[k], times[k+1]).
std::vector<ExpPiece> tabulated_schedule(const std::vector<double>& times,
                                         const std::vector<double>& values);
double schedule_present_value(const std::vector<ExpPiece>& d, double delta, double from = 0.0);

double gsa_r0(const HazardModel& model, double s0, double delta);

struct PeriodPlan {
    double start = 0.0;
    std::vector<PayoutCurve> payouts;
    bool dissolve = false;
    std::string reason;
    std::vector<int> survivors;
    std::vector<double> weights;
    std::optional<TransferMatrix> alpha;
};

struct DeathOutcome {
    DeathEvent event;
    // Transfers are paid out immediately (FTP).
    bool pay_transfers = false;
    bool dissolve_after = false;
    bool improper = false;
    std::string flag;
};

class Scheme {
public:
    Scheme(SchemeSpec spec, Pool pool, Economics econ);
    virtual ~Scheme() = default;

    const SchemeSpec& spec() const { return spec_; }
    const Pool& pool() const { return pool_; }
    const Economics& economics() const { return econ_; }
    Family family() const { return spec_.family; }
    Dissolution dissolution() const { return spec_.dissolution; }

    virtual bool pooled() const { return true; }
    virtual std::vector<double> initial_transfers() const;
    virtual PeriodPlan plan_period(const PoolState& state) const = 0;
    // `state` is at T_k-, deceased still alive.
    virtual DeathOutcome on_death(const PoolState& state, const PeriodPlan& plan,
                                  int deceased) const;

    PoolState initial_state(bool keep_log = false) const;

protected:
    SchemeSpec spec_;
    Pool pool_;
    Economics econ_;
};

std::unique_ptr<Scheme> build_scheme(const SchemeSpec& spec, const Pool& pool,
                                     const Economics& econ);

}  // namespace da
