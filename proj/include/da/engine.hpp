#pragma once

#include <limits>
#include <string>
#include <vector>

#include "da/ledger.hpp"
#include "da/mortality.hpp"
#include "da/schemes.hpp"

namespace da {

enum class JumpKind { impulse, transfer_payment, lump_sum };

struct TraceJump {
    double time = 0.0;
    double amount = 0.0;
    JumpKind kind = JumpKind::impulse;
};

// One participant's payment stream along a path.
struct PaymentTrace {
    std::vector<ExpPiece> pieces;  // clipped to their active period
    std::vector<TraceJump> jumps;
    double death_time = std::numeric_limits<double>::infinity();
    // Time the scheme stopped paying continuously (dissolution or death).
    double active_until = std::numeric_limits<double>::infinity();

    double cumulative_discounted(double t, double delta, bool with_lump_sums = true) const;
    double cumulative_discounted_utility(double t, double delta, double gamma) const;
    double rate(double t) const;
};

struct PathOptions {
    bool keep_log = false;
    // Participants to trace; empty with trace_all = false traces nobody.
    std::vector<int> traced;
    bool trace_all = false;
    // Stop simulating once the next death lies beyond this time.
    double stop_at = std::numeric_limits<double>::infinity();
};

struct PathResult {
    PoolState state;
    std::vector<PaymentTrace> traces;  // indexed by participant; empty if not traced
    bool flagged = false;
    bool improper_transfer = false;
    std::vector<std::string> flags;
    int periods = 0;
};

PathResult run_path(const Scheme& scheme, const std::vector<Death>& deaths,
                    const PathOptions& options = {});
// Continue from an arbitrary state; `deaths` lists only participants alive in `state`.
PathResult continue_path(const Scheme& scheme, PoolState state, const std::vector<Death>& deaths,
                         const PathOptions& options, PathResult partial);

}  // namespace da
