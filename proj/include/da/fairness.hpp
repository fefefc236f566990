#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "da/montecarlo.hpp"
#include "da/schemes.hpp"

namespace da {

struct ParticipantResidual {
    int participant = 0;
    double target = 0.0;
    double estimate = 0.0;
    double se = 0.0;
    double residual = 0.0;
    bool pass = true;
};

struct FairnessReport {
    std::string notion;
    std::vector<ParticipantResidual> participants;
    double tolerance = 0.0;
    std::size_t n_paths = 0;
    std::size_t flagged = 0;
    bool pass = true;

    // equitability
    double epsilon = std::numeric_limits<double>::quiet_NaN();
    double max_deviation = std::numeric_limits<double>::quiet_NaN();

    // instantaneous: bins [grid[k], grid[k+1]); [participant][bin]
    std::vector<double> grid;
    std::vector<std::vector<double>> payout_rate;
    std::vector<std::vector<double>> forfeit_rate;
    std::vector<std::vector<double>> residual_se;
    double sup_residual = 0.0;
    int sup_participant = -1;
    double sup_time = std::numeric_limits<double>::quiet_NaN();
};

struct FairnessOptions {
    std::size_t n_paths = 100000;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    EngineChoice engine = EngineChoice::automatic;
    // NaN picks the default: 1e-2 of the mean deposit (2e-3 for the instantaneous notion).
    double tolerance = std::numeric_limits<double>::quiet_NaN();
};

// E[discounted lifetime payments] - s_i, lump sums included.
FairnessReport lifetime_fairness(const Scheme& scheme, const FairnessOptions& options);
// Single epsilon minimizing max_i |E[lifetime payments] - (1 - epsilon) s_i|.
FairnessReport equitability_fit(const Scheme& scheme, const FairnessOptions& options);
// Period starting at `start`: E[e^{-delta T}(s_i(T-) - s_i(T) 1{tau_i > T})], T the next death,
// lifetimes resampled conditional on survival to start.time.
FairnessReport periodic_fairness(const Scheme& scheme, const PoolState& start,
                                 const FairnessOptions& options);
// Binned payout rate E[(1/D) int_bin e^{-delta u} dR_i] against forfeiture rate
// E[(1/D) s_i(tau_i-) e^{-delta tau_i} 1{tau_i in bin}]; lump sums excluded.
FairnessReport instantaneous_fairness(const Scheme& scheme, const std::vector<double>& grid,
                                      const FairnessOptions& options);

using Marks = std::array<bool, 3>;
using FairMarks = std::array<bool, 4>;

struct ClassRow {
    std::string plan;
    std::optional<Marks> axioms;          // Axioms 1, 2, 3
    std::optional<FairMarks> fairness;    // equitability, lifetime, periodic, instantaneous
};

// Published row for a plan family; dissolution picks the variant where the tables distinguish.
ClassRow classify(Family family, std::optional<Dissolution> dissolution = std::nullopt);

struct ClassTables {
    std::vector<std::pair<std::string, Marks>> axioms;
    std::vector<std::pair<std::string, FairMarks>> fairness;
};
ClassTables classification_tables();
std::string to_markdown(const ClassTables& tables);
std::string to_markdown(const ClassRow& row);

}  // namespace da
