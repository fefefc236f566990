#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "da/engine.hpp"
#include "da/schemes.hpp"

namespace da {

enum class EngineChoice { automatic, full, cohort };

struct SimulationConfig {
    Pool pool;
    SchemeSpec scheme;
    Economics econ;
    double horizon = 30.0;
    // Evaluation times; empty means 0, grid_step, ..., horizon.
    std::vector<double> grid;
    double grid_step = 0.25;
    std::size_t n_paths = 100000;
    std::uint64_t seed = 0;
    // Participants whose payment streams are summarized.
    std::vector<int> tracked{0};
    bool utility = true;
    // Keep per-grid quantile series; off when only counters are needed.
    bool summaries = true;
    // Count (path, time) points where a tracked rate falls below its DC drawdown.
    bool dc_dominance = false;
    // Run the ledger axiom audits on every path.
    bool audit = false;
    EngineChoice engine = EngineChoice::automatic;
    // 0 reads DA_ENGINE_THREADS, else hardware concurrency.
    unsigned threads = 0;

    std::vector<double> evaluation_grid() const;
    void validate() const;
};

struct Band {
    double q10 = 0.0;
    double q50 = 0.0;
    double q90 = 0.0;
    double mean = 0.0;
    std::size_t n_effective = 0;
};

// metric: payments, utility, payments_alive, utility_alive.
struct Series {
    int participant = 0;
    std::string metric;
    std::vector<Band> bands;  // one per grid time
};

struct AuditCounts {
    std::size_t axiom1_fail = 0;
    std::size_t axiom2_fail = 0;
    std::size_t axiom3_fail = 0;
    double worst_conservation = 0.0;
};

struct PathStats {
    std::vector<double> grid;
    std::vector<Series> series;
    std::size_t n_paths = 0;
    std::size_t flagged = 0;
    std::size_t improper = 0;
    std::size_t aborted = 0;
    std::vector<std::string> sample_flags;
    std::optional<AuditCounts> audits;
    std::size_t dominance_points = 0;
    std::size_t dominance_violations = 0;
    bool cohort_engine = false;
    unsigned threads = 1;

    const Series& find(int participant, const std::string& metric) const;
};

// Aggregated engine for pools made of identical-member cohorts with constant forces and
// exponential payouts. Tracks one balance per cohort and hands over to the full engine
// when three or fewer survivors remain or the closed-form transfer solution is unavailable.
class CohortEngine {
public:
    static std::optional<CohortEngine> build(const Scheme& scheme);

    PathResult run(const std::vector<Death>& deaths, const PathOptions& options) const;
    std::size_t cohorts() const { return lambda_.size(); }

private:
    CohortEngine(const Scheme& scheme) : scheme_(&scheme) {}

    const Scheme* scheme_;
    std::vector<int> cohort_of_;
    std::vector<double> lambda_;
    std::vector<double> deposit_;
    std::vector<double> theta_;  // NaN when the pooled optimal rate applies
    std::vector<int> size_;
};

unsigned engine_threads(unsigned requested = 0);

// Runs body(path) for path in [0, n) on a worker pool; results must be written by index.
void parallel_paths(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body,
                    std::size_t chunk = 256);

// Per-path driver shared by the estimators; picks the cohort engine when eligible.
class PathSimulator {
public:
    PathSimulator(const Scheme& scheme, EngineChoice choice = EngineChoice::automatic);

    bool cohort() const { return cohort_.has_value(); }
    // Deaths drawn from the Philox stream of (seed, path).
    PathResult simulate(std::uint64_t seed, std::uint64_t path, const PathOptions& options) const;
    PathResult simulate(const std::vector<Death>& deaths, const PathOptions& options) const;

private:
    const Scheme* scheme_;
    std::optional<CohortEngine> cohort_;
};

PathStats run(const SimulationConfig& config);

// Deterministic DC drawdown stream of one participant, stopped at death.
PaymentTrace dc_trace(const HazardModel& model, double deposit, const Economics& econ,
                      double death_time);

struct DominanceReport {
    std::size_t points = 0;
    std::size_t violations = 0;
    double fraction = 0.0;
    // Mean discounted utility to the horizon while the DA pays continuously, per tracked
    // participant; the DC stream is cut at the same time.
    std::vector<double> da_utility;
    std::vector<double> dc_utility;
    bool utility_ordering = true;
};
DominanceReport compare_da_dc(const SimulationConfig& config);

double band_width(const PathStats& stats, int participant, const std::string& metric, double t);

struct NarrowingReport {
    std::vector<double> grid;
    std::vector<double> small_width;
    std::vector<double> large_width;
    // Never wider at a positive grid time and strictly narrower at the last one.
    bool narrower = true;
};
NarrowingReport band_narrowing(const PathStats& small, int small_participant, const PathStats& large,
                               int large_participant, const std::string& metric = "payments");


}  // namespace da
