#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace da {

// Piecewise-constant force of mortality. rates_[k] applies on
// [breaks_[k], breaks_[k+1]); the last rate extends to infinity.
class HazardModel {
public:
    enum class Kind { constant, piecewise, tabular };

    static HazardModel constant(double rate);
    static HazardModel piecewise(std::vector<double> breaks, std::vector<double> rates);
    // qx[k] is the probability of dying in year k given alive at its start.
    static HazardModel tabular(const std::vector<double>& qx);
    // CSV with header `age,qx`; rows from entry_age onward, t = 0 at entry_age.
    static HazardModel from_life_table(const std::string& path, double entry_age);
    static HazardModel parse_life_table(std::string_view csv, double entry_age);

    Kind kind() const { return kind_; }
    bool is_constant() const { return rates_.size() == 1; }
    double constant_rate() const { return rates_.front(); }
    const std::vector<double>& breaks() const { return breaks_; }
    const std::vector<double>& rates() const { return rates_; }

    double hazard(double t) const;
    double cumulative_hazard(double t) const;
    double survival(double t) const;
    // P{tau > t | tau > asof}
    double survival(double asof, double t) const;
    double density(double t) const;
    double conditional_density(double asof, double t) const;
    // Time at which cumulative hazard reaches h; infinity if never.
    double inverse_cumulative_hazard(double h) const;
    // Death time for uniform u, conditional on survival to asof.
    double sample(double u, double asof = 0.0) const;

private:
    HazardModel(Kind kind, std::vector<double> breaks, std::vector<double> rates);
    std::size_t segment(double t) const;

    Kind kind_;
    std::vector<double> breaks_;
    std::vector<double> rates_;
    std::vector<double> cum_;  // cumulative hazard at breaks_
};

double survival_prob(const HazardModel& model, double t);
double conditional_density(const HazardModel& model, double asof, double t);

struct Death {
    int participant = 0;
    double time = 0.0;
};

// Independent lifetimes.
struct GroupMortality {
    std::vector<HazardModel> members;

    std::size_t size() const { return members.size(); }
    // Sum of hazards of participants flagged alive.
    double aggregate_hazard(double t, const std::vector<bool>& alive) const;
    bool all_constant() const;
};

// One death time per member by inverse CDF, uniform from (seed, path, participant).
// Sorted by time, ties by participant index.
std::vector<Death> sample_death_times(const GroupMortality& group, std::uint64_t seed,
                                      std::uint64_t path = 0);

// Death times sorted the same way from explicit uniforms (testing hook).
std::vector<Death> death_times_from_uniforms(const GroupMortality& group,
                                             const std::vector<double>& uniforms);

void sort_deaths(std::vector<Death>& deaths);

}  // namespace da
