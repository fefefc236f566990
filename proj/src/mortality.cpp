#include "da/mortality.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "da/errors.hpp"
#include "da/rng.hpp"

namespace da {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// qx = 1 becomes a finite force so densities stay integrable.
constexpr double kCertainDeathForce = 50.0;

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\"");
    auto e = s.find_last_not_of(" \t\r\"");
    if (b == std::string_view::npos) return {};
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

HazardModel::HazardModel(Kind kind, std::vector<double> breaks, std::vector<double> rates)
    : kind_(kind), breaks_(std::move(breaks)), rates_(std::move(rates)) {
    if (breaks_.empty() || breaks_.size() != rates_.size())
        throw ValidationError("hazard: breakpoints and rates must have equal, nonzero length");
    if (breaks_.front() != 0.0) throw ValidationError("hazard: first breakpoint must be 0");
    for (std::size_t k = 0; k < rates_.size(); ++k) {
        if (!(rates_[k] >= 0.0)) throw ValidationError("hazard: rates must be >= 0");
        if (k > 0 && !(breaks_[k] > breaks_[k - 1]))
            throw ValidationError("hazard: breakpoints must increase");
    }
    cum_.resize(breaks_.size());
    cum_[0] = 0.0;
    for (std::size_t k = 1; k < breaks_.size(); ++k)
        cum_[k] = cum_[k - 1] + rates_[k - 1] * (breaks_[k] - breaks_[k - 1]);
}

HazardModel HazardModel::constant(double rate) {
    if (!(rate >= 0.0) || !std::isfinite(rate))
        throw ValidationError("constant force must be finite and >= 0");
    return HazardModel(Kind::constant, {0.0}, {rate});
}

HazardModel HazardModel::piecewise(std::vector<double> breaks, std::vector<double> rates) {
    return HazardModel(Kind::piecewise, std::move(breaks), std::move(rates));
}

HazardModel HazardModel::tabular(const std::vector<double>& qx) {
    if (qx.empty()) throw ValidationError("life table is empty");
    std::vector<double> breaks, rates;
    for (std::size_t k = 0; k < qx.size(); ++k) {
        if (!(qx[k] >= 0.0 && qx[k] <= 1.0)) throw ValidationError("qx must lie in [0, 1]");
        breaks.push_back(static_cast<double>(k));
        rates.push_back(qx[k] >= 1.0 ? kCertainDeathForce : -std::log1p(-qx[k]));
    }
    return HazardModel(Kind::tabular, std::move(breaks), std::move(rates));
}

HazardModel HazardModel::parse_life_table(std::string_view csv, double entry_age) {
    std::istringstream in{std::string(csv)};
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("life table: missing header");
    {
        auto comma = line.find(',');
        if (comma == std::string::npos || trim(line.substr(0, comma)) != "age" ||
            trim(line.substr(comma + 1)) != "qx")
            throw ValidationError("life table: header must be `age,qx`");
    }
    std::vector<double> qx;
    double prev_age = -kInf;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ValidationError("life table: malformed row " + std::to_string(lineno));
        double age = 0.0, q = 0.0;
        try {
            age = std::stod(trim(line.substr(0, comma)));
            q = std::stod(trim(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw ValidationError("life table: non-numeric row " + std::to_string(lineno));
        }
        if (age <= prev_age) throw ValidationError("life table: ages must increase by one");
        if (prev_age != -kInf && age != prev_age + 1.0)
            throw ValidationError("life table: ages must increase by one");
        prev_age = age;
        if (age + 1e-12 >= entry_age) qx.push_back(q);
    }
    if (qx.empty()) throw ValidationError("life table: no rows at or beyond entry age");
    return tabular(qx);
}

HazardModel HazardModel::from_life_table(const std::string& path, double entry_age) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open life table " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_life_table(ss.str(), entry_age);
}

std::size_t HazardModel::segment(double t) const {
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
    return static_cast<std::size_t>(std::distance(breaks_.begin(), it)) - 1;
}

double HazardModel::hazard(double t) const {
    if (t < 0.0) throw DomainError("hazard: negative time");
    return rates_[segment(t)];
}

double HazardModel::cumulative_hazard(double t) const {
    if (t < 0.0 || std::isnan(t)) throw DomainError("cumulative hazard: negative time");
    if (t == kInf) return rates_.back() > 0.0 || cum_.back() == kInf ? kInf : cum_.back();
    std::size_t k = segment(t);
    double dt = t - breaks_[k];
    if (dt == 0.0) return cum_[k];
    return cum_[k] + rates_[k] * dt;
}

double HazardModel::survival(double t) const { return std::exp(-cumulative_hazard(t)); }

double HazardModel::survival(double asof, double t) const {
    if (t < asof) throw DomainError("conditional survival: t < asof");
    double ha = cumulative_hazard(asof);
    if (ha == kInf) throw DomainError("conditional survival: not alive at asof");
    return std::exp(-(cumulative_hazard(t) - ha));
}

double HazardModel::density(double t) const {
    double h = hazard(t);
    if (h == kInf) return kInf;
    double s = survival(t);
    return s == 0.0 ? 0.0 : h * s;
}

double HazardModel::conditional_density(double asof, double t) const {
    if (asof < 0.0) throw DomainError("conditional density: negative asof");
    if (t < asof) throw DomainError("conditional density: t < asof");
    double h = hazard(t);
    double s = survival(asof, t);
    return s == 0.0 ? 0.0 : h * s;
}

double HazardModel::inverse_cumulative_hazard(double h) const {
    if (h <= 0.0) return 0.0;
    auto it = std::upper_bound(cum_.begin(), cum_.end(), h);
    std::size_t k = static_cast<std::size_t>(std::distance(cum_.begin(), it)) - 1;
    if (rates_[k] == kInf) return breaks_[k];
    if (rates_[k] == 0.0) return kInf;
    return breaks_[k] + (h - cum_[k]) / rates_[k];
}

double HazardModel::sample(double u, double asof) const {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("sample: uniform must lie in (0, 1)");
    return inverse_cumulative_hazard(cumulative_hazard(asof) - std::log(u));
}

double survival_prob(const HazardModel& model, double t) {
    if (t < 0.0) throw DomainError("survival_prob: negative time");
    return model.survival(t);
}

double conditional_density(const HazardModel& model, double asof, double t) {
    return model.conditional_density(asof, t);
}

double GroupMortality::aggregate_hazard(double t, const std::vector<bool>& alive) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i)
        if (alive[i]) sum += members[i].hazard(t);
    return sum;
}

bool GroupMortality::all_constant() const {
    return std::all_of(members.begin(), members.end(),
                       [](const HazardModel& m) { return m.is_constant(); });
}

void sort_deaths(std::vector<Death>& deaths) {
    std::sort(deaths.begin(), deaths.end(), [](const Death& a, const Death& b) {
        if (a.time != b.time) return a.time < b.time;
        return a.participant < b.participant;
    });
}

std::vector<Death> death_times_from_uniforms(const GroupMortality& group,
                                             const std::vector<double>& uniforms) {
    if (uniforms.size() != group.size()) throw ValidationError("one uniform per member");
    std::vector<Death> out;
    out.reserve(group.size());
    for (std::size_t i = 0; i < group.size(); ++i)
        out.push_back({static_cast<int>(i), group.members[i].sample(uniforms[i])});
    sort_deaths(out);
    return out;
}

std::vector<Death> sample_death_times(const GroupMortality& group, std::uint64_t seed,
                                      std::uint64_t path) {
    Philox rng(seed);
    std::vector<double> u(group.size());
    for (std::size_t i = 0; i < group.size(); ++i)
        u[i] = rng.uniform(path, static_cast<std::uint32_t>(i));
    return death_times_from_uniforms(group, u);
}

}  // namespace da
