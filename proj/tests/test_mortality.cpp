#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "da/errors.hpp"
#include "da/mortality.hpp"
#include "da/numerics.hpp"
#include "da/rng.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace da;

TEST_CASE("constant force survival", "[mortality]") {
    auto m = HazardModel::constant(0.03);
    CHECK(survival_prob(m, 0.0) == 1.0);
    CHECK_THAT(survival_prob(HazardModel::constant(0.05), std::log(2.0) / 0.05), WithinRel(0.5, 1e-15));
    CHECK(survival_prob(m, std::numeric_limits<double>::infinity()) == 0.0);
    for (double t : {0.5, 3.0, 17.0, 80.0})
        CHECK_THAT(m.survival(t), WithinRel(std::exp(-0.03 * t), 1e-15));
    CHECK_THROWS_AS(survival_prob(m, -1.0), DomainError);
}

TEST_CASE("conditional density is memoryless for constant force", "[mortality]") {
    auto m = HazardModel::constant(0.04);
    CHECK_THAT(conditional_density(m, 10.0, 10.0), WithinRel(0.04, 1e-15));
    const double expected = 0.014715177646857693;  // 0.04 * exp(-1)
    CHECK_THAT(conditional_density(m, 0.0, 25.0), WithinRel(expected, 1e-14));
    CHECK_THAT(conditional_density(m, 5.0, 30.0), WithinRel(expected, 1e-14));
    for (double a : {0.0, 1.5, 40.0})
        for (double s : {0.0, 2.0, 9.0})
            CHECK_THAT(m.conditional_density(a, a + s), WithinRel(m.conditional_density(0.0, s), 1e-12));
    CHECK_THROWS_AS(conditional_density(m, 5.0, 4.0), DomainError);
}

TEST_CASE("densities integrate to one", "[mortality]") {
    auto pw = HazardModel::piecewise({0.0, 10.0, 25.0}, {0.01, 0.05, 0.12});
    for (const auto& m : {HazardModel::constant(0.03), pw}) {
        for (double asof : {0.0, 12.0}) {
            double v = integrate_to_inf([&](double u) { return m.conditional_density(asof, asof + u); }, 0.0, 1e-11).value;
            CHECK_THAT(v, WithinAbs(1.0, 1e-8));
        }
    }
}

TEST_CASE("piecewise and tabular models", "[mortality]") {
    auto pw = HazardModel::piecewise({0.0, 10.0}, {0.02, 0.1});
    CHECK_THAT(pw.survival(15.0), WithinRel(std::exp(-0.2 - 0.5), 1e-14));
    CHECK_THAT(pw.survival(12.0, 15.0), WithinRel(std::exp(-0.3), 1e-14));
    CHECK_THAT(pw.sample(std::exp(-0.7)), WithinRel(15.0, 1e-12));

    auto tab = HazardModel::parse_life_table("age, qx\n64,0.5\n65,0.1\n66,0.2\n67,1.0\n", 65.0);
    CHECK(tab.kind() == HazardModel::Kind::tabular);
    CHECK_THAT(tab.survival(1.0), WithinRel(0.9, 1e-14));
    CHECK_THAT(tab.survival(2.0), WithinRel(0.72, 1e-14));
    CHECK_THAT(tab.survival(1.5), WithinRel(0.9 * std::sqrt(0.8), 1e-14));
    CHECK(tab.survival(3.0) < 1e-20);
    CHECK_THROWS_AS(HazardModel::parse_life_table("x,y\n1,0.1\n", 0.0), ValidationError);
    CHECK_THROWS_AS(HazardModel::parse_life_table("age,qx\n1,0.1\n3,0.1\n", 0.0), ValidationError);
}

TEST_CASE("survival is non-increasing", "[mortality][property]") {
    auto pw = HazardModel::piecewise({0.0, 5.0, 7.0}, {0.0, 0.3, 0.01});
    double prev = 1.0;
    for (double t = 0.0; t < 60.0; t += 0.37) {
        double s = pw.survival(t);
        CHECK(s <= prev);
        CHECK(s >= 0.0);
        prev = s;
    }
}

TEST_CASE("philox known-answer vectors", "[rng]") {
    Philox zero(0);
    auto a = zero({0, 0, 0, 0});
    CHECK(a == Philox::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    Philox ones(0xffffffffffffffffull);
    auto b = ones({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu});
    CHECK(b == Philox::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    Philox pi((std::uint64_t{0x299f31d0u} << 32) | 0xa4093822u);
    auto c = pi({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u});
    CHECK(c == Philox::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("inverse-CDF sampling", "[mortality]") {
    GroupMortality g{{HazardModel::constant(0.05)}};
    auto d = death_times_from_uniforms(g, {0.5});
    CHECK_THAT(d[0].time, WithinRel(std::log(2.0) / 0.05, 1e-14));

    GroupMortality g3{{HazardModel::constant(0.03), HazardModel::constant(0.04), HazardModel::constant(0.05)}};
    auto x = sample_death_times(g3, 42, 7);
    auto y = sample_death_times(g3, 42, 7);
    REQUIRE(x.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(x[i].participant == y[i].participant);
        CHECK(x[i].time == y[i].time);
    }
    CHECK(std::is_sorted(x.begin(), x.end(), [](const Death& a, const Death& b) { return a.time < b.time; }));
}

TEST_CASE("simultaneous deaths break ties by index", "[mortality]") {
    std::vector<Death> d{{2, 5.0}, {0, 5.0}, {1, 3.0}};
    sort_deaths(d);
    CHECK(d[0].participant == 1);
    CHECK(d[1].participant == 0);
    CHECK(d[2].participant == 2);
}

TEST_CASE("minimum of three exponentials is exponential (KS)", "[mortality][statistical]") {
    GroupMortality g{{HazardModel::constant(0.03), HazardModel::constant(0.04), HazardModel::constant(0.05)}};
    const int n = 100000;
    std::vector<double> mins(n);
    for (int p = 0; p < n; ++p) mins[static_cast<std::size_t>(p)] = sample_death_times(g, 2024, static_cast<std::uint64_t>(p))[0].time;
    std::sort(mins.begin(), mins.end());
    double dmax = 0.0;
    for (int k = 0; k < n; ++k) {
        double cdf = 1.0 - std::exp(-0.12 * mins[static_cast<std::size_t>(k)]);
        dmax = std::max({dmax, std::abs(cdf - static_cast<double>(k) / n), std::abs(cdf - static_cast<double>(k + 1) / n)});
    }
    CHECK(dmax < 1.36 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("empirical survival matches within 3 standard errors", "[mortality][statistical]") {
    auto pw = HazardModel::piecewise({0.0, 8.0}, {0.03, 0.07});
    GroupMortality g{{pw}};
    const int n = 1000000;
    Philox rng(99);
    std::vector<double> t(n);
    for (int p = 0; p < n; ++p) t[static_cast<std::size_t>(p)] = pw.sample(rng.uniform(static_cast<std::uint64_t>(p), 0));
    for (double x : {5.0, 10.0, 20.0}) {
        double emp = static_cast<double>(std::count_if(t.begin(), t.end(), [&](double v) { return v > x; })) / n;
        double s = pw.survival(x);
        double se = std::sqrt(s * (1.0 - s) / n);
        CHECK(std::abs(emp - s) < 3.0 * se);
    }
}

TEST_CASE("aggregate hazard sums surviving members", "[mortality]") {
    GroupMortality g{{HazardModel::constant(0.03), HazardModel::constant(0.04), HazardModel::constant(0.05)}};
    CHECK_THAT(g.aggregate_hazard(3.0, {true, true, true}), WithinRel(0.12, 1e-15));
    CHECK_THAT(g.aggregate_hazard(3.0, {true, false, true}), WithinRel(0.08, 1e-15));
}
