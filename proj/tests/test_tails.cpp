#include "oracles.hpp"

#include "tailbreak/error.hpp"
#include "tailbreak/tails.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

using namespace tailbreak;

namespace {

std::vector<double> iota_values(int from, int to) {
    std::vector<double> v;
    for (int i = from; i <= to; ++i) v.push_back(i);
    return v;
}

std::vector<double> locations(const RestrictedMeasure& m) {
    std::vector<double> out;
    for (const auto& a : m.atoms()) out.push_back(a.location);
    return out;
}

RestrictedMeasure uniform(const std::vector<double>& xs, double mass) {
    std::vector<Atom> atoms;
    for (double x : xs) atoms.push_back({x, mass / static_cast<double>(xs.size())});
    return RestrictedMeasure(atoms, mass, TailKind::two_sided);
}

std::vector<std::pair<double, double>> pairs(const RestrictedMeasure& m) {
    std::vector<std::pair<double, double>> out;
    for (const auto& a : m.atoms()) out.emplace_back(a.location, a.weight);
    return out;
}

Panel panel_of(const std::vector<std::vector<double>>& rows) {
    std::vector<std::string> tickers;
    std::vector<Date> dates;
    std::vector<double> values;
    for (std::size_t i = 0; i < rows.size(); ++i) tickers.push_back("T" + std::to_string(i));
    for (std::size_t t = 0; t < rows[0].size(); ++t) {
        dates.emplace_back(std::chrono::sys_days{std::chrono::year{2020} / 1 / 1} + std::chrono::days{t});
    }
    for (const auto& r : rows) values.insert(values.end(), r.begin(), r.end());
    return Panel(tickers, dates, values);
}

}  // namespace

TEST(RestrictTwoSided, HundredValues) {
    auto v = iota_values(1, 100);
    std::shuffle(v.begin(), v.end(), std::mt19937_64(3));
    const auto m = restrict_two_sided(v, 0.05);
    EXPECT_EQ(locations(m), (std::vector<double>{1, 2, 3, 4, 5, 96, 97, 98, 99, 100}));
    for (const auto& a : m.atoms()) EXPECT_DOUBLE_EQ(a.weight, 0.01);
    EXPECT_DOUBLE_EQ(m.total_mass(), 0.1);
}

TEST(RestrictTwoSided, TwentyValuesKeepExtremes) {
    std::mt19937_64 rng(11);
    const auto v = oracle::normal_draws(rng, 20);
    const auto m = restrict_two_sided(v, 0.05);
    ASSERT_EQ(m.atoms().size(), 2u);
    EXPECT_EQ(m.atoms()[0].location, *std::min_element(v.begin(), v.end()));
    EXPECT_EQ(m.atoms()[1].location, *std::max_element(v.begin(), v.end()));
    EXPECT_DOUBLE_EQ(m.atoms()[0].weight, 0.05);
}

TEST(RestrictTwoSided, TooFewObservations) {
    const auto v = iota_values(1, 10);
    EXPECT_THROW(restrict_two_sided(v, 0.05), Error);
    try {
        restrict_two_sided(v, 0.05);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
    }
}

TEST(RestrictUpper, HundredValues) {
    const auto m = restrict_upper(iota_values(1, 100), 0.10);
    EXPECT_EQ(locations(m), iota_values(91, 100));
    for (const auto& a : m.atoms()) EXPECT_DOUBLE_EQ(a.weight, 0.01);
}

TEST(RestrictUpper, ConstantValues) {
    const auto m = restrict_upper(std::vector<double>(100, 2.5), 0.10);
    EXPECT_EQ(m.atoms().size(), 10u);
    for (const auto& a : m.atoms()) EXPECT_EQ(a.location, 2.5);
    EXPECT_DOUBLE_EQ(m.total_mass(), 0.1);
}

TEST(RestrictUpper, TooFewObservations) {
    try {
        restrict_upper(iota_values(1, 5), 0.10);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
    }
}

TEST(Restrict, FractionOutOfRange) {
    const auto v = iota_values(1, 100);
    EXPECT_THROW(restrict(v, TailKind::upper, 0.0), Error);
    EXPECT_THROW(restrict(v, TailKind::upper, 0.5), Error);
}

TEST(Wasserstein, Identity) {
    const auto a = restrict_two_sided(iota_values(1, 100), 0.05);
    EXPECT_EQ(wasserstein1(a, a), 0.0);
}

TEST(Wasserstein, SingleAtoms) {
    const auto a = uniform({0.0}, 0.1);
    const auto b = uniform({1.0}, 0.1);
    EXPECT_NEAR(wasserstein1(a, b), 0.1, 1e-15);
}

TEST(Wasserstein, ShiftOracle) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 1 + rng() % 5;
        std::vector<double> xs(n);
        for (double& x : xs) x = u(rng);
        const double c = u(rng);
        std::vector<double> ys = xs;
        for (double& y : ys) y += c;
        const double brute = oracle::w1_assignment(xs, ys, 0.1 / static_cast<double>(n));
        EXPECT_NEAR(wasserstein1(uniform(xs, 0.1), uniform(ys, 0.1)), brute, 1e-12);
        EXPECT_NEAR(brute, 0.1 * std::fabs(c), 1e-12);
    }
}

TEST(Wasserstein, MatchesAssignmentAndCdfOracles) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0, 2);
    for (int rep = 0; rep < 300; ++rep) {
        const std::size_t n = 1 + rng() % 6;
        std::vector<double> xs(n), ys(n);
        for (double& x : xs) x = g(rng);
        for (double& y : ys) y = g(rng);
        const auto a = uniform(xs, 0.1);
        const auto b = uniform(ys, 0.1);
        EXPECT_NEAR(wasserstein1(a, b), oracle::w1_assignment(xs, ys, 0.1 / static_cast<double>(n)), 1e-12);

        // unequal atom counts: compare against the CDF integral
        const std::size_t m = 1 + rng() % 6;
        std::vector<double> zs(m);
        for (double& z : zs) z = g(rng);
        const auto c = uniform(zs, 0.1);
        EXPECT_NEAR(wasserstein1(a, c), oracle::w1_cdf(pairs(a), pairs(c)), 1e-12);
    }
}

TEST(Wasserstein, MassMismatch) {
    try {
        wasserstein1(uniform({1, 2}, 0.1), uniform({1, 2}, 0.2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::mass_mismatch);
    }
}

TEST(RestrictedMean, HandValues) {
    EXPECT_NEAR(restricted_mean(uniform({-2, 2}, 0.1)), 0.0, 1e-15);
    EXPECT_NEAR(restricted_mean(restrict_two_sided(iota_values(1, 100), 0.05)), 50.5, 1e-12);
    EXPECT_DOUBLE_EQ(restricted_mean(uniform({3.25}, 0.1)), 3.25);
}

TEST(ExtremityMatrix, IdenticalRowsGiveZero) {
    const auto row = iota_values(1, 40);
    const auto d = extremity_distance_matrix(panel_of({row, row, row}), TailKind::two_sided, 0.05);
    for (double v : d.entries()) EXPECT_EQ(v, 0.0);
}

TEST(ExtremityMatrix, ConstantShift) {
    std::mt19937_64 rng(13);
    auto row = oracle::normal_draws(rng, 60);
    auto shifted = row;
    for (double& v : shifted) v += 1.75;
    const auto d = extremity_distance_matrix(panel_of({row, shifted}), TailKind::two_sided, 0.05);
    EXPECT_NEAR(d(0, 1), 0.1 * 1.75, 1e-12);
    EXPECT_EQ(d(0, 1), d(1, 0));
    EXPECT_EQ(d(0, 0), 0.0);
}

TEST(ExtremityMatrix, EntrywiseOracle) {
    std::mt19937_64 rng(17);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 3; ++i) rows.push_back(oracle::normal_draws(rng, 80, 0.0, 1.0 + i));
    for (auto kind : {TailKind::two_sided, TailKind::upper}) {
        const double q = kind == TailKind::upper ? 0.10 : 0.05;
        const auto d = extremity_distance_matrix(panel_of(rows), kind, q);
        EXPECT_TRUE(d.is_symmetric());
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                EXPECT_EQ(d(i, j), wasserstein1(restrict(rows[i], kind, q), restrict(rows[j], kind, q)));
            }
        }
    }
}

TEST(ExtremityMatrix, ErrorNamesTheInstrument) {
    try {
        extremity_distance_matrix(panel_of({iota_values(1, 10), iota_values(1, 10)}), TailKind::two_sided, 0.05);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
        EXPECT_EQ(std::string(e.what()).rfind("T0", 0), 0u) << e.what();
    }
}

TEST(MatrixIo, RoundTrip) {
    LabeledMatrix m({"A", "B"}, {0, 0.125, 0.125, 0});
    std::stringstream buf;
    write_matrix(buf, m);
    EXPECT_EQ(buf.str(), ",A,B\nA,0,0.125\nB,0.125,0\n");
    const auto back = read_matrix(buf);
    EXPECT_EQ(back.labels(), m.labels());
    EXPECT_EQ(back(0, 1), 0.125);
}
