#include "support.hpp"

#include <gtest/gtest.h>

using namespace attngeom;
using namespace testing_support;

TEST(Synthetic, SameSeedIsBitIdentical)
{
    SyntheticConfig c;
    c.seed = 99;
    c.noise = 0.05;
    const auto a = generate_slice(c), b = generate_slice(c);
    EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), sizeof(float) * static_cast<std::size_t>(a.values.size())), 0);
    EXPECT_EQ(a.attn_row, b.attn_row);
    EXPECT_FALSE(generate_slice(with_seed(c, 100)).values.isApprox(a.values));
}

TEST(Synthetic, OutputIsAValidSlice)
{
    SyntheticConfig c;
    const auto s = generate_slice(c, 2, 3);
    EXPECT_EQ(s.layer, 2);
    EXPECT_EQ(s.head, 3);
    EXPECT_EQ(s.values.rows(), c.L + 1);
    EXPECT_EQ(s.values.cols(), c.d);
    EXPECT_NO_THROW(validate_slice(s));
    const auto tmpl = attention_template(c.L, c.profile, true);
    for (int i = 0; i <= c.L; ++i) EXPECT_FLOAT_EQ(s.attn_row[i], static_cast<float>(tmpl[static_cast<std::size_t>(i)]));
}

TEST(Synthetic, SinkCorrelationIsHit)
{
    SyntheticConfig c;
    c.rho0 = -0.2;
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const double r = sink_similarity(generate_slice(with_seed(c, seed)));
        EXPECT_NEAR(r, -0.2, 0.03);
        mean += r / 50;
    }
    EXPECT_NEAR(mean, -0.2, 0.01);
}

TEST(Synthetic, ExactKernelSinkAndLags)
{
    SyntheticConfig c;
    c.L = 40;
    c.d = 41;
    c.beta = 0.3;
    c.rho0 = 0.1;
    c.profile.t1 = 4;
    c.profile.t2 = 36;
    c.directions = DirectionModel::exact_gram;
    const auto s = generate_slice(c);
    const Eigen::VectorXd v0 = s.values.row(0).cast<double>().transpose().normalized();
    for (int j = 1; j <= c.L; ++j) EXPECT_NEAR(v0.dot(s.values.row(j).cast<double>().transpose().normalized()), 0.1, 1e-5);
    c.d = 30;
    EXPECT_THROW(generate_slice(c), ConfigError);
}

TEST(Synthetic, InfeasibleSinkCorrelation)
{
    SyntheticConfig c;
    c.L = 32;
    c.d = 512;
    c.beta = 3.0;  // nearly independent directions: mean direction is short
    c.rho0 = 0.9;
    c.profile.t1 = 4;
    c.profile.t2 = 30;
    try {
        generate_slice(c);
        FAIL() << "expected FeasibilityError";
    } catch (const FeasibilityError& e) {
        EXPECT_LT(e.hi(), 0.9);
        EXPECT_DOUBLE_EQ(e.lo(), -e.hi());
    }
}

TEST(Synthetic, ConfigValidation)
{
    SyntheticConfig c;
    c.beta = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.profile.t1 = 130;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.rho0 = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(MonteCarlo, EndpointsAreExact)
{
    SyntheticConfig c;
    c.L = 32;
    c.d = 64;
    c.profile.t1 = 4;
    c.profile.t2 = 28;
    const std::vector<int> ns{1, 33};
    const auto res = monte_carlo_envelope(c, ns, 100, 0.5);
    for (const auto& r : res) {
        EXPECT_EQ(r.mean_P_rmax, 1.0);
        EXPECT_EQ(r.mean_R_rmin, 1.0);
        EXPECT_EQ(r.ci_P, 0.0);
        EXPECT_TRUE(r.envelope.exact);
    }
    EXPECT_THROW(monte_carlo_envelope(c, ns, 99, 0.5), ConfigError);
}

TEST(MonteCarlo, ThreadCountDoesNotChangeResults)
{
    SyntheticConfig c;
    c.L = 48;
    c.d = 64;
    c.profile.t1 = 6;
    c.profile.t2 = 40;
    const std::vector<int> ns{2, 3, 5, 9};
    const auto a = monte_carlo_envelope(c, ns, 100, 0.5, 1);
    const auto b = monte_carlo_envelope(c, ns, 100, 0.5, 3);
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].mean_P_rmax, b[k].mean_P_rmax);
        EXPECT_EQ(a[k].mean_R_rmin, b[k].mean_R_rmin);
    }
}

TEST(MonteCarlo, SmallNContainmentAfterCalibration)
{
    SyntheticConfig c;
    const std::vector<int> ns{2, 3, 4};
    const auto cal = monte_carlo_calibrated(c, ns, 200);
    EXPECT_FALSE(cal.kappa.saturated);
    for (const auto& r : cal.results) {
        EXPECT_GE(r.mean_P_rmax, r.envelope.precision_lo - 2 * r.ci_P);
        EXPECT_LE(r.mean_P_rmax, r.envelope.precision_hi + 2 * r.ci_P);
    }
}

TEST(MeanCi, KnownValues)
{
    const auto [m, ci] = mean_ci({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(m, 2.5);
    EXPECT_NEAR(ci, 1.96 * std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
}

TEST(RhoSweep, PositiveAtSmallNAndFlatAtFullSelection)
{
    SyntheticConfig c;
    c.L = 64;
    c.d = 128;
    c.profile.t1 = 8;
    c.profile.t2 = 60;
    const std::vector<double> grid{-0.3, -0.15, 0.0, 0.15, 0.3};
    const std::vector<int> ns{2, 3, 65};
    const auto rows = sweep_rho0_recall_correlation(c, grid, ns, 60, 1);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_GT(rows[0].corr, 0.0);
    EXPECT_GT(rows[1].corr, 0.0);
    EXPECT_TRUE(rows[2].recall_constant);
    EXPECT_EQ(rows[2].corr, 0.0);

    const std::vector<double> flat(5, 0.1);
    EXPECT_THROW(sweep_rho0_recall_correlation(c, flat, ns, 10, 1), DegenerateError);
    const std::vector<double> short_grid{0.0, 0.1};
    EXPECT_THROW(sweep_rho0_recall_correlation(c, short_grid, ns, 10, 1), ConfigError);
}

TEST(Parallel, RethrowsAndCoversEveryIndex)
{
    std::vector<int> hit(1000, 0);
    parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
    EXPECT_TRUE(std::all_of(hit.begin(), hit.end(), [](int x) { return x == 1; }));
    EXPECT_THROW(parallel_for(100, 3, [](std::size_t i) {
                     if (i == 57) throw RangeError("boom");
                 }),
                 RangeError);
    const auto sq = parallel_map<std::size_t>(10, 2, [](std::size_t i) { return i * i; });
    EXPECT_EQ(sq[9], 81u);
}
