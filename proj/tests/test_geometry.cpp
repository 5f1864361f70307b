#include "oracle.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace attngeom;
using namespace testing_support;

namespace {

// Eight effective points inside B(s, r_max) with three of them selected, and
// only two selected points closer to s than the nearest outsider.
HeadSlice toy_slice()
{
    const std::vector<std::array<double, 2>> eff{
        {1.0, 0.0}, {0.0, 1.0}, {-0.5, -0.5},                          // selected
        {1.4, 0.5}, {0.5, 1.45}, {-0.3, 0.6}, {0.6, -0.4}, {1.2, 1.4}, // inside r_max
        {2.5, 0.5}, {0.5, -1.5},                                       // outside
    };
    const int P = static_cast<int>(eff.size());
    Eigen::VectorXd alpha(P);
    for (int i = 0; i < P; ++i) alpha[i] = i < 3 ? 0.2 : 0.4 / 7.0;
    HeadSlice s;
    RowMatrixD v(P, 2);
    for (int i = 0; i < P; ++i)
        for (int k = 0; k < 2; ++k) v(i, k) = eff[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] / alpha[i];
    s.values = v.cast<float>();
    s.attn_row = alpha.cast<float>();
    return s;
}

} // namespace

TEST(Selection, TopNWithTies)
{
    const Eigen::VectorXd a = (Eigen::VectorXd(3) << 0.3, 0.3, 0.4).finished();
    EXPECT_EQ(top_n_select(a, 2).indices, (std::vector<int>{0, 2}));
    const Eigen::VectorXd b = (Eigen::VectorXd(3) << 0.7, 0.2, 0.1).finished();
    EXPECT_EQ(top_n_select(b, 1).indices, std::vector<int>{0});
    EXPECT_EQ(top_n_select(b, 3).indices, (std::vector<int>{0, 1, 2}));
    EXPECT_THROW(top_n_select(b, 0), RangeError);
    EXPECT_THROW(top_n_select(b, 4), RangeError);

    // exhaustive: every 4-vector over {1, 2} and every N matches "ahead count < N"
    for (int mask = 0; mask < 16; ++mask) {
        Eigen::VectorXd x(4);
        for (int i = 0; i < 4; ++i) x[i] = 1.0 + ((mask >> i) & 1);
        for (int n = 1; n <= 4; ++n) {
            std::vector<int> want;
            for (int i = 0; i < 4; ++i) {
                int ahead = 0;
                for (int j = 0; j < 4; ++j) ahead += x[j] > x[i] || (x[j] == x[i] && j < i);
                if (ahead < n) want.push_back(i);
            }
            EXPECT_EQ(top_n_select(x, n).indices, want);
        }
    }
}

TEST(Geometry, SinglePointSelection)
{
    std::mt19937_64 rng(4);
    const auto s = random_slice(rng, 9, 3);
    const auto sel = top_n_select(s.attn_row, 1);
    const auto g = selection_geometry(s, sel);
    const int k = sel.indices[0];
    EXPECT_EQ(g.sq_dist[k], 0.0);
    EXPECT_EQ(g.r_max, 0.0);
    EXPECT_TRUE(g.s.isApprox(effective_points(s).row(k).transpose()));
    EXPECT_EQ(recall(g, 0.0), 1.0);
}

TEST(Geometry, FullSelectionSentinel)
{
    std::mt19937_64 rng(5);
    const auto s = random_slice(rng, 6, 2);
    const auto g = selection_geometry(s, top_n_select(s.attn_row, 7));
    EXPECT_TRUE(std::isinf(g.r_min));
    for (double r : {0.0, 0.1, 10.0}) EXPECT_EQ(precision(g, r), 1.0);
}

TEST(Geometry, DistancesMatchNaiveRecomputation)
{
    std::mt19937_64 rng(6);
    const auto s = random_slice(rng, 49, 7);
    for (int n : {1, 5, 17, 50}) {
        const auto g = selection_geometry(s, top_n_select(s.attn_row, n));
        const auto o = oracle::metrics(s, n);
        EXPECT_EQ(g.sel.indices, o.selected);
        for (int i = 0; i < 50; ++i) EXPECT_NEAR(g.dist[i], o.dist[static_cast<std::size_t>(i)], 1e-6 * (1.0 + o.dist[static_cast<std::size_t>(i)]));
    }
}

TEST(Geometry, ToyConfiguration)
{
    const auto s = toy_slice();
    const auto g = selection_geometry(s, top_n_select(s.attn_row, 3));
    EXPECT_EQ(g.sel.indices, (std::vector<int>{0, 1, 2}));
    EXPECT_LT(g.r_min, g.r_max);
    const auto c = ball_counts(g, g.r_max);
    EXPECT_EQ(c.in + c.out, 8);
    EXPECT_DOUBLE_EQ(precision(g, g.r_max), 3.0 / 8.0);
    EXPECT_DOUBLE_EQ(recall(g, g.r_min), 2.0 / 3.0);
    EXPECT_NEAR(fscore(3.0 / 8.0, 2.0 / 3.0), 0.48, 1e-15);

    const std::vector<int> ns{3};
    const auto curve = metric_curve(s, ns);
    EXPECT_DOUBLE_EQ(curve[1].precision, 3.0 / 8.0);
    EXPECT_DOUBLE_EQ(curve[0].recall, 2.0 / 3.0);
}

TEST(Geometry, BoundaryPointsKeepIdentities)
{
    // an outsider exactly at r_max and a second selected point exactly at r_min
    SelectionGeometry g;
    g.sel = selection_from_order({0, 1, 2, 3}, 2);
    g.dist = (Eigen::VectorXd(4) << 1.0, 2.0, 2.0, 1.0).finished();
    g.r_max = 2.0;
    g.r_min = 1.0;
    EXPECT_EQ(recall(g, g.r_max), 1.0);
    EXPECT_EQ(precision(g, g.r_min), 1.0);
    EXPECT_EQ(recall(g, g.r_min), 0.5);
    EXPECT_DOUBLE_EQ(precision(g, g.r_max), 2.0 / 3.0);
    EXPECT_THROW(precision(g, -1.0), RangeError);
    EXPECT_THROW(recall(g, std::nan("")), RangeError);
}

TEST(Geometry, FscoreConventions)
{
    EXPECT_EQ(fscore(1, 1), 1.0);
    EXPECT_EQ(fscore(0, 0), 0.0);
    EXPECT_THROW(fscore(1.1, 0.5), RangeError);
    EXPECT_THROW(fscore(0.5, -0.1), RangeError);
}

TEST(Geometry, IdentitiesOnRandomSlicesWithTies)
{
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> Ld(4, 40), dd(2, 16);
    for (int trial = 0; trial < 150; ++trial) {
        const auto s = random_slice(rng, Ld(rng), dd(rng), trial % 2 ? 0.3 : 0.0);
        std::vector<int> ns(static_cast<std::size_t>(s.positions()));
        std::iota(ns.begin(), ns.end(), 1);
        const auto curve = metric_curve(s, ns);
        for (std::size_t k = 0; k < ns.size(); ++k) {
            const auto g = selection_geometry(s, top_n_select(s.attn_row, ns[k]));
            ASSERT_EQ(precision(g, g.r_min), 1.0);
            ASSERT_EQ(recall(g, g.r_max), 1.0);
            ASSERT_EQ(curve[2 * k].kind, RadiusKind::rmin);
            ASSERT_EQ(curve[2 * k].precision, 1.0);
            ASSERT_EQ(curve[2 * k + 1].recall, 1.0);
        }
        EXPECT_EQ(curve.front().recall, 1.0);
        EXPECT_EQ(curve[1].precision, 1.0);
        EXPECT_EQ(curve.back().precision, 1.0);
    }
}

TEST(Geometry, MatchesOracleOnSmallInstances)
{
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> Ld(1, 12), dd(2, 4);
    for (int trial = 0; trial < 300; ++trial) {
        const auto s = random_slice(rng, Ld(rng), dd(rng));
        for (int n = 1; n <= s.positions(); ++n) {
            const std::vector<int> ns{n};
            const auto c = metric_curve(s, ns);
            const auto o = oracle::metrics(s, n);
            ASSERT_EQ(c[0].recall, o.r_rmin);
            ASSERT_EQ(c[0].precision, o.p_rmin);
            ASSERT_EQ(c[1].precision, o.p_rmax);
            ASSERT_EQ(c[1].recall, o.r_rmax);
            ASSERT_EQ(c[0].fscore, fscore(o.p_rmin, o.r_rmin));
        }
    }
}

TEST(Geometry, RecallMonotoneInRadius)
{
    std::mt19937_64 rng(9);
    const auto s = random_slice(rng, 30, 5);
    const auto g = selection_geometry(s, top_n_select(s.attn_row, 8));
    double prev_r = -1.0;
    int prev_den = -1;
    for (double r = 0.0; r <= g.r_max * 1.5; r += g.r_max / 200) {
        const double q = recall(g, r);
        const auto c = ball_counts(g, r);
        EXPECT_GE(q, prev_r);
        EXPECT_GE(c.in + c.out, prev_den);
        prev_r = q;
        prev_den = c.in + c.out;
    }
}

TEST(Geometry, ScaleEquivariance)
{
    std::mt19937_64 rng(10);
    const auto s = random_slice(rng, 20, 4);
    auto scaled = s;
    scaled.values *= 4.0f;  // power of two keeps the float data exact
    const std::vector<int> ns{1, 2, 5, 11, 21};
    const auto a = metric_curve(s, ns), b = metric_curve(scaled, ns);
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].precision, b[k].precision);
        EXPECT_EQ(a[k].recall, b[k].recall);
        if (std::isfinite(a[k].r)) {
            EXPECT_NEAR(b[k].r, 4.0 * a[k].r, 1e-12 * (1 + a[k].r));
        }
    }
}

TEST(Geometry, PermutingOutsidersChangesNothing)
{
    std::mt19937_64 rng(11);
    const auto s = random_slice(rng, 25, 3);
    const int n = 6;
    const auto sel = top_n_select(s.attn_row, n);
    std::vector<int> out;
    for (int i = 0; i < s.positions(); ++i)
        if (!sel.contains(i)) out.push_back(i);
    auto shuffled = out;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto p = s;
    for (std::size_t k = 0; k < out.size(); ++k) {
        p.values.row(shuffled[k]) = s.values.row(out[k]);
        p.attn_row[shuffled[k]] = s.attn_row[out[k]];
    }
    const std::vector<int> ns{n};
    const auto a = metric_curve(s, ns), b = metric_curve(p, ns);
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].precision, b[k].precision);
        EXPECT_EQ(a[k].recall, b[k].recall);
        EXPECT_EQ(a[k].r, b[k].r);
    }
}

TEST(Descriptors, LeaveOneOutMatchesResummation)
{
    std::mt19937_64 rng(12);
    const auto s = random_slice(rng, 15, 6);
    const std::vector<int> ns{1, 2, 4, 8, 16};
    const auto hd = head_descriptors(s, ns);
    const RowMatrixD eff = effective_points(s);
    const int L = s.seq_len();
    ASSERT_EQ(hd.rows.size(), ns.size());
    for (const auto& row : hd.rows) {
        const auto sel = top_n_select(s.attn_row, row.n);
        Eigen::VectorXd full = Eigen::VectorXd::Zero(6), no_sink = full, no_last = full;
        for (int i : sel.indices) {
            full += eff.row(i).transpose();
            if (i != 0) no_sink += eff.row(i).transpose();
            if (i != L) no_last += eff.row(i).transpose();
        }
        EXPECT_NEAR(row.norm_s, full.norm(), 1e-12);
        EXPECT_NEAR(row.norm_s_no_sink, no_sink.norm(), 1e-12);
        EXPECT_NEAR(row.norm_s_no_last, no_last.norm(), 1e-12);
        const Eigen::VectorXd v0 = s.values.row(0).cast<double>().transpose(), vL = s.values.row(L).cast<double>().transpose();
        EXPECT_NEAR(row.cos_sink, full.dot(v0) / (full.norm() * v0.norm()), 1e-12);
        EXPECT_NEAR(row.cos_last, full.dot(vL) / (full.norm() * vL.norm()), 1e-12);
        if (!sel.contains(0)) {
            EXPECT_EQ(row.norm_s_no_sink, row.norm_s);
        }
    }
    EXPECT_NEAR(hd.m_sink, eff.row(0).norm(), 1e-12);
    EXPECT_NEAR(hd.m_last, eff.row(L).norm(), 1e-12);
    double rest = 0.0;
    for (int i = 1; i < L; ++i) rest += eff.row(i).norm();
    EXPECT_NEAR(hd.m_rest, rest, 1e-12);
}

TEST(Descriptors, LastOnlySelectionAlignsWithLast)
{
    std::mt19937_64 rng(13);
    auto s = random_slice(rng, 10, 4);
    s.attn_row.setConstant(0.05f);
    s.attn_row[10] = 0.5f;
    const std::vector<int> ns{1, 2, 3};
    const auto hd = head_descriptors(s, ns);
    EXPECT_NEAR(hd.rows[0].cos_last, 1.0, 1e-12);

    auto z = s;
    z.values.row(10).setZero();
    const auto hz = head_descriptors(z, ns);
    EXPECT_TRUE(hz.rows[0].degenerate);
    EXPECT_EQ(hz.rows[0].cos_last, 0.0);
}
