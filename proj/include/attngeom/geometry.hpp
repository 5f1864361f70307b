#pragma once

#include "attngeom/dump_io.hpp"

#include <algorithm>
#include <numeric>

namespace attngeom {

struct Selection {
    int n = 0;
    std::vector<int> indices;    // ascending
    std::vector<char> member;    // member[i] != 0 iff i in I_N

    bool contains(int i) const { return member[static_cast<std::size_t>(i)] != 0; }
    int positions() const { return static_cast<int>(member.size()); }
};

// Positions ranked by attention, heaviest first; equal weights keep the lower index first.
template <class Vec>
std::vector<int> attention_order(const Vec& attn)
{
    std::vector<int> order(static_cast<std::size_t>(attn.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return attn[a] > attn[b]; });
    return order;
}

inline Selection selection_from_order(const std::vector<int>& order, int n)
{
    const int total = static_cast<int>(order.size());
    if (n < 1 || n > total)
        throw RangeError("N=" + std::to_string(n) + " outside [1, " + std::to_string(total) + "]");
    Selection sel;
    sel.n = n;
    sel.indices.assign(order.begin(), order.begin() + n);
    std::sort(sel.indices.begin(), sel.indices.end());
    sel.member.assign(order.size(), 0);
    for (int i : sel.indices) sel.member[static_cast<std::size_t>(i)] = 1;
    return sel;
}

template <class Vec>
Selection top_n_select(const Vec& attn, int n)
{
    return selection_from_order(attention_order(attn), n);
}

// Rows alpha_i v_i in double precision.
inline RowMatrixD effective_points(const HeadSlice& slice)
{
    return slice.attn_row.cast<double>().asDiagonal() * slice.values.cast<double>();
}

struct SelectionGeometry {
    Selection sel;
    Eigen::VectorXd s;
    Eigen::VectorXd sq_dist;  // D_l = |s - alpha_l v_l|^2
    Eigen::VectorXd dist;     // sqrt(D_l); all ball tests compare these against r
    double r_min = inf;       // +inf when nothing is left outside
    double r_max = 0.0;
};

inline SelectionGeometry selection_geometry(const RowMatrixD& eff, const Selection& sel)
{
    if (sel.positions() != eff.rows())
        throw ShapeError("selection size vs points", {static_cast<std::size_t>(eff.rows())},
                         {static_cast<std::size_t>(sel.positions())});
    SelectionGeometry g;
    g.sel = sel;
    g.s = Eigen::VectorXd::Zero(eff.cols());
    for (int i : sel.indices) g.s += eff.row(i).transpose();
    g.sq_dist = (eff.rowwise() - g.s.transpose()).rowwise().squaredNorm();
    g.dist = g.sq_dist.cwiseSqrt();
    for (Eigen::Index i = 0; i < eff.rows(); ++i) {
        if (sel.contains(static_cast<int>(i)))
            g.r_max = std::max(g.r_max, g.dist[i]);
        else
            g.r_min = std::min(g.r_min, g.dist[i]);
    }
    return g;
}

inline SelectionGeometry selection_geometry(const HeadSlice& slice, const Selection& sel)
{
    return selection_geometry(effective_points(slice), sel);
}

// Ball membership: selected points count when dist <= r, the rest only when
// dist < r.  Both identities P(r_min)=1 and R(r_max)=1 then hold exactly, and
// a selected point sitting on the boundary at r_max is still counted.
struct BallCounts {
    int in = 0;   // selected, dist <= r
    int out = 0;  // not selected, dist < r
};

inline BallCounts ball_counts(const SelectionGeometry& g, double r)
{
    if (!(r >= 0.0)) throw RangeError("radius must be nonnegative");
    BallCounts c;
    for (Eigen::Index i = 0; i < g.dist.size(); ++i) {
        if (g.sel.contains(static_cast<int>(i))) {
            if (g.dist[i] <= r) ++c.in;
        } else if (g.dist[i] < r) {
            ++c.out;
        }
    }
    return c;
}

inline double precision(const SelectionGeometry& g, double r)
{
    const auto c = ball_counts(g, r);
    if (c.in + c.out == 0) return 1.0;
    return static_cast<double>(c.in) / static_cast<double>(c.in + c.out);
}

inline double recall(const SelectionGeometry& g, double r)
{
    return static_cast<double>(ball_counts(g, r).in) / static_cast<double>(g.sel.n);
}

inline double fscore(double p, double q)
{
    if (!(p >= 0.0 && p <= 1.0 && q >= 0.0 && q <= 1.0)) throw RangeError("fscore inputs must lie in [0,1]");
    if (p + q == 0.0) return 0.0;
    return 2.0 * p * q / (p + q);
}

enum class RadiusKind { rmin, rmax };

inline const char* to_string(RadiusKind k) { return k == RadiusKind::rmin ? "rmin" : "rmax"; }

struct MetricPoint {
    RadiusKind kind = RadiusKind::rmax;
    double r = 0.0;
    int n = 0;
    double precision = 1.0;
    double recall = 1.0;
    double fscore = 1.0;
};

inline MetricPoint metric_at(const SelectionGeometry& g, RadiusKind kind)
{
    MetricPoint p;
    p.kind = kind;
    p.n = g.sel.n;
    p.r = kind == RadiusKind::rmin ? g.r_min : g.r_max;
    p.precision = precision(g, p.r);
    p.recall = recall(g, p.r);
    p.fscore = fscore(p.precision, p.recall);
    return p;
}

// Two points per N: the r_min row carries R(r_min), the r_max row P(r_max).
inline std::vector<MetricPoint> metric_curve(const HeadSlice& slice, std::span<const int> ns)
{
    if (ns.empty()) throw RangeError("empty N grid");
    const auto eff = effective_points(slice);
    const auto order = attention_order(slice.attn_row);
    std::vector<MetricPoint> out;
    out.reserve(ns.size() * 2);
    for (int n : ns) {
        const auto g = selection_geometry(eff, selection_from_order(order, n));
        out.push_back(metric_at(g, RadiusKind::rmin));
        out.push_back(metric_at(g, RadiusKind::rmax));
    }
    return out;
}

struct DescriptorRow {
    int n = 0;
    double norm_s = 0.0;
    double norm_s_no_sink = 0.0;
    double norm_s_no_last = 0.0;
    double cos_sink = 0.0;
    double cos_last = 0.0;
    bool degenerate = false;  // zero-norm s or reference vector; cosines reported as 0
};

struct HeadDescriptors {
    double m_sink = 0.0;  // |alpha_0 v_0|
    double m_last = 0.0;  // |alpha_L v_L|
    double m_rest = 0.0;  // sum over 0<i<L of |alpha_i v_i|
    std::vector<DescriptorRow> rows;
};

inline HeadDescriptors head_descriptors(const HeadSlice& slice, std::span<const int> ns)
{
    const int last = slice.seq_len();
    if (last < 2) throw RangeError("descriptors need L >= 2");
    const auto eff = effective_points(slice);
    const auto order = attention_order(slice.attn_row);
    const Eigen::VectorXd v0 = slice.values.row(0).cast<double>().transpose();
    const Eigen::VectorXd vl = slice.values.row(last).cast<double>().transpose();

    HeadDescriptors hd;
    const auto norms = eff.rowwise().norm();
    hd.m_sink = norms[0];
    hd.m_last = norms[last];
    hd.m_rest = norms.segment(1, last - 1).sum();

    for (int n : ns) {
        const auto sel = selection_from_order(order, n);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(eff.cols());
        for (int i : sel.indices) s += eff.row(i).transpose();
        DescriptorRow row;
        row.n = n;
        row.norm_s = s.norm();
        row.norm_s_no_sink = sel.contains(0) ? (s - eff.row(0).transpose()).norm() : row.norm_s;
        row.norm_s_no_last = sel.contains(last) ? (s - eff.row(last).transpose()).norm() : row.norm_s;
        row.degenerate = row.norm_s == 0.0 || v0.norm() == 0.0 || vl.norm() == 0.0;
        row.cos_sink = cosine(s, v0);
        row.cos_last = cosine(s, vl);
        hd.rows.push_back(row);
    }
    return hd;
}

} // namespace attngeom
