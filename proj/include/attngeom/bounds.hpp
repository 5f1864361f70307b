#pragma once

#include "attngeom/geometry.hpp"

#include <functional>

namespace attngeom {

// Cosine structure of the pure model: e^{-beta|i-j|} between non-sink tokens,
// rho0 between the sink and everything else.
struct GeometryModel {
    std::vector<double> alpha;  // attention, length L+1
    std::vector<double> norms;  // |v_i|, length L+1
    double beta = 0.0;
    double rho0 = 0.0;
    int d = 2;

    int seq_len() const { return static_cast<int>(alpha.size()) - 1; }
    double cos(int i, int j) const
    {
        if (i == j) return 1.0;
        if (i == 0 || j == 0) return rho0;
        return std::exp(-beta * std::abs(i - j));
    }
};

struct MarginQuantities {
    std::vector<double> a;  // a_i = alpha_i |v_i|
    double s_in = 0.0;      // sum of a_k over I_N \ {0}
    double a_min_in = 0.0;  // over I_N \ {0}; 0 when that set is empty
    double a_max_in = 0.0;
    double a_max_out = 0.0;
    double rho_out = 0.0;   // max cosine between an outside token and a non-sink inside token
    double rho_cap = 1.0;   // e^{-beta}
    bool rho_out_within_cap = true;
    double delta = 0.0;
    double delta0 = 0.0;
    double scale_b = 0.0;
};

template <class Cos>
MarginQuantities margin_quantities(std::vector<double> a, const Selection& sel, Cos&& cos, double beta)
{
    const int positions = static_cast<int>(a.size());
    if (sel.n >= positions) throw NoOutsideTokens();
    MarginQuantities mq;
    mq.a = std::move(a);
    mq.a_min_in = inf;
    for (int k : sel.indices) {
        if (k == 0) continue;
        mq.s_in += mq.a[k];
        mq.a_min_in = std::min(mq.a_min_in, mq.a[k]);
        mq.a_max_in = std::max(mq.a_max_in, mq.a[k]);
    }
    if (!std::isfinite(mq.a_min_in)) mq.a_min_in = 0.0;
    bool any_pair = false;
    mq.rho_out = -inf;
    for (int j = 0; j < positions; ++j) {
        if (sel.contains(j)) continue;
        mq.a_max_out = std::max(mq.a_max_out, mq.a[j]);
        for (int k : sel.indices) {
            if (k == 0) continue;
            mq.rho_out = std::max(mq.rho_out, static_cast<double>(cos(j, k)));
            any_pair = true;
        }
    }
    if (!any_pair) mq.rho_out = 0.0;
    mq.rho_cap = std::exp(-beta);
    mq.rho_out_within_cap = mq.rho_out <= mq.rho_cap + 1e-12;
    mq.delta = mq.a_min_in * mq.a_min_in - 2.0 * mq.a_max_out * mq.s_in * mq.rho_out;
    const double a0 = mq.a[0];
    mq.delta0 = a0 * a0 - (mq.s_in * mq.rho_out) * (mq.s_in * mq.rho_out);
    mq.scale_b = mq.a_max_in + mq.a_max_out + mq.s_in;
    return mq;
}

// Cosine lookup backed by measured value directions.
class MeasuredCosines {
public:
    explicit MeasuredCosines(const HeadSlice& slice) : u_(slice.values.cast<double>())
    {
        for (Eigen::Index i = 0; i < u_.rows(); ++i) {
            const double n = u_.row(i).norm();
            if (n > 0.0) u_.row(i) /= n;
        }
    }
    double operator()(int i, int j) const { return i == j ? 1.0 : u_.row(i).dot(u_.row(j)); }

private:
    RowMatrixD u_;
};

inline std::vector<double> effective_weights(const HeadSlice& slice)
{
    const Eigen::VectorXd n = slice.values.cast<double>().rowwise().norm();
    std::vector<double> a(static_cast<std::size_t>(n.size()));
    for (Eigen::Index i = 0; i < n.size(); ++i) a[static_cast<std::size_t>(i)] = slice.attn_row[i] * n[i];
    return a;
}

inline std::vector<double> effective_weights(const GeometryModel& m)
{
    std::vector<double> a(m.alpha.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = m.alpha[i] * m.norms[i];
    return a;
}

inline MarginQuantities margin_quantities(const HeadSlice& slice, const Selection& sel, double beta)
{
    return margin_quantities(effective_weights(slice), sel, MeasuredCosines(slice), beta);
}

inline MarginQuantities margin_quantities(const GeometryModel& m, const Selection& sel)
{
    return margin_quantities(effective_weights(m), sel, [&](int i, int j) { return m.cos(i, j); }, m.beta);
}

// Gaussian lower-tail quantity: xi phi(xi) / (1 + xi^2) for xi > 0, 1/2 for
// xi < 0, and 0 at xi = 0 (the limit of the positive branch).
inline double lower_tail_p(double xi)
{
    if (xi < 0.0) return 0.5;
    if (xi == 0.0) return 0.0;
    return normal_pdf(xi) / (xi + 1.0 / xi);
}

// How the sink enters the mean gap mu_ij.  full_selection sums over all of
// I_N (the exact expectation of D_j - D_i); sink_excluded drops the sink term
// from the coupling sums as in the short-form display.
enum class SinkCoupling { full_selection, sink_excluded };

struct PairwiseTail {
    std::vector<int> in_idx, out_idx;
    RowMatrixD mu, xi, p_minus;  // rows: in_idx, cols: out_idx
    double sigma = 0.0;
    std::vector<double> M;       // M_x = sum over I_N \ {0} of a_l rho_{l,x}, every position x
};

template <class Cos>
PairwiseTail pairwise_tails(const MarginQuantities& mq, Cos&& cos, const Selection& sel, double kappa, int d,
                            SinkCoupling coupling = SinkCoupling::full_selection)
{
    if (!(kappa > 0.0)) throw RangeError("kappa must be positive");
    if (d < 2) throw RangeError("d must be at least 2");
    const int positions = static_cast<int>(mq.a.size());
    PairwiseTail t;
    for (int i = 0; i < positions; ++i) (sel.contains(i) ? t.in_idx : t.out_idx).push_back(i);

    t.M.assign(static_cast<std::size_t>(positions), 0.0);
    std::vector<double> coupling_sum(static_cast<std::size_t>(positions), 0.0);
    for (int x = 0; x < positions; ++x) {
        double m_ex = 0.0, m_full = 0.0;
        for (int l : sel.indices) {
            const double term = mq.a[l] * cos(l, x);
            m_full += term;
            if (l != 0) m_ex += term;
        }
        t.M[x] = m_ex;
        coupling_sum[x] = coupling == SinkCoupling::full_selection ? m_full : m_ex;
    }

    t.sigma = mq.scale_b / std::sqrt(2.0 * kappa * d);
    const auto ni = static_cast<Eigen::Index>(t.in_idx.size()), no = static_cast<Eigen::Index>(t.out_idx.size());
    t.mu.resize(ni, no);
    t.xi.resize(ni, no);
    t.p_minus.resize(ni, no);
    for (Eigen::Index r = 0; r < ni; ++r) {
        const int i = t.in_idx[r];
        for (Eigen::Index c = 0; c < no; ++c) {
            const int j = t.out_idx[c];
            const double mu = (mq.a[j] * mq.a[j] - mq.a[i] * mq.a[i]) - 2.0 * mq.a[j] * coupling_sum[j] +
                              2.0 * mq.a[i] * coupling_sum[i];
            t.mu(r, c) = mu;
            // sigma = 0 only when every effective weight vanishes; the gap is then deterministic
            t.xi(r, c) = t.sigma > 0.0 ? mu / t.sigma : (mu > 0 ? inf : (mu < 0 ? -inf : 0.0));
            t.p_minus(r, c) = std::isinf(t.xi(r, c)) ? (t.xi(r, c) > 0 ? 0.0 : 0.5) : lower_tail_p(t.xi(r, c));
        }
    }
    return t;
}

struct Envelope {
    double lo = 0.0;
    double hi = 1.0;
};

// Exponential tail terms shared by both lower bounds: (L-N) e^{-k d (D/B)^2}
// and (L-N)/N e^{-k d (D0+/B)^2}.  A nonpositive sink margin contributes its
// full union factor.
struct TailTerms {
    double main = 0.0;
    double sink = 0.0;
};

inline TailTerms tail_terms(int L, int n, double kappa, int d, double delta_over_b, double delta0_over_b)
{
    const double k = L - n;
    const double d0 = std::max(delta0_over_b, 0.0);
    return {k * std::exp(-kappa * d * delta_over_b * delta_over_b), k / n * std::exp(-kappa * d * d0 * d0)};
}

inline double precision_lower(int L, int n, double kappa, int d, double delta_over_b, double delta0_over_b)
{
    const auto t = tail_terms(L, n, kappa, d, delta_over_b, delta0_over_b);
    return std::clamp(1.0 / (1.0 + t.main + t.sink), 0.0, 1.0);
}

inline double recall_lower(int L, int n, double kappa, int d, double delta_over_b, double delta0_over_b)
{
    const auto t = tail_terms(L, n, kappa, d, delta_over_b, delta0_over_b);
    return std::clamp(1.0 - t.main - t.sink, 0.0, 1.0);
}

namespace detail {
inline double ratio(double x, double b) { return b > 0.0 ? x / b : (x > 0.0 ? inf : 0.0); }
} // namespace detail

inline Envelope precision_bounds(const MarginQuantities& mq, const PairwiseTail& t, int L, int n, double kappa, int d)
{
    Envelope e;
    e.lo = mq.delta > 0.0
               ? precision_lower(L, n, kappa, d, detail::ratio(mq.delta, mq.scale_b), detail::ratio(mq.delta0, mq.scale_b))
               : 0.0;
    const double worst = t.p_minus.size() ? t.p_minus.maxCoeff() : 0.0;
    e.hi = 1.0 - worst / (n + 1.0);
    return e;
}

inline Envelope recall_bounds(const MarginQuantities& mq, const PairwiseTail& t, int L, int n, double kappa, int d)
{
    Envelope e;
    e.lo = mq.delta > 0.0
               ? recall_lower(L, n, kappa, d, detail::ratio(mq.delta, mq.scale_b), detail::ratio(mq.delta0, mq.scale_b))
               : 0.0;
    if (t.p_minus.size()) {
        e.hi = (1.0 - t.p_minus.rowwise().maxCoeff().array()).sum() / n;
    } else {
        e.hi = 1.0;
    }
    return e;
}

struct FscoreEnvelope {
    double rmin_lo = 0.0, rmin_hi = 1.0;
    double rmax_lo = 0.0, rmax_hi = 1.0;
};

inline double harmonic_with_one(double x)
{
    if (!(x >= 0.0 && x <= 1.0)) throw RangeError("envelope value outside [0,1]");
    return 2.0 * x / (1.0 + x);
}

// F(r_min) pairs R with P = 1, F(r_max) pairs P with R = 1.
inline FscoreEnvelope fscore_bounds(const Envelope& p, const Envelope& r)
{
    return {harmonic_with_one(r.lo), harmonic_with_one(r.hi), harmonic_with_one(p.lo), harmonic_with_one(p.hi)};
}

struct BoundReport {
    int n = 0;
    double precision_lo = 1.0, precision_hi = 1.0;
    double recall_lo = 1.0, recall_hi = 1.0;
    double f_rmin_lo = 1.0, f_rmin_hi = 1.0;
    double f_rmax_lo = 1.0, f_rmax_hi = 1.0;
    double kappa = 0.5;
    bool margin_positive = true;
    double delta = 0.0, delta0 = 0.0, scale_b = 0.0;
    bool exact = false;    // N = 1 or N = L+1: every statistic is identically 1
    bool lo_capped = false; // a lower bound exceeded its upper bound and was capped
};

inline BoundReport exact_report(int n, double kappa)
{
    BoundReport r;
    r.n = n;
    r.kappa = kappa;
    r.exact = true;
    return r;
}

inline BoundReport assemble_report(const MarginQuantities& mq, const PairwiseTail& t, int L, int n, double kappa, int d)
{
    BoundReport r;
    r.n = n;
    r.kappa = kappa;
    r.delta = mq.delta;
    r.delta0 = mq.delta0;
    r.scale_b = mq.scale_b;
    r.margin_positive = mq.delta > 0.0;
    auto p = precision_bounds(mq, t, L, n, kappa, d);
    auto q = recall_bounds(mq, t, L, n, kappa, d);
    for (auto* e : {&p, &q})
        if (e->lo > e->hi) {
            e->lo = e->hi;
            r.lo_capped = true;
        }
    r.precision_lo = p.lo;
    r.precision_hi = p.hi;
    r.recall_lo = q.lo;
    r.recall_hi = q.hi;
    const auto f = fscore_bounds(p, q);
    r.f_rmin_lo = f.rmin_lo;
    r.f_rmin_hi = f.rmin_hi;
    r.f_rmax_lo = f.rmax_lo;
    r.f_rmax_hi = f.rmax_hi;
    return r;
}

inline BoundReport model_bound_report(const GeometryModel& m, int n, double kappa,
                                      SinkCoupling coupling = SinkCoupling::full_selection)
{
    const int L = m.seq_len();
    if (n == 1 || n == L + 1) return exact_report(n, kappa);
    const auto sel = top_n_select(m.alpha, n);
    const auto mq = margin_quantities(m, sel);
    const auto t = pairwise_tails(mq, [&](int i, int j) { return m.cos(i, j); }, sel, kappa, m.d, coupling);
    return assemble_report(mq, t, L, n, kappa, m.d);
}

// Envelope for a measured slice: cosines come from the data, beta only feeds the cap check.
inline BoundReport slice_bound_report(const HeadSlice& slice, int n, double kappa, double beta,
                                      SinkCoupling coupling = SinkCoupling::full_selection)
{
    const int L = slice.seq_len();
    if (n == 1 || n == L + 1) return exact_report(n, kappa);
    const auto sel = top_n_select(slice.attn_row, n);
    const MeasuredCosines cos(slice);
    const auto mq = margin_quantities(effective_weights(slice), sel, cos, beta);
    const auto t = pairwise_tails(mq, cos, sel, kappa, slice.dim(), coupling);
    return assemble_report(mq, t, L, n, kappa, slice.dim());
}

// kappa such that lower(kappa) matches target, by bisection in log(kappa).
// lower must be nondecreasing in kappa.
struct KappaCalibration {
    double kappa = 0.5;
    bool saturated = false;  // target outside [lower(lo), lower(hi)]; kappa pinned to a bracket end
};

inline KappaCalibration calibrate_kappa(const std::function<double(double)>& lower, double target, double lo = 1e-4,
                                        double hi = 1e4)
{
    KappaCalibration c;
    if (lower(lo) >= target) return {lo, true};
    if (lower(hi) <= target) return {hi, true};
    double a = std::log(lo), b = std::log(hi);
    for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
        const double mid = 0.5 * (a + b);
        (lower(std::exp(mid)) < target ? a : b) = mid;
    }
    c.kappa = std::exp(0.5 * (a + b));
    return c;
}

// ---- deterministic reductions ----

struct ReductionReport {
    int n = 0;
    long long k_out = 0;          // outside tokens with D_j <= r_max^2
    long long k_in = 0;           // inside tokens with D_i <= r_min^2
    long long out_majorant = 0;   // sum over j out, i in of 1{D_j <= D_i}
    long long in_majorant = 0;    // same double sum, bounding N - K_in
    bool out_holds = true;
    bool in_holds = true;
};

inline ReductionReport deterministic_reduction_check(const SelectionGeometry& g, const Selection& sel)
{
    const auto& D = g.sq_dist;
    const int positions = static_cast<int>(D.size());
    if (sel.n >= positions) throw NoOutsideTokens();
    double r_max2 = -inf, r_min2 = inf;
    for (int i = 0; i < positions; ++i) (sel.contains(i) ? r_max2 = std::max(r_max2, D[i]) : r_min2 = std::min(r_min2, D[i]));

    ReductionReport r;
    r.n = sel.n;
    long long pairs = 0;
    for (int j = 0; j < positions; ++j) {
        if (sel.contains(j)) continue;
        r.k_out += D[j] <= r_max2;
        for (int i : sel.indices) pairs += D[j] <= D[i];
    }
    for (int i : sel.indices) r.k_in += D[i] <= r_min2;
    r.out_majorant = r.in_majorant = pairs;
    r.out_holds = r.k_out <= r.out_majorant;
    r.in_holds = sel.n - r.k_in <= r.in_majorant;
    return r;
}

// ---- sink shift ----

struct SinkShift {
    std::vector<double> shifted;  // first-order shifted distance of each outside token (position order)
    double r_min = 0.0;           // reference (orthogonal-sink) radius
    double r_min_shifted = 0.0;
    double delta_r = 0.0;         // r_min_shifted - r_min
    double ecdf_slope = 0.0;      // F'_in at r_min
    double predicted_delta_recall = 0.0;
    bool one_sided = false;       // r_min sits at the edge of the in-set distance range
};

// First-order effect of moving the sink correlation from 0 to rho0 on R(r_min).
// Distances of outside tokens shift by a_j S_in rho0 / d_j; the recall change
// is the in-set distance ECDF slope times the radius shift.
inline SinkShift sink_shift(const SelectionGeometry& g, const MarginQuantities& mq, double rho0)
{
    const int positions = static_cast<int>(g.dist.size());
    if (g.sel.n >= positions) throw NoOutsideTokens();
    SinkShift s;
    s.r_min = g.r_min;
    s.r_min_shifted = inf;
    for (int j = 0; j < positions; ++j) {
        if (g.sel.contains(j)) continue;
        const double dj = g.dist[j];
        const double shifted = dj > 0.0 ? dj + mq.a[j] * mq.s_in * rho0 / dj : dj;
        s.shifted.push_back(shifted);
        s.r_min_shifted = std::min(s.r_min_shifted, shifted);
    }
    s.delta_r = s.r_min_shifted - s.r_min;

    std::vector<double> in;
    for (int i : g.sel.indices) in.push_back(g.dist[i]);
    std::sort(in.begin(), in.end());
    const double n = static_cast<double>(in.size());
    auto F = [&](double r) { return static_cast<double>(std::upper_bound(in.begin(), in.end(), r) - in.begin()) / n; };
    const double span = in.back() - in.front();
    double h = in.size() > 1 ? span / (n - 1.0) : 0.0;
    if (!(h > 0.0)) h = std::max(std::abs(s.r_min), 1.0) * 1e-3;
    const bool lo_edge = s.r_min - h < in.front(), hi_edge = s.r_min + h > in.back();
    if (lo_edge && !hi_edge) {
        s.ecdf_slope = (F(s.r_min + h) - F(s.r_min)) / h;
        s.one_sided = true;
    } else if (hi_edge && !lo_edge) {
        s.ecdf_slope = (F(s.r_min) - F(s.r_min - h)) / h;
        s.one_sided = true;
    } else {
        s.ecdf_slope = (F(s.r_min + h) - F(s.r_min - h)) / (2.0 * h);
        s.one_sided = lo_edge && hi_edge;
    }
    s.predicted_delta_recall = rho0 == 0.0 ? 0.0 : s.ecdf_slope * s.delta_r;
    return s;
}

} // namespace attngeom
