#pragma once

#include "attngeom/dump_io.hpp"
#include "attngeom/parallel.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <numeric>

namespace attngeom {

// ---- value-norm stability ----

struct NormStats {
    double C = 0.0;       // median non-sink norm
    double lambda = 0.0;  // |v_0| / C
    double cv = 0.0;      // population std / mean over i > 0
};

inline NormStats fit_norms(const HeadSlice& slice)
{
    const int L = slice.seq_len();
    if (L < 2) throw RangeError("norm fit needs L >= 2");
    const Eigen::VectorXd norms = slice.values.cast<double>().rowwise().norm();
    std::vector<double> rest(norms.data() + 1, norms.data() + norms.size());
    if (std::all_of(rest.begin(), rest.end(), [](double x) { return x == 0.0; }))
        throw DegenerateError("all non-sink value states are zero");

    NormStats st;
    std::vector<double> sorted = rest;
    const auto mid = sorted.size() / 2;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
    st.C = sorted[mid];
    if (sorted.size() % 2 == 0) {
        const double lower = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid));
        st.C = 0.5 * (st.C + lower);
    }
    if (st.C == 0.0) throw DegenerateError("median non-sink norm is zero");
    st.lambda = norms[0] / st.C;

    const double mean = std::accumulate(rest.begin(), rest.end(), 0.0) / static_cast<double>(rest.size());
    double var = 0.0;
    for (double x : rest) var += (x - mean) * (x - mean);
    var /= static_cast<double>(rest.size());
    st.cv = std::sqrt(var) / mean;
    return st;
}

// ---- cross-token similarity ----

struct LagCurve {
    std::vector<double> mean;      // index = lag; mean[0] = 1
    std::vector<double> neg_frac;  // Pr[cos < 0] per lag
    int excluded_rows = 0;         // zero-norm positions left out of every pair
};

inline LagCurve mean_lag_cosine(const HeadSlice& slice, int max_lag)
{
    const int L = slice.seq_len();
    if (max_lag < 1 || max_lag >= L) throw RangeError("max_lag must lie in [1, L-1]");
    RowMatrixD u = slice.values.cast<double>().bottomRows(L);  // positions 1..L
    std::vector<char> ok(static_cast<std::size_t>(L), 1);
    LagCurve c;
    for (int i = 0; i < L; ++i) {
        const double n = u.row(i).norm();
        if (n == 0.0) {
            ok[static_cast<std::size_t>(i)] = 0;
            ++c.excluded_rows;
        } else {
            u.row(i) /= n;
        }
    }
    c.mean.assign(static_cast<std::size_t>(max_lag) + 1, 0.0);
    c.neg_frac.assign(static_cast<std::size_t>(max_lag) + 1, 0.0);
    c.mean[0] = 1.0;
    for (int t = 1; t <= max_lag; ++t) {
        double sum = 0.0;
        int count = 0, neg = 0;
        for (int i = 0; i + t < L; ++i) {
            if (!ok[static_cast<std::size_t>(i)] || !ok[static_cast<std::size_t>(i + t)]) continue;
            const double cs = u.row(i).dot(u.row(i + t));
            sum += cs;
            neg += cs < 0.0;
            ++count;
        }
        c.mean[static_cast<std::size_t>(t)] = count ? sum / count : 0.0;
        c.neg_frac[static_cast<std::size_t>(t)] = count ? static_cast<double>(neg) / count : 0.0;
    }
    return c;
}

// Mean cos(v_0, v_j) over j = 1..L.
inline double sink_similarity(const HeadSlice& slice)
{
    const Eigen::VectorXd v0 = slice.values.row(0).cast<double>().transpose();
    double sum = 0.0;
    for (int j = 1; j <= slice.seq_len(); ++j) sum += cosine(v0, slice.values.row(j).cast<double>().transpose());
    return sum / slice.seq_len();
}

struct SimilarityFit {
    double beta = 0.0;
    double rho0 = 0.0;
    double mae = 0.0;
    std::vector<double> neg_frac;
    bool at_grid_edge = false;  // optimum pinned to the search bound: poor or no decay
};

inline constexpr double beta_grid_lo = 1e-6;
inline constexpr double beta_grid_hi = 1e3;

// Mean absolute error of exp(-beta t) against curve[t], t >= 1.
inline double exp_fit_mae(std::span<const double> curve, double beta)
{
    double e = 0.0;
    for (std::size_t t = 1; t < curve.size(); ++t) e += std::abs(std::exp(-beta * static_cast<double>(t)) - curve[t]);
    return e / static_cast<double>(curve.size() - 1);
}

// curve is lag-indexed (entry 0 ignored).  MAE objective, log grid then Brent.
inline SimilarityFit fit_exponential(std::span<const double> curve)
{
    if (curve.size() < 4) throw RangeError("exponential fit needs at least 3 positive lags");
    for (std::size_t t = 1; t < curve.size(); ++t)
        if (!std::isfinite(curve[t])) throw ValidationError("lag curve has non-finite entries");

    constexpr int grid = 241;
    const double llo = std::log(beta_grid_lo), lhi = std::log(beta_grid_hi);
    auto at = [&](int k) { return llo + (lhi - llo) * k / (grid - 1); };
    int best = 0;
    double best_err = inf;
    for (int k = 0; k < grid; ++k) {
        const double e = exp_fit_mae(curve, std::exp(at(k)));
        if (e < best_err) best_err = e, best = k;
    }
    const double lo = at(std::max(best - 1, 0)), hi = at(std::min(best + 1, grid - 1));
    const auto [lb, err] = boost::math::tools::brent_find_minima(
        [&](double lb) { return exp_fit_mae(curve, std::exp(lb)); }, lo, hi, std::numeric_limits<double>::digits);

    SimilarityFit f;
    if (err <= best_err) {
        f.beta = std::exp(lb);
        f.mae = err;
    } else {
        f.beta = std::exp(at(best));
        f.mae = best_err;
    }
    f.at_grid_edge = best == 0 || best == grid - 1;
    return f;
}

// ---- attention-weight profile ----

struct ProfileParams {
    double p_sink = 0.0;
    double p_base = 0.0;
    double eta = 0.0;
    double omega = 0.0;
    int t1 = 0;
    int t2 = 0;
};

// Template value at position i (before any renormalization).
inline double profile_value(const ProfileParams& p, int i)
{
    if (i == 0) return p.p_sink;
    if (i <= p.t1) return p.p_base;
    if (i <= p.t2) return p.p_base * (1.0 + p.eta * std::cos(p.omega * i));
    return p.p_base * std::exp(p.eta * (i - p.t2));
}

struct ProfileFit : ProfileParams {
    double mae = 0.0;          // mean |log residual| over i = 1..L
    bool sink_head = true;     // p_sink / p_base above the configured ratio
    bool oscillation = false;  // T1 < T2 was kept over the plain plateau+tail model
};

struct ProfileFitOptions {
    double sink_ratio = 10.0;
    // An oscillatory phase must cut the log-SSE by this fraction to be kept.
    double min_oscillation_gain = 1e-3;
};

namespace detail {

// Log-space profile fitting on positions 1..L.  y is centered so the fit is
// invariant to rescaling the row.
class ProfileFitter {
public:
    explicit ProfileFitter(std::vector<double> y) : y_(std::move(y)), L_(static_cast<int>(y_.size()))
    {
        ybar_ = std::accumulate(y_.begin(), y_.end(), 0.0) / L_;
        for (double& v : y_) v -= ybar_;
        py_.assign(L_ + 1, 0.0);
        pyi_.assign(L_ + 1, 0.0);
        pi_.assign(L_ + 1, 0.0);
        pii_.assign(L_ + 1, 0.0);
        for (int i = 1; i <= L_; ++i) {
            const double yi = y_[i - 1];
            py_[i] = py_[i - 1] + yi;
            pyi_[i] = pyi_[i - 1] + yi * i;
            pi_[i] = pi_[i - 1] + i;
            pii_[i] = pii_[i - 1] + static_cast<double>(i) * i;
            syy_ += yi * yi;
        }
    }

    int L() const { return L_; }
    double ybar() const { return ybar_; }
    double syy() const { return syy_; }

    struct Linear {
        double a = 0.0, b = 0.0, sse = inf;
    };

    void set_omega(double omega)
    {
        omega_ = omega;
        pc_.assign(L_ + 1, 0.0);
        pcc_.assign(L_ + 1, 0.0);
        pyc_.assign(L_ + 1, 0.0);
        cos_.assign(L_ + 1, 0.0);
        for (int i = 1; i <= L_; ++i) {
            const double c = std::cos(omega * i);
            cos_[i] = c;
            pc_[i] = pc_[i - 1] + c;
            pcc_[i] = pcc_[i - 1] + c * c;
            pyc_[i] = pyc_[i - 1] + y_[i - 1] * c;
        }
    }

    // Least squares of y = a + b f, f = cos(omega i) on (t1,t2], (i - t2) beyond.
    Linear linear(int t1, int t2) const
    {
        const double n = L_;
        const double cnt = L_ - t2;
        const double si = pi_[L_] - pi_[t2], sii = pii_[L_] - pii_[t2];
        const double sy_t = py_[L_] - py_[t2], syi_t = pyi_[L_] - pyi_[t2];
        double sf = si - t2 * cnt;
        double sff = sii - 2.0 * t2 * si + static_cast<double>(t2) * t2 * cnt;
        double sfy = syi_t - t2 * sy_t;
        if (t2 > t1) {
            sf += pc_[t2] - pc_[t1];
            sff += pcc_[t2] - pcc_[t1];
            sfy += pyc_[t2] - pyc_[t1];
        }
        const double sy = py_[L_];
        Linear r;
        const double det = n * sff - sf * sf;
        if (det <= 1e-12 * n * std::max(sff, 1e-300)) {
            r.a = sy / n;
            r.sse = syy_ - sy * sy / n;
        } else {
            r.b = (n * sfy - sf * sy) / det;
            r.a = (sy - r.b * sf) / n;
            r.sse = syy_ - r.a * sy - r.b * sfy;
        }
        r.sse = std::max(r.sse, 0.0);
        return r;
    }

    // Feature g_i(b) of the exact model (log(1 + b cos) in the oscillatory phase).
    double feature(int i, int t1, int t2, double b) const
    {
        if (i <= t1) return 0.0;
        if (i <= t2) return std::log1p(b * cos_[i]);
        return b * (i - t2);
    }

    // Exact-model SSE with a profiled out, for given b.
    double exact_sse(int t1, int t2, double b, double* a_out = nullptr) const
    {
        double mean = 0.0;
        for (int i = 1; i <= L_; ++i) mean += y_[i - 1] - feature(i, t1, t2, b);
        mean /= L_;
        double sse = 0.0;
        for (int i = 1; i <= L_; ++i) {
            const double r = y_[i - 1] - mean - feature(i, t1, t2, b);
            sse += r * r;
        }
        if (a_out) *a_out = mean;
        return sse;
    }

    struct Exact {
        double a = 0.0, b = 0.0, sse = inf;
    };

    // The exact model differs from the linearized one only in the oscillatory
    // phase, so the linear solution seeds a bracketed 1-D search over b.
    Exact exact(int t1, int t2) const
    {
        const Linear lin = linear(t1, t2);
        Exact e;
        if (t2 == t1) {
            e.a = lin.a;
            e.b = lin.b;
            e.sse = lin.sse;
            return e;
        }
        const double w = std::max(std::abs(lin.b), 1e-3);
        const double lo = std::max(lin.b - w, -0.999), hi = std::min(lin.b + w, 0.999);
        auto [b, sse] = boost::math::tools::brent_find_minima(
            [&](double bb) { return exact_sse(t1, t2, bb); }, lo, hi, 40);
        e.b = b;
        e.sse = exact_sse(t1, t2, b, &e.a);
        return e;
    }

    double mae(int t1, int t2, double a, double b) const
    {
        double m = 0.0;
        for (int i = 1; i <= L_; ++i) m += std::abs(y_[i - 1] - a - feature(i, t1, t2, b));
        return m / L_;
    }

    double omega() const { return omega_; }

private:
    std::vector<double> y_;
    int L_;
    double ybar_ = 0.0, syy_ = 0.0, omega_ = 0.0;
    std::vector<double> py_, pyi_, pi_, pii_, pc_, pcc_, pyc_, cos_;
};

} // namespace detail

template <class Vec>
ProfileFit fit_profile(const Vec& attn, const ProfileFitOptions& opt = {})
{
    const int L = static_cast<int>(attn.size()) - 1;
    if (L < 8) throw RangeError("profile fit needs L >= 8");
    double floor = inf;
    for (int i = 1; i <= L; ++i)
        if (attn[i] > 0) floor = std::min(floor, static_cast<double>(attn[i]));
    if (!std::isfinite(floor)) throw DegenerateError("attention is zero everywhere after position 0");
    std::vector<double> y(static_cast<std::size_t>(L));
    for (int i = 1; i <= L; ++i) y[i - 1] = std::log(std::max(static_cast<double>(attn[i]), floor));

    detail::ProfileFitter fit(std::move(y));
    const int stride = std::max(1, L / 128);
    const int t1_max = L / 2, t2_max = L - 4;
    auto grid = [&](int from, int to) {
        std::vector<int> g;
        for (int t = from; t <= to; t += stride) g.push_back(t);
        if (!g.empty() && g.back() != to) g.push_back(to);
        return g;
    };
    const auto t1_grid = grid(4, t1_max);

    // plateau + tail only (oscillatory phase absent)
    const auto flat_grid = grid(4, t2_max);
    int flat_t = flat_grid.front();
    double flat_sse = inf;
    for (int t : flat_grid) {
        const double sse = fit.linear(t, t).sse;
        if (sse < flat_sse) flat_sse = sse, flat_t = t;
    }
    for (int t = std::max(4, flat_t - stride); t <= std::min(t2_max, flat_t + stride); ++t) {
        const double sse = fit.linear(t, t).sse;
        if (sse < flat_sse) flat_sse = sse, flat_t = t;
    }

    // full model: coarse (T1, T2, omega) grid on the linearized fit
    const double w_lo = 2.0 * std::numbers::pi / L, w_step = std::numbers::pi / L;
    int best_t1 = flat_t, best_t2 = flat_t;
    double best_w = w_lo, best_sse = inf;
    std::vector<std::vector<int>> t2_grids;
    for (int t1 : t1_grid) t2_grids.push_back(grid(t1 + 1, t2_max));
    for (int k = 0; w_lo + k * w_step <= std::numbers::pi + 1e-12; ++k) {
        const double w = w_lo + k * w_step;
        fit.set_omega(w);
        for (std::size_t g = 0; g < t1_grid.size(); ++g)
            for (int t2 : t2_grids[g]) {
                const int t1 = t1_grid[g];
                const double sse = fit.linear(t1, t2).sse;
                if (sse < best_sse) best_sse = sse, best_t1 = t1, best_t2 = t2, best_w = w;
            }
    }

    ProfileFit out;
    out.p_sink = static_cast<double>(attn[0]);
    double a = 0.0, b = 0.0, osc_sse = inf;
    if (std::isfinite(best_sse)) {
        // refinement: unit-stride sweeps of T2 then T1 on the linearized fit,
        // alternating with omega on the exact model.  The coarse T2 grid can
        // miss the tail onset by a few positions, and the tail is steep enough
        // in log space to drag T1 far off until T2 is exact.
        auto refine_omega = [&](double half_width) {
            const double lo = std::max(w_lo, best_w - half_width), hi = std::min(std::numbers::pi, best_w + half_width);
            auto [w, sse] = boost::math::tools::brent_find_minima(
                [&](double ww) {
                    fit.set_omega(ww);
                    return fit.exact(best_t1, best_t2).sse;
                },
                lo, hi, 40);
            best_w = w;
            fit.set_omega(w);
            return sse;
        };
        auto sweep_t = [&] {
            double sse_best = inf;
            for (int t2 = best_t1 + 1; t2 <= t2_max; ++t2) {
                const double sse = fit.linear(best_t1, t2).sse;
                if (sse < sse_best) sse_best = sse, best_t2 = t2;
            }
            sse_best = inf;
            for (int t1 = 4; t1 <= std::min(t1_max, best_t2 - 1); ++t1) {
                const double sse = fit.linear(t1, best_t2).sse;
                if (sse < sse_best) sse_best = sse, best_t1 = t1;
            }
        };
        fit.set_omega(best_w);
        for (int round = 0; round < 3; ++round) {
            sweep_t();
            refine_omega(round == 0 ? w_step : w_step / 2);
        }
        sweep_t();
        const auto e = fit.exact(best_t1, best_t2);
        a = e.a;
        b = e.b;
        osc_sse = e.sse;
    }

    if (!(flat_sse - osc_sse > opt.min_oscillation_gain * flat_sse + 1e-12 * L)) {
        const auto lin = fit.linear(flat_t, flat_t);
        out.t1 = out.t2 = flat_t;
        out.omega = 0.0;
        a = lin.a;
        b = lin.b;
        out.oscillation = false;
    } else {
        out.t1 = best_t1;
        out.t2 = best_t2;
        out.omega = best_w;
        out.oscillation = true;
        fit.set_omega(best_w);
    }
    out.eta = b;
    out.p_base = std::exp(a + fit.ybar());
    out.mae = fit.mae(out.t1, out.t2, a, b);
    out.sink_head = out.p_sink >= opt.sink_ratio * out.p_base;
    return out;
}

// ---- per-head bundle and dump-level prevalence ----

struct AssumptionFits {
    int layer = 0, head = 0;
    NormStats norms;
    SimilarityFit similarity;
    ProfileFit profile;
};

struct FitOptions {
    int max_lag = 64;  // clipped to L-1
    ProfileFitOptions profile;
};

inline AssumptionFits fit_head(const HeadSlice& slice, const FitOptions& opt = {})
{
    AssumptionFits f;
    f.layer = slice.layer;
    f.head = slice.head;
    f.norms = fit_norms(slice);
    const auto curve = mean_lag_cosine(slice, std::min(opt.max_lag, slice.seq_len() - 1));
    f.similarity = fit_exponential(curve.mean);
    f.similarity.neg_frac = curve.neg_frac;
    f.similarity.rho0 = sink_similarity(slice);
    f.profile = fit_profile(slice.attn_row, opt.profile);
    return f;
}

struct PrevalenceOptions {
    double mae_threshold = 0.1;  // log-scale profile MAE
    FitOptions fit;
    int threads = 1;
};

struct EcdfPoint {
    double value = 0.0;
    double fraction = 0.0;
};

inline std::vector<EcdfPoint> ecdf(std::vector<double> xs)
{
    std::sort(xs.begin(), xs.end());
    std::vector<EcdfPoint> out;
    out.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        out.push_back({xs[i], static_cast<double>(i + 1) / static_cast<double>(xs.size())});
    return out;
}

struct PrevalenceRow {
    int layer = 0;
    int heads = 0;
    int passing = 0;
    double fraction = 0.0;
};

struct PrevalenceReport {
    std::vector<PrevalenceRow> layers;
    std::vector<EcdfPoint> cv_ecdf;
    std::vector<EcdfPoint> lambda_ecdf;
    std::vector<AssumptionFits> fits;  // layer-major
};

// A head follows the template when it has a sink and its profile MAE is under
// the threshold.  A flat row fits a plateau perfectly, so the sink test is what
// separates template heads from uniform ones.
inline bool follows_template(const AssumptionFits& f, const PrevalenceOptions& opt)
{
    return f.profile.sink_head && f.profile.mae < opt.mae_threshold;
}

inline PrevalenceReport assumption_prevalence(const Dump& dump, const PrevalenceOptions& opt = {})
{
    const auto& m = dump.manifest();
    const auto total = static_cast<std::size_t>(m.num_layers * m.num_heads);
    PrevalenceReport rep;
    rep.fits = parallel_map<AssumptionFits>(total, opt.threads, [&](std::size_t k) {
        return fit_head(dump.load(static_cast<int>(k) / m.num_heads, static_cast<int>(k) % m.num_heads), opt.fit);
    });
    std::vector<double> cvs, lambdas;
    for (int l = 0; l < m.num_layers; ++l) {
        PrevalenceRow row;
        row.layer = l;
        row.heads = m.num_heads;
        for (int h = 0; h < m.num_heads; ++h) {
            const auto& f = rep.fits[static_cast<std::size_t>(l * m.num_heads + h)];
            row.passing += follows_template(f, opt);
            cvs.push_back(f.norms.cv);
            lambdas.push_back(f.norms.lambda);
        }
        row.fraction = static_cast<double>(row.passing) / row.heads;
        rep.layers.push_back(row);
    }
    rep.cv_ecdf = ecdf(std::move(cvs));
    rep.lambda_ecdf = ecdf(std::move(lambdas));
    return rep;
}

} // namespace attngeom
