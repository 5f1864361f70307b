#pragma once

#include "attngeom/assumptions.hpp"
#include "attngeom/bounds.hpp"

#include <random>

namespace attngeom {

enum class DirectionModel {
    ar_chain,    // O(L d) autoregressive chain on the sphere
    exact_gram,  // Cholesky of the e^{-beta|i-j|} kernel; needs d >= L+1
};

struct SyntheticConfig {
    int L = 128;
    int d = 256;
    double C = 1.0;
    double lambda = 0.2;
    double beta = 0.2;
    double rho0 = 0.0;
    ProfileParams profile{10000.0, 1.0, 0.7, 0.5, 16, 120};
    std::uint64_t seed = 0;
    double noise = 0.0;  // relative std of non-sink norms
    bool softmax_renormalize = true;
    DirectionModel directions = DirectionModel::ar_chain;

    void validate() const
    {
        if (L < 2) throw ConfigError("L must be at least 2");
        if (d < 2) throw ConfigError("d must be at least 2");
        if (!(C > 0.0)) throw ConfigError("C must be positive");
        if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
        if (!(beta > 0.0)) throw ConfigError("beta must be positive");
        if (!(rho0 >= -1.0 && rho0 <= 1.0)) throw ConfigError("rho0 must lie in [-1, 1]");
        if (!(noise >= 0.0)) throw ConfigError("noise must be nonnegative");
        if (!(profile.p_sink > 0.0 && profile.p_base > 0.0)) throw ConfigError("p_sink and p_base must be positive");
        if (profile.t1 < 0 || profile.t1 > profile.t2 || profile.t2 > L) throw ConfigError("need 0 <= T1 <= T2 <= L");
        if (std::abs(profile.eta) >= 1.0 && profile.t2 > profile.t1)
            throw ConfigError("|eta| must stay below 1 while the oscillatory phase is present");
        if (directions == DirectionModel::exact_gram && d < L + 1)
            throw ConfigError("exact Gram construction needs d >= L+1");
    }
};

inline std::vector<double> attention_template(int L, const ProfileParams& p, bool renormalize)
{
    std::vector<double> a(static_cast<std::size_t>(L) + 1);
    for (int i = 0; i <= L; ++i) a[static_cast<std::size_t>(i)] = profile_value(p, i);
    if (renormalize) {
        const double sum = std::accumulate(a.begin(), a.end(), 0.0);
        for (double& x : a) x /= sum;
    }
    return a;
}

namespace detail {

inline Eigen::VectorXd gaussian(std::mt19937_64& rng, int d)
{
    std::normal_distribution<double> nd;
    Eigen::VectorXd g(d);
    for (int k = 0; k < d; ++k) g[k] = nd(rng);
    return g;
}

// Unit directions for positions 1..L (rows 1..L of the result; row 0 left for the sink).
inline RowMatrixD chain_directions(const SyntheticConfig& c, std::mt19937_64& rng)
{
    RowMatrixD u = RowMatrixD::Zero(c.L + 1, c.d);
    const double r = std::exp(-c.beta), s = std::sqrt(1.0 - r * r);
    Eigen::VectorXd cur = gaussian(rng, c.d);
    cur.normalize();
    u.row(1) = cur.transpose();
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.d));
    for (int i = 2; i <= c.L; ++i) {
        cur = r * cur + s * scale * gaussian(rng, c.d);
        cur.normalize();
        u.row(i) = cur.transpose();
    }
    return u;
}

// Sink direction rho_bar m_hat + sqrt(1 - rho_bar^2) g0 with g0 orthogonal to
// m_hat.  Then mean_j cos(u0, u_j) = rho_bar |m| exactly, so rho_bar = rho0/|m|.
inline Eigen::VectorXd chain_sink(const RowMatrixD& u, double rho0, std::mt19937_64& rng)
{
    const int L = static_cast<int>(u.rows()) - 1;
    const Eigen::VectorXd m = u.bottomRows(L).colwise().mean().transpose();
    const double mn = m.norm();
    Eigen::VectorXd g0 = gaussian(rng, static_cast<int>(u.cols()));
    if (mn == 0.0) {
        if (rho0 != 0.0) throw FeasibilityError("mean direction vanished; only rho0 = 0 is reachable", 0.0, 0.0);
        return g0.normalized();
    }
    const Eigen::VectorXd mh = m / mn;
    g0 -= g0.dot(mh) * mh;
    g0.normalize();
    const double rb = rho0 / mn;
    if (std::abs(rb) > 1.0) throw FeasibilityError("rho0 out of reach for this beta and L", -mn, mn);
    return rb * mh + std::sqrt(1.0 - rb * rb) * g0;
}

inline RowMatrixD gram_directions(const SyntheticConfig& c)
{
    Eigen::MatrixXd K(c.L, c.L);
    for (int i = 0; i < c.L; ++i)
        for (int j = 0; j < c.L; ++j) K(i, j) = std::exp(-c.beta * std::abs(i - j));
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) throw DegenerateError("similarity kernel is not positive definite");
    const Eigen::MatrixXd R = llt.matrixL();

    RowMatrixD u = RowMatrixD::Zero(c.L + 1, c.d);
    u.block(1, 0, c.L, c.L) = R;
    // sink: w with R w = rho0 * 1 gives cos(u0, u_j) = rho0 for every j
    const Eigen::VectorXd w = R.triangularView<Eigen::Lower>().solve(Eigen::VectorXd::Constant(c.L, c.rho0));
    const double w2 = w.squaredNorm();
    if (w2 > 1.0) {
        const double reach = std::abs(c.rho0) / std::sqrt(w2);
        throw FeasibilityError("rho0 out of reach for the exact kernel", -reach, reach);
    }
    u.block(0, 0, 1, c.L) = w.transpose();
    u(0, c.L) = std::sqrt(1.0 - w2);
    return u;
}

} // namespace detail

inline HeadSlice generate_slice(const SyntheticConfig& c, int layer = 0, int head = 0)
{
    c.validate();
    std::mt19937_64 rng(c.seed);
    RowMatrixD u;
    if (c.directions == DirectionModel::ar_chain) {
        u = detail::chain_directions(c, rng);
        u.row(0) = detail::chain_sink(u, c.rho0, rng).transpose();
    } else {
        u = detail::gram_directions(c);
    }

    std::normal_distribution<double> nd;
    Eigen::VectorXd norms(c.L + 1);
    norms[0] = c.lambda * c.C;
    for (int i = 1; i <= c.L; ++i) norms[i] = c.C * (1.0 + c.noise * nd(rng));

    HeadSlice s;
    s.layer = layer;
    s.head = head;
    s.values = (norms.asDiagonal() * u).cast<float>();
    const auto a = attention_template(c.L, c.profile, c.softmax_renormalize);
    s.attn_row = Eigen::Map<const Eigen::VectorXd>(a.data(), c.L + 1).cast<float>();
    return s;
}

inline GeometryModel geometry_model(const SyntheticConfig& c)
{
    GeometryModel m;
    m.alpha = attention_template(c.L, c.profile, c.softmax_renormalize);
    m.norms.assign(static_cast<std::size_t>(c.L) + 1, c.C);
    m.norms[0] = c.lambda * c.C;
    m.beta = c.beta;
    m.rho0 = c.rho0;
    m.d = c.d;
    return m;
}

inline SyntheticConfig with_seed(SyntheticConfig c, std::uint64_t seed)
{
    c.seed = seed;
    return c;
}

// ---- Monte Carlo harness ----

struct MonteCarloResult {
    int n = 0;
    double mean_P_rmax = 0.0;
    double mean_R_rmin = 0.0;
    double mean_F_rmin = 0.0;
    double mean_F_rmax = 0.0;
    double ci_P = 0.0;  // 95% normal half-widths
    double ci_R = 0.0;
    int n_trials = 0;
    BoundReport envelope;
};

struct TrialMetrics {
    std::vector<double> P, R;  // per N, P(r_max) and R(r_min)
};

// Per-trial metrics; trial t uses seed derive_seed(cfg.seed, t).
inline std::vector<TrialMetrics> run_trials(const SyntheticConfig& cfg, std::span<const int> ns, int trials, int threads)
{
    for (int n : ns)
        if (n < 1 || n > cfg.L + 1) throw RangeError("N=" + std::to_string(n) + " outside [1, L+1]");
    return parallel_map<TrialMetrics>(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
        const auto slice = generate_slice(with_seed(cfg, derive_seed(cfg.seed, t)));
        const auto curve = metric_curve(slice, ns);
        TrialMetrics m;
        for (std::size_t k = 0; k < ns.size(); ++k) {
            m.R.push_back(curve[2 * k].recall);
            m.P.push_back(curve[2 * k + 1].precision);
        }
        return m;
    });
}

inline std::pair<double, double> mean_ci(const std::vector<double>& xs)
{
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= std::max(n - 1.0, 1.0);
    return {mean, 1.96 * std::sqrt(var / n)};
}

inline std::vector<MonteCarloResult> summarize_trials(const SyntheticConfig& cfg, std::span<const int> ns,
                                                      const std::vector<TrialMetrics>& trials, double kappa,
                                                      SinkCoupling coupling = SinkCoupling::full_selection)
{
    const auto model = geometry_model(cfg);
    std::vector<MonteCarloResult> out;
    for (std::size_t k = 0; k < ns.size(); ++k) {
        std::vector<double> P, R, Fmin, Fmax;
        for (const auto& t : trials) {
            P.push_back(t.P[k]);
            R.push_back(t.R[k]);
            Fmin.push_back(fscore(1.0, t.R[k]));
            Fmax.push_back(fscore(t.P[k], 1.0));
        }
        MonteCarloResult r;
        r.n = ns[k];
        r.n_trials = static_cast<int>(trials.size());
        std::tie(r.mean_P_rmax, r.ci_P) = mean_ci(P);
        std::tie(r.mean_R_rmin, r.ci_R) = mean_ci(R);
        r.mean_F_rmin = mean_ci(Fmin).first;
        r.mean_F_rmax = mean_ci(Fmax).first;
        r.envelope = model_bound_report(model, ns[k], kappa, coupling);
        out.push_back(r);
    }
    return out;
}

inline std::vector<MonteCarloResult> monte_carlo_envelope(const SyntheticConfig& cfg, std::span<const int> ns,
                                                          int trials, double kappa, int threads = 1,
                                                          SinkCoupling coupling = SinkCoupling::full_selection)
{
    if (trials < 100) throw ConfigError("Monte Carlo needs at least 100 trials");
    return summarize_trials(cfg, ns, run_trials(cfg, ns, trials, threads), kappa, coupling);
}

struct CalibratedEnvelope {
    KappaCalibration kappa;
    std::vector<MonteCarloResult> results;
};

// Same trials as monte_carlo_envelope, with kappa chosen so that the model
// precision lower bound at calibration_n equals the empirical mean there.
inline CalibratedEnvelope monte_carlo_calibrated(const SyntheticConfig& cfg, std::span<const int> ns, int trials,
                                                 int calibration_n = 2, int threads = 1,
                                                 SinkCoupling coupling = SinkCoupling::full_selection)
{
    if (trials < 100) throw ConfigError("Monte Carlo needs at least 100 trials");
    std::vector<int> grid(ns.begin(), ns.end());
    if (std::find(grid.begin(), grid.end(), calibration_n) == grid.end()) grid.push_back(calibration_n);
    const auto raw = run_trials(cfg, grid, trials, threads);
    const auto pos = static_cast<std::size_t>(std::find(grid.begin(), grid.end(), calibration_n) - grid.begin());
    std::vector<double> P;
    for (const auto& t : raw) P.push_back(t.P[pos]);
    const double target = mean_ci(P).first;

    const auto model = geometry_model(cfg);
    const auto sel = top_n_select(model.alpha, calibration_n);
    const auto mq = margin_quantities(model, sel);
    if (!(mq.delta > 0.0)) throw DegenerateError("calibration N has a nonpositive margin");
    const double r = mq.delta / mq.scale_b, r0 = mq.delta0 / mq.scale_b;
    CalibratedEnvelope out;
    out.kappa = calibrate_kappa(
        [&](double k) { return precision_lower(cfg.L, calibration_n, k, cfg.d, r, r0); }, target);

    auto all = summarize_trials(cfg, grid, raw, out.kappa.kappa, coupling);
    for (std::size_t k = 0; k < ns.size(); ++k) out.results.push_back(all[k]);
    return out;
}

// ---- sink-correlation sweep ----

struct CorrelationRow {
    int n = 0;
    double corr = 0.0;
    bool recall_constant = false;  // zero variance in R: correlation reported as 0
};

inline double pearson(std::span<const double> x, std::span<const double> y)
{
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

// Heads for every (rho0, trial) pair share the trial's seed, so the grid is
// paired: only the sink correlation differs between heads of one trial.
inline std::vector<CorrelationRow> sweep_rho0_recall_correlation(const SyntheticConfig& base, std::span<const double> rho0_grid,
                                                                 std::span<const int> ns, int trials, int threads = 1)
{
    if (rho0_grid.size() < 5) throw ConfigError("rho0 sweep needs at least 5 grid points");
    const auto [lo, hi] = std::minmax_element(rho0_grid.begin(), rho0_grid.end());
    if (*lo == *hi) throw DegenerateError("rho0 grid has zero variance");

    const std::size_t G = rho0_grid.size();
    struct Head {
        double rho0 = 0.0;
        std::vector<double> R;
    };
    auto heads = parallel_map<Head>(G * static_cast<std::size_t>(trials), threads, [&](std::size_t k) {
        auto c = base;
        c.rho0 = rho0_grid[k % G];
        c.seed = derive_seed(base.seed, k / G);
        const auto slice = generate_slice(c);
        Head h;
        h.rho0 = sink_similarity(slice);
        const auto curve = metric_curve(slice, ns);
        for (std::size_t j = 0; j < ns.size(); ++j) h.R.push_back(curve[2 * j].recall);
        return h;
    });

    std::vector<double> rho;
    for (const auto& h : heads) rho.push_back(h.rho0);
    std::vector<CorrelationRow> out;
    for (std::size_t j = 0; j < ns.size(); ++j) {
        std::vector<double> R;
        for (const auto& h : heads) R.push_back(h.R[j]);
        CorrelationRow row;
        row.n = ns[j];
        const double c = pearson(rho, R);
        row.recall_constant = std::isnan(c);
        row.corr = row.recall_constant ? 0.0 : c;
        out.push_back(row);
    }
    return out;
}

} // namespace attngeom
