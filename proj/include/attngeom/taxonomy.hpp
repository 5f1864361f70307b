#pragma once

#include "attngeom/geometry.hpp"

#include <array>
#include <random>

namespace attngeom {

enum class Regime { retriever, mixer, reset };

inline const char* to_string(Regime r)
{
    switch (r) {
    case Regime::retriever: return "Retriever";
    case Regime::mixer: return "Mixer";
    case Regime::reset: return "Reset";
    }
    return "?";
}

inline Regime regime_from_string(const std::string& s)
{
    if (s == "Retriever" || s == "retriever") return Regime::retriever;
    if (s == "Mixer" || s == "mixer") return Regime::mixer;
    if (s == "Reset" || s == "reset") return Regime::reset;
    throw ConfigError("unknown regime '" + s + "'");
}

// {1, 2, 4, ..., L+1}: powers of two below L+1 plus both endpoints.
inline std::vector<int> default_n_grid(int L)
{
    std::vector<int> ns;
    for (int n = 1; n < L + 1; n *= 2) ns.push_back(n);
    ns.push_back(L + 1);
    return ns;
}

struct HeadProfile {
    int layer = 0, head = 0;
    int seq_len = 0;
    double m_sink = 0.0, m_last = 0.0, m_rest = 0.0;
    std::vector<int> ns;
    std::vector<double> align_sink, align_last;
    std::vector<double> loo_sink, loo_last;
    std::vector<double> norm_s;
};

inline HeadProfile head_profile(const HeadSlice& slice, std::span<const int> ns)
{
    const auto hd = head_descriptors(slice, ns);
    HeadProfile p;
    p.layer = slice.layer;
    p.head = slice.head;
    p.seq_len = slice.seq_len();
    p.m_sink = hd.m_sink;
    p.m_last = hd.m_last;
    p.m_rest = hd.m_rest;
    for (const auto& r : hd.rows) {
        p.ns.push_back(r.n);
        p.align_sink.push_back(r.cos_sink);
        p.align_last.push_back(r.cos_last);
        p.loo_sink.push_back(r.norm_s_no_sink);
        p.loo_last.push_back(r.norm_s_no_last);
        p.norm_s.push_back(r.norm_s);
    }
    return p;
}

struct TaxonomyThresholds {
    double tau_ret = 0.6;        // mean last-token alignment for a Retriever
    double tau_low = 0.2;        // "low" last-token alignment for a Reset head
    double tau_sink_high = 0.6;  // "high" sink alignment for a Reset head
    double near_last = 0.5;      // N > near_last * L counts as close to L
};

// Average ranks, ties share the mean rank.
inline std::vector<double> average_ranks(std::span<const double> x)
{
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

// Spearman correlation of y against its grid position; 0 if y is constant.
inline double spearman_trend(std::span<const double> y)
{
    std::vector<double> pos(y.size());
    std::iota(pos.begin(), pos.end(), 0.0);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(y.size());
    const double m = (n + 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = pos[i] + 1.0 - m, b = ry[i] - m;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    return syy == 0.0 ? 0.0 : sxy / std::sqrt(sxx * syy);
}

struct Classification {
    Regime regime = Regime::mixer;
    bool ambiguous = false;  // failed every test; Mixer by default
};

inline Classification classify_head(const HeadProfile& p, const TaxonomyThresholds& th = {})
{
    const std::size_t k = p.ns.size();
    if (k < 3 || p.align_sink.size() != k || p.align_last.size() != k)
        throw ConfigError("classification needs alignment curves over at least 3 grid points");
    const double rest = p.seq_len > 1 ? p.m_rest / (p.seq_len - 1) : 0.0;
    const double mean_last = std::accumulate(p.align_last.begin(), p.align_last.end(), 0.0) / static_cast<double>(k);

    if (p.m_last > p.m_sink && p.m_last > rest && mean_last >= th.tau_ret) return {Regime::retriever, false};

    if (p.m_sink >= std::max(p.m_last, rest)) return {Regime::reset, false};
    bool sink_high = true, last_low = true;
    for (std::size_t i = 0; i < k; ++i) {
        sink_high = sink_high && p.align_sink[i] >= th.tau_sink_high;
        if (p.ns[i] <= th.near_last * p.seq_len) last_low = last_low && p.align_last[i] < th.tau_low;
    }
    if (sink_high && last_low) return {Regime::reset, false};

    const bool shifting = spearman_trend(p.align_sink) < 0.0 && spearman_trend(p.align_last) > 0.0;
    return {Regime::mixer, !shifting};
}

struct RegimeCounts {
    int retriever = 0, mixer = 0, reset = 0;

    void add(Regime r) { ++(r == Regime::retriever ? retriever : r == Regime::mixer ? mixer : reset); }
    int of(Regime r) const { return r == Regime::retriever ? retriever : r == Regime::mixer ? mixer : reset; }
    // ties resolve in the order Retriever, Reset, Mixer
    Regime dominant() const
    {
        Regime best = Regime::retriever;
        for (Regime r : {Regime::reset, Regime::mixer})
            if (of(r) > of(best)) best = r;
        return best;
    }
};

struct DepthRow {
    int layer = 0;
    RegimeCounts counts;
};

struct DepthBand {
    std::string name;
    int first_layer = 0, last_layer = 0;
    RegimeCounts counts;
    Regime dominant = Regime::mixer;
};

struct DepthDistribution {
    std::vector<DepthRow> layers;
    std::vector<DepthBand> bands;  // early / middle / late thirds of the layer range
};

inline DepthDistribution depth_distribution(std::span<const HeadProfile> profiles, std::span<const Classification> labels)
{
    if (profiles.empty()) throw RangeError("depth distribution needs at least one head");
    if (profiles.size() != labels.size()) throw ShapeError("labels vs profiles", {profiles.size()}, {labels.size()});
    int layers = 0;
    for (const auto& p : profiles) layers = std::max(layers, p.layer + 1);
    DepthDistribution dd;
    dd.layers.resize(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) dd.layers[static_cast<std::size_t>(l)].layer = l;
    for (std::size_t i = 0; i < profiles.size(); ++i) dd.layers[static_cast<std::size_t>(profiles[i].layer)].counts.add(labels[i].regime);

    const std::array<const char*, 3> names{"early", "middle", "late"};
    const int nb = std::min(layers, 3);
    for (int b = 0; b < nb; ++b) {
        DepthBand band;
        band.name = nb == 3 ? names[static_cast<std::size_t>(b)] : "band" + std::to_string(b);
        band.first_layer = b * layers / nb;
        band.last_layer = (b + 1) * layers / nb - 1;
        for (int l = band.first_layer; l <= band.last_layer; ++l) {
            const auto& c = dd.layers[static_cast<std::size_t>(l)].counts;
            band.counts.retriever += c.retriever;
            band.counts.mixer += c.mixer;
            band.counts.reset += c.reset;
        }
        band.dominant = band.counts.dominant();
        dd.bands.push_back(band);
    }
    return dd;
}

// ---- engineered heads with a known regime ----

namespace detail {

inline Eigen::VectorXd unit_gaussian(std::mt19937_64& rng, int d)
{
    std::normal_distribution<double> nd;
    Eigen::VectorXd g(d);
    for (int k = 0; k < d; ++k) g[k] = nd(rng);
    return g.normalized();
}

inline Eigen::VectorXd orthogonal_to(const Eigen::VectorXd& ref, std::mt19937_64& rng)
{
    Eigen::VectorXd g = unit_gaussian(rng, static_cast<int>(ref.size()));
    g -= g.dot(ref) * ref;
    return g.normalized();
}

} // namespace detail

// Heads built from the regime descriptions with random directions and a 10%
// jitter on the non-dominant weights:
//   Retriever: alpha_L = 0.9 on a last token that s follows.
//   Reset:     alpha_0 = 0.95, |v_0| = C, v_0 orthogonal to v_L.
//   Mixer:     sink and three sink-aligned tokens lead at small N; the bulk of
//              the context points near v_L (orthogonal to v_0) and takes over as N grows.
inline HeadSlice engineered_slice(Regime regime, int L, int d, std::uint64_t seed, int layer = 0, int head = 0)
{
    if (L < 16 || d < 4) throw ConfigError("engineered heads need L >= 16 and d >= 4");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(0.9, 1.1);
    const double C = 1.0;
    RowMatrixD v(L + 1, d);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(L + 1);

    const Eigen::VectorXd u0 = detail::unit_gaussian(rng, d);
    const Eigen::VectorXd uL = detail::orthogonal_to(u0, rng);
    switch (regime) {
    case Regime::retriever: {
        v.row(0) = 0.3 * C * u0.transpose();
        for (int i = 1; i < L; ++i) v.row(i) = C * detail::unit_gaussian(rng, d).transpose();
        v.row(L) = C * uL.transpose();
        for (int i = 0; i < L; ++i) alpha[i] = jitter(rng);
        alpha.head(L) *= 0.1 / alpha.head(L).sum();
        alpha[L] = 0.9;
        break;
    }
    case Regime::reset: {
        v.row(0) = C * u0.transpose();
        for (int i = 1; i < L; ++i) v.row(i) = C * detail::unit_gaussian(rng, d).transpose();
        v.row(L) = C * uL.transpose();
        for (int i = 1; i <= L; ++i) alpha[i] = jitter(rng);
        alpha.tail(L) *= 0.05 / alpha.tail(L).sum();
        alpha[0] = 0.95;
        break;
    }
    case Regime::mixer: {
        v.row(0) = 0.1 * C * u0.transpose();
        std::vector<int> middle(static_cast<std::size_t>(L - 1));
        std::iota(middle.begin(), middle.end(), 1);
        std::shuffle(middle.begin(), middle.end(), rng);
        std::vector<char> echo(static_cast<std::size_t>(L + 1), 0);
        for (int k = 0; k < 3; ++k) echo[static_cast<std::size_t>(middle[static_cast<std::size_t>(k)])] = 1;
        double bulk = 0.0;
        for (int i = 1; i < L; ++i) {
            if (echo[static_cast<std::size_t>(i)]) {
                v.row(i) = C * (u0 + 0.1 * detail::unit_gaussian(rng, d)).normalized().transpose();
                alpha[i] = 0.05;
            } else {
                Eigen::VectorXd dir = uL + 0.5 * detail::orthogonal_to(u0, rng);
                dir -= dir.dot(u0) * u0;
                v.row(i) = C * dir.normalized().transpose();
                alpha[i] = jitter(rng);
                bulk += alpha[i];
            }
        }
        for (int i = 1; i < L; ++i)
            if (!echo[static_cast<std::size_t>(i)]) alpha[i] *= (1.0 - 0.3 - 0.15 - 0.04) / bulk;
        v.row(L) = C * uL.transpose();
        alpha[0] = 0.3;
        alpha[L] = 0.04;
        break;
    }
    }
    HeadSlice s;
    s.layer = layer;
    s.head = head;
    s.values = v.cast<float>();
    s.attn_row = (alpha / alpha.sum()).cast<float>();
    return s;
}

} // namespace attngeom
