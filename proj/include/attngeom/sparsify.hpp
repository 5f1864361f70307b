#pragma once

#include "attngeom/parallel.hpp"
#include "attngeom/taxonomy.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <optional>

namespace attngeom {

enum class PruneMethod { type_guided, random, entropy_low, entropy_high, sink_mass, last_mass, weight_magnitude };

inline const char* to_string(PruneMethod m)
{
    switch (m) {
    case PruneMethod::type_guided: return "type_guided";
    case PruneMethod::random: return "random";
    case PruneMethod::entropy_low: return "entropy_low";
    case PruneMethod::entropy_high: return "entropy_high";
    case PruneMethod::sink_mass: return "sink_mass";
    case PruneMethod::last_mass: return "last_mass";
    case PruneMethod::weight_magnitude: return "weight_magnitude";
    }
    return "?";
}

inline PruneMethod prune_method_from_string(const std::string& s)
{
    for (auto m : {PruneMethod::type_guided, PruneMethod::random, PruneMethod::entropy_low, PruneMethod::entropy_high,
                   PruneMethod::sink_mass, PruneMethod::last_mass, PruneMethod::weight_magnitude})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown sparsification method '" + s + "'");
}

// Everything a ranking needs to know about one head.
struct HeadRecord {
    int layer = 0, head = 0;
    Regime regime = Regime::mixer;
    bool ambiguous = false;
    double small_n_fscore = 0.0;  // mean F over both radii at the small-N grid
    double sink_mass = 0.0;       // a_0 = alpha_0 |v_0|
    double last_mass = 0.0;       // a_L
    double entropy = 0.0;         // nats; decode row, or mean row entropy of the full matrix
};

template <class Vec>
double row_entropy(const Vec& p)
{
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double x = p[i];
        if (x > 0.0) h -= x * std::log(x);
    }
    return h;
}

struct RecordOptions {
    std::vector<int> small_ns{2, 3, 4};
    std::vector<int> ns;  // taxonomy grid; empty means default_n_grid(L)
    TaxonomyThresholds thresholds;
    int threads = 1;
};

inline HeadRecord head_record(const HeadSlice& slice, const RecordOptions& opt)
{
    HeadRecord r;
    r.layer = slice.layer;
    r.head = slice.head;
    const auto ns = opt.ns.empty() ? default_n_grid(slice.seq_len()) : opt.ns;
    const auto prof = head_profile(slice, ns);
    const auto c = classify_head(prof, opt.thresholds);
    r.regime = c.regime;
    r.ambiguous = c.ambiguous;
    r.sink_mass = prof.m_sink;
    r.last_mass = prof.m_last;

    std::vector<int> small;
    for (int n : opt.small_ns)
        if (n >= 1 && n <= slice.positions()) small.push_back(n);
    if (!small.empty()) {
        double f = 0.0;
        const auto curve = metric_curve(slice, small);
        for (const auto& p : curve) f += p.fscore;
        r.small_n_fscore = f / static_cast<double>(curve.size());
    }

    if (slice.attn_full) {
        const auto& a = *slice.attn_full;
        double h = 0.0;
        for (Eigen::Index i = 0; i < a.rows(); ++i) h += row_entropy(a.row(i));
        r.entropy = h / static_cast<double>(a.rows());
    } else {
        r.entropy = row_entropy(slice.attn_row);
    }
    return r;
}

inline std::vector<HeadRecord> collect_head_records(const Dump& dump, const RecordOptions& opt = {})
{
    const auto& m = dump.manifest();
    return parallel_map<HeadRecord>(static_cast<std::size_t>(m.num_layers * m.num_heads), opt.threads, [&](std::size_t k) {
        return head_record(dump.load(static_cast<int>(k) / m.num_heads, static_cast<int>(k) % m.num_heads), opt);
    });
}

// Higher priority is kept first.  Default: Mixer > Retriever > Reset.
struct TypePriority {
    std::map<Regime, double> level{{Regime::mixer, 2.0}, {Regime::retriever, 1.0}, {Regime::reset, 0.0}};

    // {"Mixer": impact, "Retriever": impact, "Reset": impact}: larger ablation
    // impact means the type is kept first.
    static TypePriority from_ablation_json(const nlohmann::json& j)
    {
        TypePriority p;
        std::vector<std::pair<double, Regime>> v;
        for (Regime r : {Regime::retriever, Regime::mixer, Regime::reset}) {
            const auto key = to_string(r);
            if (!j.contains(key) || !j.at(key).is_number()) throw ConfigError(std::string("ablation file lacks a number for ") + key);
            v.emplace_back(j.at(key).get<double>(), r);
        }
        for (const auto& [k, _] : j.items())
            if (k != "Retriever" && k != "Mixer" && k != "Reset") throw ConfigError("unknown key '" + k + "' in ablation file");
        std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t i = 0; i < v.size(); ++i) p.level[v[i].second] = static_cast<double>(i);
        return p;
    }
};

struct RankOptions {
    std::uint64_t seed = 0;
    TypePriority priority;
    std::optional<std::vector<std::vector<double>>> weight_norms;  // per (layer, head), for weight_magnitude
};

inline std::vector<std::vector<double>> load_weight_sidecar(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DependencyError("weight-magnitude ranking needs a sidecar file; cannot read " + path.string());
    try {
        return nlohmann::json::parse(in).at("layers").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

struct HeadRanking {
    PruneMethod method = PruneMethod::type_guided;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> scores;  // [layer][head]; higher is kept first
};

inline HeadRanking rank_heads(std::span<const HeadRecord> records, int num_layers, int num_heads, PruneMethod method,
                              const RankOptions& opt = {})
{
    if (records.size() != static_cast<std::size_t>(num_layers * num_heads))
        throw ShapeError("head records vs manifest", {static_cast<std::size_t>(num_layers * num_heads)}, {records.size()});
    HeadRanking r;
    r.method = method;
    r.seed = opt.seed;
    r.scores.assign(static_cast<std::size_t>(num_layers), std::vector<double>(static_cast<std::size_t>(num_heads), 0.0));
    std::vector<const HeadRecord*> at(records.size(), nullptr);

    if (method == PruneMethod::weight_magnitude) {
        if (!opt.weight_norms) throw DependencyError("weight-magnitude ranking needs per-head projection norms");
        const auto& w = *opt.weight_norms;
        if (w.size() != static_cast<std::size_t>(num_layers))
            throw ShapeError("weight sidecar layers", {static_cast<std::size_t>(num_layers)}, {w.size()});
        for (const auto& row : w)
            if (row.size() != static_cast<std::size_t>(num_heads))
                throw ShapeError("weight sidecar heads", {static_cast<std::size_t>(num_heads)}, {row.size()});
    }
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (const auto& h : records) {
        if (h.layer < 0 || h.layer >= num_layers || h.head < 0 || h.head >= num_heads)
            throw ValidationError("head record outside manifest range", h.layer, h.head);
        auto& slot = at[static_cast<std::size_t>(h.layer * num_heads + h.head)];
        if (slot) throw ValidationError("duplicate head record", h.layer, h.head);
        slot = &h;
    }
    for (int l = 0; l < num_layers; ++l)
        for (int hh = 0; hh < num_heads; ++hh) {
            const HeadRecord& h = *at[static_cast<std::size_t>(l * num_heads + hh)];
            double s = 0.0;
            switch (method) {
            // F lies in [0,1], so the 0.5 factor keeps the tie-break inside one priority level
            case PruneMethod::type_guided: s = opt.priority.level.at(h.regime) + 0.5 * h.small_n_fscore; break;
            case PruneMethod::random: s = unit(rng); break;
            case PruneMethod::entropy_low: s = -h.entropy; break;
            case PruneMethod::entropy_high: s = h.entropy; break;
            case PruneMethod::sink_mass: s = h.sink_mass; break;
            case PruneMethod::last_mass: s = h.last_mass; break;
            case PruneMethod::weight_magnitude: s = (*opt.weight_norms)[static_cast<std::size_t>(l)][static_cast<std::size_t>(hh)]; break;
            }
            if (!std::isfinite(s)) throw ValidationError("non-finite ranking score", l, hh);
            r.scores[static_cast<std::size_t>(l)][static_cast<std::size_t>(hh)] = s;
        }
    return r;
}

struct MaskPlan {
    std::string method;
    double keep_fraction = 1.0;
    std::vector<std::vector<bool>> layers;  // true = keep
    nlohmann::json params = nlohmann::json::object();
    bool floored = false;                   // some layer would have kept less than one head

    friend bool operator==(const MaskPlan&, const MaskPlan&) = default;
};

inline int keep_count(int heads, double fraction, bool* floored = nullptr)
{
    const double raw = heads * fraction;
    if (floored) *floored = raw < 1.0;
    return std::clamp(static_cast<int>(std::ceil(raw - 1e-9)), 1, heads);
}

inline MaskPlan emit_mask(const HeadRanking& r, double keep_fraction)
{
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw RangeError("keep fraction must lie in (0, 1]");
    MaskPlan p;
    p.method = to_string(r.method);
    p.keep_fraction = keep_fraction;
    if (r.method == PruneMethod::random) p.params["seed"] = r.seed;
    for (const auto& scores : r.scores) {
        const int H = static_cast<int>(scores.size());
        bool fl = false;
        const int keep = keep_count(H, keep_fraction, &fl);
        p.floored = p.floored || fl;
        std::vector<int> order(static_cast<std::size_t>(H));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)]; });
        std::vector<bool> mask(static_cast<std::size_t>(H), false);
        for (int k = 0; k < keep; ++k) mask[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
        p.layers.push_back(std::move(mask));
    }
    return p;
}

inline void to_json(nlohmann::json& j, const MaskPlan& p)
{
    j = nlohmann::json{{"method", p.method}, {"keep_fraction", p.keep_fraction}, {"layers", p.layers}};
    if (!p.params.empty()) j["params"] = p.params;
    if (p.floored) j["floored"] = true;
}

inline void from_json(const nlohmann::json& j, MaskPlan& p)
{
    j.at("method").get_to(p.method);
    j.at("keep_fraction").get_to(p.keep_fraction);
    j.at("layers").get_to(p.layers);
    p.params = j.value("params", nlohmann::json::object());
    p.floored = j.value("floored", false);
}

} // namespace attngeom
