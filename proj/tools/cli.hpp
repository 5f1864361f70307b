#pragma once

// attngeom command line: subcommands analyze, fit, bounds, synth, taxonomy,
// sparsify, report.  Exit codes: 0 ok, 1 file/I-O problem, 2 invalid input.

#include "attngeom/attngeom.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <set>
#include <sstream>

namespace attngeom::cli {

using nlohmann::json;

struct Common {
    std::string dump;
    std::string config;
    std::string out = ".";
    std::string ns;
    std::optional<double> kappa;
    std::optional<std::uint64_t> seed;
    std::string method = "type_guided";
    double fraction = 0.5;
    int threads = 1;
};

// Config objects reject keys that no subcommand reader asked for.
class ConfigReader {
public:
    ConfigReader() = default;
    explicit ConfigReader(json j) : j_(std::move(j))
    {
        if (!j_.is_object()) throw ConfigError("config must be a JSON object");
    }

    static ConfigReader load(const std::string& path)
    {
        if (path.empty()) return ConfigReader(json::object());
        std::ifstream in(path);
        if (!in) throw IoError("cannot read config " + path);
        try {
            return ConfigReader(json::parse(in));
        } catch (const json::parse_error& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }

    template <class T>
    std::optional<T> get(const std::string& key)
    {
        seen_.insert(key);
        if (!j_.contains(key)) return std::nullopt;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }

    template <class T>
    T get_or(const std::string& key, T fallback)
    {
        auto v = get<T>(key);
        return v ? *v : fallback;
    }

    ConfigReader child(const std::string& key)
    {
        seen_.insert(key);
        if (!j_.contains(key)) return ConfigReader(json::object());
        return ConfigReader(j_.at(key));
    }

    void finish(const std::string& where = "config") const
    {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
    }

private:
    json j_ = json::object();
    std::set<std::string> seen_;
};

inline std::vector<int> parse_ns(const std::string& s)
{
    std::vector<int> ns;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            ns.push_back(std::stoi(tok, &used));
            if (tok.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("bad N list '" + s + "'");
        }
    }
    if (ns.empty()) throw ConfigError("empty N list");
    return ns;
}

// --ns beats the config's "ns", which beats the default grid for L.
inline std::vector<int> resolve_ns(const Common& c, ConfigReader& cfg, int L)
{
    auto from_cfg = cfg.get<std::vector<int>>("ns");
    std::vector<int> ns = !c.ns.empty() ? parse_ns(c.ns) : from_cfg ? *from_cfg : default_n_grid(L);
    for (int n : ns)
        if (n < 1 || n > L + 1) throw RangeError("N=" + std::to_string(n) + " outside [1, " + std::to_string(L + 1) + "]");
    return ns;
}

inline std::filesystem::path out_dir(const Common& c, ConfigReader& cfg)
{
    std::filesystem::path p = cfg.get_or<std::string>("output_dir", c.out);
    if (c.out != ".") p = c.out;
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw IoError("cannot create output directory " + p.string());
    return p;
}

inline Dump open_dump(const Common& c)
{
    if (c.dump.empty()) throw ConfigError("--dump is required");
    return read_dump(c.dump);
}

template <class Fn>
void for_each_head(const Dump& d, int threads, Fn&& fn)
{
    const auto& m = d.manifest();
    parallel_for(static_cast<std::size_t>(m.num_layers * m.num_heads), threads,
                 [&](std::size_t k) { fn(static_cast<int>(k) / m.num_heads, static_cast<int>(k) % m.num_heads, k); });
}

// ---- analyze ----

inline void cmd_analyze(const Common& c)
{
    auto cfg = ConfigReader::load(c.config);
    const auto dump = open_dump(c);
    const auto& m = dump.manifest();
    const auto ns = resolve_ns(c, cfg, m.seq_len);
    const auto dir = out_dir(c, cfg);
    cfg.finish();

    struct Result {
        std::vector<MetricPoint> curve;
        HeadDescriptors desc;
    };
    std::vector<Result> res(static_cast<std::size_t>(m.num_layers * m.num_heads));
    for_each_head(dump, c.threads, [&](int l, int h, std::size_t k) {
        const auto s = dump.load(l, h);
        res[k].curve = metric_curve(s, ns);
        if (m.seq_len >= 2) res[k].desc = head_descriptors(s, ns);
    });

    CsvWriter metrics(dir / "metrics.csv", "metrics", {"layer", "head", "N", "r_kind", "r", "P", "R", "F"});
    CsvWriter desc(dir / "descriptors.csv", "descriptors",
                   {"layer", "head", "N", "norm_s", "norm_s_no_sink", "norm_s_no_last", "cos_sink", "cos_last", "degenerate",
                    "m_sink", "m_last", "m_rest"});
    for (std::size_t k = 0; k < res.size(); ++k) {
        const long long l = static_cast<long long>(k) / m.num_heads, h = static_cast<long long>(k) % m.num_heads;
        for (const auto& p : res[k].curve)
            metrics.row({l, h, static_cast<long long>(p.n), std::string(to_string(p.kind)), p.r, p.precision, p.recall, p.fscore});
        for (const auto& r : res[k].desc.rows)
            desc.row({l, h, static_cast<long long>(r.n), r.norm_s, r.norm_s_no_sink, r.norm_s_no_last, r.cos_sink, r.cos_last,
                      static_cast<long long>(r.degenerate), res[k].desc.m_sink, res[k].desc.m_last, res[k].desc.m_rest});
    }
}

// ---- fit ----

inline void cmd_fit(const Common& c)
{
    auto cfg = ConfigReader::load(c.config);
    const auto dump = open_dump(c);
    PrevalenceOptions opt;
    opt.threads = c.threads;
    opt.mae_threshold = cfg.get_or("mae_threshold", opt.mae_threshold);
    opt.fit.max_lag = cfg.get_or("max_lag", opt.fit.max_lag);
    opt.fit.profile.sink_ratio = cfg.get_or("sink_ratio", opt.fit.profile.sink_ratio);
    opt.fit.profile.min_oscillation_gain = cfg.get_or("min_oscillation_gain", opt.fit.profile.min_oscillation_gain);
    const auto dir = out_dir(c, cfg);
    cfg.finish();

    const auto rep = assumption_prevalence(dump, opt);
    CsvWriter fits(dir / "fits.csv", "fits",
                   {"layer", "head", "C", "lambda", "cv", "beta", "rho0", "sim_mae", "p_sink", "p_base", "eta", "omega", "T1",
                    "T2", "prof_mae", "sink_head", "template"});
    for (const auto& f : rep.fits)
        fits.row({static_cast<long long>(f.layer), static_cast<long long>(f.head), f.norms.C, f.norms.lambda, f.norms.cv,
                  f.similarity.beta, f.similarity.rho0, f.similarity.mae, f.profile.p_sink, f.profile.p_base, f.profile.eta,
                  f.profile.omega, static_cast<long long>(f.profile.t1), static_cast<long long>(f.profile.t2), f.profile.mae,
                  static_cast<long long>(f.profile.sink_head), static_cast<long long>(follows_template(f, opt))});
    CsvWriter prev(dir / "prevalence.csv", "prevalence", {"layer", "heads", "passing", "fraction"});
    for (const auto& r : rep.layers)
        prev.row({static_cast<long long>(r.layer), static_cast<long long>(r.heads), static_cast<long long>(r.passing), r.fraction});
    for (const auto& [name, pts] : {std::pair{"ecdf_cv", &rep.cv_ecdf}, std::pair{"ecdf_lambda", &rep.lambda_ecdf}}) {
        CsvWriter e(dir / (std::string(name) + ".csv"), name, {"value", "fraction"});
        for (const auto& p : *pts) e.row({p.value, p.fraction});
    }
}

// ---- synth ----

inline SyntheticConfig read_synthetic(ConfigReader& r)
{
    SyntheticConfig c;
    c.L = r.get_or("L", c.L);
    c.d = r.get_or("d", c.d);
    c.C = r.get_or("C", c.C);
    c.lambda = r.get_or("lambda", c.lambda);
    c.beta = r.get_or("beta", c.beta);
    c.rho0 = r.get_or("rho0", c.rho0);
    c.seed = r.get_or<std::uint64_t>("seed", c.seed);
    c.noise = r.get_or("noise", c.noise);
    c.softmax_renormalize = r.get_or("softmax_renormalize", c.softmax_renormalize);
    const auto dirs = r.get_or<std::string>("directions", "ar_chain");
    if (dirs == "ar_chain") c.directions = DirectionModel::ar_chain;
    else if (dirs == "exact_gram") c.directions = DirectionModel::exact_gram;
    else throw ConfigError("directions must be ar_chain or exact_gram");
    auto p = r.child("profile");
    c.profile.p_sink = p.get_or("p_sink", c.profile.p_sink);
    c.profile.p_base = p.get_or("p_base", c.profile.p_base);
    c.profile.eta = p.get_or("eta", c.profile.eta);
    c.profile.omega = p.get_or("omega", c.profile.omega);
    c.profile.t1 = p.get_or("T1", c.profile.t1);
    c.profile.t2 = p.get_or("T2", c.profile.t2);
    p.finish("profile");
    c.validate();
    return c;
}

inline void write_montecarlo(const std::filesystem::path& path, const std::vector<MonteCarloResult>& rows)
{
    CsvWriter w(path, "montecarlo",
                {"N", "trials", "mean_P_rmax", "ci_P", "P_lo", "P_hi", "mean_R_rmin", "ci_R", "R_lo", "R_hi", "mean_F_rmin",
                 "F_rmin_lo", "F_rmin_hi", "mean_F_rmax", "F_rmax_lo", "F_rmax_hi", "Delta", "Delta0", "B", "kappa",
                 "margin_positive"});
    for (const auto& r : rows) {
        const auto& e = r.envelope;
        w.row({static_cast<long long>(r.n), static_cast<long long>(r.n_trials), r.mean_P_rmax, r.ci_P, e.precision_lo,
               e.precision_hi, r.mean_R_rmin, r.ci_R, e.recall_lo, e.recall_hi, r.mean_F_rmin, e.f_rmin_lo, e.f_rmin_hi,
               r.mean_F_rmax, e.f_rmax_lo, e.f_rmax_hi, e.delta, e.delta0, e.scale_b, e.kappa,
               static_cast<long long>(e.margin_positive)});
    }
}

inline void cmd_synth(const Common& c)
{
    if (c.config.empty()) throw ConfigError("synth needs --config");
    auto cfg = ConfigReader::load(c.config);
    auto sc = read_synthetic(cfg);
    if (c.seed) sc.seed = *c.seed;
    const int trials = cfg.get_or("trials", 200);
    const int dump_heads = cfg.get_or("dump_heads", 8);
    const auto calibrate_n = cfg.get<int>("calibrate_n");
    const auto cfg_kappa = cfg.get<double>("kappa");
    const auto ns = resolve_ns(c, cfg, sc.L);
    const auto dir = out_dir(c, cfg);
    cfg.finish();
    if (dump_heads < 1) throw ConfigError("dump_heads must be positive");

    double kappa = c.kappa.value_or(cfg_kappa.value_or(0.5));
    json summary;
    std::vector<MonteCarloResult> rows;
    if (calibrate_n && !c.kappa) {
        const auto cal = monte_carlo_calibrated(sc, ns, trials, *calibrate_n, c.threads);
        kappa = cal.kappa.kappa;
        summary["kappa_saturated"] = cal.kappa.saturated;
        rows = cal.results;
    } else {
        rows = monte_carlo_envelope(sc, ns, trials, kappa, c.threads);
    }
    summary["kappa"] = kappa;
    summary["trials"] = trials;
    summary["seed"] = sc.seed;
    write_montecarlo(dir / "montecarlo.csv", rows);

    // the first dump_heads trials, same seeds as the Monte Carlo run
    DumpManifest m;
    m.model_name = "synthetic";
    m.num_layers = 1;
    m.num_heads = dump_heads;
    m.seq_len = sc.L;
    m.head_dim = sc.d;
    std::vector<HeadSlice> slices;
    for (int h = 0; h < dump_heads; ++h)
        slices.push_back(generate_slice(with_seed(sc, derive_seed(sc.seed, static_cast<std::uint64_t>(h))), 0, h));
    write_dump(m, slices, dir / "dump");

    std::ofstream(dir / "synth_summary.json") << summary.dump(2) << '\n';
}

// ---- bounds ----

inline void cmd_bounds(const Common& c)
{
    auto cfg = ConfigReader::load(c.config);
    const double kappa = c.kappa.value_or(cfg.get_or("kappa", 0.5));
    if (!(kappa > 0.0)) throw RangeError("kappa must be positive");
    const auto coupling_name = cfg.get_or<std::string>("coupling", "full_selection");
    SinkCoupling coupling;
    if (coupling_name == "full_selection") coupling = SinkCoupling::full_selection;
    else if (coupling_name == "sink_excluded") coupling = SinkCoupling::sink_excluded;
    else throw ConfigError("coupling must be full_selection or sink_excluded");

    std::vector<std::string> cols{"layer", "head", "N", "P_lo", "P_hi", "R_lo", "R_hi", "F_rmin_lo", "F_rmin_hi",
                                  "F_rmax_lo", "F_rmax_hi", "Delta", "Delta0", "B", "kappa", "margin_positive"};
    auto emit = [](CsvWriter& w, long long l, long long h, const BoundReport& r) {
        w.row({l, h, static_cast<long long>(r.n), r.precision_lo, r.precision_hi, r.recall_lo, r.recall_hi, r.f_rmin_lo,
               r.f_rmin_hi, r.f_rmax_lo, r.f_rmax_hi, r.delta, r.delta0, r.scale_b, r.kappa,
               static_cast<long long>(r.margin_positive)});
    };

    if (c.dump.empty()) {
        // pure model envelopes from a synthetic config
        auto model_cfg = cfg.child("model");
        const auto sc = read_synthetic(model_cfg);
        model_cfg.finish("model");
        const auto ns = resolve_ns(c, cfg, sc.L);
        const auto dir = out_dir(c, cfg);
        cfg.finish();
        const auto model = geometry_model(sc);
        CsvWriter w(dir / "bounds.csv", "bounds", cols);
        for (int n : ns) emit(w, -1, -1, model_bound_report(model, n, kappa, coupling));
        return;
    }

    const auto dump = open_dump(c);
    const auto& m = dump.manifest();
    const auto beta = cfg.get<double>("beta");
    const int max_lag = cfg.get_or("max_lag", 64);
    const auto ns = resolve_ns(c, cfg, m.seq_len);
    const auto dir = out_dir(c, cfg);
    cfg.finish();

    std::vector<std::vector<BoundReport>> res(static_cast<std::size_t>(m.num_layers * m.num_heads));
    for_each_head(dump, c.threads, [&](int l, int h, std::size_t k) {
        const auto s = dump.load(l, h);
        const double b = beta ? *beta : fit_exponential(mean_lag_cosine(s, std::min(max_lag, s.seq_len() - 1)).mean).beta;
        for (int n : ns) res[k].push_back(slice_bound_report(s, n, kappa, b, coupling));
    });
    CsvWriter w(dir / "bounds.csv", "bounds", cols);
    for (std::size_t k = 0; k < res.size(); ++k)
        for (const auto& r : res[k]) emit(w, static_cast<long long>(k) / m.num_heads, static_cast<long long>(k) % m.num_heads, r);
}

// ---- taxonomy ----

inline TaxonomyThresholds read_thresholds(ConfigReader& cfg)
{
    TaxonomyThresholds t;
    t.tau_ret = cfg.get_or("tau_ret", t.tau_ret);
    t.tau_low = cfg.get_or("tau_low", t.tau_low);
    t.tau_sink_high = cfg.get_or("tau_sink_high", t.tau_sink_high);
    t.near_last = cfg.get_or("near_last", t.near_last);
    return t;
}

inline void cmd_taxonomy(const Common& c)
{
    auto cfg = ConfigReader::load(c.config);
    const auto dump = open_dump(c);
    const auto& m = dump.manifest();
    const auto th = read_thresholds(cfg);
    const auto ns = resolve_ns(c, cfg, m.seq_len);
    const auto dir = out_dir(c, cfg);
    cfg.finish();

    const auto total = static_cast<std::size_t>(m.num_layers * m.num_heads);
    std::vector<HeadProfile> profiles(total);
    std::vector<Classification> labels(total);
    for_each_head(dump, c.threads, [&](int l, int h, std::size_t k) {
        profiles[k] = head_profile(dump.load(l, h), ns);
        labels[k] = classify_head(profiles[k], th);
    });

    CsvWriter heads(dir / "regimes.csv", "regimes", {"layer", "head", "regime", "ambiguous", "m_sink", "m_last", "m_rest"});
    for (std::size_t k = 0; k < total; ++k)
        heads.row({static_cast<long long>(profiles[k].layer), static_cast<long long>(profiles[k].head),
                   std::string(to_string(labels[k].regime)), static_cast<long long>(labels[k].ambiguous), profiles[k].m_sink,
                   profiles[k].m_last, profiles[k].m_rest});
    const auto dd = depth_distribution(profiles, labels);
    CsvWriter depth(dir / "depth.csv", "depth", {"layer", "retriever", "mixer", "reset"});
    for (const auto& r : dd.layers)
        depth.row({static_cast<long long>(r.layer), static_cast<long long>(r.counts.retriever),
                   static_cast<long long>(r.counts.mixer), static_cast<long long>(r.counts.reset)});
    CsvWriter bands(dir / "depth_bands.csv", "depth_bands",
                    {"band", "first_layer", "last_layer", "retriever", "mixer", "reset", "dominant"});
    for (const auto& b : dd.bands)
        bands.row({b.name, static_cast<long long>(b.first_layer), static_cast<long long>(b.last_layer),
                   static_cast<long long>(b.counts.retriever), static_cast<long long>(b.counts.mixer),
                   static_cast<long long>(b.counts.reset), std::string(to_string(b.dominant))});
}

// ---- sparsify ----

inline void cmd_sparsify(const Common& c)
{
    auto cfg = ConfigReader::load(c.config);
    const auto dump = open_dump(c);
    const auto& m = dump.manifest();
    const auto method = prune_method_from_string(c.method);
    RankOptions ro;
    ro.seed = c.seed.value_or(cfg.get_or<std::uint64_t>("seed", 0));
    if (auto ab = cfg.get<std::string>("ablation")) {
        std::ifstream in(*ab);
        if (!in) throw IoError("cannot read ablation file " + *ab);
        try {
            ro.priority = TypePriority::from_ablation_json(json::parse(in));
        } catch (const json::parse_error& e) {
            throw ConfigError(*ab + ": " + e.what());
        }
    }
    const auto weights = cfg.get<std::string>("weights");
    RecordOptions rec;
    rec.threads = c.threads;
    rec.small_ns = cfg.get_or("small_ns", rec.small_ns);
    rec.thresholds = read_thresholds(cfg);
    if (auto ns = cfg.get<std::vector<int>>("ns")) rec.ns = *ns;
    const auto dir = out_dir(c, cfg);
    cfg.finish();
    if (method == PruneMethod::weight_magnitude) {
        if (!weights) throw DependencyError("weight_magnitude needs a \"weights\" sidecar path in the config");
        ro.weight_norms = load_weight_sidecar(*weights);
    }

    const auto records = collect_head_records(dump, rec);
    const auto ranking = rank_heads(records, m.num_layers, m.num_heads, method, ro);
    const auto plan = emit_mask(ranking, c.fraction);
    std::ofstream out(dir / "mask.json");
    if (!out) throw IoError("cannot write mask.json");
    out << json(plan).dump(2) << '\n';

    CsvWriter scores(dir / "scores.csv", "scores", {"layer", "head", "regime", "score", "keep"});
    for (const auto& r : records)
        scores.row({static_cast<long long>(r.layer), static_cast<long long>(r.head), std::string(to_string(r.regime)),
                    ranking.scores[static_cast<std::size_t>(r.layer)][static_cast<std::size_t>(r.head)],
                    static_cast<long long>(plan.layers[static_cast<std::size_t>(r.layer)][static_cast<std::size_t>(r.head)])});
    if (plan.floored) std::cerr << "note: keep fraction below one head per layer; kept one head in each layer\n";
}

// ---- report: global means per N plus regime and template summaries ----

inline void cmd_report(const Common& c)
{
    auto cfg = ConfigReader::load(c.config);
    const auto dump = open_dump(c);
    const auto& m = dump.manifest();
    const auto ns = resolve_ns(c, cfg, m.seq_len);
    PrevalenceOptions po;
    po.threads = c.threads;
    po.mae_threshold = cfg.get_or("mae_threshold", po.mae_threshold);
    const auto th = read_thresholds(cfg);
    const auto dir = out_dir(c, cfg);
    cfg.finish();

    const auto total = static_cast<std::size_t>(m.num_layers * m.num_heads);
    std::vector<std::vector<MetricPoint>> curves(total);
    std::vector<Classification> labels(total);
    const auto tax_ns = default_n_grid(m.seq_len);
    for_each_head(dump, c.threads, [&](int l, int h, std::size_t k) {
        const auto s = dump.load(l, h);
        curves[k] = metric_curve(s, ns);
        if (m.seq_len >= 2) labels[k] = classify_head(head_profile(s, tax_ns), th);
    });

    // uniform average over heads and layers
    CsvWriter g(dir / "global_means.csv", "global_means", {"N", "mean_P_rmax", "mean_R_rmin", "mean_F_rmin", "mean_F_rmax"});
    for (std::size_t j = 0; j < ns.size(); ++j) {
        double p = 0, r = 0, fmin = 0, fmax = 0;
        for (const auto& cv : curves) {
            r += cv[2 * j].recall;
            fmin += cv[2 * j].fscore;
            p += cv[2 * j + 1].precision;
            fmax += cv[2 * j + 1].fscore;
        }
        const double n = static_cast<double>(total);
        g.row({static_cast<long long>(ns[j]), p / n, r / n, fmin / n, fmax / n});
    }

    json summary;
    summary["model_name"] = m.model_name;
    summary["heads"] = total;
    RegimeCounts rc;
    for (const auto& l : labels) rc.add(l.regime);
    summary["regimes"] = {{"Retriever", rc.retriever}, {"Mixer", rc.mixer}, {"Reset", rc.reset}};
    if (m.seq_len >= 8) {
        const auto prev = assumption_prevalence(dump, po);
        std::vector<double> frac;
        for (const auto& r : prev.layers) frac.push_back(r.fraction);
        summary["template_prevalence"] = frac;
    }
    std::ofstream out(dir / "summary.json");
    if (!out) throw IoError("cannot write summary.json");
    out << summary.dump(2) << '\n';
}

// ---- entry point ----

inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr)
{
    CLI::App app{"attngeom: top-N selection geometry of attention heads"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* sub, bool needs_dump) {
        auto* d = sub->add_option("--dump", c.dump, "dump directory (manifest.json + npy files)");
        if (needs_dump) d->required();
        sub->add_option("--config", c.config, "JSON config for this subcommand");
        sub->add_option("--out", c.out, "output directory");
        sub->add_option("--ns", c.ns, "comma-separated N values");
        sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
    };
    auto* analyze = app.add_subcommand("analyze", "precision/recall/F curves and head descriptors");
    add_common(analyze, true);
    auto* fit = app.add_subcommand("fit", "fit norm, similarity and attention-profile models per head");
    add_common(fit, true);
    auto* bounds = app.add_subcommand("bounds", "envelopes for a dump, or for a synthetic model config");
    add_common(bounds, false);
    bounds->add_option("--kappa", c.kappa, "concentration constant");
    auto* synth = app.add_subcommand("synth", "generate a synthetic dump and run the Monte Carlo harness");
    add_common(synth, false);
    synth->add_option("--seed", c.seed, "top-level seed");
    synth->add_option("--kappa", c.kappa, "fixed kappa (skips calibration)");
    auto* tax = app.add_subcommand("taxonomy", "classify heads into Retriever/Mixer/Reset");
    add_common(tax, true);
    auto* sp = app.add_subcommand("sparsify", "rank heads and emit a per-layer keep mask");
    add_common(sp, true);
    sp->add_option("--method", c.method, "type_guided|random|entropy_low|entropy_high|sink_mass|last_mass|weight_magnitude");
    sp->add_option("--fraction", c.fraction, "keep fraction in (0,1]");
    sp->add_option("--seed", c.seed, "seed for the random baseline");
    auto* report = app.add_subcommand("report", "global means, regime counts and template prevalence");
    add_common(report, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        return 2;
    }

    try {
        if (*analyze) cmd_analyze(c);
        else if (*fit) cmd_fit(c);
        else if (*bounds) cmd_bounds(c);
        else if (*synth) cmd_synth(c);
        else if (*tax) cmd_taxonomy(c);
        else if (*sp) cmd_sparsify(c);
        else if (*report) cmd_report(c);
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

} // namespace attngeom::cli
