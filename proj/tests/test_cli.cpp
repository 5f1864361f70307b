#include "cli.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace attngeom;
using namespace testing_support;

namespace {

int run(std::vector<std::string> args)
{
    args.insert(args.begin(), "attngeom");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), err);
}

using Table = std::vector<std::vector<std::string>>;

Table read_csv(const std::filesystem::path& p, std::vector<std::string>* header = nullptr)
{
    std::ifstream in(p);
    std::string line;
    Table t;
    int lineno = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (lineno == 1 && header) *header = cells;
        if (lineno++ >= 2) t.push_back(cells);
    }
    return t;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name)
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("no column " + name);
    return static_cast<std::size_t>(it - header.begin());
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(); }

nlohmann::json synth_config(int L, int d, int heads)
{
    return {{"L", L},
            {"d", d},
            {"beta", 0.2},
            {"lambda", 0.2},
            {"profile", {{"p_sink", 10000}, {"p_base", 1}, {"eta", 0.7}, {"omega", 0.5}, {"T1", L / 8}, {"T2", L - 8}}},
            {"seed", 5},
            {"trials", 200},
            {"ns", {1, 2, 3, 4, 8, 16, L + 1}},
            {"calibrate_n", 2},
            {"dump_heads", heads}};
}

void engineered_dump(const std::filesystem::path& dir)
{
    DumpManifest m;
    m.model_name = "engineered";
    m.num_layers = 3;
    m.num_heads = 4;
    m.seq_len = 64;
    m.head_dim = 32;
    const Regime pattern[4] = {Regime::retriever, Regime::mixer, Regime::reset, Regime::mixer};
    std::vector<HeadSlice> slices;
    for (int l = 0; l < 3; ++l)
        for (int h = 0; h < 4; ++h)
            slices.push_back(engineered_slice(pattern[h], 64, 32, static_cast<std::uint64_t>(l * 10 + h), l, h));
    write_dump(m, slices, dir);
}

} // namespace

TEST(Cli, SynthThenAnalyze)
{
    TempDir dir("cli");
    write_json(dir / "s.json", synth_config(64, 128, 3));
    ASSERT_EQ(run({"synth", "--config", (dir / "s.json").string(), "--out", (dir / "o").string()}), 0);
    const auto summary = nlohmann::json::parse(slurp(dir / "o" / "synth_summary.json"));
    EXPECT_GT(summary.at("kappa").get<double>(), 0.0);
    EXPECT_EQ(read_csv(dir / "o" / "montecarlo.csv").size(), 7u);

    const auto dump = (dir / "o" / "dump").string();
    ASSERT_EQ(run({"analyze", "--dump", dump, "--out", (dir / "a").string(), "--ns", "1,2,4,8,65"}), 0);
    std::vector<std::string> header;
    const auto rows = read_csv(dir / "a" / "metrics.csv", &header);
    EXPECT_EQ(rows.size(), 2u * 1 * 3 * 5);
    EXPECT_EQ(header, (std::vector<std::string>{"layer", "head", "N", "r_kind", "r", "P", "R", "F"}));
    EXPECT_EQ(slurp(dir / "a" / "metrics.csv").rfind("# attngeom metrics v1: ", 0), 0u);
    EXPECT_EQ(read_csv(dir / "a" / "descriptors.csv").size(), 3u * 5);
}

TEST(Cli, EndpointGridGivesOnes)
{
    TempDir dir("cli");
    write_json(dir / "s.json", synth_config(32, 64, 2));
    ASSERT_EQ(run({"synth", "--config", (dir / "s.json").string(), "--out", dir.path().string(), "--ns", "1,33"}), 0);
    ASSERT_EQ(run({"analyze", "--dump", (dir / "dump").string(), "--out", dir.path().string(), "--ns", "1,33"}), 0);
    std::vector<std::string> h;
    for (const auto& r : read_csv(dir / "metrics.csv", &h)) {
        EXPECT_EQ(r[column(h, "P")], "1");
        EXPECT_EQ(r[column(h, "R")], "1");
    }
}

TEST(Cli, ExitCodes)
{
    TempDir dir("cli");
    EXPECT_EQ(run({"analyze", "--dump", (dir / "missing").string(), "--out", dir.path().string()}), 1);
    EXPECT_EQ(run({"analyze"}), 2);
    EXPECT_EQ(run({"frobnicate"}), 2);
    EXPECT_EQ(run({}), 2);

    write_json(dir / "s.json", synth_config(32, 64, 2));
    ASSERT_EQ(run({"synth", "--config", (dir / "s.json").string(), "--out", dir.path().string()}), 0);
    const auto dump = (dir / "dump").string();
    EXPECT_EQ(run({"analyze", "--dump", dump, "--out", dir.path().string(), "--ns", "0,2"}), 2);
    EXPECT_EQ(run({"analyze", "--dump", dump, "--out", dir.path().string(), "--ns", "2,x"}), 2);

    write_json(dir / "bad.json", {{"tau_ret", 0.5}, {"colour", "red"}});
    EXPECT_EQ(run({"taxonomy", "--dump", dump, "--config", (dir / "bad.json").string(), "--out", dir.path().string()}), 2);
    std::ofstream(dir / "broken.json") << "{\"tau_ret\": ";
    EXPECT_EQ(run({"taxonomy", "--dump", dump, "--config", (dir / "broken.json").string(), "--out", dir.path().string()}), 2);
    EXPECT_EQ(run({"taxonomy", "--dump", dump, "--config", (dir / "nope.json").string(), "--out", dir.path().string()}), 1);

    EXPECT_EQ(run({"sparsify", "--dump", dump, "--method", "weight_magnitude", "--out", dir.path().string()}), 2);
    EXPECT_EQ(run({"sparsify", "--dump", dump, "--method", "bogus", "--out", dir.path().string()}), 2);
    EXPECT_EQ(run({"sparsify", "--dump", dump, "--fraction", "0", "--out", dir.path().string()}), 2);

    // a corrupted tensor is an I/O-side failure
    std::ofstream(dir / "dump" / "attn_L000_H001.npy") << "garbage";
    EXPECT_EQ(run({"analyze", "--dump", dump, "--out", dir.path().string()}), 1);

    auto infeasible = synth_config(32, 512, 2);
    infeasible["beta"] = 3.0;
    infeasible["rho0"] = 0.9;
    write_json(dir / "inf.json", infeasible);
    EXPECT_EQ(run({"synth", "--config", (dir / "inf.json").string(), "--out", dir.path().string()}), 2);
}

TEST(Cli, SynthIsDeterministic)
{
    TempDir a("cli"), b("cli");
    write_json(a / "s.json", synth_config(32, 64, 2));
    ASSERT_EQ(run({"synth", "--config", (a / "s.json").string(), "--out", a.path().string(), "--threads", "1"}), 0);
    ASSERT_EQ(run({"synth", "--config", (a / "s.json").string(), "--out", b.path().string(), "--threads", "3"}), 0);
    EXPECT_EQ(file_hash(a / "montecarlo.csv"), file_hash(b / "montecarlo.csv"));
    EXPECT_EQ(file_hash(a / "dump" / "values_L000_H001.npy"), file_hash(b / "dump" / "values_L000_H001.npy"));
}

TEST(Cli, SparsifyRandomTwice)
{
    TempDir dir("cli");
    engineered_dump(dir / "dump");
    const auto dump = (dir / "dump").string();
    for (const char* out : {"r1", "r2"})
        ASSERT_EQ(run({"sparsify", "--dump", dump, "--method", "random", "--seed", "7", "--fraction", "0.5", "--out",
                       (dir / out).string()}),
                  0);
    EXPECT_EQ(slurp(dir / "r1" / "mask.json"), slurp(dir / "r2" / "mask.json"));
    const auto plan = nlohmann::json::parse(slurp(dir / "r1" / "mask.json")).get<MaskPlan>();
    EXPECT_EQ(plan.params.at("seed"), 7);

    ASSERT_EQ(run({"sparsify", "--dump", dump, "--fraction", "0.5", "--out", (dir / "tg").string()}), 0);
    const auto tg = nlohmann::json::parse(slurp(dir / "tg" / "mask.json")).get<MaskPlan>();
    // heads 1 and 3 are the Mixers
    for (const auto& row : tg.layers) EXPECT_EQ(row, (std::vector<bool>{false, true, false, true}));

    write_json(dir / "w.json", {{"layers", {{1, 2, 3, 4}, {4, 3, 2, 1}, {1, 1, 1, 1}}}});
    write_json(dir / "cfg.json", {{"weights", (dir / "w.json").string()}});
    ASSERT_EQ(run({"sparsify", "--dump", dump, "--method", "weight_magnitude", "--config", (dir / "cfg.json").string(),
                   "--fraction", "0.25", "--out", (dir / "wm").string()}),
              0);
    const auto wm = nlohmann::json::parse(slurp(dir / "wm" / "mask.json")).get<MaskPlan>();
    EXPECT_EQ(wm.layers[0], (std::vector<bool>{false, false, false, true}));
    EXPECT_EQ(wm.layers[1], (std::vector<bool>{true, false, false, false}));
}

TEST(Cli, TaxonomyCounts)
{
    TempDir dir("cli");
    engineered_dump(dir / "dump");
    ASSERT_EQ(run({"taxonomy", "--dump", (dir / "dump").string(), "--out", dir.path().string()}), 0);
    std::vector<std::string> h;
    for (const auto& r : read_csv(dir / "depth.csv", &h)) {
        EXPECT_EQ(r[column(h, "retriever")], "1");
        EXPECT_EQ(r[column(h, "mixer")], "2");
        EXPECT_EQ(r[column(h, "reset")], "1");
    }
    EXPECT_EQ(read_csv(dir / "regimes.csv").size(), 12u);
    EXPECT_EQ(read_csv(dir / "depth_bands.csv").size(), 3u);
}

TEST(Cli, FitAndReport)
{
    TempDir dir("cli");
    auto cfg = synth_config(128, 256, 4);
    cfg["lambda"] = 0.3;
    write_json(dir / "s.json", cfg);
    ASSERT_EQ(run({"synth", "--config", (dir / "s.json").string(), "--out", dir.path().string()}), 0);
    const auto dump = (dir / "dump").string();
    ASSERT_EQ(run({"fit", "--dump", dump, "--out", (dir / "fit").string(), "--threads", "2"}), 0);
    std::vector<std::string> h;
    const auto fits = read_csv(dir / "fit" / "fits.csv", &h);
    ASSERT_EQ(fits.size(), 4u);
    for (const auto& r : fits) {
        EXPECT_NEAR(std::stod(r[column(h, "lambda")]), 0.3, 1e-6);
        EXPECT_NEAR(std::stod(r[column(h, "C")]), 1.0, 1e-6);
        EXPECT_EQ(r[column(h, "template")], "1");
    }
    const auto prev = read_csv(dir / "fit" / "prevalence.csv", &h);
    ASSERT_EQ(prev.size(), 1u);
    EXPECT_EQ(prev[0][column(h, "fraction")], "1");

    ASSERT_EQ(run({"report", "--dump", dump, "--out", (dir / "rep").string()}), 0);
    EXPECT_EQ(read_csv(dir / "rep" / "global_means.csv").size(), default_n_grid(128).size());
    const auto summary = nlohmann::json::parse(slurp(dir / "rep" / "summary.json"));
    EXPECT_EQ(summary.at("heads"), 4);
    EXPECT_EQ(summary.at("template_prevalence")[0], 1.0);
}

TEST(Cli, SynthThenBoundsContainsMeans)
{
    TempDir dir("cli");
    auto cfg = synth_config(128, 256, 8);
    cfg["ns"] = {1, 2, 3, 4, 8, 16, 64, 129};
    write_json(dir / "s.json", cfg);
    ASSERT_EQ(run({"synth", "--config", (dir / "s.json").string(), "--out", dir.path().string()}), 0);
    const double kappa = nlohmann::json::parse(slurp(dir / "synth_summary.json")).at("kappa").get<double>();
    write_json(dir / "b.json", {{"beta", 0.2}, {"ns", {1, 2, 3, 4, 8, 16, 64, 129}}});
    ASSERT_EQ(run({"bounds", "--dump", (dir / "dump").string(), "--config", (dir / "b.json").string(), "--kappa",
                   std::to_string(kappa), "--out", (dir / "b").string()}),
              0);

    std::vector<std::string> hm, hb;
    const auto mc = read_csv(dir / "montecarlo.csv", &hm);
    const auto bounds = read_csv(dir / "b" / "bounds.csv", &hb);
    ASSERT_EQ(bounds.size(), 8u * 8);
    for (const auto& m : mc) {
        const std::string n = m[column(hm, "N")];
        double p_lo = inf, p_hi = -inf, r_lo = inf, r_hi = -inf;
        for (const auto& b : bounds) {
            if (b[column(hb, "N")] != n) continue;
            p_lo = std::min(p_lo, std::stod(b[column(hb, "P_lo")]));
            p_hi = std::max(p_hi, std::stod(b[column(hb, "P_hi")]));
            r_lo = std::min(r_lo, std::stod(b[column(hb, "R_lo")]));
            r_hi = std::max(r_hi, std::stod(b[column(hb, "R_hi")]));
        }
        const double P = std::stod(m[column(hm, "mean_P_rmax")]), ciP = std::stod(m[column(hm, "ci_P")]);
        const double R = std::stod(m[column(hm, "mean_R_rmin")]), ciR = std::stod(m[column(hm, "ci_R")]);
        EXPECT_GE(P, p_lo - 2 * ciP) << "N=" << n;
        EXPECT_LE(P, p_hi + 2 * ciP) << "N=" << n;
        EXPECT_GE(R, r_lo - 2 * ciR) << "N=" << n;
        EXPECT_LE(R, r_hi + 2 * ciR) << "N=" << n;
    }

    // config-only mode: model envelopes, one row per N
    write_json(dir / "m.json", {{"model", {{"L", 128}, {"d", 256}, {"beta", 0.2}}}, {"kappa", kappa}, {"ns", {1, 2, 129}}});
    ASSERT_EQ(run({"bounds", "--config", (dir / "m.json").string(), "--out", (dir / "m").string()}), 0);
    const auto model_rows = read_csv(dir / "m" / "bounds.csv", &hb);
    ASSERT_EQ(model_rows.size(), 3u);
    EXPECT_EQ(model_rows[0][column(hb, "P_lo")], "1");
    EXPECT_EQ(model_rows[1][column(hb, "margin_positive")], "1");
}
