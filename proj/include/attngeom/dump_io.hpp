#pragma once

#include "attngeom/core.hpp"
#include "attngeom/npy.hpp"

#include <json.hpp>

#include <cstdio>
#include <optional>
#include <span>

namespace attngeom {

inline constexpr double attn_sum_tolerance = 1e-4;

struct DumpManifest {
    std::string model_name;
    int num_layers = 0;
    int num_heads = 0;
    int seq_len = 0;   // L; positions run 0..L
    int head_dim = 0;  // d
    std::string dtype = "f32";
    bool has_full_attention = false;

    int positions() const { return seq_len + 1; }

    void validate() const
    {
        if (num_layers < 1) throw ValidationError("num_layers must be positive");
        if (num_heads < 1) throw ValidationError("num_heads must be positive");
        if (seq_len < 1) throw ValidationError("seq_len must be at least 1");
        if (head_dim < 2) throw ValidationError("head_dim must be at least 2");
        if (dtype != "f32") throw ValidationError("unsupported dtype " + dtype);
    }

    friend bool operator==(const DumpManifest&, const DumpManifest&) = default;
};

inline void to_json(nlohmann::json& j, const DumpManifest& m)
{
    j = nlohmann::json{{"model_name", m.model_name},   {"num_layers", m.num_layers},
                       {"num_heads", m.num_heads},     {"seq_len", m.seq_len},
                       {"head_dim", m.head_dim},       {"dtype", m.dtype},
                       {"has_full_attention", m.has_full_attention}};
}

inline void from_json(const nlohmann::json& j, DumpManifest& m)
{
    j.at("model_name").get_to(m.model_name);
    j.at("num_layers").get_to(m.num_layers);
    j.at("num_heads").get_to(m.num_heads);
    j.at("seq_len").get_to(m.seq_len);
    j.at("head_dim").get_to(m.head_dim);
    m.dtype = j.value("dtype", std::string("f32"));
    m.has_full_attention = j.value("has_full_attention", false);
}

struct HeadSlice {
    int layer = 0;
    int head = 0;
    RowMatrixF values;                   // (L+1) x d, row i = v_i
    Eigen::VectorXf attn_row;            // length L+1
    std::optional<RowMatrixF> attn_full; // (L+1) x (L+1), only for entropy baselines

    int positions() const { return static_cast<int>(values.rows()); }
    int seq_len() const { return positions() - 1; }
    int dim() const { return static_cast<int>(values.cols()); }
};

// Checks the slice invariants; shapes are checked against the manifest when one is given.
inline void validate_slice(const HeadSlice& s, const DumpManifest* m = nullptr)
{
    const auto n = static_cast<std::size_t>(s.values.rows());
    if (m) {
        const std::vector<std::size_t> want{static_cast<std::size_t>(m->positions()), static_cast<std::size_t>(m->head_dim)};
        if (n != want[0] || static_cast<std::size_t>(s.values.cols()) != want[1])
            throw ShapeError("values of layer " + std::to_string(s.layer) + " head " + std::to_string(s.head), want,
                             {n, static_cast<std::size_t>(s.values.cols())});
    }
    if (n < 2) throw ShapeError("values need at least two positions", {2}, {n});
    if (static_cast<std::size_t>(s.attn_row.size()) != n)
        throw ShapeError("attention row of layer " + std::to_string(s.layer) + " head " + std::to_string(s.head), {n},
                         {static_cast<std::size_t>(s.attn_row.size())});
    if (!s.values.allFinite())
        throw ValidationError("non-finite value state", s.layer, s.head);
    if (!s.attn_row.allFinite() || (s.attn_row.array() < 0.0f).any())
        throw ValidationError("attention row has negative or non-finite entries", s.layer, s.head);
    const double sum = s.attn_row.cast<double>().sum();
    if (std::abs(sum - 1.0) > attn_sum_tolerance)
        throw ValidationError("attention row of layer " + std::to_string(s.layer) + " head " + std::to_string(s.head) +
                                  " sums to " + std::to_string(sum),
                              s.layer, s.head, sum);
    if (s.attn_full) {
        const auto& a = *s.attn_full;
        if (static_cast<std::size_t>(a.rows()) != n || static_cast<std::size_t>(a.cols()) != n)
            throw ShapeError("full attention matrix", {n, n},
                             {static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols())});
        if (!a.allFinite() || (a.array() < 0.0f).any())
            throw ValidationError("full attention matrix has negative or non-finite entries", s.layer, s.head);
    }
}

inline std::string slice_filename(const std::string& kind, int layer, int head)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_L%03d_H%03d.npy", kind.c_str(), layer, head);
    return buf;
}

// A dump directory: the manifest is parsed eagerly, slices are loaded (and
// validated) on request.  load() is const and touches no shared state, so
// distinct slices may be loaded from several threads.
class Dump {
public:
    explicit Dump(std::filesystem::path dir) : dir_(std::move(dir))
    {
        const auto mpath = dir_ / "manifest.json";
        std::ifstream in(mpath);
        if (!in) throw FormatError(mpath, "missing manifest");
        try {
            manifest_ = nlohmann::json::parse(in).get<DumpManifest>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(mpath, e.what());
        }
        manifest_.validate();
        for (int l = 0; l < manifest_.num_layers; ++l)
            for (int h = 0; h < manifest_.num_heads; ++h)
                for (const char* kind : {"values", "attn"})
                    if (!std::filesystem::exists(dir_ / slice_filename(kind, l, h)))
                        throw FormatError(dir_ / slice_filename(kind, l, h), "missing tensor file");
    }

    const DumpManifest& manifest() const { return manifest_; }
    const std::filesystem::path& path() const { return dir_; }

    HeadSlice load(int layer, int head) const
    {
        if (layer < 0 || layer >= manifest_.num_layers || head < 0 || head >= manifest_.num_heads)
            throw RangeError("no slice for layer " + std::to_string(layer) + " head " + std::to_string(head));
        const auto n = static_cast<std::size_t>(manifest_.positions());
        const auto d = static_cast<std::size_t>(manifest_.head_dim);

        HeadSlice s;
        s.layer = layer;
        s.head = head;

        auto v = npy::read(dir_ / slice_filename("values", layer, head));
        expect_shape(v, {n, d}, "values", layer, head);
        s.values = Eigen::Map<const RowMatrixF>(v.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));

        auto a = npy::read(dir_ / slice_filename("attn", layer, head));
        expect_shape(a, {n}, "attn", layer, head);
        s.attn_row = Eigen::Map<const Eigen::VectorXf>(a.data.data(), static_cast<Eigen::Index>(n));

        if (manifest_.has_full_attention) {
            const auto fpath = dir_ / slice_filename("attn_full", layer, head);
            if (std::filesystem::exists(fpath)) {
                auto f = npy::read(fpath);
                expect_shape(f, {n, n}, "attn_full", layer, head);
                s.attn_full = Eigen::Map<const RowMatrixF>(f.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
            }
        }
        validate_slice(s, &manifest_);
        return s;
    }

private:
    static void expect_shape(const npy::Array& a, std::vector<std::size_t> want, const char* kind, int l, int h)
    {
        if (a.shape != want)
            throw ShapeError(std::string(kind) + " of layer " + std::to_string(l) + " head " + std::to_string(h),
                             std::move(want), a.shape);
    }

    std::filesystem::path dir_;
    DumpManifest manifest_;
};

inline Dump read_dump(const std::filesystem::path& dir) { return Dump(dir); }

// Slices must cover every (layer, head) of the manifest exactly once.
inline void write_dump(const DumpManifest& m, std::span<const HeadSlice> slices, const std::filesystem::path& dir)
{
    m.validate();
    const auto expected = static_cast<std::size_t>(m.num_layers) * static_cast<std::size_t>(m.num_heads);
    if (slices.size() != expected)
        throw ValidationError("manifest declares " + std::to_string(expected) + " slices, got " + std::to_string(slices.size()));
    std::vector<char> seen(expected, 0);
    for (const auto& s : slices) {
        if (s.layer < 0 || s.layer >= m.num_layers || s.head < 0 || s.head >= m.num_heads)
            throw ValidationError("slice outside manifest range", s.layer, s.head);
        auto& flag = seen[static_cast<std::size_t>(s.layer * m.num_heads + s.head)];
        if (flag) throw ValidationError("duplicate slice", s.layer, s.head);
        flag = 1;
        validate_slice(s, &m);
        if (s.attn_full && !m.has_full_attention)
            throw ValidationError("slice carries a full attention matrix but manifest says has_full_attention=false", s.layer, s.head);
    }

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    const auto n = static_cast<std::size_t>(m.positions());
    const auto d = static_cast<std::size_t>(m.head_dim);
    for (const auto& s : slices) {
        npy::write(dir / slice_filename("values", s.layer, s.head), {s.values.data(), n * d}, {n, d});
        npy::write(dir / slice_filename("attn", s.layer, s.head), {s.attn_row.data(), n}, {n});
        if (s.attn_full)
            npy::write(dir / slice_filename("attn_full", s.layer, s.head), {s.attn_full->data(), n * n}, {n, n});
    }
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << nlohmann::json(m).dump(2) << '\n';
    if (!out) throw IoError("manifest write failed in " + dir.string());
}

} // namespace attngeom
