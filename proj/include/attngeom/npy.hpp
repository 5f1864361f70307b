#pragma once

// Minimal NPY v1.0 reader/writer: little-endian float32, C order, 1-D or 2-D.

#include "attngeom/core.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <regex>
#include <span>

namespace attngeom::npy {

static_assert(std::endian::native == std::endian::little, "NPY payloads are read in place; big-endian hosts unsupported");

struct Array {
    std::vector<std::size_t> shape;
    std::vector<float> data;
};

inline constexpr std::array<char, 6> magic{'\x93', 'N', 'U', 'M', 'P', 'Y'};

inline std::string header_dict(const std::vector<std::size_t>& shape)
{
    std::string s = "{'descr': '<f4', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (shape.size() == 1 || i + 1 < shape.size()) s += ",";
        if (i + 1 < shape.size()) s += " ";
    }
    s += "), }";
    // magic(6) + version(2) + len(2) + dict + padding + '\n' is a multiple of 64
    const std::size_t unpadded = 10 + s.size() + 1;
    s.append((64 - unpadded % 64) % 64, ' ');
    s += '\n';
    return s;
}

inline void write(const std::filesystem::path& path, std::span<const float> data, const std::vector<std::size_t>& shape)
{
    std::size_t count = 1;
    for (auto n : shape) count *= n;
    if (count != data.size())
        throw ShapeError("npy payload size for " + path.string(), shape, {data.size()});

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const std::string dict = header_dict(shape);
    const auto len = static_cast<std::uint16_t>(dict.size());
    out.write(magic.data(), magic.size());
    out.put('\x01');
    out.put('\x00');
    out.put(static_cast<char>(len & 0xff));
    out.put(static_cast<char>(len >> 8));
    out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out) throw IoError("write failed for " + path.string());
}

inline Array read(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path, "missing or unreadable file");

    std::array<char, 10> pre{};
    if (!in.read(pre.data(), pre.size()) || std::memcmp(pre.data(), magic.data(), magic.size()) != 0)
        throw FormatError(path, "not an NPY file");
    const auto major = static_cast<unsigned char>(pre[6]);
    std::size_t hlen = 0;
    if (major == 1) {
        hlen = static_cast<unsigned char>(pre[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(pre[9])) << 8);
    } else if (major == 2 || major == 3) {
        // v2/v3 use a 4-byte header length; tolerated so numpy fallbacks still load.
        std::array<char, 2> extra{};
        if (!in.read(extra.data(), 2)) throw FormatError(path, "truncated header");
        hlen = static_cast<unsigned char>(pre[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(pre[9])) << 8) |
               (static_cast<std::size_t>(static_cast<unsigned char>(extra[0])) << 16) |
               (static_cast<std::size_t>(static_cast<unsigned char>(extra[1])) << 24);
    } else {
        throw FormatError(path, "unsupported NPY version " + std::to_string(major));
    }

    std::string dict(hlen, '\0');
    if (!in.read(dict.data(), static_cast<std::streamsize>(hlen))) throw FormatError(path, "truncated header");

    static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
    static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
    static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
    std::smatch m;
    if (!std::regex_search(dict, m, descr_re)) throw FormatError(path, "header lacks descr");
    if (m[1] != "<f4") throw FormatError(path, "dtype " + m[1].str() + " is not little-endian float32");
    if (!std::regex_search(dict, m, order_re)) throw FormatError(path, "header lacks fortran_order");
    if (m[1] == "True") throw FormatError(path, "Fortran-ordered arrays are not supported");
    if (!std::regex_search(dict, m, shape_re)) throw FormatError(path, "header lacks shape");

    Array a;
    const std::string dims = m[1];
    static const std::regex num_re(R"(\d+)");
    for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num_re); it != std::sregex_iterator(); ++it)
        a.shape.push_back(std::stoull(it->str()));

    std::size_t count = 1;
    for (auto n : a.shape) count *= n;
    a.data.resize(count);
    if (!in.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(count * sizeof(float))))
        throw FormatError(path, "payload shorter than declared shape");
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path, "trailing bytes after payload");
    return a;
}

} // namespace attngeom::npy
