#pragma once

// Plot-ready CSV tables.  The first line of every file names the table, its
// schema version and column list, e.g.
//   # attngeom metrics v1: layer,head,N,r_kind,r,P,R,F

#include "attngeom/core.hpp"

#include <charconv>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <variant>

namespace attngeom {

inline std::string format_number(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    using Cell = std::variant<double, long long, std::string>;

    CsvWriter(const std::filesystem::path& path, const std::string& table, std::vector<std::string> columns, int version = 1)
        : out_(path, std::ios::trunc), columns_(std::move(columns))
    {
        if (!out_) throw IoError("cannot open " + path.string() + " for writing");
        out_ << "# attngeom " << table << " v" << version << ": " << join(columns_) << '\n' << join(columns_) << '\n';
    }

    void row(std::initializer_list<Cell> cells)
    {
        if (cells.size() != columns_.size())
            throw ShapeError("csv row", {columns_.size()}, {cells.size()});
        bool first = true;
        for (const auto& c : cells) {
            if (!first) out_ << ',';
            first = false;
            std::visit([&](const auto& v) { write(v); }, c);
        }
        out_ << '\n';
        if (!out_) throw IoError("csv write failed");
    }

private:
    void write(double v) { out_ << format_number(v); }
    void write(long long v) { out_ << v; }
    void write(const std::string& v) { out_ << v; }

    static std::string join(const std::vector<std::string>& cols)
    {
        std::string s;
        for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + cols[i];
        return s;
    }

    std::ofstream out_;
    std::vector<std::string> columns_;
};

} // namespace attngeom
