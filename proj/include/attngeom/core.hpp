#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace attngeom {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double inf = std::numeric_limits<double>::infinity();

// Two families matter to callers: file problems (IoError) and bad inputs
// (InputError).  The cli maps them to exit codes 1 and 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public IoError {
public:
    FormatError(std::filesystem::path path, const std::string& why)
        : IoError(path.string() + ": " + why), path_(std::move(path)) {}
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

class InputError : public Error {
public:
    using Error::Error;
};

class ShapeError : public InputError {
public:
    ShapeError(const std::string& what, std::vector<std::size_t> expected, std::vector<std::size_t> got)
        : InputError(what + ": expected " + show(expected) + ", got " + show(got)),
          expected_(std::move(expected)), got_(std::move(got)) {}
    const std::vector<std::size_t>& expected() const noexcept { return expected_; }
    const std::vector<std::size_t>& got() const noexcept { return got_; }

private:
    static std::string show(const std::vector<std::size_t>& s)
    {
        std::string out = "(";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += ", ";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }
    std::vector<std::size_t> expected_, got_;
};

class ValidationError : public InputError {
public:
    explicit ValidationError(const std::string& what, int layer = -1, int head = -1,
                             double sum = std::numeric_limits<double>::quiet_NaN())
        : InputError(what), layer_(layer), head_(head), sum_(sum) {}
    int layer() const noexcept { return layer_; }
    int head() const noexcept { return head_; }
    double sum() const noexcept { return sum_; }

private:
    int layer_, head_;
    double sum_;
};

class RangeError : public InputError {
public:
    using InputError::InputError;
};

class DegenerateError : public InputError {
public:
    using InputError::InputError;
};

class FeasibilityError : public InputError {
public:
    FeasibilityError(const std::string& what, double lo, double hi)
        : InputError(what + " (achievable range [" + std::to_string(lo) + ", " + std::to_string(hi) + "])"),
          lo_(lo), hi_(hi) {}
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }

private:
    double lo_, hi_;
};

class ConfigError : public InputError {
public:
    using InputError::InputError;
};

class DependencyError : public InputError {
public:
    using InputError::InputError;
};

class NoOutsideTokens : public InputError {
public:
    NoOutsideTokens() : InputError("selection covers every position; margins are undefined") {}
};

// Normal density, used by the Gaussian lower-tail bound.
inline double normal_pdf(double x)
{
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b)
{
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

// splitmix64, for deriving independent per-trial seeds from one top-level seed.
inline std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    return mix_seed(base ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

} // namespace attngeom
