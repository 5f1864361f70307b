#pragma once

#include "attngeom/attngeom.hpp"

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

namespace testing_support {

using namespace attngeom;

// Gaussian values; attention from squared Gaussians normalized in double then
// stored as f32.  With tie_prob > 0 some weights and value rows are copied
// from earlier positions.
inline HeadSlice random_slice(std::mt19937_64& rng, int L, int d, double tie_prob = 0.0)
{
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    RowMatrixD v(L + 1, d);
    Eigen::VectorXd a(L + 1);
    for (int i = 0; i <= L; ++i) {
        for (int k = 0; k < d; ++k) v(i, k) = nd(rng);
        const double g = nd(rng);
        a[i] = g * g + 1e-3;
    }
    if (tie_prob > 0.0)
        for (int i = 1; i <= L; ++i) {
            std::uniform_int_distribution<int> pick(0, i - 1);
            if (u01(rng) < tie_prob) a[i] = a[pick(rng)];
            if (u01(rng) < tie_prob) v.row(i) = v.row(pick(rng));
        }
    HeadSlice s;
    s.values = v.cast<float>();
    s.attn_row = (a / a.sum()).cast<float>();
    return s;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("attngeom_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// FNV-1a over file bytes
inline std::uint64_t file_hash(const std::filesystem::path& p)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : slurp(p)) h = (h ^ c) * 1099511628211ull;
    return h;
}

} // namespace testing_support
