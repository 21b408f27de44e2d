#pragma once

#include <unistd.h>

#include <atomic>
#include <fstream>
#include <iterator>
#include <filesystem>
#include <random>
#include <string>

#include "ssa/tensor.hpp"

namespace testutil {

template <typename T = double>
ssa::BasicTensor<T> random_tensor(ssa::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    ssa::BasicTensor<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
    return t;
}

/// Direct 7-loop grouped cross-correlation, stride 1.
template <typename T>
ssa::BasicTensor<T> naive_conv(const ssa::BasicTensor<T>& x, const ssa::BasicTensor<T>& w, const ssa::BasicTensor<T>* b,
                               std::size_t pad, std::size_t groups) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    const std::size_t oh = xs.h + 2 * pad - ws.h + 1;
    const std::size_t ow = xs.w + 2 * pad - ws.w + 1;
    const std::size_t cin_g = xs.c / groups;
    const std::size_t cout_g = ws.n / groups;
    ssa::BasicTensor<T> y(ssa::Shape{xs.n, ws.n, oh, ow});
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t o = 0; o < ws.n; ++o) {
            const std::size_t g = o / cout_g;
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    long double acc = b ? (*b)(0, o, 0, 0) : 0;
                    for (std::size_t c = 0; c < cin_g; ++c)
                        for (std::size_t ki = 0; ki < ws.h; ++ki)
                            for (std::size_t kj = 0; kj < ws.w; ++kj) {
                                const long yy = static_cast<long>(i + ki) - static_cast<long>(pad);
                                const long xx = static_cast<long>(j + kj) - static_cast<long>(pad);
                                if (yy < 0 || xx < 0 || yy >= static_cast<long>(xs.h) || xx >= static_cast<long>(xs.w))
                                    continue;
                                acc += static_cast<long double>(x(n, g * cin_g + c, yy, xx)) * w(o, c, ki, kj);
                            }
                    y(n, o, i, j) = static_cast<T>(acc);
                }
        }
    return y;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto p = std::filesystem::temp_directory_path() /
             ("ssa_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
