#pragma once

// Shared test helpers: random tensors, brute-force oracles, temp dirs.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tryon/tensor.hpp"

namespace testutil {

template <class T>
tryon::Tensor<T> random_tensor(std::vector<int> shape, std::mt19937& rng, bool requires_grad,
                               T lo = T(-1), T hi = T(1)) {
    std::uniform_real_distribution<double> uni(static_cast<double>(lo), static_cast<double>(hi));
    std::vector<T> v(tryon::Tensor<T>::shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(uni(rng));
    return tryon::Tensor<T>::from_data(std::move(shape), std::move(v), requires_grad);
}

// Exhaustive minimum assignment cost over all permutations (K <= 8).
inline double brute_force_assignment(const std::vector<double>& cost, int k) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (int i = 0; i < k; ++i) total += cost[static_cast<std::size_t>(i) * k + perm[static_cast<std::size_t>(i)]];
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Scratch directory under the build tree, wiped on construction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    std::string str() const { return path.string(); }
};

inline bool files_identical(const std::string& a, const std::string& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::vector<char> da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::vector<char> db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return da == db;
}

}  // namespace testutil
