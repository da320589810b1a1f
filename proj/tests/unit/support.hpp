#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mhf/matrix.hpp"

namespace testing {

inline mhf::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                 double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    mhf::Matrix m(rows, cols);
    for (double& v : m.values()) v = u(rng);
    return m;
}

inline std::size_t random_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace testing
