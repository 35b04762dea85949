#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/simd_kernels.hpp"

namespace fedsim {

using ParamVector = std::vector<double>;

inline void check_same_dim(std::size_t a, std::size_t b, const char* where) {
    if (a != b) {
        throw ShapeError(std::string(where) + ": dimension mismatch (" +
                         std::to_string(a) + " vs " + std::to_string(b) + ")");
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    check_same_dim(a.size(), b.size(), "dot");
    return simd::dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, ParamVector& y) {
    check_same_dim(x.size(), y.size(), "axpy");
    simd::axpy(alpha, x.data(), y.data(), x.size());
}

inline void scale(double alpha, ParamVector& y) {
    simd::scale(alpha, y.data(), y.size());
}

inline double norm_sq(std::span<const double> a) {
    return simd::dot(a.data(), a.data(), a.size());
}

inline double norm(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

inline bool all_finite(std::span<const double> a) {
    for (double v : a) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace fedsim
