#include "fedsim/simd_kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace fedsim::simd {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= alpha;
}

constexpr Kernels kScalar{"scalar", dot_scalar, axpy_scalar, scale_scalar};

const Kernels* pick_active() {
    const char* forced = std::getenv("FEDSIM_KERNELS");
    if (forced && std::strcmp(forced, "scalar") == 0) return &kScalar;
    const Kernels* avx2 = avx2_kernels();
    if (forced && std::strcmp(forced, "avx2") == 0) return avx2 ? avx2 : &kScalar;
    return avx2 ? avx2 : &kScalar;
}

}  // namespace

const Kernels& scalar_kernels() { return kScalar; }

#ifndef FEDSIM_BUILD_AVX2
const Kernels* avx2_kernels() { return nullptr; }
#endif

const Kernels& active() {
    static const Kernels* chosen = pick_active();
    return *chosen;
}

}  // namespace fedsim::simd
