#pragma once

#include <cstddef>

namespace fedsim::simd {

// Double-precision kernels behind the hot loops (dot products, gradient
// accumulation, parameter updates). A scalar reference implementation always
// exists; an AVX2 variant is selected at runtime when both the build and the
// CPU support it. The two are equivalence-tested against each other; within
// one process the selection is fixed, so outputs stay byte-reproducible.
struct Kernels {
    const char* name;
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y[i] *= alpha
    void (*scale)(double alpha, double* y, std::size_t n);
};

const Kernels& scalar_kernels();

// Null when the binary was built without AVX2 or the CPU lacks it.
const Kernels* avx2_kernels();

// Active implementation: AVX2 when available, otherwise scalar. Overridable
// via FEDSIM_KERNELS=scalar|avx2 in the environment (checked once).
const Kernels& active();

inline double dot(const double* a, const double* b, std::size_t n) {
    return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    active().axpy(alpha, x, y, n);
}
inline void scale(double alpha, double* y, std::size_t n) {
    active().scale(alpha, y, n);
}

}  // namespace fedsim::simd
