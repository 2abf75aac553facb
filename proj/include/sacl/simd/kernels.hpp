#pragma once

// Dense double-precision inner loops used by the autodiff engine, the
// objectives and the clustering metrics. Every kernel has a scalar reference
// implementation and, on x86-64, an AVX2/FMA variant. The active table is
// chosen once at process start from CPUID and the SACL_SIMD environment
// variable ("scalar" or "avx2").

#include <cstddef>
#include <string_view>

namespace sacl::simd {

struct KernelTable {
    std::string_view name;

    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y = W x, W is rows x cols row-major
    void (*matvec)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
    // y += W^T x, W is rows x cols row-major, x has `rows` entries
    void (*matvec_t_acc)(const double* w, std::size_t rows, std::size_t cols, const double* x,
                         double* y);
    // W += u v^T, u has `rows` entries, v has `cols` entries
    void (*rank1_acc)(double* w, std::size_t rows, std::size_t cols, const double* u,
                      const double* v);
    // y[i] += a[i] * b[i]
    void (*hadamard_acc)(const double* a, const double* b, double* y, std::size_t n);
    // sum_i (a[i] - b[i])^2
    double (*sq_dist)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_kernels();

// Returns nullptr when the binary or the CPU has no AVX2/FMA support.
const KernelTable* avx2_kernels();

// The dispatched table. Stable for the lifetime of the process.
const KernelTable& active();

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    active().axpy(alpha, x, y, n);
}
inline void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
    active().matvec(w, rows, cols, x, y);
}
inline void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols, const double* x,
                         double* y) {
    active().matvec_t_acc(w, rows, cols, x, y);
}
inline void rank1_acc(double* w, std::size_t rows, std::size_t cols, const double* u,
                      const double* v) {
    active().rank1_acc(w, rows, cols, u, v);
}
inline void hadamard_acc(const double* a, const double* b, double* y, std::size_t n) {
    active().hadamard_acc(a, b, y, n);
}
inline double sq_dist(const double* a, const double* b, std::size_t n) {
    return active().sq_dist(a, b, n);
}

}  // namespace sacl::simd
