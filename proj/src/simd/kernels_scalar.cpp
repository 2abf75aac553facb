#include "sacl/simd/kernels.hpp"

namespace sacl::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(w + r * cols, x, cols);
}

void matvec_t_acc_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x,
                         double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        if (x[r] != 0.0) axpy_scalar(x[r], w + r * cols, y, cols);
    }
}

void rank1_acc_scalar(double* w, std::size_t rows, std::size_t cols, const double* u,
                      const double* v) {
    for (std::size_t r = 0; r < rows; ++r) {
        if (u[r] != 0.0) axpy_scalar(u[r], v, w + r * cols, cols);
    }
}

void hadamard_acc_scalar(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

double sq_dist_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table{
        "scalar",        dot_scalar,          axpy_scalar,    matvec_scalar,
        matvec_t_acc_scalar, rank1_acc_scalar, hadamard_acc_scalar, sq_dist_scalar,
    };
    return table;
}

}  // namespace sacl::simd
