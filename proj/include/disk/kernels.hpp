#pragma once

#include <cstddef>

// Double-precision array kernels used by the hot paths (descriptor
// distances, probability reductions, gradient accumulation, optimizer
// updates).  A scalar reference implementation always exists; on x86_64 an
// AVX2 variant is compiled as well and picked at startup when the CPU
// supports it.  Set DISK_KERNELS=scalar or DISK_KERNELS=avx2 to override.
//
// Elementwise kernels (axpy, scale, adam_step) produce bit-identical
// results across backends.  Reductions may differ by rounding because the
// vector variants accumulate per lane.

namespace disk::kernels {

struct Ops {
    double (*dot)(const double*, const double*, std::size_t);
    double (*l2_sqr)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*max)(const double*, std::size_t);  // n >= 1, no NaN
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double, double*, std::size_t);
    // Adam ascent step on float32 params with double moments.  bc1/bc2 are
    // the bias corrections 1-beta^t for the current step.
    void (*adam_step)(float* params, const double* grad, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2);
    const char* name;
};

const Ops& scalar_ops();
const Ops* avx2_ops();  // nullptr when unsupported or not built
const Ops& active_ops();

inline double dot(const double* a, const double* b, std::size_t n) {
    return active_ops().dot(a, b, n);
}
inline double l2_sqr(const double* a, const double* b, std::size_t n) {
    return active_ops().l2_sqr(a, b, n);
}
inline double sum(const double* a, std::size_t n) { return active_ops().sum(a, n); }
inline double max(const double* a, std::size_t n) { return active_ops().max(a, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    active_ops().axpy(alpha, x, y, n);
}
inline void scale(double alpha, double* x, std::size_t n) { active_ops().scale(alpha, x, n); }
inline void adam_step(float* params, const double* grad, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2) {
    active_ops().adam_step(params, grad, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace disk::kernels
