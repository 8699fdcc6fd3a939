#include "disk/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace disk::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; i++) acc += a[i] * b[i];
    return acc;
}

double l2_sqr_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; i++) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double sum_scalar(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; i++) acc += a[i];
    return acc;
}

double max_scalar(const double* a, std::size_t n) {
    double m = a[0];
    for (std::size_t i = 1; i < n; i++)
        if (a[i] > m) m = a[i];
    return m;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; i++) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; i++) x[i] *= alpha;
}

void adam_step_scalar(float* params, const double* grad, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2) {
    for (std::size_t i = 0; i < n; i++) {
        double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g * g);
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        double p = static_cast<double>(params[i]);
        params[i] = static_cast<float>(p + lr * (mhat / (std::sqrt(vhat) + eps)));
    }
}

constexpr Ops kScalar = {dot_scalar, l2_sqr_scalar, sum_scalar, max_scalar,
                         axpy_scalar, scale_scalar, adam_step_scalar, "scalar"};

const Ops* pick_active() {
    const char* want = std::getenv("DISK_KERNELS");
    if (want && std::strcmp(want, "scalar") == 0) return &kScalar;
    const Ops* vec = avx2_ops();
    if (want && std::strcmp(want, "avx2") == 0 && vec) return vec;
    if (!want && vec) return vec;
    return &kScalar;
}

}  // namespace

const Ops& scalar_ops() { return kScalar; }

#ifndef DISK_HAVE_AVX2
const Ops* avx2_ops() { return nullptr; }
#endif

const Ops& active_ops() {
    static const Ops* active = pick_active();
    return *active;
}

}  // namespace disk::kernels
