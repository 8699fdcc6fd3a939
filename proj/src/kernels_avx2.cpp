#include "disk/kernels.hpp"

#include <cmath>
#include <immintrin.h>

// AVX2 variants.  Built only on x86_64, compiled with -mavx2 in its own
// translation unit; nothing here runs unless the CPU reports AVX2.

namespace disk::kernels {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swap = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swap));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vb = _mm256_loadu_pd(b + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
    }
    double r = hsum(acc);
    for (; i < n; i++) r += a[i] * b[i];
    return r;
}

double l2_sqr_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
    }
    double r = hsum(acc);
    for (; i < n; i++) {
        double d = a[i] - b[i];
        r += d * d;
    }
    return r;
}

double sum_avx2(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double r = hsum(acc);
    for (; i < n; i++) r += a[i];
    return r;
}

double max_avx2(const double* a, std::size_t n) {
    std::size_t i = 0;
    double m;
    if (n >= 4) {
        __m256d acc = _mm256_loadu_pd(a);
        for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
        __m128d lo = _mm256_castpd256_pd128(acc);
        __m128d hi = _mm256_extractf128_pd(acc, 1);
        lo = _mm_max_pd(lo, hi);
        __m128d swap = _mm_unpackhi_pd(lo, lo);
        m = _mm_cvtsd_f64(_mm_max_sd(lo, swap));
    } else {
        m = a[0];
        i = 1;
    }
    for (; i < n; i++)
        if (a[i] > m) m = a[i];
    return m;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; i++) y[i] += alpha * x[i];
}

void scale_avx2(double alpha, double* x, std::size_t n) {
    __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; i++) x[i] *= alpha;
}

void adam_step_avx2(float* params, const double* grad, double* m, double* v,
                    std::size_t n, double lr, double beta1, double beta2,
                    double eps, double bc1, double bc2) {
    __m256d vb1 = _mm256_set1_pd(beta1);
    __m256d vb2 = _mm256_set1_pd(beta2);
    __m256d vc1 = _mm256_set1_pd(1.0 - beta1);
    __m256d vc2 = _mm256_set1_pd(1.0 - beta2);
    __m256d vbc1 = _mm256_set1_pd(bc1);
    __m256d vbc2 = _mm256_set1_pd(bc2);
    __m256d vlr = _mm256_set1_pd(lr);
    __m256d veps = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d g = _mm256_loadu_pd(grad + i);
        __m256d vm = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                   _mm256_mul_pd(vc1, g));
        __m256d vv = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(vc2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, vm);
        _mm256_storeu_pd(v + i, vv);
        __m256d mhat = _mm256_div_pd(vm, vbc1);
        __m256d vhat = _mm256_div_pd(vv, vbc2);
        __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        __m256d p = _mm256_cvtps_pd(_mm_loadu_ps(params + i));
        p = _mm256_add_pd(p, _mm256_mul_pd(vlr, _mm256_div_pd(mhat, denom)));
        _mm_storeu_ps(params + i, _mm256_cvtpd_ps(p));
    }
    for (; i < n; i++) {
        double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g * g);
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        double p = static_cast<double>(params[i]);
        params[i] = static_cast<float>(p + lr * (mhat / (std::sqrt(vhat) + eps)));
    }
}

constexpr Ops kAvx2 = {dot_avx2, l2_sqr_avx2, sum_avx2, max_avx2,
                       axpy_avx2, scale_avx2, adam_step_avx2, "avx2"};

}  // namespace

const Ops* avx2_ops() {
    if (!__builtin_cpu_supports("avx2")) return nullptr;
    return &kAvx2;
}

}  // namespace disk::kernels
