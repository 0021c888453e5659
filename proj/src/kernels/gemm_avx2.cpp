#include "lodge/kernels.hpp"

#include <cmath>

#if defined(__x86_64__) || defined(_M_X64)
#define LODGE_X86 1
#include <immintrin.h>
#else
#define LODGE_X86 0
#endif

namespace lodge::kernels::detail {

#if LODGE_X86

bool avx2_compiled() { return true; }

namespace {

// Rows [i, i+R) x cols [j, j+8): every element is an ascending-k FMA chain.
template <int R>
__attribute__((target("avx2,fma"))) inline void tile8(std::size_t k, const double* a, std::size_t lda,
                                                      const double* b, std::size_t ldb, double* c,
                                                      std::size_t ldc, bool accumulate) {
    __m256d acc0[R];
    __m256d acc1[R];
    for (int r = 0; r < R; ++r) {
        if (accumulate) {
            acc0[r] = _mm256_loadu_pd(c + r * ldc);
            acc1[r] = _mm256_loadu_pd(c + r * ldc + 4);
        } else {
            acc0[r] = _mm256_setzero_pd();
            acc1[r] = _mm256_setzero_pd();
        }
    }
    for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
        const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
        for (int r = 0; r < R; ++r) {
            const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
            acc0[r] = _mm256_fmadd_pd(av, b0, acc0[r]);
            acc1[r] = _mm256_fmadd_pd(av, b1, acc1[r]);
        }
    }
    for (int r = 0; r < R; ++r) {
        _mm256_storeu_pd(c + r * ldc, acc0[r]);
        _mm256_storeu_pd(c + r * ldc + 4, acc1[r]);
    }
}

template <int R>
__attribute__((target("avx2,fma"))) inline void tile4(std::size_t k, const double* a, std::size_t lda,
                                                      const double* b, std::size_t ldb, double* c,
                                                      std::size_t ldc, bool accumulate) {
    __m256d acc[R];
    for (int r = 0; r < R; ++r) acc[r] = accumulate ? _mm256_loadu_pd(c + r * ldc) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
        for (int r = 0; r < R; ++r) {
            acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * lda + p), b0, acc[r]);
        }
    }
    for (int r = 0; r < R; ++r) _mm256_storeu_pd(c + r * ldc, acc[r]);
}

__attribute__((target("avx2,fma"))) inline void tile1(std::size_t rows, std::size_t k, const double* a,
                                                      std::size_t lda, const double* b, std::size_t ldb,
                                                      double* c, std::size_t ldc, bool accumulate) {
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = accumulate ? c[r * ldc] : 0.0;
        for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[r * lda + p], b[p * ldb], acc);
        c[r * ldc] = acc;
    }
}

template <int R>
__attribute__((target("avx2,fma"))) void row_block(std::size_t n, std::size_t k, const double* a,
                                                   std::size_t lda, const double* b, std::size_t ldb,
                                                   double* c, std::size_t ldc, bool accumulate) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) tile8<R>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    for (; j + 4 <= n; j += 4) tile4<R>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    for (; j < n; ++j) tile1(R, k, a, lda, b + j, ldb, c + j, ldc, accumulate);
}

}  // namespace

__attribute__((target("avx2,fma"))) void gemm_avx2(std::size_t m, std::size_t n, std::size_t k,
                                                   const double* a, std::size_t lda, const double* b,
                                                   std::size_t ldb, double* c, std::size_t ldc,
                                                   bool accumulate) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) row_block<4>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
    for (; i < m; ++i) row_block<1>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
}

__attribute__((target("avx2,fma"))) double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
    }
    for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, _mm256_add_pd(s0, s1));
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) s = std::fma(x[i], y[i], s);
    return s;
}

__attribute__((target("avx2,fma"))) void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

#else

bool avx2_compiled() { return false; }

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    gemm_scalar(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
double dot_avx2(const double* x, const double* y, std::size_t n) { return dot_scalar(x, y, n); }
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) { axpy_scalar(alpha, x, y, n); }

#endif

}  // namespace lodge::kernels::detail
