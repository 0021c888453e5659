#pragma once

// Dense double-precision kernels behind the neural layers. Each entry point has
// a scalar reference implementation and, on x86-64 hosts with AVX2+FMA, a
// vectorized variant. The active table is chosen once at first use; the
// LODGEKIT_KERNELS environment variable (scalar|avx2|auto) overrides it.

#include <cstddef>
#include <string_view>

namespace lodge::kernels {

// C[m x n] = (accumulate ? C : 0) + A[m x k] * B[k x n], all row-major.
// Every output element is reduced over k in ascending order, and the result
// for one row never depends on which other rows share the call.
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k,
                        const double* a, std::size_t lda,
                        const double* b, std::size_t ldb,
                        double* c, std::size_t ldc, bool accumulate);

using DotFn = double (*)(const double* x, const double* y, std::size_t n);

// y += alpha * x
using AxpyFn = void (*)(double alpha, const double* x, double* y, std::size_t n);

struct KernelTable {
    std::string_view name;
    GemmFn gemm;
    DotFn dot;
    AxpyFn axpy;
};

const KernelTable& scalar_table();

// nullptr when the build or the host CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

const KernelTable& active();

namespace detail {
void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
double dot_scalar(const double* x, const double* y, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);

bool avx2_compiled();
void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
double dot_avx2(const double* x, const double* y, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
}  // namespace detail

}  // namespace lodge::kernels
