#include <cstdlib>
#include <stdexcept>
#include <string>

#include "lodge/kernels.hpp"

namespace lodge::kernels {

namespace {

bool host_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable kScalar{"scalar", &detail::gemm_scalar, &detail::dot_scalar, &detail::axpy_scalar};
const KernelTable kAvx2{"avx2", &detail::gemm_avx2, &detail::dot_avx2, &detail::axpy_avx2};

const KernelTable& select() {
    const char* env = std::getenv("LODGEKIT_KERNELS");
    const std::string want = env ? env : "auto";
    if (want == "scalar") return kScalar;
    const KernelTable* simd = avx2_table();
    if (want == "avx2") {
        if (!simd) throw std::runtime_error("LODGEKIT_KERNELS=avx2 but AVX2+FMA is unavailable");
        return *simd;
    }
    if (want != "auto") throw std::runtime_error("LODGEKIT_KERNELS must be scalar, avx2 or auto");
    return simd ? *simd : kScalar;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
    static const bool ok = detail::avx2_compiled() && host_has_avx2();
    return ok ? &kAvx2 : nullptr;
}

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

}  // namespace lodge::kernels
