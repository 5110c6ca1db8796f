#include "simdiff/kernels.hpp"

#include <cstdlib>
#include <string>
#include <vector>

namespace simdiff::kernels {

#if !defined(SIMDIFF_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
           __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

const KernelTable* select_initial() {
    const char* env = std::getenv("SIMDIFF_KERNELS");
    if (env != nullptr && std::string(env) == "scalar") return &scalar_table();
    if (cpu_has_avx2()) return avx2_table();
    return &scalar_table();
}

const KernelTable*& current() {
    static const KernelTable* table = select_initial();
    return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

bool set_kernel_isa(Isa isa) {
    if (isa == Isa::scalar) {
        current() = &scalar_table();
        return true;
    }
    if (!cpu_has_avx2()) return false;
    current() = avx2_table();
    return true;
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void gemm(bool trans_a, bool trans_b, std::size_t n, std::size_t k, std::size_t m,
          const double* a, const double* b, double* c, bool accumulate) {
    const KernelTable& kt = active();
    std::vector<double> at;
    std::vector<double> bt;
    if (trans_a) {
        // stored k x n
        at.resize(n * k);
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < n; ++i) at[i * k + p] = a[p * n + i];
        a = at.data();
    }
    if (trans_b) {
        // stored m x k
        bt.resize(k * m);
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t p = 0; p < k; ++p) bt[p * m + j] = b[j * k + p];
        b = bt.data();
    }
    kt.gemm_nn(n, k, m, a, b, c, accumulate);
}

}  // namespace simdiff::kernels
