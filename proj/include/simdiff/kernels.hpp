#pragma once

#include <cstddef>
#include <string_view>

// Dense float64 inner loops. Each kernel has a portable scalar reference and
// an AVX2/FMA variant; the active table is chosen once at startup from CPUID
// and can be forced with SIMDIFF_KERNELS=scalar|avx2 or set_kernel_isa().
//
// Every kernel computes each output element from its own row/column only, so
// results for one row never depend on values in another row.
namespace simdiff::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    // C[n x m] = beta * C + A[n x k] * B[k x m], all row-major and contiguous.
    void (*gemm_nn)(std::size_t n, std::size_t k, std::size_t m, const double* a,
                    const double* b, double* c, bool accumulate);
    double (*dot)(std::size_t n, const double* x, const double* y);
    // y += alpha * x
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
    // out = x + y / out = x * y
    void (*add)(std::size_t n, const double* x, const double* y, double* out);
    void (*mul)(std::size_t n, const double* x, const double* y, double* out);
    // Bias-corrected Adam update over a contiguous parameter block.
    void (*adam)(std::size_t n, double* param, const double* grad, double* m, double* v,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2);
};

const KernelTable& scalar_table();
// nullptr when the binary was built without AVX2 support.
const KernelTable* avx2_table();

const KernelTable& active();
bool cpu_has_avx2();
// Returns false (and leaves the table untouched) when the ISA is unavailable.
bool set_kernel_isa(Isa isa);
std::string_view isa_name(Isa isa);

// General matmul built on gemm_nn: op(A)[n x k] * op(B)[k x m], where op
// transposes when the flag is set. A is stored (n x k) or (k x n); B is
// stored (k x m) or (m x k).
void gemm(bool trans_a, bool trans_b, std::size_t n, std::size_t k, std::size_t m,
          const double* a, const double* b, double* c, bool accumulate);

}  // namespace simdiff::kernels
