#include <doctest.h>

#include <cmath>
#include <vector>

#include "simdiff/kernels.hpp"
#include "simdiff/rng.hpp"

using namespace simdiff;
namespace k = simdiff::kernels;

namespace {

std::vector<double> randv(std::size_t n, std::uint64_t seed) {
    std::vector<double> v(n);
    CounterRng(seed).fill_normal(v);
    return v;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    }
    return worst;
}

// Sizes that exercise the 16- and 4-wide blocks and the scalar tails.
const std::size_t kSizes[] = {1, 3, 4, 5, 15, 16, 17, 33, 64, 67};

}  // namespace

TEST_CASE("scalar gemm matches a naive triple loop") {
    const auto& s = k::scalar_table();
    const std::size_t n = 5, kk = 7, m = 6;
    const auto a = randv(n * kk, 1), b = randv(kk * m, 2);
    std::vector<double> c(n * m, 0.0);
    s.gemm_nn(n, kk, m, a.data(), b.data(), c.data(), false);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double ref = 0.0;
            for (std::size_t p = 0; p < kk; ++p) ref += a[i * kk + p] * b[p * m + j];
            CHECK(c[i * m + j] == doctest::Approx(ref).epsilon(1e-14));
        }
}

TEST_CASE("gemm transposes agree with explicit transposes") {
    const std::size_t n = 4, kk = 6, m = 5;
    const auto a = randv(n * kk, 3), b = randv(kk * m, 4);
    std::vector<double> at(kk * n), bt(m * kk);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < kk; ++p) at[p * n + i] = a[i * kk + p];
    for (std::size_t p = 0; p < kk; ++p)
        for (std::size_t j = 0; j < m; ++j) bt[j * kk + p] = b[p * m + j];
    std::vector<double> ref(n * m), out(n * m);
    k::gemm(false, false, n, kk, m, a.data(), b.data(), ref.data(), false);
    k::gemm(true, true, n, kk, m, at.data(), bt.data(), out.data(), false);
    CHECK(max_rel(out, ref) < 1e-14);
    // accumulate adds onto the existing values
    k::gemm(false, true, n, kk, m, a.data(), bt.data(), out.data(), true);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(2.0 * ref[i]).epsilon(1e-13));
}

TEST_CASE("AVX2 kernels match the scalar reference") {
    const k::KernelTable* v = k::avx2_table();
    if (v == nullptr || !k::cpu_has_avx2()) {
        MESSAGE("AVX2 variant not available on this build or CPU");
        return;
    }
    const auto& s = k::scalar_table();
    for (std::size_t n : kSizes) {
        CAPTURE(n);
        const auto x = randv(n, 10 + n), y = randv(n, 20 + n);
        CHECK(std::abs(v->dot(n, x.data(), y.data()) - s.dot(n, x.data(), y.data())) <= 1e-12 * (1.0 + n));

        auto ya = y, yb = y;
        v->axpy(n, 0.7, x.data(), ya.data());
        s.axpy(n, 0.7, x.data(), yb.data());
        CHECK(max_rel(ya, yb) < 1e-15);

        std::vector<double> oa(n), ob(n);
        v->add(n, x.data(), y.data(), oa.data());
        s.add(n, x.data(), y.data(), ob.data());
        CHECK(oa == ob);  // single rounding either way
        v->mul(n, x.data(), y.data(), oa.data());
        s.mul(n, x.data(), y.data(), ob.data());
        CHECK(oa == ob);

        auto pa = x, pb = x, ma = y, mb = y;
        std::vector<double> va(n, 0.5), vb(n, 0.5);
        const auto g = randv(n, 30 + n);
        v->adam(n, pa.data(), g.data(), ma.data(), va.data(), 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001);
        s.adam(n, pb.data(), g.data(), mb.data(), vb.data(), 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001);
        CHECK(max_rel(pa, pb) < 1e-14);
        CHECK(max_rel(ma, mb) < 1e-15);
        CHECK(max_rel(va, vb) < 1e-15);
    }
    for (std::size_t n : {1, 3, 8}) {
        for (std::size_t m : kSizes) {
            CAPTURE(m);
            const std::size_t kk = 9;
            const auto a = randv(n * kk, 40 + m), b = randv(kk * m, 50 + m);
            std::vector<double> ca(n * m, 1.0), cb(n * m, 1.0);
            v->gemm_nn(n, kk, m, a.data(), b.data(), ca.data(), true);
            s.gemm_nn(n, kk, m, a.data(), b.data(), cb.data(), true);
            CHECK(max_rel(ca, cb) < 1e-13);
        }
    }
}

TEST_CASE("the active table can be switched and restored") {
    const k::Isa original = k::active().isa;
    CHECK(k::set_kernel_isa(k::Isa::scalar));
    CHECK(k::active().isa == k::Isa::scalar);
    if (k::avx2_table() != nullptr && k::cpu_has_avx2()) {
        CHECK(k::set_kernel_isa(k::Isa::avx2));
        CHECK(k::active().isa == k::Isa::avx2);
    }
    k::set_kernel_isa(original);
    CHECK(k::isa_name(k::Isa::scalar) == "scalar");
}
