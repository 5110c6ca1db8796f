#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <filesystem>

#include "simdiff/diffusion.hpp"
#include "simdiff/errors.hpp"
#include "simdiff/rng.hpp"
#include "support.hpp"

using namespace simdiff;
using testing::random_tensor;

namespace {

// Reverse chain driven by a denoiser that always returns the true Y0.
Tensor oracle_chain(const Tensor& y0, const NoiseSchedule& s, std::uint64_t seed) {
    const std::size_t K = s.steps();
    Tensor y = forward_corrupt(y0, K, random_tensor(y0.shape(), seed), s);
    for (std::size_t k = K; k >= 1; --k) y = strided_step(y, k, k - 1, y0, s, false, nullptr);
    return y;
}

}  // namespace

TEST_CASE("forward corruption") {
    const auto s = NoiseSchedule::from_betas({0.75});  // abar_1 = 0.25
    const Tensor y0({1}, 1.0), eps({1}, 0.5);
    CHECK(forward_corrupt(y0, 1, eps, s)[0] == doctest::Approx(0.5 + std::sqrt(0.75) * 0.5).epsilon(1e-12));
    CHECK(forward_corrupt(y0, 1, eps, s)[0] == doctest::Approx(0.9330).epsilon(1e-4));
    CHECK(forward_corrupt(y0, 0, eps, s) == y0);
    CHECK_THROWS_AS(forward_corrupt(y0, 1, Tensor({2}), s), ShapeError);
}

TEST_CASE("reverse step") {
    const auto s = NoiseSchedule::cosine(100, 5.0);
    const Tensor zero({4, 2}, 0.0);
    const Tensor eps = random_tensor({4, 2}, 1);
    SUBCASE("k = 1 adds no noise") {
        const Tensor y1 = random_tensor({4, 2}, 2);
        const Tensor y0h = random_tensor({4, 2}, 3);
        CHECK(reverse_step(y1, 1, y0h, s, &eps) == reverse_step(y1, 1, y0h, s, nullptr));
        CHECK(reverse_step(y1, 1, y0h, s, nullptr) == y0h);
    }
    SUBCASE("zero inputs without noise stay zero") {
        CHECK(reverse_step(zero, 5, zero, s, nullptr) == zero);
    }
    SUBCASE("posterior formula") {
        const Tensor yk = random_tensor({4, 2}, 4), y0h = random_tensor({4, 2}, 5);
        const auto c = s.posterior_coeffs(7);
        const Tensor out = reverse_step(yk, 7, y0h, s, &eps);
        for (std::size_t i = 0; i < out.numel(); ++i) {
            CHECK(out[i] == doctest::Approx(c.c_xk * yk[i] + c.c_x0 * y0h[i] + c.sigma * eps[i]).epsilon(1e-14));
        }
    }
    CHECK_THROWS(reverse_step(zero, 0, zero, s, nullptr));
}

TEST_CASE("oracle round trip reconstructs Y0 for every schedule") {
    const Tensor y0 = random_tensor({24, 3}, 11, 2.0);
    for (const auto& s : {NoiseSchedule::cosine(100, 5.0), NoiseSchedule::linear(100, 1e-4, 0.02),
                          NoiseSchedule::quadratic(100, 1e-4, 0.02)}) {
        const Tensor y = oracle_chain(y0, s, 12);
        for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y[i] - y0[i]) <= 1e-9);
    }
}

TEST_CASE("step grids") {
    CHECK(select_steps(100, 3, SkipKind::time_uniform) == std::vector<std::size_t>{100, 67, 33, 0});
    CHECK(select_steps(100, 3, SkipKind::time_quadratic) == std::vector<std::size_t>{100, 44, 11, 0});
    const auto full = select_steps(10, 10, SkipKind::time_uniform);
    for (std::size_t i = 0; i <= 10; ++i) CHECK(full[i] == 10 - i);
    const auto fullq = select_steps(10, 10, SkipKind::time_quadratic);
    for (std::size_t i = 0; i <= 10; ++i) CHECK(fullq[i] == 10 - i);
    // strictly decreasing for every S
    for (std::size_t S = 1; S <= 100; ++S) {
        for (SkipKind kind : {SkipKind::time_uniform, SkipKind::time_quadratic}) {
            const auto g = select_steps(100, S, kind);
            REQUIRE(g.size() == S + 1);
            CHECK(g.front() == 100);
            CHECK(g.back() == 0);
            for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] < g[i - 1]);
        }
    }
    CHECK_THROWS(select_steps(10, 0, SkipKind::time_uniform));
    CHECK_THROWS(select_steps(10, 11, SkipKind::time_uniform));
}

TEST_CASE("stochastic strided sampler with S = K is the ancestral chain") {
    const auto s = NoiseSchedule::cosine(20, 5.0);
    // denoiser that depends on its input so each step matters
    DenoiseFn denoise = [](const Tensor& y, std::size_t k) {
        Tensor out(y.shape());
        for (std::size_t i = 0; i < y.numel(); ++i) out[i] = 0.5 * y[i] + 0.01 * static_cast<double>(k);
        return out;
    };
    ReverseSamplerConfig cfg;
    cfg.steps = 20;
    cfg.stochastic = true;
    cfg.seed = 5;
    const Tensor got = sample(denoise, 6, 2, cfg, s);

    // manual ancestral chain with the same noise streams
    Tensor y({1, 6, 2});
    CounterRng(substream(5, {0, 0})).fill_normal(y.storage());
    std::size_t idx = 1;
    for (std::size_t k = 20; k >= 1; --k, ++idx) {
        Tensor eps({1, 6, 2});
        CounterRng(substream(5, {0, idx})).fill_normal(eps.storage());
        y = reverse_step(y, k, denoise(y, k), s, k > 1 ? &eps : nullptr);
    }
    CHECK(got == y.reshaped({6, 2}));
}

TEST_CASE("sample_batch draws are reproducible and independent of N") {
    const auto s = NoiseSchedule::cosine(100, 5.0);
    DenoiseFn denoise = [](const Tensor& y, std::size_t) {
        Tensor out(y.shape());
        for (std::size_t i = 0; i < y.numel(); ++i) out[i] = std::tanh(y[i]);
        return out;
    };
    for (bool stochastic : {false, true}) {
        ReverseSamplerConfig cfg;
        cfg.stochastic = stochastic;
        cfg.seed = 9;
        const Tensor a = sample_batch(denoise, 8, 2, 5, cfg, s);
        const Tensor b = sample_batch(denoise, 8, 2, 5, cfg, s);
        CHECK(a == b);
        const Tensor one = sample(denoise, 8, 2, cfg, s);
        const Tensor big = sample_batch(denoise, 8, 2, 7, cfg, s);
        for (std::size_t i = 0; i < 16; ++i) CHECK(one[i] == a[i]);
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(big[i] == a[i]);
        // draws differ from each other
        CHECK(a[0] != a[16]);
    }
}

TEST_CASE("sampler rejects a non-finite denoiser output") {
    const auto s = NoiseSchedule::cosine(10, 5.0);
    DenoiseFn bad = [](const Tensor& y, std::size_t) { return Tensor(y.shape(), std::nan("")); };
    CHECK_THROWS_AS(sample(bad, 4, 1, ReverseSamplerConfig{}, s), NumericError);
}

TEST_CASE("samples serialization") {
    const Tensor t = random_tensor({2, 3, 2}, 21);
    const std::string csv = samples_to_csv(t);
    CHECK(csv.rfind("draw,t,channel,value\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 12);
    const auto path = (std::filesystem::temp_directory_path() / "simdiff_samples.bin").string();
    write_samples_binary(path, t);
    CHECK(read_samples_binary(path) == t);
    std::filesystem::remove(path);
}
