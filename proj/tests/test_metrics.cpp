#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "simdiff/errors.hpp"
#include "simdiff/metrics.hpp"
#include "simdiff/rng.hpp"
#include "support.hpp"

using namespace simdiff;
using testing::random_tensor;

TEST_CASE("mse and mae") {
    const Tensor a = random_tensor({5, 3}, 1);
    CHECK(mse(a, a) == 0.0);
    CHECK(mae(a, a) == 0.0);
    Tensor b = a;
    for (double& v : b.storage()) v += 2.0;
    CHECK(mse(b, a) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(mae(b, a) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK_THROWS_AS(mse(a, Tensor({3, 5})), ShapeError);

    for (std::uint64_t s = 0; s < 200; ++s) {
        const Tensor p = random_tensor({7, 2}, 100 + s), t = random_tensor({7, 2}, 900 + s);
        CHECK(std::abs(mse(p, t) - oracle::mse(p.storage(), t.storage())) <= 1e-12);
        CHECK(std::abs(mae(p, t) - oracle::mae(p.storage(), t.storage())) <= 1e-12);
    }
}

TEST_CASE("crps") {
    const std::vector<double> two{0.0, 2.0};
    CHECK(crps(two, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    const std::vector<double> same(7, 1.25);
    CHECK(crps(same, -0.5) == 1.75);
    CHECK_THROWS(crps(std::vector<double>{}, 0.0));

    CounterRng rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.below(12);
        std::vector<double> x(n);
        for (double& v : x) v = rng.normal();
        const double y = rng.normal();
        const double c = crps(x, y);
        CHECK(c >= 0.0);
        CHECK(std::abs(c - oracle::crps(x, y)) <= 1e-12);
        std::vector<double> perm = x;
        std::reverse(perm.begin(), perm.end());
        CHECK(std::abs(crps(perm, y) - c) <= 1e-15);
    }
}

TEST_CASE("deterministic forecast crps equals absolute error") {
    const Tensor truth = random_tensor({6, 2}, 2);
    const Tensor point = random_tensor({6, 2}, 3);
    // three identical draws
    Tensor samples({3, 6, 2});
    for (std::size_t i = 0; i < 3; ++i) std::copy(point.storage().begin(), point.storage().end(), samples.storage().begin() + i * 12);
    CHECK(crps_total(samples, truth) / 12.0 == doctest::Approx(mae(point, truth)).epsilon(1e-14));
    for (std::size_t i = 0; i < 12; ++i) {
        const std::vector<double> s(3, point[i]);
        CHECK(crps(s, truth[i]) == std::abs(point[i] - truth[i]));
    }
}

TEST_CASE("crps-sum") {
    const Tensor truth = random_tensor({5, 3}, 5, 2.0);
    const Tensor samples = random_tensor({9, 5, 3}, 6, 2.0);
    CHECK(std::abs(crps_sum(samples, truth) - oracle::crps_sum(samples.storage(), truth.storage(), 9, 5, 3)) <= 1e-12);
    const auto parts = crps_sum_parts(samples, truth);
    CHECK(parts.score / parts.norm == doctest::Approx(crps_sum(samples, truth)).epsilon(1e-15));

    // one channel: normalized crps of that channel
    const Tensor t1 = random_tensor({5, 1}, 7), s1 = random_tensor({4, 5, 1}, 8);
    CHECK(crps_sum(s1, t1) == doctest::Approx(crps_total(s1, t1) / abs_total(t1)).epsilon(1e-13));

    // perfect deterministic forecast
    Tensor perfect({2, 5, 3});
    for (std::size_t i = 0; i < 2; ++i) std::copy(truth.storage().begin(), truth.storage().end(), perfect.storage().begin() + i * 15);
    CHECK(crps_sum(perfect, truth) == 0.0);
}

TEST_CASE("sample variance") {
    Tensor s({2, 1, 2}, std::vector<double>{0.0, 1.0, 2.0, 1.0});
    CHECK(mean_sample_variance(s) == doctest::Approx(0.5));
}

TEST_CASE("pooled report") {
    EvalAccumulator acc;
    const Tensor truth = random_tensor({4, 2}, 11);
    const Tensor samples = random_tensor({5, 4, 2}, 12);
    const Tensor single = random_tensor({4, 2}, 13);
    const Tensor ens = random_tensor({4, 2}, 14);
    acc.add(0, samples, single, ens, truth);
    acc.add(1, samples, ens, single, truth);
    const auto r = acc.report();
    CHECK(r.windows.size() == 2);
    CHECK(r.mse == doctest::Approx((mse(single, truth) + mse(ens, truth)) / 2));
    CHECK(r.mse_e == doctest::Approx(r.mse));
    CHECK(r.crps == doctest::Approx(crps_total(samples, truth) / abs_total(truth)));
    for (double v : {r.mse, r.mse_e, r.mae, r.crps, r.crps_sum, r.var}) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
    }
    const std::string csv = r.to_csv();
    CHECK(csv.rfind("mse,mse_e,mae,crps,crps_sum,var,windows\n", 0) == 0);
    CHECK(r.windows_csv().find('\n') != std::string::npos);
}
