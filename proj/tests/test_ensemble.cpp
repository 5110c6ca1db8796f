#include <doctest.h>

#include <cmath>
#include <numeric>

#include "simdiff/ensemble.hpp"
#include "simdiff/rng.hpp"
#include "support.hpp"

using namespace simdiff;
using testing::random_tensor;

TEST_CASE("median of means by hand") {
    const std::vector<double> x{1, 2, 3, 4, 5, 6};
    MoMConfig cfg;
    cfg.groups = 3;
    cfg.repeats = 1;
    cfg.identity_shuffle = true;
    CHECK(mom(x, cfg) == 3.5);
    // uneven: {1,2,3} {4,5} -> means 2 and 4.5, midpoint 3.25
    cfg.groups = 2;
    CHECK(mom(std::vector<double>{1, 2, 3, 4, 5}, cfg) == 3.25);
    // first N mod G groups take the extra element: 7 into 3 -> sizes 3,2,2
    cfg.groups = 3;
    CHECK(mom(std::vector<double>{0, 0, 3, 10, 10, 1, 1}, cfg) == 1.0);
}

TEST_CASE("degenerate groupings") {
    MoMConfig cfg;
    cfg.groups = 1;
    cfg.repeats = 7;
    cfg.seed = 3;
    const Tensor x = random_tensor({50}, 1);
    const double mean = std::accumulate(x.storage().begin(), x.storage().end(), 0.0) / 50.0;
    CHECK(std::abs(mom(x.values(), cfg) - mean) <= 1e-15);
    cfg.identity_shuffle = true;
    cfg.repeats = 1;
    CHECK(std::abs(mom(x.values(), cfg) - mean) <= 1e-15);
    CHECK(mom(std::vector<double>{4.25}, cfg) == 4.25);
    cfg.groups = 3;
    CHECK_THROWS(mom(std::vector<double>{1, 2}, cfg));
    cfg.repeats = 0;
    CHECK_THROWS(mom(std::vector<double>{1, 2, 3}, cfg));
}

TEST_CASE("translation and scale equivariance") {
    MoMConfig cfg;
    cfg.groups = 5;
    cfg.repeats = 10;
    cfg.seed = 8;
    const Tensor x = random_tensor({64}, 2);
    const double base = mom(x.values(), cfg);
    // powers of two keep the arithmetic exact
    for (double c : {0.5, -4.0, 1024.0}) {
        Tensor y = x;
        for (double& v : y.storage()) v += c;
        // group means shift by c up to rounding in the sums
        CHECK(mom(y.values(), cfg) == doctest::Approx(base + c).epsilon(1e-14));
    }
    for (double a : {2.0, -0.25, 8.0}) {
        Tensor y = x;
        for (double& v : y.storage()) v *= a;
        CHECK(mom(y.values(), cfg) == a * base);
    }
}

TEST_CASE("grid version shares permutations across cells") {
    MoMConfig cfg;
    cfg.groups = 4;
    cfg.repeats = 3;
    cfg.seed = 21;
    const Tensor s = random_tensor({20, 3, 2}, 4);
    const Tensor g = mom_grid(s, cfg);
    REQUIRE(g.shape() == Shape{3, 2});
    for (std::size_t cell = 0; cell < 6; ++cell) {
        std::vector<double> col(20);
        for (std::size_t i = 0; i < 20; ++i) col[i] = s[i * 6 + cell];
        CHECK(g[cell] == mom(col, cfg));
    }
    // identical draws: output equals the draw
    Tensor same({10, 3, 2});
    const Tensor d = random_tensor({3, 2}, 5);
    for (std::size_t i = 0; i < 10; ++i) std::copy(d.storage().begin(), d.storage().end(), same.storage().begin() + i * 6);
    const Tensor gs = mom_grid(same, cfg);
    for (std::size_t i = 0; i < 6; ++i) CHECK(gs[i] == doctest::Approx(d[i]).epsilon(1e-15));
}

TEST_CASE("mean and single draw") {
    const Tensor two({2, 1, 1}, std::vector<double>{0.0, 2.0});
    CHECK(mean_ensemble(two)[0] == 1.0);
    CHECK(single_draw(two, 1)[0] == 2.0);
    const Tensor one = random_tensor({1, 3, 2}, 6);
    CHECK(mean_ensemble(one) == single_draw(one, 0));
    CHECK_THROWS(single_draw(two, 2));
}

TEST_CASE("contamination robustness") {
    // 5 outliers need G >= 11 so that clean groups are a majority.
    MoMConfig cfg;
    cfg.groups = 11;
    std::size_t wins = 0;
    for (std::uint64_t trial = 0; trial < 200; ++trial) {
        CounterRng rng(substream(77, {trial}));
        std::vector<double> x(100);
        for (std::size_t i = 0; i < 95; ++i) x[i] = rng.normal();
        for (std::size_t i = 95; i < 100; ++i) x[i] = 100.0;
        cfg.seed = trial;
        const double m = mom(x, cfg);
        const double avg = std::accumulate(x.begin(), x.end(), 0.0) / 100.0;
        if (std::abs(m) < std::abs(avg)) ++wins;
    }
    CHECK(wins >= 198);
}

TEST_CASE("concentration bound") {
    CHECK(concentration_bound(500, 5, 0.3, 1.0) == doctest::Approx(std::exp(-10.0 * std::pow(0.5 - 5.0 / 45.0, 2))));
    double prev = 2.0;
    for (std::size_t n = 50; n <= 2000; n += 50) {
        const double b = concentration_bound(n, 5, 0.3, 1.0);
        CHECK(b <= prev);
        prev = b;
    }
    SampleFn constant = [](std::uint64_t, std::span<double> out) {
        for (double& v : out) v = 1.5;
    };
    const auto c = check_concentration_bound(constant, 1.5, 0.0, 100, 5, 0.01, 200, 1);
    CHECK(c.empirical == 0.0);
    SampleFn gauss = [](std::uint64_t key, std::span<double> out) { CounterRng(key).fill_normal(out); };
    const auto r = check_concentration_bound(gauss, 0.0, 1.0, 500, 5, 0.3, 2000, 2);
    CHECK_FALSE(r.vacuous);
    CHECK(r.empirical <= r.bound + 3.0 * r.std_error);
    CHECK(check_concentration_bound(gauss, 0.0, 1.0, 10, 5, 0.1, 10, 3).vacuous);
}
