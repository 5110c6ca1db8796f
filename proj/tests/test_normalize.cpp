#include <doctest.h>

#include <cmath>

#include "simdiff/errors.hpp"
#include "simdiff/log.hpp"
#include "simdiff/normalize.hpp"
#include "support.hpp"

using namespace simdiff;
using testing::random_tensor;

namespace {
const std::vector<double> kOne{1.0}, kZero{0.0};
}

TEST_CASE("constant past block normalizes to zero with a warning") {
    std::vector<std::string> warnings;
    log::set_sink([&](log::Level lvl, const std::string& m) {
        if (lvl == log::Level::warn) warnings.push_back(m);
    });
    const auto r = normalize_past(Tensor({5, 1}, 3.0), kOne, kZero);
    log::set_sink(nullptr);
    for (double v : r.x_norm.values()) CHECK(v == 0.0);
    CHECK(r.state.sigma_x[0] == kStdFloor);
    CHECK(warnings.size() == 1);
}

TEST_CASE("past normalization by hand") {
    const Tensor x({2, 1}, std::vector<double>{0.0, 2.0});
    const auto r = normalize_past(x, kOne, kZero);
    CHECK(r.state.mu_x[0] == 1.0);
    CHECK(r.state.sigma_x[0] == 1.0);
    CHECK(r.x_norm[0] == -1.0);
    CHECK(r.x_norm[1] == 1.0);
    const std::vector<double> g{2.0}, b{1.0};
    const auto a = normalize_past(x, g, b);
    CHECK(a.x_norm[0] == -1.0);
    CHECK(a.x_norm[1] == 3.0);
}

TEST_CASE("future normalization uses its own statistics") {
    const Tensor y = random_tensor({24, 3}, 1, 4.0);
    const auto r = normalize_future_train(y);
    for (std::size_t c = 0; c < 3; ++c) {
        double mu = 0.0, var = 0.0;
        for (std::size_t t = 0; t < 24; ++t) mu += r.y_norm[t * 3 + c] / 24.0;
        for (std::size_t t = 0; t < 24; ++t) var += std::pow(r.y_norm[t * 3 + c] - mu, 2) / 24.0;
        CHECK(std::abs(mu) < 1e-12);
        CHECK(std::abs(var - 1.0) < 1e-9);
    }
    CHECK(normalize_future_train(Tensor({4, 1}, 2.5)).y_norm == Tensor({4, 1}, 0.0));
}

TEST_CASE("future normalization is invariant to shift and scale, the shared baseline is not") {
    const Tensor x = random_tensor({16, 2}, 2);
    const Tensor y = random_tensor({8, 2}, 3);
    const double delta = 3.5, rho = 2.0;
    Tensor y2(y.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y2[i] = rho * y[i] + delta;
    const auto a = normalize_future_train(y);
    const auto b = normalize_future_train(y2);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(a.y_norm[i] == doctest::Approx(b.y_norm[i]).epsilon(1e-12));

    // pure mean shift: the shared baseline carries exactly (mu_Y - mu_X) / sigma_X
    Tensor y3(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y3[i] = x[i] + delta;
    const auto sh = shared_stats_baseline(x, y3);
    for (std::size_t t = 0; t < 16; ++t)
        for (std::size_t c = 0; c < 2; ++c) {
            const double bias = sh.y_norm[t * 2 + c] - sh.x_norm[t * 2 + c];
            CHECK(bias == doctest::Approx(delta / sh.past.sigma[c]).epsilon(1e-12));
        }
}

TEST_CASE("shared baseline equals independent normalization when Y equals X") {
    const Tensor x = random_tensor({10, 2}, 4);
    const auto sh = shared_stats_baseline(x, x);
    const auto fu = normalize_future_train(x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(sh.y_norm[i] == doctest::Approx(fu.y_norm[i]).epsilon(1e-12));
}

TEST_CASE("de-normalization") {
    NormState st;
    st.mu_x = {5.0};
    st.sigma_x = {2.0};
    st.gamma = {1.0};
    st.beta = {0.0};
    CHECK(denormalize_pred(Tensor({1, 1}, 0.0), st)[0] == 5.0);

    const Tensor x = random_tensor({12, 3}, 5, 3.0);
    const std::vector<double> g{0.5, 1.5, 2.0}, b{0.1, -0.2, 0.3};
    const auto r = normalize_past(x, g, b);
    const Tensor back = denormalize_pred(r.x_norm, r.state);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(back[i] - x[i]) <= 1e-12);

    // rank-3 input applies per channel
    const Tensor stacked({2, 12, 3}, [&] {
        std::vector<double> v(r.x_norm.storage());
        v.insert(v.end(), r.x_norm.storage().begin(), r.x_norm.storage().end());
        return v;
    }());
    const Tensor back3 = denormalize_pred(stacked, r.state);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(back3[x.numel() + i] - x[i]) <= 1e-12);

    st.gamma = {1e-7};
    CHECK_THROWS_AS(denormalize_pred(Tensor({1, 1}, 0.0), st), NumericError);
}

TEST_CASE("normalization mode names") {
    CHECK(parse_norm_mode("independent") == NormMode::independent);
    CHECK(parse_norm_mode("shared") == NormMode::shared);
    CHECK_THROWS(parse_norm_mode("other"));
}
