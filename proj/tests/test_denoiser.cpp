#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "simdiff/denoiser.hpp"
#include "simdiff/errors.hpp"
#include "support.hpp"

using namespace simdiff;
using testing::grad_check;
using testing::random_tensor;

namespace {

DenoiserConfig tiny(NormMode norm = NormMode::independent) {
    DenoiserConfig c;
    c.patch_len = 4;
    c.stride = 2;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_layers = 2;
    c.ffn_mult = 2;
    c.lookback = 12;
    c.horizon = 6;
    c.channels = 2;
    c.norm = norm;
    return c;
}

double dot(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
    const std::size_t d = a.dim(1);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += a[ra * d + i] * b[rb * d + i];
    return s;
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(tiny().validate());
    auto bad = tiny();
    bad.stride = 5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny();
    bad.patch_len = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny();
    bad.d_model = 6;  // 6 / (2 * 2) is not whole
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny();
    bad.lookback = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    DenoiserConfig def;
    CHECK(def.past_tokens() == 23);
    CHECK(def.future_tokens() == 5);
    CHECK(config_from_json(config_to_json(tiny(NormMode::shared))) == tiny(NormMode::shared));
}

TEST_CASE("patch offsets") {
    CHECK(patch_offsets(4, 4, 2) == std::vector<std::size_t>{0});
    CHECK(patch_offsets(6, 4, 2) == std::vector<std::size_t>{0, 2});
    CHECK(patch_offsets(7, 4, 2) == std::vector<std::size_t>{0, 2, 3});
    for (std::size_t t = 4; t < 40; ++t)
        for (std::size_t st = 1; st <= 4; ++st) {
            const auto off = patch_offsets(t, 4, st);
            CHECK(off.size() == token_count(t, 4, st));
            CHECK(off.back() == t - 4);
        }
    const std::vector<double> s{1, 2, 3, 4};
    const Tensor one = patchify(s, 4, 2);
    CHECK(one.shape() == Shape{1, 4});
    CHECK(one.storage() == s);
    const std::vector<double> seven{0, 1, 2, 3, 4, 5, 6};
    const Tensor p = patchify(seven, 4, 2);
    CHECK(p[2 * 4] == 3.0);
    CHECK(p[2 * 4 + 3] == 6.0);
    CHECK_THROWS(patchify(std::vector<double>{1, 2}, 4, 2));
}

TEST_CASE("unpatchify inverts patchify") {
    const Tensor x = random_tensor({23}, 1);
    for (std::size_t st : {1, 2, 4}) {
        const auto back = unpatchify(patchify(x.values(), 4, st), 23, st);
        for (std::size_t i = 0; i < 23; ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-14));
    }
    // St = P: non-overlapping except the right-aligned tail
    const Tensor y = random_tensor({24}, 2);
    CHECK(unpatchify(patchify(y.values(), 4, 4), 24, 4) == y.storage());
}

TEST_CASE("rotary embedding") {
    const Tensor q = random_tensor({1, 16}, 3);
    const std::vector<double> zero{0.0};
    CHECK(rope_rotate(q, zero) == q);
    const std::vector<double> neg{-1.0};
    CHECK(rope_rotate(q, neg) == q);

    const Tensor pair({1, 2}, std::vector<double>{0.3, 0.7});
    const std::vector<double> quarter{std::numbers::pi / 2};
    const Tensor r = rope_rotate(pair, quarter);
    CHECK(r[0] == doctest::Approx(-0.7).epsilon(1e-15));
    CHECK(r[1] == doctest::Approx(0.3).epsilon(1e-15));

    // dot products depend only on relative position
    const Tensor a = random_tensor({1, 32}, 4), b = random_tensor({1, 32}, 5);
    for (double m : {0.0, 7.0, 100.0}) {
        for (double n : {3.0, 250.0}) {
            const std::vector<double> pm{m}, pn{n}, pm2{m + 17}, pn2{n + 17};
            const double d1 = dot(rope_rotate(a, pm), 0, rope_rotate(b, pn), 0);
            const double d2 = dot(rope_rotate(a, pm2), 0, rope_rotate(b, pn2), 0);
            CHECK(std::abs(d1 - d2) <= 1e-9);
        }
    }
    CHECK_THROWS(rope_rotate(random_tensor({1, 3}, 6), zero));
}

TEST_CASE("graph ops match finite differences") {
    const std::vector<double> pos{0, 1, 2, -1};
    CHECK(grad_check([&](const auto& v) { return testing::project(nn::rope(v[0], pos, 10000.0)); },
                     {random_tensor({2, 4, 6}, 7)}) < 1e-6);
    CHECK(grad_check([&](const auto& v) { return testing::project(nn::unpatchify(v[0], 7, 2)); },
                     {random_tensor({2, 3, 4}, 8)}) < 1e-6);
}

TEST_CASE("forward shapes and determinism") {
    DenoiserConfig c;  // L=96, H=24, P=8, St=4
    c.d_model = 16;
    c.n_layers = 1;
    DenoiserModel m(c, 1);
    const Tensor x = random_tensor({96}, 9), y = random_tensor({24}, 10);
    const auto out = m.forward_channel(x.values(), y.values(), 50, 100);
    CHECK(out.size() == 24);
    for (double v : out) CHECK(std::isfinite(v));
    CHECK(m.forward_channel(x.values(), y.values(), 50, 100) == out);
    CHECK_FALSE(m.forward_channel(x.values(), y.values(), 51, 100) == out);
    CHECK_THROWS_AS(m.forward_channel(y.values(), y.values(), 1, 100), ShapeError);
    CHECK(m.token_positions().back() == -1.0);
}

TEST_CASE("permuting past tokens changes the output") {
    DenoiserModel m(tiny(), 2);
    const auto cfg = m.config();
    Tensor past = random_tensor({1, cfg.past_tokens(), 4}, 11);
    const Tensor fut = random_tensor({1, cfg.future_tokens(), 4}, 12);
    const double tf = 0.3;
    nn::NoGradGuard g;
    const Tensor a = m.forward(nn::Var::constant(past), fut, std::span<const double>(&tf, 1)).value();
    // swap the first two past tokens
    for (std::size_t j = 0; j < 4; ++j) std::swap(past[j], past[4 + j]);
    const Tensor b = m.forward(nn::Var::constant(past), fut, std::span<const double>(&tf, 1)).value();
    double diff = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    CHECK(diff > 1e-8);
}

TEST_CASE("rows in a batch are independent") {
    DenoiserModel m(tiny(), 3);
    const auto cfg = m.config();
    const Tensor past = random_tensor({3, cfg.past_tokens(), 4}, 13);
    const Tensor fut = random_tensor({3, cfg.future_tokens(), 4}, 14);
    const std::vector<double> tf{0.1, 0.5, 0.9};
    const std::vector<std::size_t> ch{0, 1, 0};
    nn::NoGradGuard g;
    const Tensor all = m.forward(m.past_input(past, ch), fut, tf).value();
    Tensor past2 = past;
    for (std::size_t i = 0; i < cfg.past_tokens() * 4; ++i) past2[i] += 5.0;  // perturb row 0
    const Tensor moved = m.forward(m.past_input(past2, ch), fut, tf).value();
    for (std::size_t i = 6; i < 18; ++i) CHECK(moved[i] == all[i]);
    CHECK_FALSE(moved[0] == all[0]);
}

TEST_CASE("every parameter group receives gradient") {
    auto cfg = tiny();
    DenoiserModel m(cfg, 4);
    // move the affine away from identity so its gradient is generic
    m.params().get("ni.beta").node()->value[0] = 0.2;
    const Tensor past = random_tensor({2, cfg.past_tokens(), 4}, 15);
    const Tensor fut = random_tensor({2, cfg.future_tokens(), 4}, 16);
    const std::vector<double> tf{0.2, 0.7};
    const std::vector<std::size_t> ch{0, 1};
    nn::Var out = m.forward(m.past_input(past, ch), fut, tf);
    nn::backward(testing::project(out));
    for (const auto& [name, var] : m.params().items()) {
        const Tensor& g = var.grad();
        double norm = 0.0;
        for (double v : g.storage()) norm += v * v;
        CAPTURE(name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("end-to-end gradient matches finite differences") {
    auto cfg = tiny();
    cfg.n_layers = 1;
    DenoiserModel m(cfg, 5);
    const Tensor past = random_tensor({2, cfg.past_tokens(), 4}, 17);
    const Tensor fut = random_tensor({2, cfg.future_tokens(), 4}, 18);
    const std::vector<double> tf{0.2, 0.7};
    const std::vector<std::size_t> ch{0, 1};
    auto loss = [&] { return testing::project(m.forward(m.past_input(past, ch), fut, tf)); };
    m.params().zero_grad();
    nn::backward(loss());
    double worst = 0.0;
    for (auto& [name, var] : m.params().items()) {
        Tensor& w = var.node()->value;
        const Tensor g = var.grad();
        for (std::size_t i = 0; i < w.numel(); i += 5) {
            const double keep = w[i];
            nn::NoGradGuard guard;
            w[i] = keep + 1e-5;
            const double up = loss().value()[0];
            w[i] = keep - 1e-5;
            const double down = loss().value()[0];
            w[i] = keep;
            const double fd = (up - down) / 2e-5;
            worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-3}));
        }
    }
    CHECK(worst < 1e-6);
}
