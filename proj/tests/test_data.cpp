#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "simdiff/data.hpp"
#include "simdiff/errors.hpp"

using namespace simdiff;

TEST_CASE("csv parsing") {
    SUBCASE("plain numeric") {
        const auto ds = parse_csv("a,b\n1,2\n3,4\n5,6\n");
        CHECK(ds.length() == 3);
        CHECK(ds.channels() == 2);
        CHECK(ds.values[5] == 6.0);
        CHECK(ds.columns == std::vector<std::string>{"a", "b"});
    }
    SUBCASE("timestamp column skipped") {
        const auto ds = parse_csv("date,x,y\n2020-01-01 00:00,1.5,2\n2020-01-01 01:00,3,-4e-1\n");
        CHECK(ds.channels() == 2);
        CHECK(ds.values[3] == -0.4);
    }
    SUBCASE("non-numeric first data cell marks a time column") {
        CHECK(parse_csv("when,x\nmon,1\ntue,2\n").channels() == 1);
    }
    SUBCASE("errors carry line numbers") {
        try {
            parse_csv("a,b\n1,2\n3\n");
            FAIL("expected error");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(":3:") != std::string::npos);
        }
        try {
            parse_csv("a,b\n1,2\n3,zz\n");
            FAIL("expected error");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("non-numeric") != std::string::npos);
        }
        CHECK_THROWS_AS(parse_csv(""), ConfigError);
        CHECK_THROWS_AS(parse_csv("a,b\n"), ConfigError);
    }
    SUBCASE("file roundtrip") {
        const auto ds = synth_drift(DriftKind::trend, 30, 2, DriftParams{.slope = 0.01, .noise = 0.1}, 3);
        const auto path = (std::filesystem::temp_directory_path() / "simdiff_data.csv").string();
        std::ofstream(path) << dataset_to_csv(ds);
        const auto back = load_csv(path);
        CHECK(back.values == ds.values);
        std::filesystem::remove(path);
        CHECK_THROWS_AS(load_csv(path), ConfigError);
    }
}

TEST_CASE("splits and windows") {
    CHECK(window_count(120, 96, 24) == 1);
    CHECK(window_count(124, 96, 24) == 5);
    CHECK(window_count(119, 96, 24) == 0);
    CHECK(window_count(124, 96, 24, 2) == 3);
    for (std::size_t len = 120; len < 200; ++len) CHECK(window_count(len, 96, 24) == len - 120 + 1);

    Dataset ds = synth_drift(DriftKind::trend, 600, 2, DriftParams{.slope = 0.01}, 1);
    set_splits(ds, {300, 140, 160}, 96, 24);
    const auto tr = windows(ds, Split::train, 96, 24);
    CHECK(tr.size() == 300 - 120 + 1);
    CHECK(tr[0].origin == 0);
    // Y follows X: first window's Y starts at index L
    CHECK(tr[0].y[0] == ds.values[96 * 2]);
    const auto va = windows(ds, Split::val, 96, 24);
    CHECK(va.front().origin == 300);
    CHECK(va.back().origin + 120 <= 440);
    const auto te = windows(ds, Split::test, 96, 24, 8);
    CHECK(te.size() == (160 - 120) / 8 + 1);
    for (const auto& w : te) CHECK(w.origin >= 440);

    CHECK_THROWS_AS(set_splits(ds, {300, 100, 160}, 96, 24), ConfigError);
    CHECK_THROWS_AS(set_splits(ds, {400, 140, 160}, 96, 24), ConfigError);

    // Table-sized benchmark configuration
    Dataset big;
    big.values = Tensor({8137 + 2713 + 2713, 1});
    set_splits(big, {8137, 2713, 2713}, 336, 168);
    CHECK(windows(big, Split::test, 336, 168).size() == 2713 - 336 - 168 + 1);

    const auto sc = split_from_fractions(1000, {0.7, 0.1, 0.2});
    CHECK(sc.train == 700);
    CHECK(sc.val == 100);
    CHECK(sc.test == 200);
    CHECK_THROWS(split_from_fractions(1000, {0.7, 0.1, 0.1}));
}

TEST_CASE("standardizer uses the train split") {
    Dataset ds = synth_drift(DriftKind::trend, 400, 2, DriftParams{.slope = 0.05, .noise = 0.2}, 5);
    set_splits(ds, {200, 100, 100}, 20, 10);
    const auto st = fit_standardizer(ds);
    apply_standardizer(ds, st);
    for (std::size_t c = 0; c < 2; ++c) {
        double mu = 0.0, var = 0.0;
        for (std::size_t t = 0; t < 200; ++t) mu += ds.values[t * 2 + c] / 200.0;
        for (std::size_t t = 0; t < 200; ++t) var += std::pow(ds.values[t * 2 + c] - mu, 2) / 200.0;
        CHECK(std::abs(mu) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("synthetic drift generator") {
    SUBCASE("no drift, no noise: a pure sinusoid") {
        const auto ds = synth_drift(DriftKind::trend, 480, 1, DriftParams{}, 2);
        const double ph = ds.truth->phase[0];
        for (std::size_t t = 0; t < 480; t += 37)
            CHECK(ds.values[t] == doctest::Approx(std::sin(2 * M_PI * t / 24.0 + ph)).epsilon(1e-12));
        // over whole periods, future mean matches past mean
        double past = 0.0, fut = 0.0;
        for (std::size_t t = 0; t < 96; ++t) past += ds.values[t] / 96.0;
        for (std::size_t t = 96; t < 120; ++t) fut += ds.values[t] / 24.0;
        CHECK(std::abs(fut - past) < 1e-9);
    }
    SUBCASE("linear trend offsets the future mean by a(L+H)/2") {
        const double a = 0.01;
        auto ds = synth_drift(DriftKind::trend, 2000, 2, DriftParams{.slope = a, .noise = 0.1}, 4);
        CHECK(ds.truth->params.slope == a);
        double gap = 0.0;
        std::size_t n = 0;
        for (std::size_t o = 0; o + 120 <= 2000; o += 24) {
            for (std::size_t c = 0; c < 2; ++c) {
                double past = 0.0, fut = 0.0;
                for (std::size_t t = 0; t < 96; ++t) past += ds.values[(o + t) * 2 + c] / 96.0;
                for (std::size_t t = 96; t < 120; ++t) fut += ds.values[(o + t) * 2 + c] / 24.0;
                gap += fut - past;
                ++n;
            }
        }
        CHECK(gap / n == doctest::Approx(ds.truth->params.slope * 120 / 2.0).epsilon(0.05));
    }
    SUBCASE("level shift") {
        const auto ds = synth_drift(DriftKind::level_shift, 480, 1, DriftParams{.shift = 3.0}, 5);
        const auto k = ds.truth->shift_index;
        CHECK(k == 240);
        const double ph = ds.truth->phase[0];
        CHECK(ds.values[k] - std::sin(2 * M_PI * k / 24.0 + ph) == doctest::Approx(3.0));
        CHECK(ds.values[k - 1] == doctest::Approx(std::sin(2 * M_PI * (k - 1) / 24.0 + ph)));
    }
    SUBCASE("scale shift") {
        const auto ds = synth_drift(DriftKind::scale_shift, 481, 1, DriftParams{.scale_end = 3.0}, 6);
        double early = 0.0, late = 0.0;
        for (std::size_t t = 0; t < 48; ++t) early = std::max(early, std::abs(ds.values[t]));
        for (std::size_t t = 433; t < 481; ++t) late = std::max(late, std::abs(ds.values[t]));
        CHECK(late > 2.5 * early);
    }
    SUBCASE("seeded reproducibility") {
        const DriftParams p{.slope = 0.002, .noise = 0.3};
        CHECK(synth_drift(DriftKind::trend, 300, 3, p, 9).values == synth_drift(DriftKind::trend, 300, 3, p, 9).values);
        CHECK_FALSE(synth_drift(DriftKind::trend, 300, 3, p, 9).values ==
                    synth_drift(DriftKind::trend, 300, 3, p, 10).values);
    }
    SUBCASE("invalid parameters") {
        CHECK_THROWS_AS(synth_drift(DriftKind::trend, 300, 1, DriftParams{.noise = -1}, 1), ConfigError);
        CHECK_THROWS_AS(synth_drift(DriftKind::trend, 300, 0, DriftParams{}, 1), ConfigError);
        CHECK_THROWS_AS(parse_drift_kind("ramp"), ConfigError);
        CHECK(parse_drift_kind("level-shift") == DriftKind::level_shift);
    }
}
