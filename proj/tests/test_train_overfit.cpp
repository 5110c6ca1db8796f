#include <doctest.h>

#include "simdiff/data.hpp"
#include "simdiff/rng.hpp"
#include "simdiff/train.hpp"

using namespace simdiff;

// Regression baseline: default model and optimizer on one repeated window.
// Recorded run: mean loss over steps 450..499 about 0.036.
TEST_CASE("single repeated window is fitted within 500 steps") {
    Dataset ds = synth_drift(DriftKind::trend, 400, 1, DriftParams{.slope = 0.01, .noise = 0.1}, 1);
    ds.splits = {400, 0, 0};
    const auto w = windows(ds, Split::train, 96, 24);
    DenoiserModel model(DenoiserConfig{}, 1);
    const TrainConfig tc;
    const auto sched = make_schedule(tc);
    nn::AdamState opt;
    opt.lr = tc.lr;
    std::vector<const SeriesWindow*> batch(tc.batch_size, &w[0]);
    double tail = 0.0;
    for (std::size_t s = 0; s < 500; ++s) {
        const double loss = train_step(model, batch, sched, tc, opt, substream(5, {s})).loss;
        if (s >= 450) tail += loss / 50.0;
    }
    CHECK(tail < 0.05);
}
