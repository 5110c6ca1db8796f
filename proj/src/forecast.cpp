#include "simdiff/forecast.hpp"

#include <algorithm>
#include <cstring>

#include "simdiff/errors.hpp"
#include "simdiff/rng.hpp"

namespace simdiff {

Forecaster::Forecaster(const DenoiserModel& model, NoiseSchedule sched, std::size_t max_rows)
    : model_(model), sched_(std::move(sched)), max_rows_(std::max<std::size_t>(max_rows, 1)) {}

NormState Forecaster::norm_state(const Tensor& past) const {
    const std::size_t m = model_.config().channels;
    if (past.rank() != 2 || past.dim(0) != model_.config().lookback || past.dim(1) != m) {
        throw ShapeError("forecast: past block " + shape_str(past.shape()) + " does not match model [" +
                         std::to_string(model_.config().lookback) + ", " + std::to_string(m) + "]");
    }
    if (model_.config().norm == NormMode::independent) {
        return normalize_past(past, model_.gamma(), model_.beta()).state;
    }
    std::vector<double> one(m, 1.0), zero(m, 0.0);
    return normalize_past(past, one, zero).state;
}

Tensor Forecaster::sample(const Tensor& past, std::size_t draws, const ReverseSamplerConfig& cfg,
                          std::uint64_t key) const {
    return sample_many(std::span<const Tensor>(&past, 1), std::span<const std::uint64_t>(&key, 1), draws, cfg)[0];
}

std::vector<Tensor> Forecaster::sample_many(std::span<const Tensor> pasts, std::span<const std::uint64_t> keys,
                                            std::size_t draws, const ReverseSamplerConfig& cfg) const {
    if (pasts.size() != keys.size()) throw std::invalid_argument("forecast: one key per window required");
    if (draws < 1) throw std::invalid_argument("forecast: need at least one draw");
    const DenoiserConfig& mc = model_.config();
    const std::size_t l = mc.lookback;
    const std::size_t h = mc.horizon;
    const std::size_t m = mc.channels;
    const std::size_t w_count = pasts.size();

    // normalized past row per (window, channel)
    std::vector<NormState> states;
    std::vector<double> xnorm(w_count * m * l);
    for (std::size_t w = 0; w < w_count; ++w) {
        NormState st = norm_state(pasts[w]);
        for (std::size_t c = 0; c < m; ++c) {
            for (std::size_t t = 0; t < l; ++t) {
                const double z = (pasts[w][t * m + c] - st.mu_x[c]) / st.sigma_x[c];
                xnorm[(w * m + c) * l + t] = st.gamma[c] * z + st.beta[c];
            }
        }
        states.push_back(std::move(st));
    }

    std::vector<Tensor> out;
    out.reserve(w_count);
    for (std::size_t w = 0; w < w_count; ++w) out.emplace_back(Shape{draws, h, m});

    const std::size_t total = w_count * draws * m;
    nn::NoGradGuard guard;
    for (std::size_t begin = 0; begin < total; begin += max_rows_) {
        const std::size_t rows = std::min(max_rows_, total - begin);
        Tensor past_rows({rows, l});
        std::vector<std::uint64_t> row_keys(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t idx = begin + r;  // (w, d, c) row-major
            const std::size_t c = idx % m;
            const std::size_t d = (idx / m) % draws;
            const std::size_t w = idx / (m * draws);
            std::memcpy(past_rows.data() + r * l, xnorm.data() + (w * m + c) * l, l * sizeof(double));
            row_keys[r] = substream(keys[w], {d, c});
        }
        const nn::Var past = nn::Var::constant(patchify_rows(past_rows, mc.patch_len, mc.stride));
        const double K = static_cast<double>(sched_.steps());
        DenoiseFn denoise = [&](const Tensor& y_k, std::size_t k) {
            Tensor fut = patchify_rows(y_k.reshaped({rows, h}), mc.patch_len, mc.stride);
            std::vector<double> tf(rows, static_cast<double>(k) / K);
            Tensor y0 = model_.forward(past, fut, tf).value();
            return y0.reshaped({rows, h, 1});
        };
        Tensor y = sample_keyed(denoise, h, 1, row_keys, cfg, sched_);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t idx = begin + r;
            const std::size_t c = idx % m;
            const std::size_t d = (idx / m) % draws;
            const std::size_t w = idx / (m * draws);
            const NormState& st = states[w];
            if (std::abs(st.gamma[c]) < kStdFloor) {
                throw NumericError("forecast: |gamma| below 1e-5 on channel " + std::to_string(c));
            }
            for (std::size_t t = 0; t < h; ++t) {
                out[w][(d * h + t) * m + c] = st.sigma_x[c] * (y[r * h + t] - st.beta[c]) / st.gamma[c] + st.mu_x[c];
            }
        }
    }
    return out;
}

}  // namespace simdiff
