#include "simdiff/normalize.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "simdiff/errors.hpp"
#include "simdiff/log.hpp"

namespace simdiff {

std::string_view to_string(NormMode mode) { return mode == NormMode::independent ? "independent" : "shared"; }

NormMode parse_norm_mode(std::string_view name) {
    if (name == "independent" || name == "ni") return NormMode::independent;
    if (name == "shared") return NormMode::shared;
    throw std::invalid_argument("unknown normalization mode '" + std::string(name) + "'");
}

namespace {

void require_2d(const char* op, const Tensor& t) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected [T, M], got " + shape_str(t.shape()));
}

Tensor zscore(const Tensor& block, const ChannelStats& st) {
    const std::size_t t = block.dim(0);
    const std::size_t m = block.dim(1);
    Tensor out(block.shape());
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t c = 0; c < m; ++c) out[i * m + c] = (block[i * m + c] - st.mu[c]) / st.sigma[c];
    return out;
}

}  // namespace

ChannelStats channel_stats(const Tensor& block) {
    require_2d("channel_stats", block);
    const std::size_t t = block.dim(0);
    const std::size_t m = block.dim(1);
    if (t < 1) throw ShapeError("channel_stats: empty block");
    ChannelStats st;
    st.mu.assign(m, 0.0);
    st.sigma.assign(m, 0.0);
    st.floored.assign(m, false);
    for (std::size_t c = 0; c < m; ++c) {
        double mu = 0.0;
        for (std::size_t i = 0; i < t; ++i) mu += block[i * m + c];
        mu /= static_cast<double>(t);
        double var = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
            const double d = block[i * m + c] - mu;
            var += d * d;
        }
        var /= static_cast<double>(t);
        double sd = std::sqrt(var);
        if (sd < kStdFloor) {
            sd = kStdFloor;
            st.floored[c] = true;
            log::warn("normalize: channel " + std::to_string(c) + " is (near-)constant; std floored at 1e-5");
        }
        st.mu[c] = mu;
        st.sigma[c] = sd;
    }
    return st;
}

PastNormalized normalize_past(const Tensor& x, std::span<const double> gamma, std::span<const double> beta) {
    require_2d("normalize_past", x);
    const std::size_t m = x.dim(1);
    if (gamma.size() != m || beta.size() != m) {
        throw ShapeError("normalize_past: affine has " + std::to_string(gamma.size()) + " channels, data has " +
                         std::to_string(m));
    }
    if (x.dim(0) < 2) log::warn("normalize_past: fewer than 2 points per channel; std is floored");
    ChannelStats st = channel_stats(x);
    PastNormalized out;
    out.x_norm = zscore(x, st);
    for (std::size_t i = 0; i < x.dim(0); ++i)
        for (std::size_t c = 0; c < m; ++c) out.x_norm[i * m + c] = gamma[c] * out.x_norm[i * m + c] + beta[c];
    out.state.mu_x = std::move(st.mu);
    out.state.sigma_x = std::move(st.sigma);
    out.state.gamma.assign(gamma.begin(), gamma.end());
    out.state.beta.assign(beta.begin(), beta.end());
    return out;
}

FutureNormalized normalize_future_train(const Tensor& y) {
    require_2d("normalize_future_train", y);
    ChannelStats st = channel_stats(y);
    FutureNormalized out;
    out.y_norm = zscore(y, st);
    out.mu_y = std::move(st.mu);
    out.sigma_y = std::move(st.sigma);
    return out;
}

Tensor denormalize_pred(const Tensor& y_norm, const NormState& state) {
    if (y_norm.rank() < 2) throw ShapeError("denormalize_pred: expected [H, M] or [N, H, M]");
    const std::size_t m = y_norm.shape().back();
    if (state.mu_x.size() != m || state.sigma_x.size() != m || state.gamma.size() != m || state.beta.size() != m) {
        throw ShapeError("denormalize_pred: state has wrong channel count for " + shape_str(y_norm.shape()));
    }
    for (std::size_t c = 0; c < m; ++c) {
        if (std::fabs(state.gamma[c]) < kStdFloor) {
            throw NumericError("denormalize_pred: |gamma| below 1e-5 on channel " + std::to_string(c));
        }
    }
    Tensor out(y_norm.shape());
    const std::size_t rows = y_norm.numel() / m;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            const std::size_t i = r * m + c;
            out[i] = state.sigma_x[c] * (y_norm[i] - state.beta[c]) / state.gamma[c] + state.mu_x[c];
        }
    return out;
}

SharedNormalized shared_stats_baseline(const Tensor& x, const Tensor& y) {
    require_2d("shared_stats_baseline", x);
    require_2d("shared_stats_baseline", y);
    if (x.dim(1) != y.dim(1)) throw ShapeError("shared_stats_baseline: channel count mismatch");
    SharedNormalized out;
    out.past = channel_stats(x);
    out.x_norm = zscore(x, out.past);
    out.y_norm = zscore(y, out.past);
    return out;
}

}  // namespace simdiff
