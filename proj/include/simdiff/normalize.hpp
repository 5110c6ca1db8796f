#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "simdiff/tensor.hpp"

// Normalization Independence: the past block is instance-normalized and
// passed through a learnable per-channel affine; during training the future
// block is normalized by its own statistics; forecasts are mapped back with
// the past statistics and the inverse affine only.
namespace simdiff {

inline constexpr double kStdFloor = 1e-5;

enum class NormMode { independent, shared };
std::string_view to_string(NormMode mode);
NormMode parse_norm_mode(std::string_view name);

// Per-channel population mean/std over axis 0 of a [T, M] block. Constant
// channels get sigma = kStdFloor and a logged warning.
struct ChannelStats {
    std::vector<double> mu;
    std::vector<double> sigma;
    std::vector<bool> floored;
};
ChannelStats channel_stats(const Tensor& block);

struct NormState {
    std::vector<double> mu_x, sigma_x;
    std::vector<double> mu_y, sigma_y;  // training only; empty at inference
    std::vector<double> gamma, beta;
};

struct PastNormalized {
    Tensor x_norm;  // [L, M]
    NormState state;
};

// X_norm = gamma * (X - mu_X) / sigma_X + beta, per channel.
PastNormalized normalize_past(const Tensor& x, std::span<const double> gamma, std::span<const double> beta);

struct FutureNormalized {
    Tensor y_norm;  // [H, M]
    std::vector<double> mu_y, sigma_y;
};

// Y_norm = (Y - mu_Y) / sigma_Y with the future block's own statistics.
FutureNormalized normalize_future_train(const Tensor& y);

// Y = sigma_X * (Y_norm - beta) / gamma + mu_X. Accepts [H, M] or [N, H, M].
// Throws when |gamma| < kStdFloor for any channel.
Tensor denormalize_pred(const Tensor& y_norm, const NormState& state);

struct SharedNormalized {
    Tensor x_norm;
    Tensor y_norm;
    ChannelStats past;
};

// Both blocks z-scored by the past statistics (the non-independent baseline).
SharedNormalized shared_stats_baseline(const Tensor& x, const Tensor& y);

}  // namespace simdiff
