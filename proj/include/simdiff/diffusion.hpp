#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simdiff/schedule.hpp"
#include "simdiff/tensor.hpp"

namespace simdiff {

enum class SkipKind { time_uniform, time_quadratic };

std::string_view to_string(SkipKind kind);
SkipKind parse_skip_kind(std::string_view name);

struct ReverseSamplerConfig {
    std::size_t steps = 3;
    SkipKind skip = SkipKind::time_uniform;
    bool stochastic = false;
    std::uint64_t seed = 0;
};

// Y_k = sqrt(abar_k) Y0 + sqrt(1 - abar_k) eps, elementwise; k = 0 is the
// identity.
Tensor forward_corrupt(const Tensor& y0, std::size_t k, const Tensor& eps, const NoiseSchedule& sched);

// One ancestral step k -> k-1 with the posterior mean built from the
// clean-data estimate. `eps` is ignored at k = 1.
Tensor reverse_step(const Tensor& y_k, std::size_t k, const Tensor& y0_hat, const NoiseSchedule& sched,
                    const Tensor* eps);

// Jump from step k to an earlier retained step `prev`. Stochastic mode uses
// the effective-step posterior plus sigma * eps (no noise when prev == 0);
// deterministic mode is the eta = 0 DDIM update.
Tensor strided_step(const Tensor& y_k, std::size_t k, std::size_t prev, const Tensor& y0_hat,
                    const NoiseSchedule& sched, bool stochastic, const Tensor* eps);

// Grid K = g_0 > g_1 > ... > g_S = 0. The denoiser is evaluated at
// g_0..g_{S-1}. Uniform spacing is even in k; quadratic spacing is even in
// sqrt(k), so it is denser near k = 1.
std::vector<std::size_t> select_steps(std::size_t total_steps, std::size_t steps, SkipKind skip);

// Maps a noisy batch [B, H, M] at step k to the clean estimate [B, H, M].
// Batch items must be processed independently.
using DenoiseFn = std::function<Tensor(const Tensor& y_k, std::size_t k)>;

// One draw [H, M] (normalized space).
Tensor sample(const DenoiseFn& denoise, std::size_t horizon, std::size_t channels,
              const ReverseSamplerConfig& cfg, const NoiseSchedule& sched);

// N draws [N, H, M]; draw i uses noise substreams keyed by (seed, i, step),
// so draw i is identical regardless of N.
Tensor sample_batch(const DenoiseFn& denoise, std::size_t horizon, std::size_t channels, std::size_t draws,
                    const ReverseSamplerConfig& cfg, const NoiseSchedule& sched);

// Rows of a batch [B, H, M] whose noise is keyed by (seed, keys[b], step).
// Row b depends only on its key, never on its position or the batch size.
Tensor sample_keyed(const DenoiseFn& denoise, std::size_t horizon, std::size_t channels,
                    std::span<const std::uint64_t> keys, const ReverseSamplerConfig& cfg,
                    const NoiseSchedule& sched);

// Forecast samples I/O. CSV is long format with header draw,t,channel,value.
std::string samples_to_csv(const Tensor& samples);
void write_samples_binary(const std::string& path, const Tensor& samples);
Tensor read_samples_binary(const std::string& path);

}  // namespace simdiff
