#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "simdiff/denoiser.hpp"
#include "simdiff/diffusion.hpp"
#include "simdiff/normalize.hpp"
#include "simdiff/schedule.hpp"

namespace simdiff {

// Draws forecasts from a trained denoiser. Every (window, draw, channel) is
// one independent sequence whose noise is keyed by (window key, draw,
// channel), so results do not depend on how rows are batched.
class Forecaster {
public:
    Forecaster(const DenoiserModel& model, NoiseSchedule sched, std::size_t max_rows = 512);

    // Normalization used at inference for a past block [L, M]. Shared mode
    // uses gamma = 1, beta = 0.
    NormState norm_state(const Tensor& past) const;

    // [L, M] -> [N, H, M] in data units.
    Tensor sample(const Tensor& past, std::size_t draws, const ReverseSamplerConfig& cfg, std::uint64_t key) const;
    std::vector<Tensor> sample_many(std::span<const Tensor> pasts, std::span<const std::uint64_t> keys,
                                    std::size_t draws, const ReverseSamplerConfig& cfg) const;

    const NoiseSchedule& schedule() const { return sched_; }

private:
    const DenoiserModel& model_;
    NoiseSchedule sched_;
    std::size_t max_rows_;
};

}  // namespace simdiff
