#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "simdiff/tensor.hpp"

namespace simdiff {

struct MoMConfig {
    std::size_t groups = 5;    // G
    std::size_t repeats = 10;  // R
    std::uint64_t seed = 0;
    // Skip shuffling; groups are consecutive runs of the input order.
    bool identity_shuffle = false;

    void validate(std::size_t n) const;
};

// Median of G group means, averaged over R shuffled partitions. The first
// N mod G groups take one extra element.
double mom(std::span<const double> samples, const MoMConfig& cfg);

// mom per (t, channel) cell of samples [N, H, M]; each repeat draws one
// permutation shared by all cells.
Tensor mom_grid(const Tensor& samples, const MoMConfig& cfg);
Tensor mean_ensemble(const Tensor& samples);
Tensor single_draw(const Tensor& samples, std::size_t index);

struct ConcentrationResult {
    double empirical = 0.0;  // fraction of trials with |mom - mu| > eps
    double bound = 0.0;      // exp(-2G (1/2 - G sigma^2 / (n eps^2))^2)
    double std_error = 0.0;  // Monte-Carlo std error of `empirical`
    bool vacuous = false;    // G sigma^2 / (n eps^2) >= 1/2
};

// sampler(rng_key, out) fills `out` with n iid draws for one trial.
using SampleFn = std::function<void(std::uint64_t key, std::span<double> out)>;

// Bound value; 1 when vacuous. The check runs single-repeat MoM (R = 1)
// over `trials` independent data sets.
double concentration_bound(std::size_t n, std::size_t groups, double eps, double sigma);
ConcentrationResult check_concentration_bound(const SampleFn& sampler, double mu, double sigma, std::size_t n,
                                              std::size_t groups, double eps, std::size_t trials,
                                              std::uint64_t seed);

}  // namespace simdiff
