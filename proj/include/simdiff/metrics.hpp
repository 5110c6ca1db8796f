#pragma once

#include <span>
#include <string>
#include <vector>

#include "simdiff/tensor.hpp"

namespace simdiff {

// Mean squared / absolute error over all cells of equal-shape tensors.
double mse(const Tensor& pred, const Tensor& truth);
double mae(const Tensor& pred, const Tensor& truth);

// Energy-form sample CRPS: mean |x_i - y| - (1 / 2N^2) sum_ij |x_i - x_j|.
// Computed in O(N log N) through the sorted-sample identity.
double crps(std::span<const double> samples, double y);

// Sum over (t, m) of per-cell CRPS for samples [N, H, M] against truth [H, M].
double crps_total(const Tensor& samples, const Tensor& truth);
// Sum of |truth| over all cells.
double abs_total(const Tensor& truth);

// Channels summed per draw and per t, CRPS per t, summed over t and divided
// by sum_t |sum_m truth|.
double crps_sum(const Tensor& samples, const Tensor& truth);
// Numerator and denominator of crps_sum, for pooling across windows.
struct CrpsSumParts {
    double score = 0.0;
    double norm = 0.0;
};
CrpsSumParts crps_sum_parts(const Tensor& samples, const Tensor& truth);

// Mean over cells of the across-draw population variance.
double mean_sample_variance(const Tensor& samples);

struct WindowScore {
    std::size_t origin = 0;
    double mse = 0.0;     // single draw
    double mse_e = 0.0;   // ensembled point forecast
    double mae = 0.0;     // ensembled point forecast
    double crps = 0.0;    // normalized by sum |truth|
    double crps_sum = 0.0;
    double var = 0.0;
};

struct EvalReport {
    double mse = 0.0;
    double mse_e = 0.0;
    double mae = 0.0;
    double crps = 0.0;
    double crps_sum = 0.0;
    double var = 0.0;
    std::vector<WindowScore> windows;

    std::string to_csv() const;          // one summary row
    std::string windows_csv() const;     // per-window breakdown
    std::string summary() const;         // human readable
};

// Accumulates per-window results into pooled metrics.
class EvalAccumulator {
public:
    // samples [N, H, M]; point forecasts [H, M].
    void add(std::size_t origin, const Tensor& samples, const Tensor& single, const Tensor& ensembled,
             const Tensor& truth);
    EvalReport report() const;

private:
    double se_single_ = 0.0, se_ens_ = 0.0, ae_ens_ = 0.0;
    double crps_num_ = 0.0, crps_den_ = 0.0;
    double cs_num_ = 0.0, cs_den_ = 0.0;
    double var_sum_ = 0.0;
    std::size_t cells_ = 0;
    std::vector<WindowScore> windows_;
};

}  // namespace simdiff
