#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace simdiff {

enum class ScheduleKind { cosine, linear, quadratic };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

// Coefficients of the reverse-step posterior mean and its std.
struct PosteriorCoeffs {
    double c_x0;
    double c_xk;
    double sigma;
};

// Noise schedule over steps k = 1..K. Arrays are indexed by k directly;
// index 0 holds the k = 0 convention (beta 0, alpha_bar 1, sigma 0).
class NoiseSchedule {
public:
    static constexpr double kMaxBeta = 0.999;

    static NoiseSchedule cosine(std::size_t steps, double offset);
    static NoiseSchedule linear(std::size_t steps, double beta_min, double beta_max);
    static NoiseSchedule quadratic(std::size_t steps, double beta_min, double beta_max);
    // Builds from explicit betas (each in (0, 0.999]).
    static NoiseSchedule from_betas(std::vector<double> betas, ScheduleKind kind = ScheduleKind::linear,
                                    double offset = 0.0);

    std::size_t steps() const noexcept { return betas_.size() - 1; }
    ScheduleKind kind() const noexcept { return kind_; }
    double offset() const noexcept { return offset_; }

    double beta(std::size_t k) const { return betas_.at(k); }
    double alpha(std::size_t k) const { return 1.0 - betas_.at(k); }
    double alpha_bar(std::size_t k) const { return alpha_bars_.at(k); }
    double sigma(std::size_t k) const { return sigmas_.at(k); }

    // Posterior q(Y_{k-1} | Y_k, Y_0) for 1 <= k <= K.
    PosteriorCoeffs posterior_coeffs(std::size_t k) const;
    // Same posterior for a jump from step `k` to an earlier retained step
    // `prev` (0 <= prev < k), treating the pair as one effective step with
    // alpha = alpha_bar_k / alpha_bar_prev.
    PosteriorCoeffs posterior_coeffs(std::size_t k, std::size_t prev) const;

    // CSV: k,beta,alpha_bar,sigma for k = 0..K.
    std::string to_csv() const;

private:
    NoiseSchedule(std::vector<double> betas, ScheduleKind kind, double offset);

    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
    std::vector<double> sigmas_;
    ScheduleKind kind_;
    double offset_;
};

}  // namespace simdiff
