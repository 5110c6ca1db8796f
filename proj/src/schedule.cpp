#include "simdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace simdiff {

std::string_view to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::cosine: return "cosine";
        case ScheduleKind::linear: return "linear";
        case ScheduleKind::quadratic: return "quadratic";
    }
    return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
    if (name == "cosine") return ScheduleKind::cosine;
    if (name == "linear") return ScheduleKind::linear;
    if (name == "quadratic") return ScheduleKind::quadratic;
    throw std::invalid_argument("unknown schedule kind '" + std::string(name) + "'");
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas, ScheduleKind kind, double offset)
    : kind_(kind), offset_(offset) {
    if (betas.empty()) throw std::invalid_argument("NoiseSchedule: need at least one step");
    betas_.reserve(betas.size() + 1);
    betas_.push_back(0.0);
    for (double b : betas) {
        if (!(b > 0.0) || b > kMaxBeta) {
            throw std::invalid_argument("NoiseSchedule: beta out of (0, 0.999]");
        }
        betas_.push_back(b);
    }
    const std::size_t K = betas.size();
    alpha_bars_.assign(K + 1, 1.0);
    for (std::size_t k = 1; k <= K; ++k) alpha_bars_[k] = alpha_bars_[k - 1] * (1.0 - betas_[k]);
    sigmas_.assign(K + 1, 0.0);
    for (std::size_t k = 1; k <= K; ++k) sigmas_[k] = posterior_coeffs(k).sigma;
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas, ScheduleKind kind, double offset) {
    return NoiseSchedule(std::move(betas), kind, offset);
}

NoiseSchedule NoiseSchedule::cosine(std::size_t steps, double offset) {
    if (steps == 0) throw std::invalid_argument("cosine schedule: K must be >= 1");
    if (!(offset >= 0.0)) throw std::invalid_argument("cosine schedule: offset must be >= 0");
    const double K = static_cast<double>(steps);
    auto f = [&](double k) {
        const double c = std::cos(((k / K + offset) / (1.0 + offset)) * std::numbers::pi / 2.0);
        return c * c;
    };
    const double f0 = f(0.0);
    std::vector<double> betas(steps);
    double prev = 1.0;
    for (std::size_t k = 1; k <= steps; ++k) {
        const double ab = f(static_cast<double>(k)) / f0;
        double b = 1.0 - ab / prev;
        betas[k - 1] = std::clamp(b, 1e-12, kMaxBeta);
        prev = ab;
    }
    return NoiseSchedule(std::move(betas), ScheduleKind::cosine, offset);
}

namespace {

void check_range(const char* what, double beta_min, double beta_max) {
    if (!(beta_min > 0.0) || !(beta_min <= beta_max) || beta_max > NoiseSchedule::kMaxBeta) {
        throw std::invalid_argument(std::string(what) + ": need 0 < beta_min <= beta_max <= 0.999");
    }
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_min, double beta_max) {
    check_range("linear schedule", beta_min, beta_max);
    if (steps == 0) throw std::invalid_argument("linear schedule: K must be >= 1");
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double t = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        betas[i] = beta_min + t * (beta_max - beta_min);
    }
    return NoiseSchedule(std::move(betas), ScheduleKind::linear, 0.0);
}

NoiseSchedule NoiseSchedule::quadratic(std::size_t steps, double beta_min, double beta_max) {
    check_range("quadratic schedule", beta_min, beta_max);
    if (steps == 0) throw std::invalid_argument("quadratic schedule: K must be >= 1");
    const double lo = std::sqrt(beta_min);
    const double hi = std::sqrt(beta_max);
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double t = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        const double r = lo + t * (hi - lo);
        betas[i] = std::min(r * r, kMaxBeta);
    }
    return NoiseSchedule(std::move(betas), ScheduleKind::quadratic, 0.0);
}

PosteriorCoeffs NoiseSchedule::posterior_coeffs(std::size_t k) const {
    if (k < 1 || k > steps()) {
        throw std::out_of_range("posterior_coeffs: step " + std::to_string(k) + " outside [1, " +
                                std::to_string(steps()) + "]");
    }
    return posterior_coeffs(k, k - 1);
}

PosteriorCoeffs NoiseSchedule::posterior_coeffs(std::size_t k, std::size_t prev) const {
    if (k < 1 || k > steps() || prev >= k) {
        throw std::out_of_range("posterior_coeffs: invalid step pair (" + std::to_string(k) + " -> " +
                                std::to_string(prev) + ")");
    }
    const double ab_k = alpha_bars_[k];
    const double ab_prev = alpha_bars_[prev];
    const double a_eff = ab_k / ab_prev;
    const double b_eff = prev + 1 == k ? betas_[k] : 1.0 - a_eff;
    const double denom = 1.0 - ab_k;
    PosteriorCoeffs c{};
    c.c_x0 = std::sqrt(ab_prev) * b_eff / denom;
    c.c_xk = std::sqrt(a_eff) * (1.0 - ab_prev) / denom;
    c.sigma = std::sqrt(std::max(0.0, (1.0 - ab_prev) / denom * b_eff));
    return c;
}

std::string NoiseSchedule::to_csv() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "k,beta,alpha_bar,sigma\n";
    for (std::size_t k = 0; k <= steps(); ++k) {
        os << k << ',' << betas_[k] << ',' << alpha_bars_[k] << ',' << sigmas_[k] << '\n';
    }
    return os.str();
}

}  // namespace simdiff
