#include "simdiff/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "simdiff/errors.hpp"
#include "simdiff/log.hpp"
#include "simdiff/rng.hpp"

namespace simdiff {

void MoMConfig::validate(std::size_t n) const {
    if (groups < 1) throw std::invalid_argument("mom: need at least one group");
    if (repeats < 1) throw std::invalid_argument("mom: need at least one repeat");
    if (n < groups) {
        throw std::invalid_argument("mom: " + std::to_string(n) + " samples cannot fill " + std::to_string(groups) +
                                    " groups");
    }
}

namespace {

double median_inplace(std::vector<double>& v) {
    const std::size_t g = v.size();
    std::sort(v.begin(), v.end());
    if (g % 2 == 1) return v[g / 2];
    return 0.5 * (v[g / 2 - 1] + v[g / 2]);
}

// Group boundaries: group j covers [start[j], start[j + 1]).
std::vector<std::size_t> group_starts(std::size_t n, std::size_t g) {
    std::vector<std::size_t> start(g + 1, 0);
    const std::size_t base = n / g;
    const std::size_t extra = n % g;
    for (std::size_t j = 0; j < g; ++j) start[j + 1] = start[j] + base + (j < extra ? 1 : 0);
    return start;
}

std::vector<std::size_t> repeat_perm(std::size_t n, const MoMConfig& cfg, std::size_t r) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (!cfg.identity_shuffle) {
        CounterRng rng(substream(cfg.seed, {0x303, r}));
        rng.shuffle(perm);
    }
    return perm;
}

}  // namespace

double mom(std::span<const double> samples, const MoMConfig& cfg) {
    cfg.validate(samples.size());
    Tensor t({samples.size(), 1, 1}, std::vector<double>(samples.begin(), samples.end()));
    return mom_grid(t, cfg)[0];
}

Tensor mom_grid(const Tensor& samples, const MoMConfig& cfg) {
    if (samples.rank() != 3) throw ShapeError("mom_grid: expected [N, H, M], got " + shape_str(samples.shape()));
    const std::size_t n = samples.dim(0);
    cfg.validate(n);
    const std::size_t cells = samples.numel() / n;
    const std::size_t g = cfg.groups;
    const auto start = group_starts(n, g);
    Tensor out({samples.dim(1), samples.dim(2)}, 0.0);
    std::vector<double> means(g);
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const auto perm = repeat_perm(n, cfg, r);
        for (std::size_t c = 0; c < cells; ++c) {
            for (std::size_t j = 0; j < g; ++j) {
                double s = 0.0;
                for (std::size_t i = start[j]; i < start[j + 1]; ++i) s += samples[perm[i] * cells + c];
                means[j] = s / static_cast<double>(start[j + 1] - start[j]);
            }
            out[c] += median_inplace(means);
        }
    }
    for (double& v : out.storage()) v /= static_cast<double>(cfg.repeats);
    return out;
}

Tensor mean_ensemble(const Tensor& samples) {
    if (samples.rank() != 3 || samples.dim(0) == 0) throw ShapeError("mean_ensemble: expected [N, H, M], N >= 1");
    const std::size_t n = samples.dim(0);
    const std::size_t cells = samples.numel() / n;
    Tensor out({samples.dim(1), samples.dim(2)}, 0.0);
    for (std::size_t d = 0; d < n; ++d)
        for (std::size_t c = 0; c < cells; ++c) out[c] += samples[d * cells + c];
    for (double& v : out.storage()) v /= static_cast<double>(n);
    return out;
}

Tensor single_draw(const Tensor& samples, std::size_t index) {
    if (samples.rank() != 3) throw ShapeError("single_draw: expected [N, H, M]");
    if (index >= samples.dim(0)) throw std::out_of_range("single_draw: index " + std::to_string(index) + " >= N");
    const std::size_t cells = samples.dim(1) * samples.dim(2);
    return Tensor({samples.dim(1), samples.dim(2)},
                  std::vector<double>(samples.data() + index * cells, samples.data() + (index + 1) * cells));
}

double concentration_bound(std::size_t n, std::size_t groups, double eps, double sigma) {
    const double g = static_cast<double>(groups);
    const double ratio = g * sigma * sigma / (static_cast<double>(n) * eps * eps);
    // Past the vacuous point the trivial bound 1 applies.
    if (ratio >= 0.5) return 1.0;
    const double gap = 0.5 - ratio;
    return std::exp(-2.0 * g * gap * gap);
}

ConcentrationResult check_concentration_bound(const SampleFn& sampler, double mu, double sigma, std::size_t n,
                                              std::size_t groups, double eps, std::size_t trials,
                                              std::uint64_t seed) {
    if (trials == 0) throw std::invalid_argument("concentration: need at least one trial");
    if (!(eps > 0.0)) throw std::invalid_argument("concentration: eps must be positive");
    ConcentrationResult res;
    const double g = static_cast<double>(groups);
    res.vacuous = g * sigma * sigma / (static_cast<double>(n) * eps * eps) >= 0.5;
    if (res.vacuous) {
        log::warn("concentration bound is vacuous for n=" + std::to_string(n) + ", G=" + std::to_string(groups) +
                  ", eps=" + std::to_string(eps));
    }
    res.bound = concentration_bound(n, groups, eps, sigma);
    MoMConfig cfg{groups, 1, 0, true};  // iid data: the input order is already random
    std::vector<double> data(n);
    std::size_t hits = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        sampler(substream(seed, {t}), data);
        if (std::abs(mom(data, cfg) - mu) > eps) ++hits;
    }
    const double p = static_cast<double>(hits) / static_cast<double>(trials);
    res.empirical = p;
    res.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
    return res;
}

}  // namespace simdiff
