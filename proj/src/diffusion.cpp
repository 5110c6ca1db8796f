#include "simdiff/diffusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "simdiff/errors.hpp"
#include "simdiff/format.hpp"
#include "simdiff/rng.hpp"

namespace simdiff {

std::string_view to_string(SkipKind kind) {
    return kind == SkipKind::time_uniform ? "time_uniform" : "time_quadratic";
}

SkipKind parse_skip_kind(std::string_view name) {
    if (name == "time_uniform" || name == "time-uniform" || name == "uniform") return SkipKind::time_uniform;
    if (name == "time_quadratic" || name == "time-quadratic" || name == "quadratic") return SkipKind::time_quadratic;
    throw std::invalid_argument("unknown skip kind '" + std::string(name) + "'");
}

namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor forward_corrupt(const Tensor& y0, std::size_t k, const Tensor& eps, const NoiseSchedule& sched) {
    require_same("forward_corrupt", y0, eps);
    if (k > sched.steps()) throw std::out_of_range("forward_corrupt: step beyond K");
    const double a = std::sqrt(sched.alpha_bar(k));
    const double s = std::sqrt(1.0 - sched.alpha_bar(k));
    Tensor out(y0.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * y0[i] + s * eps[i];
    return out;
}

Tensor reverse_step(const Tensor& y_k, std::size_t k, const Tensor& y0_hat, const NoiseSchedule& sched,
                    const Tensor* eps) {
    if (k < 1) throw std::out_of_range("reverse_step: k must be >= 1");
    return strided_step(y_k, k, k - 1, y0_hat, sched, true, eps);
}

Tensor strided_step(const Tensor& y_k, std::size_t k, std::size_t prev, const Tensor& y0_hat,
                    const NoiseSchedule& sched, bool stochastic, const Tensor* eps) {
    require_same("reverse_step", y_k, y0_hat);
    if (k < 1 || prev >= k || k > sched.steps()) {
        throw std::out_of_range("reverse_step: invalid step pair " + std::to_string(k) + " -> " +
                                std::to_string(prev));
    }
    Tensor out(y_k.shape());
    if (stochastic) {
        const PosteriorCoeffs c = sched.posterior_coeffs(k, prev);
        const bool noisy = prev > 0 && eps != nullptr;
        if (noisy) require_same("reverse_step", y_k, *eps);
        for (std::size_t i = 0; i < out.numel(); ++i) {
            out[i] = c.c_xk * y_k[i] + c.c_x0 * y0_hat[i] + (noisy ? c.sigma * (*eps)[i] : 0.0);
        }
    } else {
        const double ab_k = sched.alpha_bar(k);
        const double ab_p = sched.alpha_bar(prev);
        const double sk = std::sqrt(ab_k);
        const double nk = std::sqrt(1.0 - ab_k);
        const double sp = std::sqrt(ab_p);
        const double np = std::sqrt(1.0 - ab_p);
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const double eps_hat = (y_k[i] - sk * y0_hat[i]) / nk;
            out[i] = sp * y0_hat[i] + np * eps_hat;
        }
    }
    return out;
}

std::vector<std::size_t> select_steps(std::size_t total_steps, std::size_t steps, SkipKind skip) {
    if (steps < 1 || steps > total_steps) {
        throw std::invalid_argument("select_steps: need 1 <= S <= K (S=" + std::to_string(steps) +
                                    ", K=" + std::to_string(total_steps) + ")");
    }
    const double K = static_cast<double>(total_steps);
    const double S = static_cast<double>(steps);
    std::vector<std::size_t> grid(steps + 1);
    grid[0] = total_steps;
    grid[steps] = 0;
    for (std::size_t j = 1; j < steps; ++j) {
        const double frac = 1.0 - static_cast<double>(j) / S;
        double raw = 0.0;
        if (skip == SkipKind::time_uniform) {
            raw = K * frac;
        } else {
            const double r = std::sqrt(K) * frac;
            raw = r * r;
        }
        auto g = static_cast<std::size_t>(std::llround(raw));
        // keep the grid strictly decreasing with room for the remaining points
        g = std::min(g, grid[j - 1] - 1);
        g = std::max(g, steps - j);
        grid[j] = g;
    }
    return grid;
}

namespace {

void fill_draw_noise(Tensor& block, std::size_t offset, std::size_t count, std::uint64_t seed,
                     std::uint64_t draw, std::size_t step_index) {
    CounterRng rng(substream(seed, {draw, step_index}));
    rng.fill_normal(std::span<double>(block.data() + offset, count));
}

}  // namespace

Tensor sample_keyed(const DenoiseFn& denoise, std::size_t horizon, std::size_t channels,
                    std::span<const std::uint64_t> keys, const ReverseSamplerConfig& cfg,
                    const NoiseSchedule& sched) {
    if (keys.empty()) throw std::invalid_argument("sample: need at least one draw");
    const std::vector<std::size_t> grid = select_steps(sched.steps(), cfg.steps, cfg.skip);
    const std::size_t rows = keys.size();
    const std::size_t per = horizon * channels;
    Tensor y({rows, horizon, channels});
    for (std::size_t d = 0; d < rows; ++d) fill_draw_noise(y, d * per, per, cfg.seed, keys[d], 0);
    Tensor eps({rows, horizon, channels});
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const std::size_t k = grid[i];
        const std::size_t prev = grid[i + 1];
        Tensor y0_hat = denoise(y, k);
        if (y0_hat.shape() != y.shape()) {
            throw ShapeError("sample: denoiser returned " + shape_str(y0_hat.shape()) + ", expected " +
                             shape_str(y.shape()));
        }
        if (!y0_hat.all_finite()) {
            throw NumericError("sample: denoiser produced non-finite output at step " + std::to_string(k));
        }
        const bool noisy = cfg.stochastic && prev > 0;
        if (noisy) {
            for (std::size_t d = 0; d < rows; ++d) fill_draw_noise(eps, d * per, per, cfg.seed, keys[d], i + 1);
        }
        y = strided_step(y, k, prev, y0_hat, sched, cfg.stochastic, noisy ? &eps : nullptr);
    }
    return y;
}

Tensor sample_batch(const DenoiseFn& denoise, std::size_t horizon, std::size_t channels, std::size_t draws,
                    const ReverseSamplerConfig& cfg, const NoiseSchedule& sched) {
    std::vector<std::uint64_t> keys(draws);
    for (std::size_t d = 0; d < draws; ++d) keys[d] = d;
    return sample_keyed(denoise, horizon, channels, keys, cfg, sched);
}

Tensor sample(const DenoiseFn& denoise, std::size_t horizon, std::size_t channels,
              const ReverseSamplerConfig& cfg, const NoiseSchedule& sched) {
    Tensor batch = sample_batch(denoise, horizon, channels, 1, cfg, sched);
    return batch.reshaped({horizon, channels});
}

std::string samples_to_csv(const Tensor& samples) {
    if (samples.rank() != 3) throw ShapeError("samples_to_csv: expected [N, H, M], got " + shape_str(samples.shape()));
    std::ostringstream os;
    os << "draw,t,channel,value\n";
    const std::size_t n = samples.dim(0);
    const std::size_t h = samples.dim(1);
    const std::size_t m = samples.dim(2);
    for (std::size_t d = 0; d < n; ++d)
        for (std::size_t t = 0; t < h; ++t)
            for (std::size_t c = 0; c < m; ++c)
                os << d << ',' << t << ',' << c << ',' << fmt_double(samples[(d * h + t) * m + c]) << '\n';
    return os.str();
}

namespace {
constexpr char kSamplesMagic[] = "SIMDIFF-SAMPLES-1\n";
}

void write_samples_binary(const std::string& path, const Tensor& samples) {
    if (samples.rank() != 3) throw ShapeError("write_samples_binary: expected rank 3");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    os.write(kSamplesMagic, sizeof(kSamplesMagic) - 1);
    auto put = [&](std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        os.write(reinterpret_cast<const char*>(b), 8);
    };
    for (std::size_t d : samples.shape()) put(d);
    for (double v : samples.values()) put(std::bit_cast<std::uint64_t>(v));
}

Tensor read_samples_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ArtifactMismatch("cannot open " + path);
    char magic[sizeof(kSamplesMagic) - 1];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kSamplesMagic, sizeof(magic)) != 0) {
        throw ArtifactMismatch(path + " is not a samples file");
    }
    auto get = [&]() {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        if (!is) throw ArtifactMismatch("truncated samples file " + path);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    };
    Shape shape(3);
    for (auto& d : shape) d = get();
    Tensor out(shape);
    for (double& v : out.storage()) v = std::bit_cast<double>(get());
    return out;
}

}  // namespace simdiff
