#include "simdiff/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "simdiff/diffusion.hpp"
#include "simdiff/errors.hpp"
#include "simdiff/forecast.hpp"
#include "simdiff/format.hpp"
#include "simdiff/log.hpp"
#include "simdiff/metrics.hpp"
#include "simdiff/normalize.hpp"
#include "simdiff/rng.hpp"

namespace simdiff {

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
    if (!(lr > 0.0)) fail("lr must be > 0");
    if (max_epochs < 1) fail("max_epochs must be >= 1");
    if (patience < 1 || patience > max_epochs) fail("patience must be in [1, max_epochs]");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (diffusion_steps < 1) fail("K must be >= 1");
    if (!(loss_eps > 0.0)) fail("loss_eps must be > 0");
    if (window_stride < 1 || val_stride < 1) fail("window strides must be >= 1");
    if (val_sampler_steps < 1 || val_sampler_steps > diffusion_steps) fail("val_sampler_steps must be in [1, K]");
    if (schedule == ScheduleKind::cosine && !(schedule_offset >= 0.0)) fail("cosine offset must be >= 0");
    if (schedule != ScheduleKind::cosine && !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
        fail("need 0 < beta_min <= beta_max < 1");
    }
}

NoiseSchedule make_schedule(const TrainConfig& cfg) {
    switch (cfg.schedule) {
        case ScheduleKind::cosine: return NoiseSchedule::cosine(cfg.diffusion_steps, cfg.schedule_offset);
        case ScheduleKind::linear: return NoiseSchedule::linear(cfg.diffusion_steps, cfg.beta_min, cfg.beta_max);
        case ScheduleKind::quadratic:
            return NoiseSchedule::quadratic(cfg.diffusion_steps, cfg.beta_min, cfg.beta_max);
    }
    throw ConfigError("unknown schedule");
}

double loss_weight(std::size_t k, const NoiseSchedule& sched, double loss_eps, bool invert) {
    const double s = std::max(std::sqrt(1.0 - sched.alpha_bar(k)), loss_eps);
    return invert ? s : 1.0 / s;
}

double weighted_mae_loss(const Tensor& pred, const Tensor& target, std::size_t k, const NoiseSchedule& sched,
                         double loss_eps, bool invert) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("weighted_mae_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    }
    if (pred.numel() == 0) throw ShapeError("weighted_mae_loss: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) s += std::abs(target[i] - pred[i]);
    return loss_weight(k, sched, loss_eps, invert) * s / static_cast<double>(pred.numel());
}

nn::Var weighted_mae_loss(const nn::Var& pred, const Tensor& target, std::span<const double> row_weights) {
    if (pred.shape() != target.shape() || pred.shape().size() != 2 || row_weights.size() != pred.shape()[0]) {
        throw ShapeError("weighted_mae_loss: pred " + shape_str(pred.shape()) + ", target " +
                         shape_str(target.shape()) + ", " + std::to_string(row_weights.size()) + " weights");
    }
    const std::size_t b = pred.shape()[0];
    const std::size_t h = pred.shape()[1];
    const double inv_n = 1.0 / static_cast<double>(b * h);
    double s = 0.0;
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t t = 0; t < h; ++t) s += row_weights[r] * std::abs(target[r * h + t] - pred.value()[r * h + t]);
    auto tgt = std::make_shared<Tensor>(target);
    std::vector<double> w(row_weights.begin(), row_weights.end());
    return nn::make_op(Tensor({1}, s * inv_n), {pred}, "weighted_mae", [b, h, inv_n, tgt, w](nn::Node& n) {
        nn::Node* p = n.parents[0].get();
        double* g = p->grad_buffer().data();
        const double up = n.grad[0] * inv_n;
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t t = 0; t < h; ++t) {
                const double d = p->value[r * h + t] - (*tgt)[r * h + t];
                const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                g[r * h + t] += up * w[r] * sign;
            }
    });
}

std::size_t sample_step(std::uint64_t key, std::size_t total_steps) {
    CounterRng rng(key);
    return 1 + static_cast<std::size_t>(rng.below(total_steps));
}

TrainBatch make_batch(const DenoiserModel& model, std::span<const SeriesWindow* const> windows,
                      const NoiseSchedule& sched, const TrainConfig& cfg, std::uint64_t key) {
    if (windows.empty()) throw std::invalid_argument("train_step: empty batch");
    const DenoiserConfig& mc = model.config();
    const std::size_t l = mc.lookback;
    const std::size_t h = mc.horizon;
    const std::size_t m = mc.channels;
    const std::size_t rows = windows.size() * m;
    const bool independent = mc.norm == NormMode::independent;

    Tensor past({rows, l});
    Tensor clean({rows, h});
    Tensor noisy({rows, h});
    TrainBatch b;
    b.channel.resize(rows);
    b.t_frac.resize(rows);
    b.weights.resize(rows);
    b.steps.resize(rows);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const SeriesWindow& w = *windows[i];
        if (w.x.shape() != Shape{l, m} || w.y.shape() != Shape{h, m}) {
            throw ShapeError("train_step: window shapes " + shape_str(w.x.shape()) + "/" + shape_str(w.y.shape()) +
                             " do not match the model");
        }
        const ChannelStats px = channel_stats(w.x);
        const ChannelStats py = independent ? channel_stats(w.y) : px;
        const std::size_t k = sample_step(substream(key, {i, 0}), sched.steps());
        const double sa = std::sqrt(sched.alpha_bar(k));
        const double sn = std::sqrt(1.0 - sched.alpha_bar(k));
        const double wk = loss_weight(k, sched, cfg.loss_eps, cfg.invert_weight);
        CounterRng noise(substream(key, {i, 1}));
        for (std::size_t c = 0; c < m; ++c) {
            const std::size_t r = i * m + c;
            b.channel[r] = c;
            b.steps[r] = k;
            b.t_frac[r] = static_cast<double>(k) / static_cast<double>(sched.steps());
            b.weights[r] = wk;
            for (std::size_t t = 0; t < l; ++t) past[r * l + t] = (w.x[t * m + c] - px.mu[c]) / px.sigma[c];
            for (std::size_t t = 0; t < h; ++t) {
                const double y0 = (w.y[t * m + c] - py.mu[c]) / py.sigma[c];
                clean[r * h + t] = y0;
                noisy[r * h + t] = sa * y0 + sn * noise.normal();
            }
        }
    }
    b.past_patches = patchify_rows(past, mc.patch_len, mc.stride);
    b.future_patches = patchify_rows(noisy, mc.patch_len, mc.stride);
    b.target = std::move(clean);
    return b;
}

StepResult train_step(DenoiserModel& model, std::span<const SeriesWindow* const> windows,
                      const NoiseSchedule& sched, const TrainConfig& cfg, nn::AdamState& opt, std::uint64_t key) {
    TrainBatch b = make_batch(model, windows, sched, cfg, key);
    model.params().zero_grad();
    nn::Var past = model.past_input(b.past_patches, b.channel);
    nn::Var pred = model.forward(past, b.future_patches, b.t_frac, true, substream(key, {2}));
    nn::Var loss = weighted_mae_loss(pred, b.target, b.weights);
    nn::backward(loss);
    nn::adam_step(model.params(), opt);
    return {loss.value()[0]};
}

std::string history_to_csv(const std::vector<HistoryRow>& rows) {
    std::ostringstream os;
    os << "epoch,train_loss,val_mse,lr,wall_seconds\n";
    for (const auto& r : rows) {
        os << r.epoch << ',' << fmt_double(r.train_loss) << ',' << fmt_double(r.val_mse) << ',' << fmt_double(r.lr)
           << ',' << fmt_double(r.wall_seconds) << '\n';
    }
    return os.str();
}

double validation_mse(const DenoiserModel& model, std::span<const SeriesWindow> val, const NoiseSchedule& sched,
                      const TrainConfig& cfg) {
    if (val.empty()) throw std::invalid_argument("validation: empty validation set");
    Forecaster fc(model, sched);
    ReverseSamplerConfig sc;
    sc.steps = cfg.val_sampler_steps;
    sc.stochastic = false;
    sc.seed = substream(cfg.seed, {0x7a1});
    std::vector<Tensor> pasts;
    std::vector<std::uint64_t> keys;
    for (std::size_t i = 0; i < val.size(); i += cfg.val_stride) {
        pasts.push_back(val[i].x);
        keys.push_back(val[i].origin);
    }
    const auto draws = fc.sample_many(pasts, keys, 1, sc);
    double se = 0.0;
    std::size_t cells = 0;
    for (std::size_t j = 0; j < draws.size(); ++j) {
        const SeriesWindow& w = val[j * cfg.val_stride];
        se += mse(draws[j].reshaped(w.y.shape()), w.y) * static_cast<double>(w.y.numel());
        cells += w.y.numel();
    }
    return se / static_cast<double>(cells);
}

bool EarlyStopping::update(double metric) {
    if (metric < best_) {
        best_ = metric;
        bad_ = 0;
        return true;
    }
    ++bad_;
    return false;
}

FitResult fit(DenoiserModel& model, std::span<const SeriesWindow> train, std::span<const SeriesWindow> val,
              const TrainConfig& cfg, const std::function<void(const HistoryRow&)>& on_epoch) {
    cfg.validate();
    if (train.empty()) throw std::invalid_argument("fit: empty training set");
    if (val.empty()) throw std::invalid_argument("fit: empty validation set");
    const NoiseSchedule sched = make_schedule(cfg);
    nn::AdamState opt;
    opt.lr = cfg.lr;

    std::vector<const SeriesWindow*> pool;
    for (std::size_t i = 0; i < train.size(); i += cfg.window_stride) pool.push_back(&train[i]);
    const std::size_t n = pool.size();
    const std::size_t bs = std::min(cfg.batch_size, n);
    const std::size_t steps = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : (n + bs - 1) / bs;
    log::info("fit: " + std::to_string(n) + " training windows, " + std::to_string(steps) + " steps/epoch, " +
              std::to_string(model.params().count()) + " parameters");

    FitResult res;
    res.best_val_mse = std::numeric_limits<double>::infinity();
    nn::Checkpoint best;
    EarlyStopping stopper(cfg.patience);
    std::vector<std::size_t> order(n);
    std::size_t cursor = n;  // forces a shuffle on first use
    std::uint64_t pass = 0;
    std::vector<const SeriesWindow*> batch(bs);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        double loss_sum = 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
            for (std::size_t j = 0; j < bs; ++j) {
                if (cursor == n) {
                    std::iota(order.begin(), order.end(), std::size_t{0});
                    CounterRng(substream(cfg.seed, {0x5f, pass++})).shuffle(order);
                    cursor = 0;
                }
                batch[j] = pool[order[cursor++]];
            }
            try {
                loss_sum += train_step(model, batch, sched, cfg, opt, substream(cfg.seed, {0x57, epoch, s})).loss;
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", step " + std::to_string(s) + ": " + e.what());
            }
        }
        HistoryRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(steps);
        row.val_mse = validation_mse(model, val, sched, cfg);
        row.lr = opt.lr;
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(row.val_mse)) throw NumericError("epoch " + std::to_string(epoch) + ": validation MSE is not finite");
        res.history.push_back(row);
        if (on_epoch) on_epoch(row);
        log::info("epoch " + std::to_string(epoch) + " loss " + fmt_double(row.train_loss) + " val_mse " +
                  fmt_double(row.val_mse));
        if (stopper.update(row.val_mse)) {
            res.best_val_mse = row.val_mse;
            res.best_epoch = epoch;
            best = nn::snapshot(model.params(), "");
        } else if (stopper.should_stop()) {
            res.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    nn::restore(model.params(), best);
    return res;
}

}  // namespace simdiff
