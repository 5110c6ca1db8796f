#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "simdiff/data.hpp"
#include "simdiff/denoiser.hpp"
#include "simdiff/nn.hpp"
#include "simdiff/schedule.hpp"

namespace simdiff {

struct TrainConfig {
    double lr = 1e-3;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::size_t batch_size = 32;          // windows per step; rows = windows * channels
    std::size_t diffusion_steps = 100;    // K
    ScheduleKind schedule = ScheduleKind::cosine;
    double schedule_offset = 5.0;         // cosine s
    double beta_min = 1e-4;               // linear / quadratic
    double beta_max = 0.02;
    std::uint64_t seed = 0;
    double loss_eps = 1e-3;
    bool invert_weight = false;           // weight sqrt(1 - abar_k) instead of its inverse
    std::size_t window_stride = 1;        // training windows
    std::size_t val_stride = 1;           // validation windows
    std::size_t steps_per_epoch = 0;      // 0: one pass over the training windows
    std::size_t val_sampler_steps = 3;

    void validate() const;
};

NoiseSchedule make_schedule(const TrainConfig& cfg);

// 1 / max(sqrt(1 - abar_k), eps), or max(sqrt(1 - abar_k), eps) when inverted.
double loss_weight(std::size_t k, const NoiseSchedule& sched, double loss_eps, bool invert = false);

// mean |target - pred| * loss_weight(k) over all elements.
double weighted_mae_loss(const Tensor& pred, const Tensor& target, std::size_t k, const NoiseSchedule& sched,
                         double loss_eps, bool invert = false);
// Graph version with one weight per row of pred [B, H].
nn::Var weighted_mae_loss(const nn::Var& pred, const Tensor& target, std::span<const double> row_weights);

// k ~ Uniform{1..K}
std::size_t sample_step(std::uint64_t key, std::size_t total_steps);

// Model inputs and targets for one batch of windows.
struct TrainBatch {
    Tensor past_patches;            // [B, Np, P], z-scored past
    std::vector<std::size_t> channel;
    Tensor future_patches;          // [B, Nf, P], corrupted target
    Tensor target;                  // [B, H], normalized clean future
    std::vector<double> t_frac;
    std::vector<double> weights;
    std::vector<std::size_t> steps;
};

// Normalizes each window (own future statistics in independent mode, past
// statistics in shared mode), draws k and the corruption noise from `key`.
TrainBatch make_batch(const DenoiserModel& model, std::span<const SeriesWindow* const> windows,
                      const NoiseSchedule& sched, const TrainConfig& cfg, std::uint64_t key);

struct StepResult {
    double loss = 0.0;
};

// Forward, weighted MAE, backward, one Adam update.
StepResult train_step(DenoiserModel& model, std::span<const SeriesWindow* const> windows,
                      const NoiseSchedule& sched, const TrainConfig& cfg, nn::AdamState& opt, std::uint64_t key);

struct HistoryRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_mse = 0.0;
    double lr = 0.0;
    double wall_seconds = 0.0;
};

// Patience counter on a metric that should decrease.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
    // Records one epoch's metric; true when it is a new best.
    bool update(double metric);
    bool should_stop() const { return bad_ >= patience_; }
    double best() const { return best_; }

private:
    std::size_t patience_;
    std::size_t bad_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct FitResult {
    std::vector<HistoryRow> history;
    std::size_t best_epoch = 0;
    double best_val_mse = 0.0;
    bool stopped_early = false;
};

std::string history_to_csv(const std::vector<HistoryRow>& rows);

// MSE of one deterministic strided draw per validation window.
double validation_mse(const DenoiserModel& model, std::span<const SeriesWindow> val, const NoiseSchedule& sched,
                      const TrainConfig& cfg);

// Trains with early stopping on validation MSE and restores the best
// parameters. `on_epoch` (optional) sees each history row as it is made.
FitResult fit(DenoiserModel& model, std::span<const SeriesWindow> train, std::span<const SeriesWindow> val,
              const TrainConfig& cfg, const std::function<void(const HistoryRow&)>& on_epoch = {});

}  // namespace simdiff
