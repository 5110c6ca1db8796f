#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simdiff/data.hpp"
#include "simdiff/denoiser.hpp"
#include "simdiff/diffusion.hpp"
#include "simdiff/ensemble.hpp"
#include "simdiff/metrics.hpp"
#include "simdiff/train.hpp"

// Config schema and the pipelines behind the command-line verbs.
namespace simdiff {

struct DataSpec {
    std::string path;               // CSV file; empty when synthesizing
    bool synth = false;
    DriftKind kind = DriftKind::trend;
    std::size_t length = 5000;
    std::size_t channels = 2;
    DriftParams params;
    std::size_t lookback = 96;
    std::size_t horizon = 24;
    std::array<double, 3> split_fractions{0.7, 0.1, 0.2};
    std::optional<SplitCounts> split_counts;
    bool standardize = true;        // z-score with train-split statistics
    std::size_t eval_stride = 1;    // test windows
};

struct BenchSpec {
    std::vector<std::size_t> horizons{96, 192, 336, 720};
    std::size_t repeats = 3;
};

struct RunConfig {
    DataSpec data;
    DenoiserConfig model;
    TrainConfig train;
    ReverseSamplerConfig sampler;
    std::size_t draws = 100;
    MoMConfig mom;
    BenchSpec bench;
    std::string out = "out";
    std::uint64_t seed = 0;
    std::size_t max_rows = 512;  // sequences per denoiser batch at inference

    // Propagates the run seed and window sizes into the component configs.
    void finalize();
};

// JSON text -> RunConfig. Unknown keys and invalid values raise ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

// Per-component seeds derived from the run seed.
std::uint64_t model_seed(std::uint64_t run_seed);
std::uint64_t sampler_seed(std::uint64_t run_seed);
std::uint64_t mom_seed(std::uint64_t run_seed);

struct PreparedData {
    Dataset ds;          // standardized when enabled
    Standardizer scaler; // identity when disabled
    std::vector<SeriesWindow> train, val, test;
};

Dataset build_dataset(const DataSpec& spec, std::uint64_t seed);
// Loads or synthesizes, splits, standardizes and windows. `scaler` replaces
// the fitted standardizer (used with a checkpoint).
PreparedData prepare_data(const DataSpec& spec, std::uint64_t seed,
                          const std::optional<Standardizer>& scaler = std::nullopt);

// Model checkpoint with the configuration needed to rebuild it.
struct ModelBundle {
    DenoiserConfig model;
    Standardizer scaler;
    TrainConfig schedule;  // schedule fields only are meaningful
    std::uint64_t seed = 0;
};
void save_model(const std::string& path, const DenoiserModel& model, const ModelBundle& meta);
// Throws ArtifactMismatch on a malformed or inconsistent file.
ModelBundle read_model_meta(const std::string& path);
DenoiserModel load_model(const std::string& path, ModelBundle* meta = nullptr);

// Draws [N, H, M] for each past block; keys identify windows.
using BatchForecastFn =
    std::function<std::vector<Tensor>(std::span<const Tensor> pasts, std::span<const std::uint64_t> keys)>;

// MoM groups are capped at the draw count.
MoMConfig effective_mom(const MoMConfig& cfg, std::size_t draws);

// Point metrics use draw 0 (single) and the MoM forecast (ensembled).
EvalReport evaluate_forecasts(std::span<const SeriesWindow> windows, const BatchForecastFn& forecast,
                              const MoMConfig& mom, std::size_t chunk = 32);

BatchForecastFn model_forecaster(const DenoiserModel& model, const NoiseSchedule& sched,
                                 const ReverseSamplerConfig& sampler, std::size_t draws, std::size_t max_rows);

struct AblationRow {
    bool ni = true;
    std::uint64_t seed = 0;
    std::uint64_t model_seed = 0;
    double mse = 0.0;     // single draw
    double mse_e = 0.0;   // MoM ensemble
    double best_val_mse = 0.0;
    std::size_t epochs = 0;
};
// Trains twins that differ only in the normalization path.
std::vector<AblationRow> run_ni_ablation(const RunConfig& cfg, const PreparedData& data);
std::string ablation_to_csv(const std::vector<AblationRow>& rows);

}  // namespace simdiff
