#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "simdiff/tensor.hpp"

namespace simdiff {

struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

enum class Split { train, val, test };
std::string_view to_string(Split split);

enum class DriftKind { trend, level_shift, scale_shift };
std::string_view to_string(DriftKind kind);
DriftKind parse_drift_kind(std::string_view name);

struct DriftParams {
    double period = 24.0;
    double amplitude = 1.0;
    double slope = 0.0;         // trend: added a * t
    double shift = 0.0;         // level_shift: step size
    double shift_at = 0.5;      // level_shift: fraction of T where the step happens
    double scale_end = 1.0;     // scale_shift: amplitude multiplier reached at t = T - 1
    double noise = 0.0;         // Gaussian noise std
};

// Parameters the generator actually used, kept for assertions.
struct DriftTruth {
    DriftKind kind = DriftKind::trend;
    DriftParams params;
    std::vector<double> phase;  // per channel
    std::size_t shift_index = 0;
    std::uint64_t seed = 0;
};

struct Dataset {
    std::string name;
    Tensor values;  // [T, M]
    std::vector<std::string> columns;
    SplitCounts splits;
    std::optional<DriftTruth> truth;

    std::size_t length() const { return values.empty() ? 0 : values.dim(0); }
    std::size_t channels() const { return values.rank() == 2 ? values.dim(1) : 0; }
    // Half-open [begin, end) index range of a split.
    std::pair<std::size_t, std::size_t> range(Split split) const;
};

struct SeriesWindow {
    Tensor x;  // [L, M]
    Tensor y;  // [H, M]
    std::size_t origin = 0;  // index of x's first row in the full series
};

// CSV with a header row. A first column whose header is t/index/date/time/timestamp/datetime
// (any case) or whose first data cell is not a number is skipped.
Dataset load_csv(const std::string& path);
Dataset parse_csv(const std::string& text, const std::string& name = "csv");
std::string dataset_to_csv(const Dataset& ds);

// Chronological split sizes from fractions (test takes the remainder).
SplitCounts split_from_fractions(std::size_t length, std::array<double, 3> fractions);
// Validates counts against the series length and window size.
void set_splits(Dataset& ds, SplitCounts counts, std::size_t lookback, std::size_t horizon);

// Sliding windows fully inside one split; origins begin, begin + stride, ...
std::size_t window_count(std::size_t split_len, std::size_t lookback, std::size_t horizon, std::size_t stride = 1);
std::vector<SeriesWindow> windows(const Dataset& ds, Split split, std::size_t lookback, std::size_t horizon,
                                  std::size_t stride = 1);

// Per-channel z-score fitted on the train split and applied to all rows.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;
};
Standardizer fit_standardizer(const Dataset& ds);
void apply_standardizer(Dataset& ds, const Standardizer& st);

// Sinusoid per channel (random phase) plus drift plus noise.
Dataset synth_drift(DriftKind kind, std::size_t length, std::size_t channels, const DriftParams& params,
                    std::uint64_t seed);

}  // namespace simdiff
