#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aptf/numeric.hpp"

namespace aptf {

enum class Task { Forecast, Classify };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

/// Raw multivariate series: strictly increasing timestamps, T x v values,
/// optional per-timestep corruption mask (synthetic data only).
struct SeriesTable {
    std::vector<std::int64_t> timestamps;
    Matrix values;                       // T x v
    std::vector<std::uint8_t> corrupt_mask;  // empty when no ground truth exists
    std::vector<std::string> columns;

    std::size_t length() const { return values.rows; }
    std::size_t variables() const { return values.cols; }
};

/// One training sample cut from a series. For forecasting the target holds
/// the horizon rows immediately following the input window; for
/// classification the label holds the class and target stays empty.
struct Sample {
    Matrix input;        // L x v
    Matrix target;       // m x v (forecast)
    int label = -1;      // classify
    bool corrupted = false;
    std::size_t start = 0;  // window start timestep
    std::size_t span = 0;   // timesteps covered (input + target)
};

struct SplitSpec {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct SplitResult {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
};

enum class SyntheticProcess { Ar1, SeasonalTrend };

struct SyntheticSpec {
    std::size_t length = 2000;
    int variables = 1;
    SyntheticProcess process = SyntheticProcess::Ar1;
    double ar_coeff = 0.9;        // AR(1) coefficient, |a| < 1
    double noise_std = 0.1;       // base innovation noise
    double season_period = 24.0;  // seasonal+trend process
    double season_amplitude = 1.0;
    double trend_slope = 0.0;
    double corrupt_frac = 0.0;    // fraction of timesteps hit by heavy noise
    double corrupt_scale = 4.0;   // heavy-noise std = corrupt_scale * noise_std
};

/// Generates a synthetic series with exactly round(corrupt_frac * length)
/// corrupted timesteps, marked in the mask. Deterministic per rng seed.
SeriesTable generate_synthetic(Rng& rng, const SyntheticSpec& spec);

struct CsvSchema {
    std::string timestamp_column;            // empty = first column
    std::vector<std::string> value_columns;  // empty = all non-timestamp columns
    enum class GapPolicy { Reject, ForwardFill } gaps = GapPolicy::Reject;
};

/// Headered CSV, UTF-8, `#`-prefixed comment lines ignored. Timestamps are
/// ISO-8601 dates/datetimes or plain integers and must strictly increase.
SeriesTable load_csv(const std::string& path, const CsvSchema& schema = {});

void save_csv(const SeriesTable& table, const std::string& path);

/// Stride-1 sliding windows. Forecasting yields length - L - m + 1 samples;
/// classification requires one label per window (length - L + 1 of them).
/// A sample is flagged corrupted iff any timestep it covers is masked.
std::vector<Sample> windowize(const SeriesTable& table, int lookback, int horizon, Task task,
                              const std::vector<int>* labels = nullptr);

/// Contiguous chronological split by sample counts; windows that straddle a
/// boundary are dropped from the earlier side so no later-split timestep
/// appears in any earlier-split window.
SplitResult split_chrono(const std::vector<Sample>& samples, const SplitSpec& spec);

/// Per-variable standardization statistics, computed on train only.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // floored at 1e-8
};

/// Standardizes inputs (and forecast targets) of all three splits in place
/// using train statistics.
NormStats normalize_train_stats(std::vector<Sample>& train, std::vector<Sample>& val,
                                std::vector<Sample>& test, Task task);

void denormalize(Matrix& values, const NormStats& stats);

/// Adds heavy noise to the targets of exactly round(frac * n) samples and
/// flags them; inputs stay clean, so the corrupted samples remain
/// informative. Returns the corrupted count.
std::size_t corrupt_sample_targets(std::vector<Sample>& samples, Rng& rng, double frac,
                                   double noise_std);

}  // namespace aptf
