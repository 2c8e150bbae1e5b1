#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptf/baselines.hpp"
#include "aptf/metrics.hpp"
#include "aptf/trainer.hpp"

namespace aptf {

enum class CorruptScope { Series, Targets };

struct DatasetConfig {
    std::string kind = "synthetic";  // "synthetic" or "csv"
    SyntheticSpec synthetic;
    std::uint64_t seed = 1;          // generation seed, shared by every cell
    CorruptScope corrupt_scope = CorruptScope::Series;
    std::string path;                // csv
    CsvSchema csv_schema;
    int lookback = 24;
    int horizon = 8;
    SplitSpec split;
    bool normalize = true;
};

struct ExperimentConfig {
    std::string name = "experiment";
    Task task = Task::Forecast;
    DatasetConfig dataset;
    ModelSpec model;
    ModelSpec amort_model;           // peer for hpl_amortized / coteaching
    TrainerConfig trainer;
    CoteachingConfig coteaching;
    SelfPacedConfig self_paced;
    std::vector<std::string> modes{"plain"};
    std::vector<std::uint64_t> seeds{0};
    std::string out_dir = "runs/experiment";
    int jobs = 1;

    nlohmann::json effective;        // fully-merged config tree, written to the run dir
};

/// Built-in defaults; user files override any subset of keys.
nlohmann::json default_config();

/// Parses and validates a merged config tree. Throws ConfigError naming the
/// offending key.
ExperimentConfig parse_config(const nlohmann::json& merged);

/// Reads a config file, deep-merges it over the defaults, and parses it.
ExperimentConfig load_config(const std::string& path);

struct PreparedData {
    std::vector<Sample> train, val, test;
    NormStats stats;
    Task task = Task::Forecast;
    std::string dataset_name;
};

PreparedData prepare_data(const DatasetConfig& dataset, Task task);

/// Runs every (mode x seed) cell and writes the run directory: config copy,
/// per-cell JSONL logs and checkpoints, report.csv, aggregate.csv and
/// plot_val.csv. Returns the report rows.
std::vector<MetricRow> run_experiment(const ExperimentConfig& cfg);

/// Trains one cell against already-prepared data (acceptance tests reuse
/// this to stay on the exact run_experiment code path).
struct CellResult {
    ModelState model;
    TrainLog log;
    std::vector<MetricRow> rows;
};
CellResult run_cell(const ExperimentConfig& cfg, const PreparedData& data,
                    const std::string& mode, std::uint64_t seed);

/// Side-by-side comparison of run directories: stdout table plus a CSV next
/// to it. Throws IncompatibleRuns when row sets differ.
void compare_runs(const std::vector<std::string>& run_dirs, const std::string& out_csv,
                  std::ostream& out);

/// One run per value of a config key (dotted path); writes a summary CSV of
/// the final validation metric per value.
void sweep_runs(const std::string& config_path, const std::string& param,
                const std::vector<std::string>& values, const std::string& out_root,
                std::ostream& out);

/// CLI entry point; returns the process exit code (0 ok, 2 config error,
/// 3 runtime error).
int cli_main(int argc, const char* const* argv);

}  // namespace aptf
