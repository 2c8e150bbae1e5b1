#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aptf/numeric.hpp"

namespace aptf {

/// Mean over all elements of squared error.
double mse(const Matrix& pred, const Matrix& target);

/// Mean over all elements of absolute error.
double mae(const Matrix& pred, const Matrix& target);

/// 100 * sum|pred - target| / sum|target|. Throws ZeroDenominator when the
/// targets are all zero.
double wmape(const Matrix& pred, const Matrix& target);

/// Fraction of rows whose argmax logit equals the label; argmax ties break
/// toward the lowest class index.
double accuracy(const Matrix& logits, const std::vector<int>& labels);

/// One raw metric observation from one run cell.
struct MetricRow {
    std::string dataset;
    std::string model;
    std::string mode;
    int horizon = 0;
    std::uint64_t seed = 0;
    std::string metric;
    double value = 0.0;
};

/// Mean and population standard deviation over seeds within one
/// (dataset, model, mode, horizon, metric) group.
struct AggregateRow {
    std::string dataset;
    std::string model;
    std::string mode;
    int horizon = 0;
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
};

std::vector<AggregateRow> aggregate(const std::vector<MetricRow>& rows);

/// Report CSV: dataset,model,mode,horizon,seed,metric,value.
void write_report_csv(const std::vector<MetricRow>& rows, const std::string& path);
std::vector<MetricRow> read_report_csv(const std::string& path);

/// Aggregate CSV adds mean and std columns; the header comment documents the
/// population (n divisor) convention.
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::string& path);

/// Deterministic shortest-exact float formatting used by every CSV writer.
std::string format_double(double value);

}  // namespace aptf
