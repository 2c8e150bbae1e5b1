#include "aptf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace aptf {

namespace {

void check_shapes(const Matrix& pred, const Matrix& target, const char* what) {
    if (!pred.same_shape(target)) {
        throw ShapeMismatch(std::string(what) + ": prediction/target shapes differ");
    }
    if (pred.size() == 0) throw ShapeMismatch(std::string(what) + ": empty input");
}

}  // namespace

double mse(const Matrix& pred, const Matrix& target) {
    check_shapes(pred, target, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double mae(const Matrix& pred, const Matrix& target) {
    check_shapes(pred, target, "mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        acc += std::abs(pred.data[i] - target.data[i]);
    }
    return acc / static_cast<double>(pred.size());
}

double wmape(const Matrix& pred, const Matrix& target) {
    check_shapes(pred, target, "wmape");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        num += std::abs(pred.data[i] - target.data[i]);
        den += std::abs(target.data[i]);
    }
    if (den == 0.0) throw ZeroDenominator("wmape: targets are all zero");
    return 100.0 * num / den;
}

double accuracy(const Matrix& logits, const std::vector<int>& labels) {
    if (logits.rows != labels.size()) {
        throw ShapeMismatch("accuracy: one label per row required");
    }
    if (logits.rows == 0) throw ShapeMismatch("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j) {
            if (logits(i, j) > logits(i, best)) best = j;
        }
        if (static_cast<int>(best) == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

std::vector<AggregateRow> aggregate(const std::vector<MetricRow>& rows) {
    using Key = std::tuple<std::string, std::string, std::string, int, std::string>;
    std::map<Key, std::vector<double>> groups;
    for (const auto& r : rows) {
        groups[{r.dataset, r.model, r.mode, r.horizon, r.metric}].push_back(r.value);
    }
    std::vector<AggregateRow> out;
    for (const auto& [key, values] : groups) {
        AggregateRow agg;
        std::tie(agg.dataset, agg.model, agg.mode, agg.horizon, agg.metric) = key;
        agg.count = values.size();
        for (double v : values) agg.mean += v;
        agg.mean /= static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
        agg.stddev = std::sqrt(ss / static_cast<double>(values.size()));
        out.push_back(std::move(agg));
    }
    return out;
}

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void write_report_csv(const std::vector<MetricRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_report_csv: cannot open " + path);
    out << "dataset,model,mode,horizon,seed,metric,value\n";
    for (const auto& r : rows) {
        out << r.dataset << ',' << r.model << ',' << r.mode << ',' << r.horizon << ',' << r.seed
            << ',' << r.metric << ',' << format_double(r.value) << '\n';
    }
    if (!out) throw Error("write_report_csv: write failed for " + path);
}

std::vector<MetricRow> read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("read_report_csv: cannot open " + path);
    std::string line;
    std::vector<MetricRow> rows;
    bool header_seen = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::stringstream ss(line);
        MetricRow r;
        std::string horizon, seed, value;
        if (!std::getline(ss, r.dataset, ',') || !std::getline(ss, r.model, ',') ||
            !std::getline(ss, r.mode, ',') || !std::getline(ss, horizon, ',') ||
            !std::getline(ss, seed, ',') || !std::getline(ss, r.metric, ',') ||
            !std::getline(ss, value)) {
            throw ParseError("read_report_csv: bad row " + std::to_string(lineno) + " in " + path);
        }
        try {
            r.horizon = std::stoi(horizon);
            r.seed = std::stoull(seed);
            r.value = std::stod(value);
        } catch (const std::exception&) {
            throw ParseError("read_report_csv: bad number on row " + std::to_string(lineno) +
                             " in " + path);
        }
        rows.push_back(std::move(r));
    }
    if (!header_seen) throw ParseError("read_report_csv: empty file " + path);
    return rows;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_aggregate_csv: cannot open " + path);
    out << "# std is the population standard deviation (n divisor)\n";
    out << "dataset,model,mode,horizon,metric,mean,std,n\n";
    for (const auto& r : rows) {
        out << r.dataset << ',' << r.model << ',' << r.mode << ',' << r.horizon << ',' << r.metric
            << ',' << format_double(r.mean) << ',' << format_double(r.stddev) << ',' << r.count
            << '\n';
    }
    if (!out) throw Error("write_aggregate_csv: write failed for " + path);
}

}  // namespace aptf
