#include "aptf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace aptf {

std::string to_string(Task task) {
    return task == Task::Forecast ? "forecast" : "classify";
}

Task task_from_string(const std::string& name) {
    if (name == "forecast") return Task::Forecast;
    if (name == "classify") return Task::Classify;
    throw BadSpec("unknown task '" + name + "'");
}

SeriesTable generate_synthetic(Rng& rng, const SyntheticSpec& spec) {
    if (spec.length == 0) throw BadSpec("generate_synthetic: length must be > 0");
    if (spec.variables < 1) throw BadSpec("generate_synthetic: variables must be >= 1");
    if (spec.noise_std < 0.0) throw BadSpec("generate_synthetic: noise_std must be >= 0");
    if (spec.corrupt_frac < 0.0 || spec.corrupt_frac > 0.5) {
        throw BadSpec("generate_synthetic: corrupt_frac must be in [0, 0.5]");
    }
    if (spec.corrupt_frac > 0.0 && spec.corrupt_scale <= 1.0) {
        throw BadSpec("generate_synthetic: corrupt_scale must be > 1");
    }
    if (spec.process == SyntheticProcess::Ar1 && std::abs(spec.ar_coeff) >= 1.0) {
        throw BadSpec("generate_synthetic: |ar_coeff| must be < 1");
    }
    if (spec.process == SyntheticProcess::SeasonalTrend && spec.season_period <= 0.0) {
        throw BadSpec("generate_synthetic: season_period must be > 0");
    }

    const std::size_t t_len = spec.length;
    const auto vars = static_cast<std::size_t>(spec.variables);
    SeriesTable table;
    table.values = Matrix(t_len, vars);
    table.timestamps.resize(t_len);
    for (std::size_t t = 0; t < t_len; ++t) table.timestamps[t] = static_cast<std::int64_t>(t);
    for (std::size_t j = 0; j < vars; ++j) {
        table.columns.push_back("v" + std::to_string(j + 1));
    }

    for (std::size_t j = 0; j < vars; ++j) {
        if (spec.process == SyntheticProcess::Ar1) {
            const double stationary_std =
                spec.noise_std / std::sqrt(1.0 - spec.ar_coeff * spec.ar_coeff);
            double x = rng.gauss(0.0, stationary_std);
            table.values(0, j) = x;
            for (std::size_t t = 1; t < t_len; ++t) {
                x = spec.ar_coeff * x + rng.gauss(0.0, spec.noise_std);
                table.values(t, j) = x;
            }
        } else {
            const double phase = rng.uniform() * 2.0 * M_PI;
            for (std::size_t t = 0; t < t_len; ++t) {
                const double tt = static_cast<double>(t);
                table.values(t, j) =
                    spec.season_amplitude * std::sin(2.0 * M_PI * tt / spec.season_period + phase) +
                    spec.trend_slope * tt + rng.gauss(0.0, spec.noise_std);
            }
        }
    }

    table.corrupt_mask.assign(t_len, 0);
    const auto corrupt_count =
        static_cast<std::size_t>(std::llround(spec.corrupt_frac * static_cast<double>(t_len)));
    if (corrupt_count > 0) {
        // Partial Fisher-Yates: the first corrupt_count entries are a uniform
        // draw without replacement.
        std::vector<std::size_t> idx(t_len);
        for (std::size_t t = 0; t < t_len; ++t) idx[t] = t;
        for (std::size_t i = 0; i < corrupt_count; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (t_len - i));
            std::swap(idx[i], idx[j]);
        }
        const double heavy_std = spec.corrupt_scale * spec.noise_std;
        for (std::size_t i = 0; i < corrupt_count; ++i) {
            const std::size_t t = idx[i];
            table.corrupt_mask[t] = 1;
            for (std::size_t j = 0; j < vars; ++j) {
                table.values(t, j) += rng.gauss(0.0, heavy_std);
            }
        }
    }
    return table;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Howard Hinnant's civil-days algorithm.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::int64_t parse_timestamp(const std::string& raw, std::size_t row) {
    const std::string s = trim(raw);
    if (s.empty()) throw ParseError("csv row " + std::to_string(row) + ": empty timestamp");
    // ISO-8601 date or datetime
    if (s.size() >= 10 && s[4] == '-' && s[7] == '-') {
        int y, mo, d, h = 0, mi = 0, se = 0;
        char sep = 0;
        int fields = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &se);
        if (fields < 3 || (fields > 3 && sep != 'T' && sep != ' ')) {
            throw ParseError("csv row " + std::to_string(row) + ": bad timestamp '" + s + "'");
        }
        return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
    }
    try {
        std::size_t used = 0;
        const std::int64_t v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("csv row " + std::to_string(row) + ": bad timestamp '" + s + "'");
    }
}

double parse_value(const std::string& raw, std::size_t row, const std::string& col) {
    try {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        while (used < raw.size() &&
               (raw[used] == ' ' || raw[used] == '\t' || raw[used] == '\r')) {
            ++used;
        }
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw ParseError("csv row " + std::to_string(row) + ", column '" + col + "': bad value '" +
                         trim(raw) + "'");
    }
}

}  // namespace

SeriesTable load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_csv: cannot open " + path);

    std::string line;
    std::size_t row = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty() || line[0] == '#') continue;
        for (auto& h : split_line(line)) header.push_back(trim(h));
        break;
    }
    if (header.empty()) throw ParseError("load_csv: missing header in " + path);

    std::size_t ts_col = 0;
    if (!schema.timestamp_column.empty()) {
        auto it = std::find(header.begin(), header.end(), schema.timestamp_column);
        if (it == header.end()) {
            throw ParseError("load_csv: timestamp column '" + schema.timestamp_column +
                             "' not in header");
        }
        ts_col = static_cast<std::size_t>(it - header.begin());
    }
    std::vector<std::size_t> value_cols;
    if (schema.value_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c != ts_col) value_cols.push_back(c);
        }
    } else {
        for (const auto& name : schema.value_columns) {
            auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) {
                throw ParseError("load_csv: value column '" + name + "' not in header");
            }
            value_cols.push_back(static_cast<std::size_t>(it - header.begin()));
        }
    }
    if (value_cols.empty()) throw ParseError("load_csv: no value columns in " + path);

    SeriesTable table;
    for (std::size_t c : value_cols) table.columns.push_back(header[c]);
    std::vector<double> row_values(value_cols.size());
    std::vector<double> last_values(value_cols.size(), 0.0);
    bool have_last = false;

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty() || line[0] == '#') continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw ParseError("csv row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        }
        const std::int64_t ts = parse_timestamp(cells[ts_col], row);
        if (!table.timestamps.empty() && ts <= table.timestamps.back()) {
            throw NonMonotonicTimestamps("csv row " + std::to_string(row) +
                                         ": timestamps must strictly increase");
        }
        for (std::size_t k = 0; k < value_cols.size(); ++k) {
            const std::string cell = trim(cells[value_cols[k]]);
            if (cell.empty()) {
                if (schema.gaps == CsvSchema::GapPolicy::ForwardFill && have_last) {
                    row_values[k] = last_values[k];
                    continue;
                }
                throw ParseError("csv row " + std::to_string(row) + ", column '" +
                                 header[value_cols[k]] + "': missing value");
            }
            row_values[k] = parse_value(cell, row, header[value_cols[k]]);
        }
        table.timestamps.push_back(ts);
        rows.push_back(row_values);
        last_values = row_values;
        have_last = true;
    }
    if (rows.empty()) throw ParseError("load_csv: no data rows in " + path);

    table.values = Matrix(rows.size(), value_cols.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < value_cols.size(); ++c) table.values(r, c) = rows[r][c];
    }
    return table;
}

void save_csv(const SeriesTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("save_csv: cannot open " + path);
    out << "timestamp";
    for (const auto& c : table.columns) out << ',' << c;
    out << '\n';
    char buf[40];
    for (std::size_t t = 0; t < table.length(); ++t) {
        out << table.timestamps[t];
        for (std::size_t j = 0; j < table.variables(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", table.values(t, j));
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw Error("save_csv: write failed for " + path);
}

std::vector<Sample> windowize(const SeriesTable& table, int lookback, int horizon, Task task,
                              const std::vector<int>* labels) {
    if (lookback < 1) throw BadSpec("windowize: lookback must be >= 1");
    const bool forecast = task == Task::Forecast;
    if (forecast && horizon < 1) throw BadSpec("windowize: horizon must be >= 1");

    const auto L = static_cast<std::size_t>(lookback);
    const auto m = forecast ? static_cast<std::size_t>(horizon) : 0;
    const std::size_t span = L + m;
    if (table.length() < span) {
        throw TooShort("windowize: series length " + std::to_string(table.length()) +
                       " < window span " + std::to_string(span));
    }
    const std::size_t count = table.length() - span + 1;
    if (!forecast) {
        if (labels == nullptr) throw BadSpec("windowize: classification requires labels");
        if (labels->size() != count) {
            throw ShapeMismatch("windowize: " + std::to_string(count) + " windows but " +
                                std::to_string(labels->size()) + " labels");
        }
    }

    const std::size_t vars = table.variables();
    std::vector<Sample> samples;
    samples.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        Sample sample;
        sample.start = s;
        sample.span = span;
        sample.input = Matrix(L, vars);
        for (std::size_t l = 0; l < L; ++l) {
            for (std::size_t j = 0; j < vars; ++j) sample.input(l, j) = table.values(s + l, j);
        }
        if (forecast) {
            sample.target = Matrix(m, vars);
            for (std::size_t h = 0; h < m; ++h) {
                for (std::size_t j = 0; j < vars; ++j) {
                    sample.target(h, j) = table.values(s + L + h, j);
                }
            }
        } else {
            sample.label = (*labels)[s];
        }
        if (!table.corrupt_mask.empty()) {
            for (std::size_t t = s; t < s + span; ++t) {
                if (table.corrupt_mask[t]) {
                    sample.corrupted = true;
                    break;
                }
            }
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

SplitResult split_chrono(const std::vector<Sample>& samples, const SplitSpec& spec) {
    if (spec.train < 0.0 || spec.val < 0.0 || spec.test < 0.0 ||
        std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
        throw BadSpec("split_chrono: fractions must be nonnegative and sum to 1");
    }
    const std::size_t n = samples.size();
    const auto b1 = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(n)));
    const auto b2 =
        static_cast<std::size_t>(std::floor((spec.train + spec.val) * static_cast<double>(n)));
    if (b1 == 0 || b1 >= b2 || b2 >= n) {
        throw EmptySplit("split_chrono: a partition would be empty");
    }

    // Boundary timesteps are the starts of the first val/test windows; any
    // earlier-split window reaching them is dropped.
    const std::size_t val_start_ts = samples[b1].start;
    const std::size_t test_start_ts = samples[b2].start;

    SplitResult result;
    for (std::size_t i = 0; i < b1; ++i) {
        if (samples[i].start + samples[i].span <= val_start_ts) result.train.push_back(samples[i]);
    }
    for (std::size_t i = b1; i < b2; ++i) {
        if (samples[i].start + samples[i].span <= test_start_ts) result.val.push_back(samples[i]);
    }
    for (std::size_t i = b2; i < n; ++i) result.test.push_back(samples[i]);

    if (result.train.empty() || result.val.empty() || result.test.empty()) {
        throw EmptySplit("split_chrono: a partition is empty after boundary drops");
    }
    return result;
}

namespace {

void apply_norm(Matrix& m, const NormStats& stats) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            m(i, j) = (m(i, j) - stats.mean[j]) / stats.stddev[j];
        }
    }
}

}  // namespace

NormStats normalize_train_stats(std::vector<Sample>& train, std::vector<Sample>& val,
                                std::vector<Sample>& test, Task task) {
    if (train.empty()) throw BadSpec("normalize_train_stats: empty train split");
    const std::size_t vars = train[0].input.cols;
    const bool use_targets = task == Task::Forecast;

    NormStats stats;
    stats.mean.assign(vars, 0.0);
    stats.stddev.assign(vars, 0.0);
    std::vector<std::size_t> counts(vars, 0);
    auto accumulate = [&](const Matrix& m, auto&& fn) {
        for (std::size_t i = 0; i < m.rows; ++i) {
            for (std::size_t j = 0; j < m.cols; ++j) fn(j, m(i, j));
        }
    };
    for (const auto& s : train) {
        accumulate(s.input, [&](std::size_t j, double x) {
            stats.mean[j] += x;
            ++counts[j];
        });
        if (use_targets) {
            accumulate(s.target, [&](std::size_t j, double x) {
                stats.mean[j] += x;
                ++counts[j];
            });
        }
    }
    for (std::size_t j = 0; j < vars; ++j) stats.mean[j] /= static_cast<double>(counts[j]);
    for (const auto& s : train) {
        accumulate(s.input, [&](std::size_t j, double x) {
            stats.stddev[j] += (x - stats.mean[j]) * (x - stats.mean[j]);
        });
        if (use_targets) {
            accumulate(s.target, [&](std::size_t j, double x) {
                stats.stddev[j] += (x - stats.mean[j]) * (x - stats.mean[j]);
            });
        }
    }
    for (std::size_t j = 0; j < vars; ++j) {
        stats.stddev[j] = std::max(std::sqrt(stats.stddev[j] / static_cast<double>(counts[j])), 1e-8);
    }

    for (auto* split : {&train, &val, &test}) {
        for (auto& s : *split) {
            apply_norm(s.input, stats);
            if (use_targets) apply_norm(s.target, stats);
        }
    }
    return stats;
}

void denormalize(Matrix& values, const NormStats& stats) {
    for (std::size_t i = 0; i < values.rows; ++i) {
        for (std::size_t j = 0; j < values.cols; ++j) {
            values(i, j) = values(i, j) * stats.stddev[j] + stats.mean[j];
        }
    }
}

std::size_t corrupt_sample_targets(std::vector<Sample>& samples, Rng& rng, double frac,
                                   double noise_std) {
    if (frac < 0.0 || frac > 0.5) {
        throw BadSpec("corrupt_sample_targets: frac must be in [0, 0.5]");
    }
    const std::size_t n = samples.size();
    const auto count = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
    if (count == 0) return 0;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < count; ++i) {
        auto& s = samples[idx[i]];
        if (s.target.size() == 0) throw BadSpec("corrupt_sample_targets: sample has no target");
        for (auto& x : s.target.data) x += rng.gauss(0.0, noise_std);
        s.corrupted = true;
    }
    return count;
}

}  // namespace aptf
