#include "aptf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

namespace aptf {

namespace fs = std::filesystem;
using json = nlohmann::json;

json default_config() {
    return json{
        {"name", "experiment"},
        {"task", "forecast"},
        {"dataset",
         {
             {"kind", "synthetic"},
             {"length", 2000},
             {"variables", 1},
             {"process", "ar1"},
             {"ar_coeff", 0.9},
             {"noise_std", 0.1},
             {"season_period", 24.0},
             {"season_amplitude", 1.0},
             {"trend_slope", 0.0},
             {"corrupt_frac", 0.0},
             {"corrupt_scale", 4.0},
             {"corrupt_scope", "series"},
             {"seed", 1},
             {"path", ""},
             {"timestamp_column", ""},
             {"value_columns", json::array()},
             {"gap_policy", "reject"},
             {"lookback", 24},
             {"horizon", 8},
             {"split", {{"train", 0.7}, {"val", 0.1}, {"test", 0.2}}},
             {"normalize", true},
         }},
        {"model", {{"kind", "linear_forecaster"}, {"hidden", 32}, {"classes", 2}}},
        {"amortization_model", nullptr},
        {"trainer",
         {
             {"epochs", 30},
             {"batch_size", 64},
             {"shuffle", true},
             {"optimizer", {{"kind", "adam"}, {"lr", 0.01}}},
             {"stage_plan",
              {
                  {"epoch_interval", 2},
                  {"initial_buckets", 9},
                  {"bucket_decrement", 1},
                  {"max_stages", 0},
                  {"trim_leading", false},
              }},
             {"tsc", {{"low_weight", 0.1}, {"growth_rate", 0.025}, {"initial_fraction", 0.0}}},
             {"coteaching", {{"forget_rate", 0.3}, {"ramp_epochs", 10}}},
             {"self_paced", {{"initial_threshold", 1.0}, {"growth", 1.3}}},
         }},
        {"modes", json::array({"plain"})},
        {"seeds", json::array({0})},
        {"out_dir", "runs/experiment"},
        {"jobs", 1},
    };
}

namespace {

void deep_merge(json& base, const json& overlay) {
    if (!overlay.is_object() || !base.is_object()) {
        base = overlay;
        return;
    }
    for (const auto& [key, value] : overlay.items()) {
        if (base.contains(key) && base[key].is_object() && value.is_object()) {
            deep_merge(base[key], value);
        } else {
            base[key] = value;
        }
    }
}

[[noreturn]] void config_fail(const std::string& key, const std::string& detail) {
    throw ConfigError("config key '" + key + "': " + detail);
}

template <typename T>
T get_as(const json& node, const std::string& key, const char* type_name) {
    try {
        return node.get<T>();
    } catch (const json::exception&) {
        config_fail(key, std::string("expected ") + type_name);
    }
}

const std::set<std::string> kKnownModes = {"plain",     "fixed",         "hpl",
                                           "evolving",  "tsc_two_bucket", "hpl_amortized",
                                           "coteaching", "self_paced"};

ModelSpec parse_model(const json& node, const std::string& key, Task task, int lookback,
                      int horizon, int variables) {
    ModelSpec spec;
    spec.kind = [&] {
        const auto name = get_as<std::string>(node.at("kind"), key + ".kind", "string");
        try {
            return model_kind_from_string(name);
        } catch (const BadSpec& e) {
            config_fail(key + ".kind", e.what());
        }
    }();
    spec.lookback = lookback;
    spec.horizon = horizon;
    spec.variables = variables;
    spec.hidden = get_as<int>(node.at("hidden"), key + ".hidden", "integer");
    spec.classes = get_as<int>(node.at("classes"), key + ".classes", "integer");
    if (task == Task::Classify && !spec.is_classifier()) {
        config_fail(key + ".kind", "classification task needs mlp_classifier");
    }
    if (task == Task::Forecast && spec.is_classifier()) {
        config_fail(key + ".kind", "forecast task needs a forecaster model");
    }
    return spec;
}

}  // namespace

ExperimentConfig parse_config(const json& merged) {
    ExperimentConfig cfg;
    cfg.effective = merged;
    cfg.name = get_as<std::string>(merged.at("name"), "name", "string");
    try {
        cfg.task = task_from_string(get_as<std::string>(merged.at("task"), "task", "string"));
    } catch (const BadSpec& e) {
        config_fail("task", e.what());
    }

    const json& ds = merged.at("dataset");
    cfg.dataset.kind = get_as<std::string>(ds.at("kind"), "dataset.kind", "string");
    if (cfg.dataset.kind != "synthetic" && cfg.dataset.kind != "csv") {
        config_fail("dataset.kind", "must be 'synthetic' or 'csv'");
    }
    auto& syn = cfg.dataset.synthetic;
    syn.length = get_as<std::size_t>(ds.at("length"), "dataset.length", "integer");
    syn.variables = get_as<int>(ds.at("variables"), "dataset.variables", "integer");
    const auto process = get_as<std::string>(ds.at("process"), "dataset.process", "string");
    if (process == "ar1") {
        syn.process = SyntheticProcess::Ar1;
    } else if (process == "seasonal_trend") {
        syn.process = SyntheticProcess::SeasonalTrend;
    } else {
        config_fail("dataset.process", "must be 'ar1' or 'seasonal_trend'");
    }
    syn.ar_coeff = get_as<double>(ds.at("ar_coeff"), "dataset.ar_coeff", "number");
    syn.noise_std = get_as<double>(ds.at("noise_std"), "dataset.noise_std", "number");
    syn.season_period = get_as<double>(ds.at("season_period"), "dataset.season_period", "number");
    syn.season_amplitude =
        get_as<double>(ds.at("season_amplitude"), "dataset.season_amplitude", "number");
    syn.trend_slope = get_as<double>(ds.at("trend_slope"), "dataset.trend_slope", "number");
    syn.corrupt_frac = get_as<double>(ds.at("corrupt_frac"), "dataset.corrupt_frac", "number");
    syn.corrupt_scale = get_as<double>(ds.at("corrupt_scale"), "dataset.corrupt_scale", "number");
    const auto scope = get_as<std::string>(ds.at("corrupt_scope"), "dataset.corrupt_scope",
                                           "string");
    if (scope == "series") {
        cfg.dataset.corrupt_scope = CorruptScope::Series;
    } else if (scope == "targets") {
        cfg.dataset.corrupt_scope = CorruptScope::Targets;
    } else {
        config_fail("dataset.corrupt_scope", "must be 'series' or 'targets'");
    }
    cfg.dataset.seed = get_as<std::uint64_t>(ds.at("seed"), "dataset.seed", "integer");
    cfg.dataset.path = get_as<std::string>(ds.at("path"), "dataset.path", "string");
    cfg.dataset.csv_schema.timestamp_column =
        get_as<std::string>(ds.at("timestamp_column"), "dataset.timestamp_column", "string");
    for (const auto& col : ds.at("value_columns")) {
        cfg.dataset.csv_schema.value_columns.push_back(
            get_as<std::string>(col, "dataset.value_columns", "string"));
    }
    const auto gaps = get_as<std::string>(ds.at("gap_policy"), "dataset.gap_policy", "string");
    if (gaps == "reject") {
        cfg.dataset.csv_schema.gaps = CsvSchema::GapPolicy::Reject;
    } else if (gaps == "forward_fill") {
        cfg.dataset.csv_schema.gaps = CsvSchema::GapPolicy::ForwardFill;
    } else {
        config_fail("dataset.gap_policy", "must be 'reject' or 'forward_fill'");
    }
    if (cfg.dataset.kind == "csv" && cfg.dataset.path.empty()) {
        config_fail("dataset.path", "required for csv datasets");
    }
    cfg.dataset.lookback = get_as<int>(ds.at("lookback"), "dataset.lookback", "integer");
    cfg.dataset.horizon = get_as<int>(ds.at("horizon"), "dataset.horizon", "integer");
    const json& split = ds.at("split");
    cfg.dataset.split.train = get_as<double>(split.at("train"), "dataset.split.train", "number");
    cfg.dataset.split.val = get_as<double>(split.at("val"), "dataset.split.val", "number");
    cfg.dataset.split.test = get_as<double>(split.at("test"), "dataset.split.test", "number");
    cfg.dataset.normalize = get_as<bool>(ds.at("normalize"), "dataset.normalize", "boolean");

    const int variables = cfg.dataset.kind == "synthetic"
                              ? syn.variables
                              : std::max<int>(1, static_cast<int>(
                                                     cfg.dataset.csv_schema.value_columns.size()));
    cfg.model = parse_model(merged.at("model"), "model", cfg.task, cfg.dataset.lookback,
                            cfg.dataset.horizon, variables);
    if (merged.at("amortization_model").is_null()) {
        cfg.amort_model = cfg.model;
    } else {
        cfg.amort_model = parse_model(merged.at("amortization_model"), "amortization_model",
                                      cfg.task, cfg.dataset.lookback, cfg.dataset.horizon,
                                      variables);
    }

    const json& tr = merged.at("trainer");
    cfg.trainer.epochs = get_as<int>(tr.at("epochs"), "trainer.epochs", "integer");
    cfg.trainer.batch_size = get_as<int>(tr.at("batch_size"), "trainer.batch_size", "integer");
    cfg.trainer.shuffle = get_as<bool>(tr.at("shuffle"), "trainer.shuffle", "boolean");
    const json& opt = tr.at("optimizer");
    const auto opt_kind = get_as<std::string>(opt.at("kind"), "trainer.optimizer.kind", "string");
    if (opt_kind == "sgd") {
        cfg.trainer.optimizer.kind = OptKind::Sgd;
    } else if (opt_kind == "adam") {
        cfg.trainer.optimizer.kind = OptKind::Adam;
    } else {
        config_fail("trainer.optimizer.kind", "must be 'sgd' or 'adam'");
    }
    cfg.trainer.optimizer.lr = get_as<double>(opt.at("lr"), "trainer.optimizer.lr", "number");
    if (cfg.trainer.optimizer.lr <= 0.0) config_fail("trainer.optimizer.lr", "must be > 0");

    const json& plan = tr.at("stage_plan");
    cfg.trainer.stage_plan.epoch_interval =
        get_as<int>(plan.at("epoch_interval"), "trainer.stage_plan.epoch_interval", "integer");
    cfg.trainer.stage_plan.initial_buckets =
        get_as<int>(plan.at("initial_buckets"), "trainer.stage_plan.initial_buckets", "integer");
    cfg.trainer.stage_plan.bucket_decrement = get_as<int>(
        plan.at("bucket_decrement"), "trainer.stage_plan.bucket_decrement", "integer");
    cfg.trainer.stage_plan.max_stages =
        get_as<int>(plan.at("max_stages"), "trainer.stage_plan.max_stages", "integer");
    cfg.trainer.stage_plan.trim_leading =
        get_as<bool>(plan.at("trim_leading"), "trainer.stage_plan.trim_leading", "boolean");
    if (cfg.trainer.stage_plan.epoch_interval < 1) {
        config_fail("trainer.stage_plan.epoch_interval", "must be >= 1");
    }
    if (cfg.trainer.stage_plan.initial_buckets < 2) {
        config_fail("trainer.stage_plan.initial_buckets", "must be >= 2");
    }
    if (cfg.trainer.stage_plan.bucket_decrement < 1) {
        config_fail("trainer.stage_plan.bucket_decrement", "must be >= 1");
    }

    const json& tsc = tr.at("tsc");
    cfg.trainer.tsc.low_weight = get_as<double>(tsc.at("low_weight"), "trainer.tsc.low_weight",
                                                "number");
    cfg.trainer.tsc.growth_rate =
        get_as<double>(tsc.at("growth_rate"), "trainer.tsc.growth_rate", "number");
    cfg.trainer.tsc.penalty_fraction =
        get_as<double>(tsc.at("initial_fraction"), "trainer.tsc.initial_fraction", "number");
    if (cfg.trainer.tsc.penalty_fraction < 0.0 || cfg.trainer.tsc.penalty_fraction > 0.5) {
        config_fail("trainer.tsc.initial_fraction", "must be in [0, 0.5]");
    }

    const json& ct = tr.at("coteaching");
    cfg.coteaching.forget_rate =
        get_as<double>(ct.at("forget_rate"), "trainer.coteaching.forget_rate", "number");
    cfg.coteaching.ramp_epochs =
        get_as<int>(ct.at("ramp_epochs"), "trainer.coteaching.ramp_epochs", "integer");
    if (cfg.coteaching.forget_rate < 0.0 || cfg.coteaching.forget_rate > 0.5) {
        config_fail("trainer.coteaching.forget_rate", "must be in [0, 0.5]");
    }
    const json& sp = tr.at("self_paced");
    cfg.self_paced.initial_threshold = get_as<double>(
        sp.at("initial_threshold"), "trainer.self_paced.initial_threshold", "number");
    cfg.self_paced.growth = get_as<double>(sp.at("growth"), "trainer.self_paced.growth", "number");

    cfg.modes.clear();
    for (const auto& mode : merged.at("modes")) {
        const auto name = get_as<std::string>(mode, "modes", "string");
        if (!kKnownModes.count(name)) config_fail("modes", "unknown mode '" + name + "'");
        cfg.modes.push_back(name);
    }
    if (cfg.modes.empty()) config_fail("modes", "must list at least one mode");
    cfg.seeds.clear();
    for (const auto& seed : merged.at("seeds")) {
        cfg.seeds.push_back(get_as<std::uint64_t>(seed, "seeds", "integer"));
    }
    if (cfg.seeds.empty()) config_fail("seeds", "must list at least one seed");
    cfg.out_dir = get_as<std::string>(merged.at("out_dir"), "out_dir", "string");
    cfg.jobs = get_as<int>(merged.at("jobs"), "jobs", "integer");
    if (cfg.jobs < 1) cfg.jobs = 1;
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json user = json::parse(in, nullptr, false, true);
    if (user.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
    json merged = default_config();
    deep_merge(merged, user);
    return parse_config(merged);
}

namespace {

std::vector<int> direction_labels(const std::vector<Sample>& forecast_samples) {
    std::vector<int> labels;
    labels.reserve(forecast_samples.size());
    for (const auto& s : forecast_samples) {
        double input_mean = 0.0, target_mean = 0.0;
        for (double x : s.input.data) input_mean += x;
        for (double x : s.target.data) target_mean += x;
        input_mean /= static_cast<double>(s.input.size());
        target_mean /= static_cast<double>(s.target.size());
        labels.push_back(target_mean > input_mean ? 1 : 0);
    }
    return labels;
}

// Classification samples are derived from forecast windows so the label
// depends on the horizon; span keeps the full window for leakage checks.
std::vector<Sample> to_classification(std::vector<Sample> samples) {
    const auto labels = direction_labels(samples);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].label = labels[i];
        samples[i].target = Matrix();
    }
    return samples;
}

}  // namespace

PreparedData prepare_data(const DatasetConfig& dataset, Task task) {
    SeriesTable table;
    if (dataset.kind == "synthetic") {
        SyntheticSpec spec = dataset.synthetic;
        const bool series_scope = dataset.corrupt_scope == CorruptScope::Series;
        if (!series_scope) spec.corrupt_frac = 0.0;
        Rng rng(derive_seed(dataset.seed, "synthetic"));
        table = generate_synthetic(rng, spec);
    } else {
        table = load_csv(dataset.path, dataset.csv_schema);
    }

    std::vector<Sample> samples = windowize(table, dataset.lookback, dataset.horizon,
                                            Task::Forecast);
    if (task == Task::Classify) samples = to_classification(std::move(samples));

    PreparedData data;
    data.task = task;
    data.dataset_name = dataset.kind == "synthetic"
                            ? (dataset.synthetic.process == SyntheticProcess::Ar1
                                   ? "synthetic_ar1"
                                   : "synthetic_seasonal")
                            : fs::path(dataset.path).stem().string();
    SplitResult split = split_chrono(samples, dataset.split);
    data.train = std::move(split.train);
    data.val = std::move(split.val);
    data.test = std::move(split.test);

    if (dataset.corrupt_scope == CorruptScope::Targets && dataset.synthetic.corrupt_frac > 0.0) {
        if (task == Task::Classify) {
            throw ConfigError("config key 'dataset.corrupt_scope': targets scope requires "
                              "forecast task");
        }
        const double noise = dataset.synthetic.corrupt_scale * dataset.synthetic.noise_std;
        Rng rng(derive_seed(dataset.seed, "target-corrupt"));
        corrupt_sample_targets(data.train, rng, dataset.synthetic.corrupt_frac, noise);
        corrupt_sample_targets(data.val, rng, dataset.synthetic.corrupt_frac, noise);
    }

    if (dataset.normalize) {
        data.stats = normalize_train_stats(data.train, data.val, data.test, task);
    } else {
        const std::size_t vars = data.train[0].input.cols;
        data.stats.mean.assign(vars, 0.0);
        data.stats.stddev.assign(vars, 1.0);
    }
    return data;
}

namespace {

struct TestMetrics {
    std::vector<std::pair<std::string, double>> values;
};

// Test metrics are reported on the original data scale.
TestMetrics evaluate_test(const ModelState& model, const PreparedData& data, int batch_size) {
    TestMetrics out;
    const std::size_t n = data.test.size();
    if (model.spec.is_classifier()) {
        std::vector<int> labels;
        Matrix inputs(n, data.test[0].input.size());
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(data.test[i].input.data.begin(), data.test[i].input.data.end(),
                      inputs.data.begin() + static_cast<std::ptrdiff_t>(i * inputs.cols));
            labels.push_back(data.test[i].label);
        }
        const Matrix logits = forward(model, inputs);
        out.values.emplace_back("accuracy", accuracy(logits, labels));
        return out;
    }

    (void)batch_size;
    Matrix preds(n, data.test[0].target.size());
    Matrix targets(n, data.test[0].target.size());
    Matrix inputs(n, data.test[0].input.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(data.test[i].input.data.begin(), data.test[i].input.data.end(),
                  inputs.data.begin() + static_cast<std::ptrdiff_t>(i * inputs.cols));
        std::copy(data.test[i].target.data.begin(), data.test[i].target.data.end(),
                  targets.data.begin() + static_cast<std::ptrdiff_t>(i * targets.cols));
    }
    const Matrix raw_pred = forward(model, inputs);
    std::copy(raw_pred.data.begin(), raw_pred.data.end(), preds.data.begin());

    // Undo standardization column-block-wise: layout is [t * v + j].
    const std::size_t vars = data.stats.mean.size();
    auto denorm_flat = [&](Matrix& m) {
        for (std::size_t i = 0; i < m.rows; ++i) {
            for (std::size_t c = 0; c < m.cols; ++c) {
                const std::size_t j = c % vars;
                m(i, c) = m(i, c) * data.stats.stddev[j] + data.stats.mean[j];
            }
        }
    };
    denorm_flat(preds);
    denorm_flat(targets);
    out.values.emplace_back("mse", mse(preds, targets));
    out.values.emplace_back("mae", mae(preds, targets));
    try {
        out.values.emplace_back("wmape", wmape(preds, targets));
    } catch (const ZeroDenominator&) {
        // all-zero targets: wmape is undefined, skip the row
    }
    return out;
}

void atomic_write(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp);
        out << contents;
        if (!out) throw Error("write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

std::string resolve_out_dir(const std::string& out_dir) {
    fs::path p(out_dir);
    if (p.is_relative()) {
        if (const char* root = std::getenv("APTF_OUT_ROOT")) {
            p = fs::path(root) / p;
        }
    }
    return p.string();
}

}  // namespace

CellResult run_cell(const ExperimentConfig& cfg, const PreparedData& data,
                    const std::string& mode, std::uint64_t seed) {
    TrainerConfig tcfg = cfg.trainer;
    tcfg.seed = seed;

    CellResult cell;
    if (mode == "coteaching") {
        DualTrainResult dual =
            train_coteaching(cfg.model, cfg.amort_model, data.train, data.val, tcfg,
                             cfg.coteaching);
        cell.model = std::move(dual.source);
        cell.log = std::move(dual.source_log);
    } else if (mode == "self_paced") {
        TrainResult res = train_self_paced(cfg.model, data.train, data.val, tcfg, cfg.self_paced);
        cell.model = std::move(res.model);
        cell.log = std::move(res.log);
    } else if (mode == "hpl_amortized") {
        tcfg.mode = TrainMode::HplAmortized;
        DualTrainResult dual =
            train_amortized(cfg.model, cfg.amort_model, data.train, data.val, tcfg);
        cell.model = std::move(dual.source);
        cell.log = std::move(dual.source_log);
    } else {
        tcfg.mode = train_mode_from_string(mode);
        TrainResult res = train_single(cfg.model, data.train, data.val, tcfg);
        cell.model = std::move(res.model);
        cell.log = std::move(res.log);
    }

    const TestMetrics metrics = evaluate_test(cell.model, data, cfg.trainer.batch_size);
    for (const auto& [name, value] : metrics.values) {
        cell.rows.push_back(MetricRow{data.dataset_name, to_string(cfg.model.kind), mode,
                                      cfg.dataset.horizon, seed, name, value});
    }
    return cell;
}

std::vector<MetricRow> run_experiment(const ExperimentConfig& cfg) {
    const PreparedData data = prepare_data(cfg.dataset, cfg.task);

    const std::string out_dir = resolve_out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    atomic_write((fs::path(out_dir) / "config.json").string(), cfg.effective.dump(2) + "\n");

    struct Cell {
        std::string mode;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto& mode : cfg.modes) {
        for (const auto seed : cfg.seeds) cells.push_back({mode, seed});
    }

    std::vector<CellResult> results(cells.size());
    if (cfg.jobs <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            results[i] = run_cell(cfg, data, cells[i].mode, cells[i].seed);
        }
    } else {
        std::vector<std::future<CellResult>> futures;
        futures.reserve(cells.size());
        const auto jobs = static_cast<std::size_t>(cfg.jobs);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (futures.size() >= jobs) {
                results[futures.size() - jobs] = futures[futures.size() - jobs].get();
            }
            futures.push_back(std::async(std::launch::async, [&, i] {
                return run_cell(cfg, data, cells[i].mode, cells[i].seed);
            }));
        }
        for (std::size_t i = 0; i < futures.size(); ++i) {
            if (futures[i].valid()) results[i] = futures[i].get();
        }
    }

    // temp + rename so a crashed run never leaves half-written artifacts
    auto atomic_emit = [](const std::string& path, auto&& writer) {
        writer(path + ".tmp");
        fs::rename(path + ".tmp", path);
    };

    std::vector<MetricRow> rows;
    std::ostringstream plot;
    plot << "epoch,mode,seed,val_metric\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& cell = results[i];
        const std::string tag = cells[i].mode + "_seed" + std::to_string(cells[i].seed);
        atomic_emit((fs::path(out_dir) / ("log_" + tag + ".jsonl")).string(),
                    [&](const std::string& p) { write_trainlog_jsonl(cell.log, p); });
        atomic_emit((fs::path(out_dir) / ("checkpoint_" + tag + ".ckpt")).string(),
                    [&](const std::string& p) { save_checkpoint(cell.model, cfg.trainer.epochs, p); });
        rows.insert(rows.end(), cell.rows.begin(), cell.rows.end());
        for (const auto& rec : cell.log.epochs) {
            plot << rec.epoch << ',' << cells[i].mode << ',' << cells[i].seed << ','
                 << format_double(rec.val_metric) << '\n';
        }
    }

    atomic_emit((fs::path(out_dir) / "report.csv").string(),
                [&](const std::string& p) { write_report_csv(rows, p); });
    atomic_emit((fs::path(out_dir) / "aggregate.csv").string(),
                [&](const std::string& p) { write_aggregate_csv(aggregate(rows), p); });
    atomic_write((fs::path(out_dir) / "plot_val.csv").string(), plot.str());
    return rows;
}

namespace {

bool lower_is_better(const std::string& metric) {
    return metric != "accuracy";
}

}  // namespace

void compare_runs(const std::vector<std::string>& run_dirs, const std::string& out_csv,
                  std::ostream& out) {
    if (run_dirs.size() < 2) {
        throw IncompatibleRuns("compare: need at least two run directories");
    }

    struct Column {
        std::string label;
        std::map<std::tuple<std::string, std::string, int, std::string>, AggregateRow> rows;
    };
    std::vector<Column> columns;
    std::set<std::tuple<std::string, std::string, int, std::string>> keys;
    for (const auto& dir : run_dirs) {
        const auto report = read_report_csv((fs::path(dir) / "report.csv").string());
        std::map<std::string, std::vector<MetricRow>> by_mode;
        for (const auto& row : report) by_mode[row.mode].push_back(row);
        for (const auto& [mode, rows] : by_mode) {
            Column col;
            col.label = fs::path(dir).filename().string() + ":" + mode;
            for (const auto& agg : aggregate(rows)) {
                const auto key = std::make_tuple(agg.dataset, agg.model, agg.horizon, agg.metric);
                col.rows[key] = agg;
                keys.insert(key);
            }
            columns.push_back(std::move(col));
        }
    }
    for (const auto& col : columns) {
        if (col.rows.size() != keys.size()) {
            throw IncompatibleRuns("compare: run " + col.label +
                                   " lacks rows present in another run");
        }
    }

    std::ostringstream csv;
    csv << "run,dataset,model,horizon,metric,mean,std,best\n";
    out << "comparison (" << columns.size() << " columns)\n";
    for (const auto& key : keys) {
        const auto& [dataset, model, horizon, metric] = key;
        double best = columns[0].rows.at(key).mean;
        for (const auto& col : columns) {
            const double v = col.rows.at(key).mean;
            best = lower_is_better(metric) ? std::min(best, v) : std::max(best, v);
        }
        bool tie = true;
        for (const auto& col : columns) {
            if (col.rows.at(key).mean != best) tie = false;
        }
        out << dataset << " " << model << " h=" << horizon << " " << metric << ":";
        for (const auto& col : columns) {
            const auto& agg = col.rows.at(key);
            const bool winner = !tie && agg.mean == best;
            char buf[96];
            std::snprintf(buf, sizeof(buf), "  %s=%.6g±%.3g%s", col.label.c_str(), agg.mean,
                          agg.stddev, winner ? "*" : "");
            out << buf;
            csv << col.label << ',' << dataset << ',' << model << ',' << horizon << ',' << metric
                << ',' << format_double(agg.mean) << ',' << format_double(agg.stddev) << ','
                << (winner ? 1 : 0) << '\n';
        }
        out << "\n";
    }
    if (!out_csv.empty()) atomic_write(out_csv, csv.str());
}

void sweep_runs(const std::string& config_path, const std::string& param,
                const std::vector<std::string>& values, const std::string& out_root,
                std::ostream& out) {
    if (values.empty()) throw ConfigError("sweep: empty values list");
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file " + config_path);
    json user = json::parse(in, nullptr, false, true);
    if (user.is_discarded()) {
        throw ConfigError("config file " + config_path + " is not valid JSON");
    }
    json base = default_config();
    deep_merge(base, user);

    std::string pointer = "/" + param;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const json::json_pointer key(pointer);
    if (!base.contains(key)) throw ConfigError("sweep: unknown param '" + param + "'");

    const std::string root =
        resolve_out_dir(out_root.empty() ? base.at("out_dir").get<std::string>() + "_sweep"
                                         : out_root);
    fs::create_directories(root);
    const std::string leaf = param.substr(param.find_last_of('.') + 1);

    std::ostringstream summary;
    summary << "param,value,mode,val_metric,val_metric_mean,val_metric_std\n";
    for (const auto& value : values) {
        json parsed = json::parse(value, nullptr, false);
        json cell_cfg = base;
        cell_cfg[key] = parsed.is_discarded() ? json(value) : parsed;
        cell_cfg["out_dir"] = (fs::path(root) / ("sweep_" + leaf + "_" + value)).string();
        ExperimentConfig cfg = parse_config(cell_cfg);
        run_experiment(cfg);

        // Final-epoch validation metric per mode, over seeds.
        for (const auto& mode : cfg.modes) {
            std::vector<double> finals;
            std::string metric_name = "val";
            for (const auto seed : cfg.seeds) {
                const std::string tag = mode + "_seed" + std::to_string(seed);
                std::ifstream log(fs::path(cfg.out_dir).string() + "/log_" + tag + ".jsonl");
                std::string line, last;
                while (std::getline(log, line)) {
                    if (!line.empty()) last = line;
                }
                if (last.empty()) continue;
                const json rec = json::parse(last);
                finals.push_back(rec.at("val_metric").get<double>());
                metric_name = rec.value("val_metric_name", metric_name);
            }
            double mean = 0.0;
            for (double v : finals) mean += v;
            mean /= std::max<std::size_t>(1, finals.size());
            double ss = 0.0;
            for (double v : finals) ss += (v - mean) * (v - mean);
            const double stddev = std::sqrt(ss / std::max<std::size_t>(1, finals.size()));
            summary << param << ',' << value << ',' << mode << ',' << metric_name << ','
                    << format_double(mean) << ',' << format_double(stddev) << '\n';
        }
        out << "sweep " << param << "=" << value << " done\n";
    }
    atomic_write((fs::path(root) / "summary.csv").string(), summary.str());
}

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"predictability-aware training experiment runner"};
    app.require_subcommand(1);

    std::string config_path, out_override, out_csv = "comparison.csv", param;
    std::vector<std::string> run_dirs, values;
    std::string seed_override;
    int jobs = 0;

    auto* run = app.add_subcommand("run", "execute every (mode x seed) cell of a config");
    run->add_option("config", config_path, "JSON config file")->required();
    run->add_option("--out", out_override, "output directory override");
    run->add_option("--seed-override", seed_override, "comma-separated seed list override");
    run->add_option("--jobs", jobs, "parallel cells (default from config)");

    auto* compare = app.add_subcommand("compare", "side-by-side comparison of run directories");
    compare->add_option("dirs", run_dirs, "run directories")->required()->expected(-2);
    compare->add_option("--out-csv", out_csv, "comparison CSV path");

    auto* sweep = app.add_subcommand("sweep", "one run per value of a config key");
    sweep->add_option("config", config_path, "JSON config file")->required();
    sweep->add_option("--param", param, "dotted config key, e.g. trainer.stage_plan.initial_buckets")
        ->required();
    sweep->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
    sweep->add_option("--out", out_override, "output root override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            ExperimentConfig cfg = load_config(config_path);
            if (!out_override.empty()) {
                cfg.out_dir = out_override;
                cfg.effective["out_dir"] = out_override;
            }
            if (!seed_override.empty()) {
                cfg.seeds.clear();
                json seeds = json::array();
                std::stringstream ss(seed_override);
                std::string tok;
                while (std::getline(ss, tok, ',')) {
                    try {
                        cfg.seeds.push_back(std::stoull(tok));
                    } catch (const std::exception&) {
                        throw ConfigError("config key 'seeds': bad override '" + tok + "'");
                    }
                    seeds.push_back(cfg.seeds.back());
                }
                if (cfg.seeds.empty()) throw ConfigError("config key 'seeds': empty override");
                cfg.effective["seeds"] = seeds;
            }
            if (jobs > 0) cfg.jobs = jobs;
            run_experiment(cfg);
        } else if (compare->parsed()) {
            compare_runs(run_dirs, out_csv, std::cout);
        } else if (sweep->parsed()) {
            sweep_runs(config_path, param, values, out_override, std::cout);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

}  // namespace aptf
