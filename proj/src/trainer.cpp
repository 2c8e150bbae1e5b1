#include "aptf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace aptf {

using json = nlohmann::json;

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::Plain: return "plain";
        case TrainMode::Fixed: return "fixed";
        case TrainMode::Hpl: return "hpl";
        case TrainMode::HplAmortized: return "hpl_amortized";
        case TrainMode::Evolving: return "evolving";
        case TrainMode::TscTwoBucket: return "tsc_two_bucket";
    }
    throw BadSpec("unknown train mode");
}

TrainMode train_mode_from_string(const std::string& name) {
    if (name == "plain") return TrainMode::Plain;
    if (name == "fixed") return TrainMode::Fixed;
    if (name == "hpl") return TrainMode::Hpl;
    if (name == "hpl_amortized") return TrainMode::HplAmortized;
    if (name == "evolving") return TrainMode::Evolving;
    if (name == "tsc_two_bucket") return TrainMode::TscTwoBucket;
    throw BadSpec("unknown train mode '" + name + "'");
}

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, int epoch, std::size_t n) {
    Rng rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    return random_permutation(rng, n);
}

PalResult resolve_mode_weights(TrainMode mode, int stage, const StagePlan& plan,
                               const TscBucketConfig& tsc, const LossVector& grouping_losses) {
    const std::size_t n = grouping_losses.size();
    switch (mode) {
        case TrainMode::Plain: {
            PalResult r;
            r.weights.assign(n, 1.0 / static_cast<double>(n));
            r.loss = std::accumulate(grouping_losses.begin(), grouping_losses.end(), 0.0) /
                     static_cast<double>(n);
            return r;
        }
        case TrainMode::Fixed: {
            StagePlan fixed = plan;
            fixed.mode = PalMode::Fixed;
            return hierarchical_pal(1, fixed, grouping_losses);
        }
        case TrainMode::Hpl:
        case TrainMode::HplAmortized:
            return hierarchical_pal(stage, plan, grouping_losses);
        case TrainMode::Evolving:
            return evolving_pal(stage, plan, grouping_losses);
        case TrainMode::TscTwoBucket:
            return tsc_two_bucket_pal(grouping_losses, tsc, stage);
    }
    throw BadSpec("unknown train mode");
}

namespace {

struct BatchView {
    Matrix inputs;
    Matrix targets;
    std::vector<int> labels;
    std::vector<std::size_t> dataset_index;
};

BatchView make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
                     std::size_t begin, std::size_t end, Task task) {
    const std::size_t n = end - begin;
    const auto& first = samples[order[begin]];
    BatchView batch;
    batch.inputs = Matrix(n, first.input.size());
    batch.dataset_index.resize(n);
    if (task == Task::Forecast) {
        batch.targets = Matrix(n, first.target.size());
    } else {
        batch.labels.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Sample& s = samples[order[begin + i]];
        batch.dataset_index[i] = order[begin + i];
        std::copy(s.input.data.begin(), s.input.data.end(),
                  batch.inputs.data.begin() + static_cast<std::ptrdiff_t>(i * batch.inputs.cols));
        if (task == Task::Forecast) {
            std::copy(s.target.data.begin(), s.target.data.end(),
                      batch.targets.data.begin() +
                          static_cast<std::ptrdiff_t>(i * batch.targets.cols));
        } else {
            batch.labels[i] = s.label;
        }
    }
    return batch;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// Empty result = no usable ground truth (needs both classes present).
std::vector<std::uint8_t> corruption_flags(const std::vector<Sample>& samples) {
    std::vector<std::uint8_t> flags;
    std::size_t corrupted = 0;
    flags.reserve(samples.size());
    for (const auto& s : samples) {
        flags.push_back(s.corrupted ? 1 : 0);
        corrupted += s.corrupted ? 1 : 0;
    }
    if (corrupted == 0 || corrupted == samples.size()) flags.clear();
    return flags;
}

StagePlan prepare_plan(const TrainerConfig& cfg) {
    StagePlan plan = cfg.stage_plan;
    plan.stage = 1;
    plan.batch_hint = cfg.batch_size;
    if (plan.max_stages <= 0) {
        plan.max_stages = std::max(1, cfg.epochs / std::max(1, plan.epoch_interval));
    }
    return plan;
}

void validate_trainer_config(const TrainerConfig& cfg, std::size_t train_size) {
    if (cfg.epochs < 1) throw BadSpec("trainer: epochs must be >= 1");
    if (cfg.batch_size < 1) throw BadSpec("trainer: batch_size must be >= 1");
    if (train_size == 0) throw BadSpec("trainer: empty train split");
}

}  // namespace

TrainResult train_single(const ModelSpec& spec, const std::vector<Sample>& train,
                         const std::vector<Sample>& val, const TrainerConfig& cfg) {
    Rng init_rng(derive_seed(cfg.seed, "model-init"));
    return train_single(init_model(spec, init_rng), train, val, cfg);
}

TrainResult train_single(ModelState model, const std::vector<Sample>& train,
                         const std::vector<Sample>& val, const TrainerConfig& cfg) {
    validate_trainer_config(cfg, train.size());
    if (cfg.mode == TrainMode::HplAmortized) {
        throw BadSpec("train_single: hpl_amortized needs the dual-model loop");
    }
    const Task task = model.spec.is_classifier() ? Task::Classify : Task::Forecast;
    OptimizerState opt = make_optimizer(cfg.optimizer.kind, cfg.optimizer.lr, model);
    StagePlan plan = prepare_plan(cfg);

    TrainLog log;
    log.val_metric_name = task == Task::Forecast ? "mse" : "accuracy";
    const auto flags = corruption_flags(train);
    const std::size_t n = train.size();
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order;
        if (cfg.shuffle) {
            order = epoch_permutation(cfg.seed, epoch, n);
        } else {
            order.resize(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
        }

        std::vector<double> epoch_weights(n, 0.0);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n; begin += batch_size) {
            const std::size_t end = std::min(begin + batch_size, n);
            BatchView batch = make_batch(train, order, begin, end, task);
            const Matrix pred = forward(model, batch.inputs);
            const LossVector losses = task == Task::Forecast
                                          ? per_sample_loss_mse(pred, batch.targets)
                                          : per_sample_loss_ce(pred, batch.labels);
            PalResult pal = resolve_mode_weights(cfg.mode, plan.stage, plan, cfg.tsc, losses);
            if (pal.clamped) ++log.clamped_batches;

            const auto grads =
                task == Task::Forecast
                    ? backward_weighted(model, batch.inputs, batch.targets, pal.weights)
                    : backward_weighted(model, batch.inputs, batch.labels, pal.weights);
            optimizer_step(model, opt, grads);

            loss_sum += dot(pal.weights, losses);
            ++batches;
            for (std::size_t i = 0; i < batch.dataset_index.size(); ++i) {
                epoch_weights[batch.dataset_index[i]] = pal.weights[i];
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.stage = plan.stage;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        rec.val_metric = evaluate_model(model, val, cfg.batch_size);
        if (!flags.empty()) rec.separation_auc = weight_separation_auc(epoch_weights, flags);
        log.epochs.push_back(rec);
        if (cfg.record_sample_weights) log.sample_weights.push_back(std::move(epoch_weights));

        advance_stage(plan, epoch);
    }
    return {std::move(model), std::move(log)};
}

DualTrainResult train_amortized(const ModelSpec& source_spec, const ModelSpec& peer_spec,
                                const std::vector<Sample>& train, const std::vector<Sample>& val,
                                const TrainerConfig& cfg) {
    Rng source_rng(derive_seed(cfg.seed, "model-init"));
    Rng peer_rng(derive_seed(cfg.seed, "amort-init"));
    return train_amortized(init_model(source_spec, source_rng), init_model(peer_spec, peer_rng),
                           train, val, cfg);
}

DualTrainResult train_amortized(ModelState source, ModelState peer,
                                const std::vector<Sample>& train, const std::vector<Sample>& val,
                                const TrainerConfig& cfg) {
    validate_trainer_config(cfg, train.size());
    if (source.spec.is_classifier() != peer.spec.is_classifier()) {
        throw BadSpec("train_amortized: source and peer must share the task");
    }
    const Task task = source.spec.is_classifier() ? Task::Classify : Task::Forecast;
    // The grouping exchange itself is always hierarchical here; Plain is
    // allowed for trajectory tests.
    const TrainMode mode = cfg.mode == TrainMode::HplAmortized ? TrainMode::Hpl : cfg.mode;

    OptimizerState source_opt = make_optimizer(cfg.optimizer.kind, cfg.optimizer.lr, source);
    OptimizerState peer_opt = make_optimizer(cfg.optimizer.kind, cfg.optimizer.lr, peer);
    StagePlan plan = prepare_plan(cfg);

    TrainLog source_log, peer_log;
    source_log.val_metric_name = peer_log.val_metric_name =
        task == Task::Forecast ? "mse" : "accuracy";
    const auto flags = corruption_flags(train);
    const std::size_t n = train.size();
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order;
        if (cfg.shuffle) {
            order = epoch_permutation(cfg.seed, epoch, n);
        } else {
            order.resize(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
        }

        std::vector<double> source_weights_epoch(n, 0.0), peer_weights_epoch(n, 0.0);
        double source_loss_sum = 0.0, peer_loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n; begin += batch_size) {
            const std::size_t end = std::min(begin + batch_size, n);
            BatchView batch = make_batch(train, order, begin, end, task);

            // Both loss vectors reflect the peer's parameters before this
            // step's update; the exchange is the one-step-delayed estimate.
            const Matrix source_pred = forward(source, batch.inputs);
            const Matrix peer_pred = forward(peer, batch.inputs);
            const LossVector source_losses =
                task == Task::Forecast ? per_sample_loss_mse(source_pred, batch.targets)
                                       : per_sample_loss_ce(source_pred, batch.labels);
            const LossVector peer_losses =
                task == Task::Forecast ? per_sample_loss_mse(peer_pred, batch.targets)
                                       : per_sample_loss_ce(peer_pred, batch.labels);

            // Each model is weighted by the grouping of the other's losses.
            PalResult source_pal =
                resolve_mode_weights(mode, plan.stage, plan, cfg.tsc, peer_losses);
            PalResult peer_pal =
                resolve_mode_weights(mode, plan.stage, plan, cfg.tsc, source_losses);
            if (source_pal.clamped) ++source_log.clamped_batches;
            if (peer_pal.clamped) ++peer_log.clamped_batches;

            const auto source_grads =
                task == Task::Forecast
                    ? backward_weighted(source, batch.inputs, batch.targets, source_pal.weights)
                    : backward_weighted(source, batch.inputs, batch.labels, source_pal.weights);
            const auto peer_grads =
                task == Task::Forecast
                    ? backward_weighted(peer, batch.inputs, batch.targets, peer_pal.weights)
                    : backward_weighted(peer, batch.inputs, batch.labels, peer_pal.weights);
            optimizer_step(source, source_opt, source_grads);
            optimizer_step(peer, peer_opt, peer_grads);

            source_loss_sum += dot(source_pal.weights, source_losses);
            peer_loss_sum += dot(peer_pal.weights, peer_losses);
            ++batches;
            for (std::size_t i = 0; i < batch.dataset_index.size(); ++i) {
                source_weights_epoch[batch.dataset_index[i]] = source_pal.weights[i];
                peer_weights_epoch[batch.dataset_index[i]] = peer_pal.weights[i];
            }
        }

        EpochRecord src_rec, peer_rec;
        src_rec.epoch = peer_rec.epoch = epoch;
        src_rec.stage = peer_rec.stage = plan.stage;
        src_rec.train_loss = source_loss_sum / static_cast<double>(batches);
        peer_rec.train_loss = peer_loss_sum / static_cast<double>(batches);
        src_rec.val_metric = evaluate_model(source, val, cfg.batch_size);
        peer_rec.val_metric = evaluate_model(peer, val, cfg.batch_size);
        if (!flags.empty()) {
            src_rec.separation_auc = weight_separation_auc(source_weights_epoch, flags);
            peer_rec.separation_auc = weight_separation_auc(peer_weights_epoch, flags);
        }
        source_log.epochs.push_back(src_rec);
        peer_log.epochs.push_back(peer_rec);
        if (cfg.record_sample_weights) {
            source_log.sample_weights.push_back(std::move(source_weights_epoch));
            peer_log.sample_weights.push_back(std::move(peer_weights_epoch));
        }

        advance_stage(plan, epoch);
    }
    return {std::move(source), std::move(peer), std::move(source_log), std::move(peer_log)};
}

double weight_separation_auc(const std::vector<double>& weights,
                             const std::vector<std::uint8_t>& corrupted) {
    if (weights.size() != corrupted.size()) {
        throw ShapeMismatch("weight_separation_auc: flag count mismatch");
    }
    std::size_t n_corrupt = 0;
    for (auto f : corrupted) n_corrupt += f ? 1 : 0;
    const std::size_t n_clean = corrupted.size() - n_corrupt;
    if (n_corrupt == 0 || n_clean == 0) {
        throw NoGroundTruth("weight_separation_auc: need both clean and corrupted samples");
    }

    // Mann-Whitney U via average ranks; ties count one half.
    const auto order = argsort_ascending(weights);
    std::vector<double> rank(weights.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && weights[order[j + 1]] == weights[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg_rank;
        i = j + 1;
    }
    double clean_rank_sum = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (!corrupted[k]) clean_rank_sum += rank[k];
    }
    const double u = clean_rank_sum -
                     static_cast<double>(n_clean) * (static_cast<double>(n_clean) + 1.0) / 2.0;
    return u / (static_cast<double>(n_clean) * static_cast<double>(n_corrupt));
}

std::vector<double> track_separation(const TrainLog& log, const std::vector<Sample>& train) {
    const auto flags = corruption_flags(train);
    if (flags.empty()) {
        throw NoGroundTruth("track_separation: dataset has no corruption flags");
    }
    if (log.sample_weights.empty()) {
        throw NoGroundTruth("track_separation: log has no recorded sample weights");
    }
    std::vector<double> auc;
    auc.reserve(log.sample_weights.size());
    for (const auto& weights : log.sample_weights) {
        auc.push_back(weight_separation_auc(weights, flags));
    }
    return auc;
}

double evaluate_model(const ModelState& model, const std::vector<Sample>& samples,
                      int batch_size) {
    if (samples.empty()) throw BadSpec("evaluate_model: empty sample set");
    const Task task = model.spec.is_classifier() ? Task::Classify : Task::Forecast;
    const std::size_t n = samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
    if (task == Task::Forecast) {
        double se = 0.0;
        std::size_t count = 0;
        for (std::size_t begin = 0; begin < n; begin += bs) {
            const std::size_t end = std::min(begin + bs, n);
            BatchView batch = make_batch(samples, order, begin, end, task);
            const Matrix pred = forward(model, batch.inputs);
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const double d = pred.data[i] - batch.targets.data[i];
                se += d * d;
            }
            count += pred.size();
        }
        return se / static_cast<double>(count);
    }
    std::size_t hits = 0;
    for (std::size_t begin = 0; begin < n; begin += bs) {
        const std::size_t end = std::min(begin + bs, n);
        BatchView batch = make_batch(samples, order, begin, end, task);
        const Matrix logits = forward(model, batch.inputs);
        for (std::size_t i = 0; i < logits.rows; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < logits.cols; ++j) {
                if (logits(i, j) > logits(i, best)) best = j;
            }
            if (static_cast<int>(best) == batch.labels[i]) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

void write_trainlog_jsonl(const TrainLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_trainlog_jsonl: cannot open " + path);
    for (const auto& rec : log.epochs) {
        json obj{
            {"epoch", rec.epoch},
            {"stage", rec.stage},
            {"train_loss", rec.train_loss},
            {"val_metric", rec.val_metric},
            {"val_metric_name", log.val_metric_name},
        };
        if (rec.separation_auc) obj["separation_auc"] = *rec.separation_auc;
        out << obj.dump() << '\n';
    }
    if (!out) throw Error("write_trainlog_jsonl: write failed for " + path);
}

}  // namespace aptf
