#include "aptf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aptf {

double coteaching_rate(const CoteachingConfig& cfg, int epoch) {
    if (cfg.forget_rate < 0.0 || cfg.forget_rate > 0.5) {
        throw BadSpec("coteaching: forget_rate must be in [0, 0.5]");
    }
    if (cfg.ramp_epochs <= 0) return cfg.forget_rate;
    const double ramp = std::min(1.0, static_cast<double>(epoch) /
                                          static_cast<double>(cfg.ramp_epochs));
    return cfg.forget_rate * ramp;
}

std::vector<std::size_t> coteaching_keep(const LossVector& peer_losses, std::size_t keep_count) {
    const auto order = argsort_ascending(peer_losses);
    return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep_count)};
}

std::vector<double> self_paced_weights(const LossVector& losses, double lambda) {
    if (lambda <= 0.0) throw BadSpec("self_paced_weights: lambda must be > 0");
    std::vector<double> weights(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        weights[i] = losses[i] < lambda ? 1.0 : 0.0;
    }
    return weights;
}

namespace {

struct BatchTensors {
    Matrix inputs;
    Matrix targets;
    std::vector<int> labels;
    std::vector<std::size_t> dataset_index;
};

BatchTensors gather_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
                          std::size_t begin, std::size_t end, Task task) {
    const std::size_t n = end - begin;
    const auto& first = samples[order[begin]];
    BatchTensors batch;
    batch.inputs = Matrix(n, first.input.size());
    batch.dataset_index.resize(n);
    if (task == Task::Forecast) batch.targets = Matrix(n, first.target.size());
    else batch.labels.resize(n);
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

LossVector batch_losses(const ModelState& model, const BatchTensors& batch, Task task) {
    const Matrix pred = forward(model, batch.inputs);
    return task == Task::Forecast ? per_sample_loss_mse(pred, batch.targets)
                                  : per_sample_loss_ce(pred, batch.labels);
}

void step_with_weights(ModelState& model, OptimizerState& opt, const BatchTensors& batch,
                       const std::vector<double>& weights, Task task) {
    const auto grads = task == Task::Forecast
                           ? backward_weighted(model, batch.inputs, batch.targets, weights)
                           : backward_weighted(model, batch.inputs, batch.labels, weights);
    optimizer_step(model, opt, grads);
}

}  // namespace

DualTrainResult train_coteaching(const ModelSpec& source_spec, const ModelSpec& peer_spec,
                                 const std::vector<Sample>& train, const std::vector<Sample>& val,
                                 const TrainerConfig& cfg, const CoteachingConfig& ct) {
    if (cfg.epochs < 1) throw BadSpec("trainer: epochs must be >= 1");
    if (cfg.batch_size < 1) throw BadSpec("trainer: batch_size must be >= 1");
    if (train.empty()) throw BadSpec("trainer: empty train split");
    coteaching_rate(ct, 1);  // validates the forget rate

    Rng source_rng(derive_seed(cfg.seed, "model-init"));
    Rng peer_rng(derive_seed(cfg.seed, "amort-init"));
    ModelState source = init_model(source_spec, source_rng);
    ModelState peer = init_model(peer_spec, peer_rng);
    const Task task = source.spec.is_classifier() ? Task::Classify : Task::Forecast;
    OptimizerState source_opt = make_optimizer(cfg.optimizer.kind, cfg.optimizer.lr, source);
    OptimizerState peer_opt = make_optimizer(cfg.optimizer.kind, cfg.optimizer.lr, peer);

    TrainLog source_log, peer_log;
    source_log.val_metric_name = peer_log.val_metric_name =
        task == Task::Forecast ? "mse" : "accuracy";
    const std::size_t n = train.size();
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double rate = coteaching_rate(ct, epoch);
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
            BatchTensors batch = gather_batch(train, order, begin, end, task);
            const std::size_t bn = end - begin;
            const auto discard = static_cast<std::size_t>(
                std::ceil(rate * static_cast<double>(bn) - 1e-9));
            const std::size_t keep = bn - discard;
            if (keep == 0) {
                ++source_log.skipped_steps;
                ++peer_log.skipped_steps;
                continue;
            }

            const LossVector source_losses = batch_losses(source, batch, task);
            const LossVector peer_losses = batch_losses(peer, batch, task);

            // Each model trains on the small-loss set selected by the peer.
            std::vector<double> source_weights(bn, 0.0), peer_weights(bn, 0.0);
            for (std::size_t i : coteaching_keep(peer_losses, keep)) {
                source_weights[i] = 1.0 / static_cast<double>(keep);
            }
            for (std::size_t i : coteaching_keep(source_losses, keep)) {
                peer_weights[i] = 1.0 / static_cast<double>(keep);
            }
            step_with_weights(source, source_opt, batch, source_weights, task);
            step_with_weights(peer, peer_opt, batch, peer_weights, task);

            for (std::size_t i = 0; i < bn; ++i) {
                source_loss_sum += source_weights[i] * source_losses[i];
                peer_loss_sum += peer_weights[i] * peer_losses[i];
                source_weights_epoch[batch.dataset_index[i]] = source_weights[i];
                peer_weights_epoch[batch.dataset_index[i]] = peer_weights[i];
            }
            ++batches;
        }

        EpochRecord src_rec, peer_rec;
        src_rec.epoch = peer_rec.epoch = epoch;
        src_rec.stage = peer_rec.stage = 1;
        src_rec.train_loss = batches ? source_loss_sum / static_cast<double>(batches) : 0.0;
        peer_rec.train_loss = batches ? peer_loss_sum / static_cast<double>(batches) : 0.0;
        src_rec.val_metric = evaluate_model(source, val, cfg.batch_size);
        peer_rec.val_metric = evaluate_model(peer, val, cfg.batch_size);
        source_log.epochs.push_back(src_rec);
        peer_log.epochs.push_back(peer_rec);
        if (cfg.record_sample_weights) {
            source_log.sample_weights.push_back(std::move(source_weights_epoch));
            peer_log.sample_weights.push_back(std::move(peer_weights_epoch));
        }
    }
    return {std::move(source), std::move(peer), std::move(source_log), std::move(peer_log)};
}

TrainResult train_self_paced(const ModelSpec& spec, const std::vector<Sample>& train,
                             const std::vector<Sample>& val, const TrainerConfig& cfg,
                             const SelfPacedConfig& sp) {
    if (cfg.epochs < 1) throw BadSpec("trainer: epochs must be >= 1");
    if (cfg.batch_size < 1) throw BadSpec("trainer: batch_size must be >= 1");
    if (train.empty()) throw BadSpec("trainer: empty train split");
    if (sp.initial_threshold <= 0.0) throw BadSpec("self_paced: initial_threshold must be > 0");
    if (sp.growth <= 1.0) throw BadSpec("self_paced: growth must be > 1");

    Rng init_rng(derive_seed(cfg.seed, "model-init"));
    ModelState model = init_model(spec, init_rng);
    const Task task = model.spec.is_classifier() ? Task::Classify : Task::Forecast;
    OptimizerState opt = make_optimizer(cfg.optimizer.kind, cfg.optimizer.lr, model);

    TrainLog log;
    log.val_metric_name = task == Task::Forecast ? "mse" : "accuracy";
    double lambda = sp.initial_threshold;
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
            BatchTensors batch = gather_batch(train, order, begin, end, task);
            const LossVector losses = batch_losses(model, batch, task);
            const std::vector<double> keep = self_paced_weights(losses, lambda);
            if (std::accumulate(keep.begin(), keep.end(), 0.0) == 0.0) {
                ++log.skipped_steps;
                continue;
            }
            std::vector<double> weights(keep.size());
            for (std::size_t i = 0; i < keep.size(); ++i) {
                weights[i] = keep[i] / static_cast<double>(keep.size());
            }
            step_with_weights(model, opt, batch, weights, task);
            double batch_loss = 0.0;
            for (std::size_t i = 0; i < weights.size(); ++i) batch_loss += weights[i] * losses[i];
            loss_sum += batch_loss;
            ++batches;
            for (std::size_t i = 0; i < batch.dataset_index.size(); ++i) {
                epoch_weights[batch.dataset_index[i]] = weights[i];
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.stage = 1;
        rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
        rec.val_metric = evaluate_model(model, val, cfg.batch_size);
        log.epochs.push_back(rec);
        if (cfg.record_sample_weights) log.sample_weights.push_back(std::move(epoch_weights));

        if (stage_indicator(epoch, cfg.stage_plan.epoch_interval) == 1) {
            lambda *= sp.growth;
        }
    }
    return {std::move(model), std::move(log)};
}

}  // namespace aptf
