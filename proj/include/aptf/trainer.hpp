#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aptf/dataset.hpp"
#include "aptf/model.hpp"
#include "aptf/predictability.hpp"

namespace aptf {

enum class TrainMode { Plain, Fixed, Hpl, HplAmortized, Evolving, TscTwoBucket };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct OptimizerSpec {
    OptKind kind = OptKind::Adam;
    double lr = 0.01;
};

struct TrainerConfig {
    int epochs = 30;
    int batch_size = 64;
    OptimizerSpec optimizer;
    StagePlan stage_plan;
    TscBucketConfig tsc;
    TrainMode mode = TrainMode::Plain;
    std::uint64_t seed = 0;
    bool shuffle = true;
    bool record_sample_weights = true;  // needed by track_separation
};

struct EpochRecord {
    int epoch = 0;
    int stage = 1;          // stage in effect during the epoch
    double train_loss = 0.0;  // mode loss averaged over batches
    double val_metric = 0.0;
    std::optional<double> separation_auc;
};

struct TrainLog {
    std::string val_metric_name;
    std::vector<EpochRecord> epochs;
    // Per epoch, the resolved weight of every train sample (dataset order).
    std::vector<std::vector<double>> sample_weights;
    int clamped_batches = 0;  // batches where the bucket count was clamped to N
    int skipped_steps = 0;
};

struct TrainResult {
    ModelState model;
    TrainLog log;
};

struct DualTrainResult {
    ModelState source;
    ModelState peer;
    TrainLog source_log;
    TrainLog peer_log;
};

/// Per-epoch shuffle order; reseeded per epoch from the master seed so runs
/// are reproducible and reference loops can replay the exact batch stream.
std::vector<std::size_t> epoch_permutation(std::uint64_t seed, int epoch, std::size_t n);

/// Resolves the per-sample weights one batch step uses. The grouping comes
/// from grouping_losses, which for amortized training belong to the peer
/// model; the returned weights are applied to the caller's own loss values.
PalResult resolve_mode_weights(TrainMode mode, int stage, const StagePlan& plan,
                               const TscBucketConfig& tsc, const LossVector& grouping_losses);

/// Single-model loop: forward, per-sample loss, mode-selected weighting from
/// the model's own losses, weighted backward, optimizer step; the stage
/// advances at epoch boundaries.
TrainResult train_single(const ModelSpec& spec, const std::vector<Sample>& train,
                         const std::vector<Sample>& val, const TrainerConfig& cfg);

/// Same loop starting from an existing model (reference tests use this).
TrainResult train_single(ModelState model, const std::vector<Sample>& train,
                         const std::vector<Sample>& val, const TrainerConfig& cfg);

/// Dual-model loop: both models see the same batch stream; each computes its
/// own per-sample losses, and the bucket grouping used to weight one model's
/// losses comes from the other model's losses on the same batch, evaluated
/// before either model steps.
DualTrainResult train_amortized(const ModelSpec& source_spec, const ModelSpec& peer_spec,
                                const std::vector<Sample>& train, const std::vector<Sample>& val,
                                const TrainerConfig& cfg);

DualTrainResult train_amortized(ModelState source, ModelState peer,
                                const std::vector<Sample>& train, const std::vector<Sample>& val,
                                const TrainerConfig& cfg);

/// Per-epoch AUC of clean-vs-corrupted sample separation by resolved weight
/// (corrupted samples should sit low). Requires ground-truth flags.
std::vector<double> track_separation(const TrainLog& log, const std::vector<Sample>& train);

/// Rank-based AUC helper shared by track_separation and the trainer.
double weight_separation_auc(const std::vector<double>& weights,
                             const std::vector<std::uint8_t>& corrupted);

/// Validation metric used inside the loop: MSE for forecasters, accuracy for
/// the classifier (both on whatever scale the samples are in).
double evaluate_model(const ModelState& model, const std::vector<Sample>& samples,
                      int batch_size);

/// Writes one JSON object per epoch record.
void write_trainlog_jsonl(const TrainLog& log, const std::string& path);

}  // namespace aptf
