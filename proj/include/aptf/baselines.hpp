#pragma once

#include "aptf/trainer.hpp"

namespace aptf {

/// Co-teaching: two models each keep the (1 - r_t) * N lowest-loss samples
/// as ranked by the peer and train on their unweighted mean loss; the
/// discarded fraction ramps linearly from 0 to forget_rate.
struct CoteachingConfig {
    double forget_rate = 0.3;  // r, in [0, 0.5]
    int ramp_epochs = 10;      // 0 = full rate from the first epoch
};

/// Discarded fraction in effect at a given epoch (1-based).
double coteaching_rate(const CoteachingConfig& cfg, int epoch);

/// Indices of the keep_count lowest losses, stable in the ascending order.
std::vector<std::size_t> coteaching_keep(const LossVector& peer_losses, std::size_t keep_count);

DualTrainResult train_coteaching(const ModelSpec& source_spec, const ModelSpec& peer_spec,
                                 const std::vector<Sample>& train, const std::vector<Sample>& val,
                                 const TrainerConfig& cfg, const CoteachingConfig& ct);

/// Self-paced learning: binary weights keep samples with loss below the
/// threshold, which grows by the factor each time the stage indicator fires.
struct SelfPacedConfig {
    double initial_threshold = 1.0;  // lambda_0 > 0
    double growth = 1.3;             // mu > 1
};

/// weight 1 iff loss_i < lambda else 0.
std::vector<double> self_paced_weights(const LossVector& losses, double lambda);

TrainResult train_self_paced(const ModelSpec& spec, const std::vector<Sample>& train,
                             const std::vector<Sample>& val, const TrainerConfig& cfg,
                             const SelfPacedConfig& sp);

}  // namespace aptf
