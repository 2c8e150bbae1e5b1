#pragma once

#include <cstddef>
#include <vector>

#include "aptf/numeric.hpp"

namespace aptf {

/// Per-sample scalar losses for one batch, pre-reduction.
using LossVector = std::vector<double>;

/// Ordered assignment of batch indices into K buckets by ascending loss.
/// Buckets 1..K-1 hold floor(N/K) indices each; the last bucket takes the
/// remainder. Within a bucket, indices follow the stable ascending sort.
struct BucketPartition {
    std::vector<std::vector<std::size_t>> buckets;

    std::size_t bucket_count() const { return buckets.size(); }
    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& b : buckets) n += b.size();
        return n;
    }
};

/// Per-bucket loss multipliers, strictly decreasing: W_1 > ... > W_K.
struct WeightSchedule {
    std::vector<double> weights;
};

/// One complete (partition, schedule) pair.
struct BucketGroup {
    BucketPartition partition;
    WeightSchedule schedule;
};

enum class PalMode { Fixed, Evolving, Hierarchical };

/// Stage-evolution rule. Stage s (1-based) uses, in hierarchical mode,
/// groups g = 1..s where group g has K0 - (g-1)*delta buckets.
struct StagePlan {
    int epoch_interval = 2;    // epsilon: a stage transition fires when epoch % epsilon == 0
    int initial_buckets = 9;   // K0
    int bucket_decrement = 1;  // delta
    int max_stages = 1;        // S
    PalMode mode = PalMode::Hierarchical;
    bool trim_leading = false;  // evolving mode: trim the base-K0 schedule instead of
                                // rebuilding it for the smaller bucket count
    int stage = 1;              // current stage, 1-based
    int batch_hint = 0;         // nominal batch size for the feasibility cap; 0 = no sample cap

    int group_bucket_count(int group) const {
        return initial_buckets - (group - 1) * bucket_decrement;
    }

    /// Largest stage whose newest group still has >= 2 buckets and, when a
    /// batch hint is set, >= 2 samples per bucket. Never below 1.
    int feasible_stage_cap() const;
};

/// Two-bucket variant used for classification: the highest-loss fraction of
/// the batch is down-weighted, and that fraction grows per stage.
struct TscBucketConfig {
    double low_weight = 0.1;       // weight of the low-predictability bucket
    double penalty_fraction = 0.0; // initial fraction f
    double growth_rate = 0.025;    // fraction added per stage
};

/// Scalar loss plus the resolved per-sample weights that reproduce it as
/// sum_i w_i * loss_i. The weights are what the backward pass consumes.
struct PalResult {
    double loss = 0.0;
    std::vector<double> weights;
    bool clamped = false;  // bucket count was clamped to the batch size
};

/// Eq.-style stage indicator: 1 iff epoch % epsilon == 0.
int stage_indicator(int epoch, int epoch_interval);

/// Splits N losses into K buckets by ascending value; see BucketPartition.
/// Throws TooFewSamples if N < K, BadSpec if K < 2.
BucketPartition partition_buckets(const LossVector& losses, int bucket_count);

/// Base schedule for K buckets: W_j = 1 - (j-1)/(K-1) for j < K and
/// W_K = W_{K-1}/2, so the first weight is 1, intermediate weights fall in
/// even steps of 1/(K-1), and the last weight halves its predecessor.
/// stage_trim removes that many weights from the front; the remaining
/// schedule serves a partition with K - stage_trim buckets.
WeightSchedule build_weight_schedule(int bucket_count, int stage_trim = 0);

/// Basic predictability-aware loss: sum over buckets of W_j * mean(bucket j).
/// Resolved weight of sample i is W_{j(i)} / |B_{j(i)}|.
PalResult basic_pal(const BucketGroup& group, const LossVector& losses);

/// Hierarchical loss at stage s: the arithmetic mean of basic_pal over
/// groups 1..s, where group g re-partitions the same losses into
/// K0 - (g-1)*delta buckets with that count's own base schedule.
PalResult hierarchical_pal(int stage, const StagePlan& plan, const LossVector& losses);

/// Single-group stage-s loss (the non-hierarchical ablation): only the
/// stage-s group is used. With plan.trim_leading the schedule is the base-K0
/// schedule trimmed by (s-1)*delta; otherwise the smaller bucket count's own
/// base schedule.
PalResult evolving_pal(int stage, const StagePlan& plan, const LossVector& losses);

/// Two-bucket loss for classification: the ceil(f_s * N) highest-loss
/// samples get cfg.low_weight, the rest weight 1, where
/// f_s = min(0.5, penalty_fraction + (s-1)*growth_rate); the scalar is the
/// weighted mean (1/N) * sum w~_i * loss_i.
PalResult tsc_two_bucket_pal(const LossVector& losses, const TscBucketConfig& cfg, int stage);

/// Advances plan.stage when the indicator fires for this epoch, capped at
/// max_stages and the feasibility cap. Returns the updated stage.
int advance_stage(StagePlan& plan, int epoch);

}  // namespace aptf
