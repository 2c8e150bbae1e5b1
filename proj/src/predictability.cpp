#include "aptf/predictability.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aptf {

int stage_indicator(int epoch, int epoch_interval) {
    if (epoch_interval < 1) throw BadSpec("stage_indicator: epoch_interval must be >= 1");
    if (epoch < 1) throw BadSpec("stage_indicator: epoch must be >= 1");
    return epoch % epoch_interval == 0 ? 1 : 0;
}

BucketPartition partition_buckets(const LossVector& losses, int bucket_count) {
    if (bucket_count < 2) throw BadSpec("partition_buckets: bucket count must be >= 2");
    const std::size_t n = losses.size();
    if (n < static_cast<std::size_t>(bucket_count)) {
        throw TooFewSamples("partition_buckets: " + std::to_string(n) + " samples for " +
                            std::to_string(bucket_count) + " buckets");
    }
    const auto order = argsort_ascending(losses);
    const std::size_t base = n / static_cast<std::size_t>(bucket_count);

    BucketPartition part;
    part.buckets.resize(static_cast<std::size_t>(bucket_count));
    std::size_t pos = 0;
    for (int j = 0; j < bucket_count; ++j) {
        const std::size_t take = (j == bucket_count - 1) ? n - pos : base;
        auto& bucket = part.buckets[static_cast<std::size_t>(j)];
        bucket.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + take));
        pos += take;
    }
    return part;
}

WeightSchedule build_weight_schedule(int bucket_count, int stage_trim) {
    if (bucket_count < 2) throw BadSpec("build_weight_schedule: bucket count must be >= 2");
    if (stage_trim < 0 || stage_trim >= bucket_count) {
        throw BadTrim("build_weight_schedule: trim " + std::to_string(stage_trim) +
                      " out of range for K=" + std::to_string(bucket_count));
    }
    WeightSchedule sched;
    sched.weights.resize(static_cast<std::size_t>(bucket_count));
    for (int j = 1; j < bucket_count; ++j) {
        sched.weights[static_cast<std::size_t>(j - 1)] =
            1.0 - static_cast<double>(j - 1) / static_cast<double>(bucket_count - 1);
    }
    sched.weights[static_cast<std::size_t>(bucket_count - 1)] =
        sched.weights[static_cast<std::size_t>(bucket_count - 2)] / 2.0;
    if (stage_trim > 0) {
        sched.weights.erase(sched.weights.begin(), sched.weights.begin() + stage_trim);
    }
    return sched;
}

PalResult basic_pal(const BucketGroup& group, const LossVector& losses) {
    const auto& buckets = group.partition.buckets;
    const auto& weights = group.schedule.weights;
    if (buckets.size() != weights.size()) {
        throw ShapeMismatch("basic_pal: schedule length " + std::to_string(weights.size()) +
                            " != bucket count " + std::to_string(buckets.size()));
    }
    PalResult result;
    result.weights.assign(losses.size(), 0.0);
    for (std::size_t j = 0; j < buckets.size(); ++j) {
        const auto& bucket = buckets[j];
        if (bucket.empty()) throw ShapeMismatch("basic_pal: empty bucket");
        double sum = 0.0;
        for (std::size_t i : bucket) sum += losses.at(i);
        result.loss += weights[j] * (sum / static_cast<double>(bucket.size()));
        const double per_sample = weights[j] / static_cast<double>(bucket.size());
        for (std::size_t i : bucket) result.weights[i] = per_sample;
    }
    return result;
}

namespace {

// Degenerate one-sample batch: one bucket, weight 1.
PalResult single_sample_pal(const LossVector& losses) {
    PalResult r;
    r.loss = losses[0];
    r.weights = {1.0};
    r.clamped = true;
    return r;
}

}  // namespace

PalResult hierarchical_pal(int stage, const StagePlan& plan, const LossVector& losses) {
    if (stage < 1) throw BadSpec("hierarchical_pal: stage must be >= 1");
    if (losses.empty()) throw TooFewSamples("hierarchical_pal: empty loss vector");
    if (losses.size() == 1) return single_sample_pal(losses);

    const int n = static_cast<int>(losses.size());
    const int groups = plan.mode == PalMode::Fixed ? 1 : stage;
    PalResult acc;
    acc.weights.assign(losses.size(), 0.0);
    for (int g = 1; g <= groups; ++g) {
        const int k = plan.group_bucket_count(g);
        if (k < 2) {
            throw GroupTooSmall("hierarchical_pal: group " + std::to_string(g) + " has " +
                                std::to_string(k) + " buckets");
        }
        const int k_eff = std::min(k, n);
        if (k_eff < k) acc.clamped = true;
        BucketGroup group{partition_buckets(losses, k_eff), build_weight_schedule(k_eff)};
        const PalResult r = basic_pal(group, losses);
        acc.loss += r.loss;
        for (std::size_t i = 0; i < losses.size(); ++i) acc.weights[i] += r.weights[i];
    }
    acc.loss /= static_cast<double>(groups);
    for (auto& w : acc.weights) w /= static_cast<double>(groups);
    return acc;
}

PalResult evolving_pal(int stage, const StagePlan& plan, const LossVector& losses) {
    if (stage < 1) throw BadSpec("evolving_pal: stage must be >= 1");
    if (losses.empty()) throw TooFewSamples("evolving_pal: empty loss vector");
    if (losses.size() == 1) return single_sample_pal(losses);

    const int n = static_cast<int>(losses.size());
    const int k = plan.group_bucket_count(stage);
    if (k < 2) {
        throw GroupTooSmall("evolving_pal: stage " + std::to_string(stage) + " group has " +
                            std::to_string(k) + " buckets");
    }
    const int k_eff = std::min(k, n);
    WeightSchedule sched;
    if (plan.trim_leading && k_eff == k) {
        // Trimmed reading: keep the base-K0 schedule and drop its largest
        // weights, one per stage transition (scaled by the decrement).
        sched = build_weight_schedule(plan.initial_buckets, (stage - 1) * plan.bucket_decrement);
    } else {
        sched = build_weight_schedule(k_eff);
    }
    BucketGroup group{partition_buckets(losses, k_eff), sched};
    PalResult r = basic_pal(group, losses);
    r.clamped = k_eff < k;
    return r;
}

PalResult tsc_two_bucket_pal(const LossVector& losses, const TscBucketConfig& cfg, int stage) {
    if (stage < 1) throw BadSpec("tsc_two_bucket_pal: stage must be >= 1");
    if (losses.empty()) throw TooFewSamples("tsc_two_bucket_pal: empty loss vector");
    if (cfg.low_weight <= 0.0 || cfg.low_weight > 1.0) {
        throw BadSpec("tsc_two_bucket_pal: low_weight must be in (0, 1]");
    }
    const std::size_t n = losses.size();
    const double fraction =
        std::min(0.5, cfg.penalty_fraction + static_cast<double>(stage - 1) * cfg.growth_rate);
    // ceil with a small guard so exact products (0.25 * 8) do not round up.
    const auto low_count =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));

    const auto order = argsort_ascending(losses);
    PalResult result;
    result.weights.assign(n, 1.0);
    for (std::size_t r = 0; r < low_count; ++r) {
        result.weights[order[n - 1 - r]] = cfg.low_weight;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += result.weights[i] * losses[i];
    result.loss = total / static_cast<double>(n);
    for (auto& w : result.weights) w /= static_cast<double>(n);
    return result;
}

int StagePlan::feasible_stage_cap() const {
    if (bucket_decrement < 1) throw BadSpec("StagePlan: bucket_decrement must be >= 1");
    int cap = 1;
    while (true) {
        const int next = cap + 1;
        if (max_stages > 0 && next > max_stages) break;
        const int k = group_bucket_count(next);
        if (k < 2) break;
        if (batch_hint > 0 && batch_hint / k < 2) break;
        cap = next;
    }
    return cap;
}

int advance_stage(StagePlan& plan, int epoch) {
    if (stage_indicator(epoch, plan.epoch_interval) == 1) {
        plan.stage = std::min(plan.stage + 1, plan.feasible_stage_cap());
    }
    return plan.stage;
}

}  // namespace aptf
