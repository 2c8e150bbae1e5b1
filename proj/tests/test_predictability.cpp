#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aptf/predictability.hpp"

using namespace aptf;

namespace {

// ---- independent oracle path -------------------------------------------
// Re-derives bucket boundaries and per-sample weights from scratch: its own
// stable sort, its own size arithmetic, and the loss as an explicit
// per-sample reduction sum_i w_i * l_i.

std::vector<std::size_t> oracle_stable_sort(const std::vector<double>& values) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // insertion sort, stable by construction
    for (std::size_t i = 1; i < idx.size(); ++i) {
        std::size_t j = i;
        while (j > 0 && values[idx[j]] < values[idx[j - 1]]) {
            std::swap(idx[j], idx[j - 1]);
            --j;
        }
    }
    return idx;
}

std::vector<double> oracle_group_weights(const std::vector<double>& losses, int k,
                                         const std::vector<double>& schedule) {
    const std::size_t n = losses.size();
    const auto order = oracle_stable_sort(losses);
    std::vector<double> weights(n, 0.0);
    const std::size_t base = n / static_cast<std::size_t>(k);
    std::size_t pos = 0;
    for (int j = 0; j < k; ++j) {
        const std::size_t size = (j == k - 1) ? n - pos : base;
        for (std::size_t s = 0; s < size; ++s) {
            weights[order[pos + s]] = schedule[static_cast<std::size_t>(j)] /
                                      static_cast<double>(size);
        }
        pos += size;
    }
    return weights;
}

std::vector<double> oracle_schedule(int k) {
    std::vector<double> w;
    for (int j = 1; j <= k - 1; ++j) {
        w.push_back(1.0 - (static_cast<double>(j) - 1.0) / (static_cast<double>(k) - 1.0));
    }
    w.push_back(w.back() / 2.0);
    return w;
}

// Per-sample-weight reduction for hierarchical stage s.
double oracle_hierarchical(const std::vector<double>& losses, int k0, int delta, int stage,
                           std::vector<double>* weights_out = nullptr) {
    const std::size_t n = losses.size();
    std::vector<double> weights(n, 0.0);
    for (int g = 1; g <= stage; ++g) {
        const int k = std::min<int>(k0 - (g - 1) * delta, static_cast<int>(n));
        const auto gw = oracle_group_weights(losses, k, oracle_schedule(k));
        for (std::size_t i = 0; i < n; ++i) weights[i] += gw[i];
    }
    for (auto& w : weights) w /= static_cast<double>(stage);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) loss += weights[i] * losses[i];
    if (weights_out) *weights_out = weights;
    return loss;
}

std::vector<double> random_losses(Rng& rng, std::size_t n) {
    std::vector<double> l(n);
    for (auto& x : l) x = std::abs(rng.gauss(1.0, 0.8));
    return l;
}

}  // namespace

TEST_CASE("stage_indicator") {
    CHECK(stage_indicator(4, 2) == 1);
    CHECK(stage_indicator(3, 2) == 0);
    CHECK(stage_indicator(75, 75) == 1);
    CHECK_THROWS_AS(stage_indicator(1, 0), BadSpec);
}

TEST_CASE("partition_buckets examples") {
    const auto part = partition_buckets({0.5, 0.1, 0.9, 0.3}, 2);
    CHECK(part.buckets[0] == std::vector<std::size_t>{1, 3});
    CHECK(part.buckets[1] == std::vector<std::size_t>{0, 2});

    std::vector<double> ten(10);
    std::iota(ten.begin(), ten.end(), 0.0);
    const auto part10 = partition_buckets(ten, 3);
    CHECK(part10.buckets[0].size() == 3);
    CHECK(part10.buckets[1].size() == 3);
    CHECK(part10.buckets[2].size() == 4);

    CHECK_THROWS_AS(partition_buckets({1.0, 2.0}, 3), TooFewSamples);
    CHECK_THROWS_AS(partition_buckets({1.0, 2.0}, 1), BadSpec);
}

TEST_CASE("partition_buckets invariants against brute-force checker") {
    Rng rng(29);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 5 + rng.next_u64() % 60;
        const int k = 2 + static_cast<int>(rng.next_u64() % 8);
        if (n < static_cast<std::size_t>(k)) continue;
        const auto losses = random_losses(rng, n);
        const auto part = partition_buckets(losses, k);

        REQUIRE(part.bucket_count() == static_cast<std::size_t>(k));
        const std::size_t base = n / static_cast<std::size_t>(k);
        for (int j = 0; j < k - 1; ++j) CHECK(part.buckets[j].size() == base);
        CHECK(part.buckets[k - 1].size() == n - (static_cast<std::size_t>(k) - 1) * base);

        // coverage + disjointness
        std::vector<int> hit(n, 0);
        for (const auto& bucket : part.buckets) {
            for (auto i : bucket) ++hit[i];
        }
        CHECK(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));

        // ordering matches the oracle sort exactly (stable ties)
        const auto order = oracle_stable_sort(losses);
        std::size_t pos = 0;
        for (const auto& bucket : part.buckets) {
            for (auto i : bucket) CHECK(i == order[pos++]);
        }
        // bucket-boundary ordering: max of bucket j <= min of bucket j+1
        for (int j = 0; j + 1 < k; ++j) {
            double max_j = 0.0, min_next = 1e300;
            for (auto i : part.buckets[j]) max_j = std::max(max_j, losses[i]);
            for (auto i : part.buckets[j + 1]) min_next = std::min(min_next, losses[i]);
            CHECK(max_j <= min_next);
        }
    }
}

TEST_CASE("build_weight_schedule K=9 matches the stated rule exactly") {
    const auto sched = build_weight_schedule(9);
    const std::vector<double> expect{1, 0.875, 0.75, 0.625, 0.5, 0.375, 0.25, 0.125, 0.0625};
    REQUIRE(sched.weights.size() == 9);
    for (std::size_t j = 0; j < 9; ++j) CHECK(sched.weights[j] == expect[j]);
    // cross-check against the independently coded rule
    CHECK(sched.weights == oracle_schedule(9));
}

TEST_CASE("build_weight_schedule small cases, trim, monotonicity") {
    CHECK(build_weight_schedule(2).weights == std::vector<double>{1.0, 0.5});

    const auto trimmed = build_weight_schedule(9, 1);
    REQUIRE(trimmed.weights.size() == 8);
    CHECK(trimmed.weights.front() == 0.875);
    CHECK(trimmed.weights.back() == 0.0625);

    CHECK_THROWS_AS(build_weight_schedule(9, 9), BadTrim);
    CHECK_THROWS_AS(build_weight_schedule(9, -1), BadTrim);
    CHECK_THROWS_AS(build_weight_schedule(1), BadSpec);

    for (int k = 2; k <= 12; ++k) {
        const auto s = build_weight_schedule(k);
        REQUIRE(s.weights.size() == static_cast<std::size_t>(k));
        CHECK(s.weights.front() == 1.0);
        for (std::size_t j = 1; j < s.weights.size(); ++j) {
            CHECK(s.weights[j] < s.weights[j - 1]);
        }
        CHECK(s.weights.back() > 0.0);
    }
}

TEST_CASE("basic_pal hand examples") {
    {
        BucketGroup group{partition_buckets({1.0, 2.0, 3.0, 4.0}, 2), WeightSchedule{{1.0, 1.0}}};
        const auto r = basic_pal(group, {1.0, 2.0, 3.0, 4.0});
        CHECK(r.loss == doctest::Approx(5.0).epsilon(1e-12));
    }
    {
        const std::vector<double> losses{0.1, 0.3, 0.5, 0.9};
        BucketGroup group{partition_buckets(losses, 2), WeightSchedule{{1.0, 0.5}}};
        const auto r = basic_pal(group, losses);
        CHECK(r.loss == doctest::Approx(0.55).epsilon(1e-12));
        // resolved weights: W_j / |B_j|
        CHECK(r.weights[0] == doctest::Approx(0.5));
        CHECK(r.weights[1] == doctest::Approx(0.5));
        CHECK(r.weights[2] == doctest::Approx(0.25));
        CHECK(r.weights[3] == doctest::Approx(0.25));
    }
}

TEST_CASE("basic_pal equals independent per-sample-weight reduction") {
    Rng rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 4 + rng.next_u64() % 40;
        const int k = 2 + static_cast<int>(rng.next_u64() % 8);
        if (n < static_cast<std::size_t>(k)) continue;
        const auto losses = random_losses(rng, n);
        const auto sched = oracle_schedule(k);
        BucketGroup group{partition_buckets(losses, k), WeightSchedule{sched}};
        const auto r = basic_pal(group, losses);

        const auto weights = oracle_group_weights(losses, k, sched);
        double expect = 0.0;
        for (std::size_t i = 0; i < n; ++i) expect += weights[i] * losses[i];
        CHECK(std::abs(r.loss - expect) < 1e-12);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(r.weights[i] - weights[i]) < 1e-12);
    }
}

TEST_CASE("hierarchical_pal stage 1 reduces to basic_pal") {
    Rng rng(37);
    StagePlan plan;
    plan.initial_buckets = 5;
    const auto losses = random_losses(rng, 23);
    const auto h = hierarchical_pal(1, plan, losses);
    BucketGroup group{partition_buckets(losses, 5), build_weight_schedule(5)};
    const auto b = basic_pal(group, losses);
    CHECK(h.loss == b.loss);
    CHECK(h.weights == b.weights);
}

TEST_CASE("hierarchical_pal six-loss hand example") {
    StagePlan plan;
    plan.initial_buckets = 3;
    plan.bucket_decrement = 1;
    const std::vector<double> losses{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    const auto r = hierarchical_pal(2, plan, losses);
    CHECK(r.loss == doctest::Approx(0.45625).epsilon(1e-12));
}

TEST_CASE("hierarchical_pal equals oracle on random instances") {
    Rng rng(41);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 4 + rng.next_u64() % 61;  // up to 64
        const int k0 = 3 + static_cast<int>(rng.next_u64() % 7);  // up to 9
        const int max_stage = std::min<int>(4, k0 - 1);
        const int stage = 1 + static_cast<int>(rng.next_u64() % max_stage);
        StagePlan plan;
        plan.initial_buckets = k0;
        const auto losses = random_losses(rng, n);
        const auto got = hierarchical_pal(stage, plan, losses);
        std::vector<double> oracle_weights;
        const double expect = oracle_hierarchical(losses, k0, 1, stage, &oracle_weights);
        CHECK(std::abs(got.loss - expect) < 1e-12);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(got.weights[i] - oracle_weights[i]) < 1e-12);
        }
        // stage-s loss is the arithmetic mean of the per-group basic_pal values
        double group_sum = 0.0;
        for (int g = 1; g <= stage; ++g) {
            const int k = std::min<int>(k0 - (g - 1), static_cast<int>(n));
            BucketGroup group{partition_buckets(losses, k), build_weight_schedule(k)};
            group_sum += basic_pal(group, losses).loss;
        }
        CHECK(got.loss == doctest::Approx(group_sum / stage).epsilon(1e-12));
    }
}

TEST_CASE("resolved weights are anti-monotone in loss") {
    Rng rng(43);
    StagePlan plan;
    plan.initial_buckets = 6;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 6 + rng.next_u64() % 40;
        auto losses = random_losses(rng, n);
        // force distinct values so rank order is unambiguous
        std::sort(losses.begin(), losses.end());
        for (std::size_t i = 1; i < n; ++i) {
            if (losses[i] <= losses[i - 1]) losses[i] = losses[i - 1] + 1e-6;
        }
        const int stage = 1 + static_cast<int>(rng.next_u64() % 4);
        for (const auto& r : {hierarchical_pal(stage, plan, losses),
                              evolving_pal(std::min(stage, 5), plan, losses)}) {
            for (std::size_t i = 1; i < n; ++i) {
                CHECK(r.weights[i - 1] >= r.weights[i]);  // losses ascend
            }
            CHECK(r.weights.front() >= r.weights.back());
            for (auto w : r.weights) {
                CHECK(w >= 0.0);
                CHECK(w <= 1.0);
            }
        }
    }
}

TEST_CASE("evolving_pal default reading") {
    StagePlan plan;
    plan.initial_buckets = 3;
    const std::vector<double> losses{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};

    const auto stage1 = evolving_pal(1, plan, losses);
    const auto hier1 = hierarchical_pal(1, plan, losses);
    CHECK(stage1.loss == hier1.loss);

    // stage 2 uses only the K=2 group with its own base schedule [1, 0.5]
    const auto stage2 = evolving_pal(2, plan, losses);
    CHECK(stage2.loss == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(stage2.loss != hierarchical_pal(2, plan, losses).loss);

    CHECK_THROWS_AS(evolving_pal(3, plan, losses), GroupTooSmall);
}

TEST_CASE("evolving_pal trim_leading variant") {
    StagePlan plan;
    plan.initial_buckets = 4;
    plan.trim_leading = true;
    const std::vector<double> losses{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    // stage 2: K = 3 buckets, schedule = base-4 schedule minus its leading 1
    const auto r = evolving_pal(2, plan, losses);
    const auto base4 = build_weight_schedule(4);
    BucketGroup group{partition_buckets(losses, 3),
                      WeightSchedule{{base4.weights[1], base4.weights[2], base4.weights[3]}}};
    CHECK(r.loss == basic_pal(group, losses).loss);

    // differs from the untrimmed reading on generic inputs
    plan.trim_leading = false;
    CHECK(r.loss != evolving_pal(2, plan, losses).loss);
}

TEST_CASE("evolving differs from hierarchical at stage >= 2 on generic inputs") {
    Rng rng(47);
    StagePlan plan;
    plan.initial_buckets = 6;
    int differing = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto losses = random_losses(rng, 24);
        if (std::abs(evolving_pal(3, plan, losses).loss -
                     hierarchical_pal(3, plan, losses).loss) > 1e-9) {
            ++differing;
        }
    }
    CHECK(differing == 50);
}

TEST_CASE("tsc_two_bucket_pal") {
    TscBucketConfig cfg;
    cfg.low_weight = 0.1;

    // stage 1, f = 0: plain mean loss
    const std::vector<double> losses{0.5, 1.5, 2.5, 3.5};
    const auto r1 = tsc_two_bucket_pal(losses, cfg, 1);
    CHECK(r1.loss == doctest::Approx(2.0).epsilon(1e-12));
    for (auto w : r1.weights) CHECK(w == doctest::Approx(0.25));

    // N=8, f=0.25: exactly the top-2 losses carry low weight
    std::vector<double> eight{1, 2, 3, 4, 5, 6, 7, 8};
    TscBucketConfig grown = cfg;
    grown.penalty_fraction = 0.25;
    const auto r2 = tsc_two_bucket_pal(eight, grown, 1);
    double expect = 0.0;
    for (int i = 0; i < 6; ++i) expect += eight[static_cast<std::size_t>(i)];
    expect += 0.1 * (7 + 8);
    expect /= 8.0;
    CHECK(r2.loss == doctest::Approx(expect).epsilon(1e-12));
    CHECK(r2.weights[6] == doctest::Approx(0.1 / 8));
    CHECK(r2.weights[7] == doctest::Approx(0.1 / 8));
    CHECK(r2.weights[5] == doctest::Approx(1.0 / 8));

    // growth: stage s adds (s-1)*growth_rate, capped at 0.5
    TscBucketConfig growth = cfg;
    growth.growth_rate = 0.125;
    const auto r3 = tsc_two_bucket_pal(eight, growth, 3);  // f = 0.25
    CHECK(r3.loss == doctest::Approx(expect).epsilon(1e-12));
    const auto r4 = tsc_two_bucket_pal(eight, growth, 100);  // capped at 0.5
    CHECK(std::count_if(r4.weights.begin(), r4.weights.end(),
                        [](double w) { return w == doctest::Approx(0.1 / 8); }) == 4);
}

TEST_CASE("tsc_two_bucket_pal equals basic_pal with a matching uneven split") {
    Rng rng(53);
    TscBucketConfig cfg;
    cfg.low_weight = 0.1;
    cfg.penalty_fraction = 0.25;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 8 + rng.next_u64() % 24;
        const auto losses = random_losses(rng, n);
        const auto got = tsc_two_bucket_pal(losses, cfg, 1);

        const auto n_low = static_cast<std::size_t>(
            std::ceil(0.25 * static_cast<double>(n) - 1e-9));
        const auto order = argsort_ascending(losses);
        BucketPartition part;
        part.buckets.resize(2);
        for (std::size_t i = 0; i < n - n_low; ++i) part.buckets[0].push_back(order[i]);
        for (std::size_t i = n - n_low; i < n; ++i) part.buckets[1].push_back(order[i]);
        // scale bucket weights so basic_pal's per-bucket means reproduce the
        // per-sample weighted mean at this split fraction
        WeightSchedule sched{{static_cast<double>(n - n_low) / static_cast<double>(n),
                              0.1 * static_cast<double>(n_low) / static_cast<double>(n)}};
        const auto ref = basic_pal({part, sched}, losses);
        CHECK(got.loss == doctest::Approx(ref.loss).epsilon(1e-12));
    }
}

TEST_CASE("advance_stage traces") {
    StagePlan plan;
    plan.epoch_interval = 2;
    plan.initial_buckets = 9;
    plan.max_stages = 3;
    std::vector<int> stages;
    for (int epoch = 1; epoch <= 6; ++epoch) {
        stages.push_back(plan.stage);  // stage in effect during this epoch
        advance_stage(plan, epoch);
    }
    CHECK(stages == std::vector<int>{1, 1, 2, 2, 3, 3});

    StagePlan pinned;
    pinned.epoch_interval = 1;
    pinned.max_stages = 1;
    for (int epoch = 1; epoch <= 5; ++epoch) {
        CHECK(pinned.stage == 1);
        advance_stage(pinned, epoch);
    }

    // K0=3, delta=1: group 3 would have one bucket, so stage caps at 2
    StagePlan capped;
    capped.epoch_interval = 1;
    capped.initial_buckets = 3;
    capped.max_stages = 100;
    for (int epoch = 1; epoch <= 10; ++epoch) advance_stage(capped, epoch);
    CHECK(capped.stage == 2);

    // sample-count cap: batches of 8 cannot feed 9 buckets two samples each
    StagePlan hinted;
    hinted.epoch_interval = 1;
    hinted.initial_buckets = 9;
    hinted.max_stages = 100;
    hinted.batch_hint = 8;
    CHECK(hinted.feasible_stage_cap() == 1);
    hinted.batch_hint = 18;  // 18/9 = 2 per bucket from the start
    CHECK(hinted.feasible_stage_cap() == 8);
}
