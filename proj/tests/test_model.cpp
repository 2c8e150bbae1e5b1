#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "aptf/model.hpp"

using namespace aptf;

namespace {

double weighted_loss(const ModelState& model, const Matrix& inputs, const Matrix& targets,
                     const std::vector<int>& labels, const std::vector<double>& weights) {
    const Matrix out = forward(model, inputs);
    const auto losses = model.spec.is_classifier() ? per_sample_loss_ce(out, labels)
                                                   : per_sample_loss_mse(out, targets);
    double acc = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) acc += weights[i] * losses[i];
    return acc;
}

// Central finite differences over every parameter entry.
std::vector<Matrix> fd_gradients(ModelState model, const Matrix& inputs, const Matrix& targets,
                                 const std::vector<int>& labels,
                                 const std::vector<double>& weights, double h = 1e-5) {
    std::vector<Matrix> grads;
    for (auto& p : model.params) grads.emplace_back(p.rows, p.cols, 0.0);
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        for (std::size_t i = 0; i < model.params[p].size(); ++i) {
            const double saved = model.params[p].data[i];
            model.params[p].data[i] = saved + h;
            const double up = weighted_loss(model, inputs, targets, labels, weights);
            model.params[p].data[i] = saved - h;
            const double down = weighted_loss(model, inputs, targets, labels, weights);
            model.params[p].data[i] = saved;
            grads[p].data[i] = (up - down) / (2.0 * h);
        }
    }
    return grads;
}

void check_gradients_match(const std::vector<Matrix>& analytic, const std::vector<Matrix>& fd,
                           double rel_tol = 1e-4) {
    REQUIRE(analytic.size() == fd.size());
    for (std::size_t p = 0; p < analytic.size(); ++p) {
        REQUIRE(analytic[p].same_shape(fd[p]));
        for (std::size_t i = 0; i < analytic[p].size(); ++i) {
            const double a = analytic[p].data[i];
            const double b = fd[p].data[i];
            const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
            CHECK(std::abs(a - b) / scale < rel_tol);
        }
    }
}

Matrix random_batch(Rng& rng, std::size_t n, std::size_t width, double stddev = 1.0) {
    Matrix m(n, width);
    for (auto& x : m.data) x = rng.gauss(0.0, stddev);
    return m;
}

}  // namespace

TEST_CASE("init_model shapes and determinism") {
    ModelSpec spec;
    spec.kind = ModelKind::LinearForecaster;
    spec.lookback = 4;
    spec.horizon = 2;
    spec.variables = 1;

    Rng rng(3);
    const ModelState model = init_model(spec, rng);
    REQUIRE(model.params.size() == 2);
    CHECK(model.params[0].rows == 4);
    CHECK(model.params[0].cols == 2);
    CHECK(model.params[1].rows == 1);
    CHECK(model.params[1].cols == 2);

    Rng r1(99), r2(99);
    const ModelState a = init_model(spec, r1);
    const ModelState b = init_model(spec, r2);
    CHECK(a.params[0] == b.params[0]);
    CHECK(a.params[1] == b.params[1]);

    ModelSpec bad = spec;
    bad.lookback = 0;
    Rng r3(1);
    CHECK_THROWS_AS(init_model(bad, r3), BadSpec);
}

TEST_CASE("init scales by inverse square root of fan-in") {
    ModelSpec spec;
    spec.kind = ModelKind::MlpForecaster;
    spec.lookback = 100;
    spec.horizon = 1;
    spec.variables = 1;
    spec.hidden = 200;
    Rng rng(7);
    const ModelState model = init_model(spec, rng);
    const auto& w1 = model.params[0];  // 100 x 200, fan-in 100 -> std 0.1
    double var = 0.0;
    for (double x : w1.data) var += x * x;
    var /= static_cast<double>(w1.size());
    const double stddev = std::sqrt(var);
    CHECK(stddev > 0.08);
    CHECK(stddev < 0.12);
}

TEST_CASE("forward basics") {
    ModelSpec spec;
    spec.kind = ModelKind::LinearForecaster;
    spec.lookback = 3;
    spec.horizon = 2;
    spec.variables = 1;
    ModelState model;
    model.spec = spec;
    model.params = {Matrix(3, 2, 0.0), Matrix(1, 2, 0.0)};

    Matrix input(1, 3);
    input(0, 0) = 1.0; input(0, 1) = 2.0; input(0, 2) = 3.0;
    const Matrix zero_pred = forward(model, input);
    CHECK(zero_pred(0, 0) == 0.0);
    CHECK(zero_pred(0, 1) == 0.0);

    // hand product: pred_t = b_t + sum_l W(l,t) x_l
    model.params[0](0, 0) = 0.5;
    model.params[0](1, 0) = -1.0;
    model.params[0](2, 1) = 2.0;
    model.params[1](0, 1) = 0.25;
    const Matrix pred = forward(model, input);
    CHECK(pred(0, 0) == doctest::Approx(0.5 * 1.0 - 1.0 * 2.0));
    CHECK(pred(0, 1) == doctest::Approx(2.0 * 3.0 + 0.25));

    Matrix wrong(1, 4);
    CHECK_THROWS_AS(forward(model, wrong), ShapeMismatch);
}

TEST_CASE("linear forecaster shares weights across variables") {
    ModelSpec spec;
    spec.kind = ModelKind::LinearForecaster;
    spec.lookback = 2;
    spec.horizon = 1;
    spec.variables = 2;
    ModelState model;
    model.spec = spec;
    model.params = {Matrix(2, 1, 0.0), Matrix(1, 1, 0.0)};
    model.params[0](0, 0) = 1.0;
    model.params[0](1, 0) = 10.0;

    Matrix input(1, 4);  // layout [t*v + j]: t0 -> (1, 2), t1 -> (3, 4)
    input(0, 0) = 1.0; input(0, 1) = 2.0; input(0, 2) = 3.0; input(0, 3) = 4.0;
    const Matrix pred = forward(model, input);
    CHECK(pred(0, 0) == doctest::Approx(1.0 * 1.0 + 10.0 * 3.0));
    CHECK(pred(0, 1) == doctest::Approx(1.0 * 2.0 + 10.0 * 4.0));
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(13);
    const Matrix logits = random_batch(rng, 6, 4, 3.0);
    const Matrix probs = softmax_rows(logits);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < probs.cols; ++j) sum += probs(i, j);
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("per-sample losses") {
    Matrix pred(1, 2), target(1, 2);
    pred(0, 0) = 1.0; pred(0, 1) = 1.0;
    target(0, 0) = 0.0; target(0, 1) = 2.0;
    const auto mse_losses = per_sample_loss_mse(pred, target);
    CHECK(mse_losses[0] == doctest::Approx(1.0));

    const auto zero = per_sample_loss_mse(target, target);
    CHECK(zero[0] == 0.0);

    Matrix uniform_logits(1, 4, 0.0);
    const auto ce = per_sample_loss_ce(uniform_logits, {2});
    CHECK(ce[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Matrix confident(1, 3, 0.0);
    confident(0, 1) = 50.0;
    CHECK(per_sample_loss_ce(confident, {1})[0] == doctest::Approx(0.0).epsilon(1e-12));

    Matrix bad(2, 2);
    CHECK_THROWS_AS(per_sample_loss_mse(pred, bad), ShapeMismatch);
    CHECK_THROWS_AS(per_sample_loss_ce(uniform_logits, {0, 1}), ShapeMismatch);
}

TEST_CASE("backward_weighted zero weights give zero gradient") {
    ModelSpec spec;
    spec.kind = ModelKind::MlpForecaster;
    spec.lookback = 3;
    spec.horizon = 2;
    spec.hidden = 4;
    Rng rng(5);
    const ModelState model = init_model(spec, rng);
    const Matrix inputs = random_batch(rng, 4, 3);
    const Matrix targets = random_batch(rng, 4, 2);
    const auto grads = backward_weighted(model, inputs, targets, {0.0, 0.0, 0.0, 0.0});
    for (const auto& g : grads) {
        for (double x : g.data) CHECK(x == 0.0);
    }
    CHECK_THROWS_AS(backward_weighted(model, inputs, targets, {0.0, -1.0, 0.0, 0.0}),
                    NegativeWeight);
    CHECK_THROWS_AS(backward_weighted(model, inputs, targets, {0.0, 0.0}), ShapeMismatch);
}

TEST_CASE("uniform 1/N weights reproduce the mean-loss gradient by linearity") {
    ModelSpec spec;
    spec.kind = ModelKind::LinearForecaster;
    spec.lookback = 4;
    spec.horizon = 2;
    Rng rng(19);
    const ModelState model = init_model(spec, rng);
    const std::size_t n = 6;
    const Matrix inputs = random_batch(rng, n, 4);
    const Matrix targets = random_batch(rng, n, 2);

    std::vector<double> uniform(n, 1.0 / static_cast<double>(n));
    const auto got = backward_weighted(model, inputs, targets, uniform);

    // independent path: accumulate single-sample gradients, then divide by N
    std::vector<Matrix> acc;
    for (const auto& p : model.params) acc.emplace_back(p.rows, p.cols, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        Matrix one_input(1, inputs.cols);
        Matrix one_target(1, targets.cols);
        for (std::size_t c = 0; c < inputs.cols; ++c) one_input(0, c) = inputs(i, c);
        for (std::size_t c = 0; c < targets.cols; ++c) one_target(0, c) = targets(i, c);
        const auto gi = backward_weighted(model, one_input, one_target, {1.0});
        for (std::size_t p = 0; p < acc.size(); ++p) {
            for (std::size_t k = 0; k < acc[p].size(); ++k) {
                acc[p].data[k] += gi[p].data[k] / static_cast<double>(n);
            }
        }
    }
    for (std::size_t p = 0; p < acc.size(); ++p) {
        for (std::size_t k = 0; k < acc[p].size(); ++k) {
            CHECK(std::abs(acc[p].data[k] - got[p].data[k]) < 1e-10);
        }
    }
}

TEST_CASE("gradient check against central finite differences") {
    Rng rng(23);
    for (int trial = 0; trial < 8; ++trial) {
        for (const ModelKind kind :
             {ModelKind::LinearForecaster, ModelKind::MlpForecaster, ModelKind::MlpClassifier}) {
            ModelSpec spec;
            spec.kind = kind;
            spec.lookback = 3;
            spec.horizon = 2;
            spec.variables = 1;
            spec.hidden = 3;
            spec.classes = 3;
            const ModelState model = init_model(spec, rng);
            const std::size_t n = 5;
            const Matrix inputs = random_batch(rng, n, static_cast<std::size_t>(spec.input_width()));
            std::vector<double> weights(n);
            for (auto& w : weights) w = std::abs(rng.gauss(0.5, 0.3));

            Matrix targets;
            std::vector<int> labels;
            if (kind == ModelKind::MlpClassifier) {
                for (std::size_t i = 0; i < n; ++i) {
                    labels.push_back(static_cast<int>(rng.next_u64() % 3));
                }
            } else {
                targets = random_batch(rng, n, static_cast<std::size_t>(spec.output_width()));
            }
            const auto analytic =
                kind == ModelKind::MlpClassifier
                    ? backward_weighted(model, inputs, labels, weights)
                    : backward_weighted(model, inputs, targets, weights);
            const auto fd = fd_gradients(model, inputs, targets, labels, weights);
            check_gradients_match(analytic, fd);
        }
    }
}

TEST_CASE("optimizer_step") {
    ModelSpec spec;
    spec.kind = ModelKind::LinearForecaster;
    spec.lookback = 1;
    spec.horizon = 1;
    ModelState model;
    model.spec = spec;
    model.params = {Matrix(1, 1, 1.0), Matrix(1, 1, 0.0)};

    SUBCASE("zero gradient leaves parameters unchanged") {
        OptimizerState opt = make_optimizer(OptKind::Sgd, 0.1, model);
        optimizer_step(model, opt, {Matrix(1, 1, 0.0), Matrix(1, 1, 0.0)});
        CHECK(model.params[0](0, 0) == 1.0);
        CHECK(opt.step == 1);
    }

    SUBCASE("sgd scalar update") {
        OptimizerState opt = make_optimizer(OptKind::Sgd, 0.1, model);
        optimizer_step(model, opt, {Matrix(1, 1, 2.0), Matrix(1, 1, 0.0)});
        CHECK(model.params[0](0, 0) == doctest::Approx(0.8));
    }

    SUBCASE("adam drives theta^2 toward zero") {
        OptimizerState opt = make_optimizer(OptKind::Adam, 0.01, model);
        for (int step = 0; step < 500; ++step) {
            const double theta = model.params[0](0, 0);
            optimizer_step(model, opt, {Matrix(1, 1, 2.0 * theta), Matrix(1, 1, 0.0)});
        }
        CHECK(std::abs(model.params[0](0, 0)) < 0.05);
    }

    SUBCASE("non-finite gradients are rejected") {
        OptimizerState opt = make_optimizer(OptKind::Sgd, 0.1, model);
        Matrix bad(1, 1, std::numeric_limits<double>::quiet_NaN());
        CHECK_THROWS_AS(optimizer_step(model, opt, {bad, Matrix(1, 1, 0.0)}), NonFiniteGradient);
    }
}

TEST_CASE("checkpoint round-trip is bitwise") {
    ModelSpec spec;
    spec.kind = ModelKind::MlpForecaster;
    spec.lookback = 5;
    spec.horizon = 2;
    spec.variables = 2;
    spec.hidden = 7;
    Rng rng(77);
    const ModelState model = init_model(spec, rng);

    const auto path = (std::filesystem::temp_directory_path() / "aptf_ckpt_test.ckpt").string();
    save_checkpoint(model, 123, path);
    const auto [loaded, step] = load_checkpoint(path);
    CHECK(step == 123);
    CHECK(loaded.spec.kind == spec.kind);
    REQUIRE(loaded.params.size() == model.params.size());
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        CHECK(loaded.params[p] == model.params[p]);
    }
    std::filesystem::remove(path);
}
