#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aptf/numeric.hpp"

namespace aptf {

enum class ModelKind { LinearForecaster, MlpForecaster, MlpClassifier };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelSpec {
    ModelKind kind = ModelKind::LinearForecaster;
    int lookback = 24;   // L
    int horizon = 8;     // m (forecasters)
    int variables = 1;   // v
    int hidden = 32;     // MLP hidden width
    int classes = 2;     // C (classifier)

    bool is_classifier() const { return kind == ModelKind::MlpClassifier; }
    int input_width() const { return lookback * variables; }
    int output_width() const {
        return is_classifier() ? classes : horizon * variables;
    }
};

/// Parameters of one differentiable model.
///   LinearForecaster: {W (L x m), b (1 x m)} applied per variable.
///   MlpForecaster:    {W1 (Lv x H), b1 (1 x H), W2 (H x mv), b2 (1 x mv)}, tanh hidden.
///   MlpClassifier:    {W1 (Lv x H), b1 (1 x H), W2 (H x C), b2 (1 x C)}, tanh hidden.
struct ModelState {
    ModelSpec spec;
    std::vector<Matrix> params;
};

enum class OptKind { Sgd, Adam };

struct OptimizerState {
    OptKind kind = OptKind::Adam;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Matrix> m;  // first moments, Adam only
    std::vector<Matrix> v;  // second moments, Adam only
};

/// Gaussian init scaled by 1/sqrt(fan_in), zero biases; deterministic per rng.
ModelState init_model(const ModelSpec& spec, Rng& rng);

OptimizerState make_optimizer(OptKind kind, double lr, const ModelState& model);

/// Batch forward pass. inputs is N x (L*v) with layout input[t*v + j];
/// forecasters return N x (m*v) in the same layout, the classifier N x C logits.
Matrix forward(const ModelState& model, const Matrix& inputs);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

/// Per-sample MSE: mean over the m*v prediction entries of one sample.
std::vector<double> per_sample_loss_mse(const Matrix& predictions, const Matrix& targets);

/// Per-sample cross entropy: -log softmax probability of the true class.
std::vector<double> per_sample_loss_ce(const Matrix& logits, const std::vector<int>& labels);

/// Gradient of sum_i weights[i] * loss_i for a forecaster.
std::vector<Matrix> backward_weighted(const ModelState& model, const Matrix& inputs,
                                      const Matrix& targets, const std::vector<double>& weights);

/// Gradient of sum_i weights[i] * loss_i for the classifier.
std::vector<Matrix> backward_weighted(const ModelState& model, const Matrix& inputs,
                                      const std::vector<int>& labels,
                                      const std::vector<double>& weights);

/// In-place SGD/Adam update; increments the step counter.
/// Throws NonFiniteGradient on NaN/Inf gradients.
void optimizer_step(ModelState& model, OptimizerState& opt, const std::vector<Matrix>& grads);

/// Checkpoint file: one JSON header line (spec, step, shapes) followed by the
/// flat float64 parameter block, little-endian.
void save_checkpoint(const ModelState& model, std::int64_t step, const std::string& path);
std::pair<ModelState, std::int64_t> load_checkpoint(const std::string& path);

}  // namespace aptf
