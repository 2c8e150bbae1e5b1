#include "aptf/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace aptf {

using json = nlohmann::json;

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::LinearForecaster: return "linear_forecaster";
        case ModelKind::MlpForecaster: return "mlp_forecaster";
        case ModelKind::MlpClassifier: return "mlp_classifier";
    }
    throw BadSpec("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "linear_forecaster") return ModelKind::LinearForecaster;
    if (name == "mlp_forecaster") return ModelKind::MlpForecaster;
    if (name == "mlp_classifier") return ModelKind::MlpClassifier;
    throw BadSpec("unknown model kind '" + name + "'");
}

namespace {

void validate_spec(const ModelSpec& spec) {
    if (spec.lookback < 1) throw BadSpec("model spec: lookback must be >= 1");
    if (spec.variables < 1) throw BadSpec("model spec: variables must be >= 1");
    if (!spec.is_classifier() && spec.horizon < 1) {
        throw BadSpec("model spec: horizon must be >= 1");
    }
    if (spec.kind != ModelKind::LinearForecaster && spec.hidden < 1) {
        throw BadSpec("model spec: hidden must be >= 1");
    }
    if (spec.is_classifier() && spec.classes < 2) {
        throw BadSpec("model spec: classes must be >= 2");
    }
}

Matrix gauss_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (auto& x : m.data) x = rng.gauss(0.0, stddev);
    return m;
}

void check_input_shape(const ModelState& model, const Matrix& inputs) {
    if (inputs.cols != static_cast<std::size_t>(model.spec.input_width())) {
        throw ShapeMismatch("forward: input width " + std::to_string(inputs.cols) +
                            " != " + std::to_string(model.spec.input_width()));
    }
}

}  // namespace

ModelState init_model(const ModelSpec& spec, Rng& rng) {
    validate_spec(spec);
    ModelState model;
    model.spec = spec;
    const auto L = static_cast<std::size_t>(spec.lookback);
    const auto m = static_cast<std::size_t>(spec.horizon);
    const auto lv = static_cast<std::size_t>(spec.input_width());
    const auto h = static_cast<std::size_t>(spec.hidden);
    switch (spec.kind) {
        case ModelKind::LinearForecaster:
            model.params.push_back(gauss_matrix(rng, L, m, 1.0 / std::sqrt(double(L))));
            model.params.emplace_back(1, m, 0.0);
            break;
        case ModelKind::MlpForecaster: {
            const auto mv = static_cast<std::size_t>(spec.horizon * spec.variables);
            model.params.push_back(gauss_matrix(rng, lv, h, 1.0 / std::sqrt(double(lv))));
            model.params.emplace_back(1, h, 0.0);
            model.params.push_back(gauss_matrix(rng, h, mv, 1.0 / std::sqrt(double(h))));
            model.params.emplace_back(1, mv, 0.0);
            break;
        }
        case ModelKind::MlpClassifier: {
            const auto c = static_cast<std::size_t>(spec.classes);
            model.params.push_back(gauss_matrix(rng, lv, h, 1.0 / std::sqrt(double(lv))));
            model.params.emplace_back(1, h, 0.0);
            model.params.push_back(gauss_matrix(rng, h, c, 1.0 / std::sqrt(double(h))));
            model.params.emplace_back(1, c, 0.0);
            break;
        }
    }
    return model;
}

OptimizerState make_optimizer(OptKind kind, double lr, const ModelState& model) {
    OptimizerState opt;
    opt.kind = kind;
    opt.lr = lr;
    if (kind == OptKind::Adam) {
        for (const auto& p : model.params) {
            opt.m.emplace_back(p.rows, p.cols, 0.0);
            opt.v.emplace_back(p.rows, p.cols, 0.0);
        }
    }
    return opt;
}

namespace {

// Hidden activations are needed by the backward pass, so the MLP forward is
// split out to return them.
struct MlpForwardCache {
    Matrix hidden;  // tanh(z1), N x H
    Matrix output;  // N x out
};

MlpForwardCache mlp_forward(const ModelState& model, const Matrix& inputs) {
    const Matrix& w1 = model.params[0];
    const Matrix& b1 = model.params[1];
    const Matrix& w2 = model.params[2];
    const Matrix& b2 = model.params[3];
    MlpForwardCache cache;
    cache.hidden = matmul(inputs, w1);
    for (std::size_t i = 0; i < cache.hidden.rows; ++i) {
        for (std::size_t j = 0; j < cache.hidden.cols; ++j) {
            cache.hidden(i, j) = std::tanh(cache.hidden(i, j) + b1(0, j));
        }
    }
    cache.output = matmul(cache.hidden, w2);
    for (std::size_t i = 0; i < cache.output.rows; ++i) {
        for (std::size_t j = 0; j < cache.output.cols; ++j) {
            cache.output(i, j) += b2(0, j);
        }
    }
    return cache;
}

Matrix linear_forward(const ModelState& model, const Matrix& inputs) {
    const Matrix& w = model.params[0];  // L x m
    const Matrix& b = model.params[1];  // 1 x m
    const auto L = static_cast<std::size_t>(model.spec.lookback);
    const auto m = static_cast<std::size_t>(model.spec.horizon);
    const auto v = static_cast<std::size_t>(model.spec.variables);
    Matrix out(inputs.rows, m * v);
    for (std::size_t i = 0; i < inputs.rows; ++i) {
        for (std::size_t t = 0; t < m; ++t) {
            for (std::size_t j = 0; j < v; ++j) {
                double acc = b(0, t);
                for (std::size_t l = 0; l < L; ++l) {
                    acc += w(l, t) * inputs(i, l * v + j);
                }
                out(i, t * v + j) = acc;
            }
        }
    }
    return out;
}

}  // namespace

Matrix forward(const ModelState& model, const Matrix& inputs) {
    check_input_shape(model, inputs);
    Matrix out;
    if (model.spec.kind == ModelKind::LinearForecaster) {
        out = linear_forward(model, inputs);
    } else {
        out = mlp_forward(model, inputs).output;
    }
    ensure_finite(out, "forward output");
    return out;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix probs(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        double maxv = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols; ++j) maxv = std::max(maxv, logits(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            probs(i, j) = std::exp(logits(i, j) - maxv);
            sum += probs(i, j);
        }
        for (std::size_t j = 0; j < logits.cols; ++j) probs(i, j) /= sum;
    }
    return probs;
}

std::vector<double> per_sample_loss_mse(const Matrix& predictions, const Matrix& targets) {
    if (!predictions.same_shape(targets)) {
        throw ShapeMismatch("per_sample_loss_mse: prediction/target shapes differ");
    }
    std::vector<double> losses(predictions.rows, 0.0);
    for (std::size_t i = 0; i < predictions.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < predictions.cols; ++j) {
            const double d = predictions(i, j) - targets(i, j);
            acc += d * d;
        }
        losses[i] = acc / static_cast<double>(predictions.cols);
    }
    if (!all_finite(losses)) throw NonFinite("per_sample_loss_mse: non-finite loss");
    return losses;
}

std::vector<double> per_sample_loss_ce(const Matrix& logits, const std::vector<int>& labels) {
    if (logits.rows != labels.size()) {
        throw ShapeMismatch("per_sample_loss_ce: one label per row required");
    }
    const Matrix probs = softmax_rows(logits);
    std::vector<double> losses(logits.rows, 0.0);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols) {
            throw ShapeMismatch("per_sample_loss_ce: label out of range");
        }
        losses[i] = -std::log(std::max(probs(i, static_cast<std::size_t>(y)), 1e-300));
    }
    return losses;
}

namespace {

void check_weights(const std::vector<double>& weights, std::size_t n) {
    if (weights.size() != n) {
        throw ShapeMismatch("backward_weighted: one weight per sample required");
    }
    for (double w : weights) {
        if (w < 0.0) throw NegativeWeight("backward_weighted: negative sample weight");
        if (!std::isfinite(w)) throw NonFinite("backward_weighted: non-finite sample weight");
    }
}

Matrix column_sums(const Matrix& m) {
    Matrix out(1, m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) out(0, j) += m(i, j);
    }
    return out;
}

// Backprop through the shared MLP trunk given d(loss)/d(output).
std::vector<Matrix> mlp_backward(const ModelState& model, const Matrix& inputs,
                                 const MlpForwardCache& cache, const Matrix& dout) {
    const Matrix& w2 = model.params[2];
    Matrix gw2 = matmul(transpose(cache.hidden), dout);
    Matrix gb2 = column_sums(dout);
    Matrix dhidden = matmul(dout, transpose(w2));
    for (std::size_t i = 0; i < dhidden.rows; ++i) {
        for (std::size_t j = 0; j < dhidden.cols; ++j) {
            const double h = cache.hidden(i, j);
            dhidden(i, j) *= 1.0 - h * h;
        }
    }
    Matrix gw1 = matmul(transpose(inputs), dhidden);
    Matrix gb1 = column_sums(dhidden);
    return {std::move(gw1), std::move(gb1), std::move(gw2), std::move(gb2)};
}

std::vector<Matrix> linear_backward(const ModelState& model, const Matrix& inputs,
                                    const Matrix& dout) {
    const auto L = static_cast<std::size_t>(model.spec.lookback);
    const auto m = static_cast<std::size_t>(model.spec.horizon);
    const auto v = static_cast<std::size_t>(model.spec.variables);
    Matrix gw(L, m, 0.0);
    Matrix gb(1, m, 0.0);
    for (std::size_t i = 0; i < inputs.rows; ++i) {
        for (std::size_t t = 0; t < m; ++t) {
            for (std::size_t j = 0; j < v; ++j) {
                const double d = dout(i, t * v + j);
                if (d == 0.0) continue;
                gb(0, t) += d;
                for (std::size_t l = 0; l < L; ++l) {
                    gw(l, t) += d * inputs(i, l * v + j);
                }
            }
        }
    }
    return {std::move(gw), std::move(gb)};
}

}  // namespace

std::vector<Matrix> backward_weighted(const ModelState& model, const Matrix& inputs,
                                      const Matrix& targets, const std::vector<double>& weights) {
    if (model.spec.is_classifier()) {
        throw ShapeMismatch("backward_weighted: matrix targets passed to a classifier");
    }
    check_input_shape(model, inputs);
    check_weights(weights, inputs.rows);
    if (targets.rows != inputs.rows ||
        targets.cols != static_cast<std::size_t>(model.spec.output_width())) {
        throw ShapeMismatch("backward_weighted: bad target shape");
    }

    if (model.spec.kind == ModelKind::LinearForecaster) {
        Matrix pred = linear_forward(model, inputs);
        const double scale = 2.0 / static_cast<double>(pred.cols);
        for (std::size_t i = 0; i < pred.rows; ++i) {
            for (std::size_t j = 0; j < pred.cols; ++j) {
                pred(i, j) = weights[i] * scale * (pred(i, j) - targets(i, j));
            }
        }
        return linear_backward(model, inputs, pred);
    }

    MlpForwardCache cache = mlp_forward(model, inputs);
    Matrix dout(cache.output.rows, cache.output.cols);
    const double scale = 2.0 / static_cast<double>(cache.output.cols);
    for (std::size_t i = 0; i < dout.rows; ++i) {
        for (std::size_t j = 0; j < dout.cols; ++j) {
            dout(i, j) = weights[i] * scale * (cache.output(i, j) - targets(i, j));
        }
    }
    return mlp_backward(model, inputs, cache, dout);
}

std::vector<Matrix> backward_weighted(const ModelState& model, const Matrix& inputs,
                                      const std::vector<int>& labels,
                                      const std::vector<double>& weights) {
    if (!model.spec.is_classifier()) {
        throw ShapeMismatch("backward_weighted: labels passed to a forecaster");
    }
    check_input_shape(model, inputs);
    check_weights(weights, inputs.rows);
    if (labels.size() != inputs.rows) {
        throw ShapeMismatch("backward_weighted: one label per sample required");
    }

    MlpForwardCache cache = mlp_forward(model, inputs);
    Matrix dout = softmax_rows(cache.output);
    for (std::size_t i = 0; i < dout.rows; ++i) {
        dout(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        for (std::size_t j = 0; j < dout.cols; ++j) dout(i, j) *= weights[i];
    }
    return mlp_backward(model, inputs, cache, dout);
}

void optimizer_step(ModelState& model, OptimizerState& opt, const std::vector<Matrix>& grads) {
    if (grads.size() != model.params.size()) {
        throw ShapeMismatch("optimizer_step: gradient count != parameter count");
    }
    for (std::size_t p = 0; p < grads.size(); ++p) {
        if (!grads[p].same_shape(model.params[p])) {
            throw ShapeMismatch("optimizer_step: gradient shape != parameter shape");
        }
        if (!all_finite(grads[p])) {
            throw NonFiniteGradient("optimizer_step: non-finite gradient");
        }
    }
    opt.step += 1;
    if (opt.kind == OptKind::Sgd) {
        for (std::size_t p = 0; p < grads.size(); ++p) {
            for (std::size_t i = 0; i < grads[p].size(); ++i) {
                model.params[p].data[i] -= opt.lr * grads[p].data[i];
            }
        }
    } else {
        const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
        const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
        for (std::size_t p = 0; p < grads.size(); ++p) {
            auto& m = opt.m[p].data;
            auto& v = opt.v[p].data;
            const auto& g = grads[p].data;
            auto& theta = model.params[p].data;
            for (std::size_t i = 0; i < g.size(); ++i) {
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
                theta[i] -= opt.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.eps);
            }
        }
    }
    for (const auto& p : model.params) ensure_finite(p, "optimizer_step parameters");
}

namespace {

void write_doubles_le(std::ofstream& out, const std::vector<double>& values) {
    static_assert(sizeof(double) == 8);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * 8));
    } else {
        for (double d : values) {
            std::uint64_t bits;
            std::memcpy(&bits, &d, 8);
            char buf[8];
            for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
            out.write(buf, 8);
        }
    }
}

void read_doubles_le(std::ifstream& in, std::vector<double>& values) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * 8));
    } else {
        for (double& d : values) {
            char buf[8];
            in.read(buf, 8);
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) {
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[b])) << (8 * b);
            }
            std::memcpy(&d, &bits, 8);
        }
    }
}

}  // namespace

void save_checkpoint(const ModelState& model, std::int64_t step, const std::string& path) {
    json header{
        {"format", "aptf-ckpt-v1"},
        {"kind", to_string(model.spec.kind)},
        {"lookback", model.spec.lookback},
        {"horizon", model.spec.horizon},
        {"variables", model.spec.variables},
        {"hidden", model.spec.hidden},
        {"classes", model.spec.classes},
        {"step", step},
    };
    json shapes = json::array();
    for (const auto& p : model.params) shapes.push_back({p.rows, p.cols});
    header["param_shapes"] = shapes;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("save_checkpoint: cannot open " + path);
    out << header.dump() << '\n';
    for (const auto& p : model.params) write_doubles_le(out, p.data);
    if (!out) throw Error("save_checkpoint: write failed for " + path);
}

std::pair<ModelState, std::int64_t> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("load_checkpoint: missing header");
    json header = json::parse(line, nullptr, false);
    if (header.is_discarded() || header.value("format", "") != "aptf-ckpt-v1") {
        throw ParseError("load_checkpoint: bad header in " + path);
    }
    ModelState model;
    model.spec.kind = model_kind_from_string(header.at("kind").get<std::string>());
    model.spec.lookback = header.at("lookback").get<int>();
    model.spec.horizon = header.at("horizon").get<int>();
    model.spec.variables = header.at("variables").get<int>();
    model.spec.hidden = header.at("hidden").get<int>();
    model.spec.classes = header.at("classes").get<int>();
    for (const auto& shape : header.at("param_shapes")) {
        Matrix p(shape.at(0).get<std::size_t>(), shape.at(1).get<std::size_t>());
        read_doubles_le(in, p.data);
        if (!in) throw ParseError("load_checkpoint: truncated parameter block");
        model.params.push_back(std::move(p));
    }
    return {std::move(model), header.at("step").get<std::int64_t>()};
}

}  // namespace aptf
