#pragma once

// Deterministic gradient descent with validation-loss model selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "costlab/cost_matrix.hpp"
#include "costlab/losses.hpp"
#include "costlab/model.hpp"

namespace costlab {

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t n_epochs = 2000;
    std::optional<std::size_t> minibatch;  // unset = full batch
    std::uint64_t seed = 0;                // minibatch shuffling only

    static double default_rate(ModelKind kind) { return kind == ModelKind::linear ? 0.1 : 0.01; }

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw std::invalid_argument("TrainConfig: learning_rate must be finite and nonnegative");
        if (n_epochs == 0) throw std::invalid_argument("TrainConfig: n_epochs must be positive");
        if (minibatch && *minibatch == 0) throw std::invalid_argument("TrainConfig: minibatch size must be positive");
    }
};

struct EpochRecord {
    std::size_t epoch;
    double train_loss;
    double val_loss;
};

struct TrainedModel {
    Model model;  // parameters from best_epoch
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

class TrainingDiverged : public std::runtime_error {
public:
    explicit TrainingDiverged(std::size_t epoch)
        : std::runtime_error("training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// Mean loss over `idx` (all samples when null); accumulates the mean gradient when grad != nullptr.
inline double batch_loss(const Model& model, const Loss& loss, const Samples& data, const std::vector<std::size_t>* idx,
                         std::vector<Layer>* grad) {
    const std::size_t n = idx ? idx->size() : data.size();
    if (n == 0) throw std::invalid_argument("batch_loss: empty batch");
    std::vector<double> g(loss.output_dim());
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = idx ? (*idx)[k] : k;
        if (grad) {
            const auto trace = model.forward_trace(data.x(i));
            total += loss.value_and_grad(trace.output, data.labels[i], g);
            model.backward(trace, g, 1.0 / static_cast<double>(n), *grad);
        } else {
            total += loss.value(model.forward(data.x(i)), data.labels[i]);
        }
    }
    return total / static_cast<double>(n);
}

/// History row e holds the losses of the parameters after e updates; row 0 is the initialization.
inline TrainedModel train(const ModelSpec& spec, const Loss& loss, const Samples& train_set, const Samples& val_set,
                          const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0 || val_set.size() == 0) throw std::invalid_argument("train: empty split");
    if (spec.out_dim != loss.output_dim()) throw std::invalid_argument("train: model out_dim does not match the loss");

    Model model = init_model(spec);
    TrainedModel result{model, {}, 0};
    double best_val = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    auto step = [&](const std::vector<Layer>& grad) {
        auto& layers = model.layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto w = layers[l].weights.data();
            const auto gw = grad[l].weights.data();
            for (std::size_t j = 0; j < w.size(); ++j) w[j] -= cfg.learning_rate * gw[j];
            for (std::size_t j = 0; j < layers[l].bias.size(); ++j) layers[l].bias[j] -= cfg.learning_rate * grad[l].bias[j];
        }
    };

    for (std::size_t epoch = 0; epoch <= cfg.n_epochs; ++epoch) {
        auto grad = model.zero_like();
        double train_loss = 0.0, val_loss = 0.0;
        try {
            train_loss = batch_loss(model, loss, train_set, nullptr, cfg.minibatch ? nullptr : &grad);
            val_loss = batch_loss(model, loss, val_set, nullptr, nullptr);
        } catch (const std::domain_error&) {
            throw TrainingDiverged(epoch);
        }
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) throw TrainingDiverged(epoch);
        result.history.push_back({epoch, train_loss, val_loss});
        if (val_loss < best_val) {
            best_val = val_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
        if (epoch == cfg.n_epochs) break;
        if (!cfg.minibatch) {
            step(grad);
            continue;
        }
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += *cfg.minibatch) {
            const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                 order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + *cfg.minibatch)));
            auto g = model.zero_like();
            try {
                batch_loss(model, loss, train_set, &batch, &g);
            } catch (const std::domain_error&) {
                throw TrainingDiverged(epoch);
            }
            step(g);
        }
    }
    return result;
}

inline TrainedModel train(const ModelSpec& spec, const LossSpec& loss_spec, const Samples& train_set,
                          const Samples& val_set, const TrainConfig& cfg) {
    const auto loss = make_loss(loss_spec, loss_spec.cost ? loss_spec.cost->n_labels() : spec.out_dim);
    return train(spec, *loss, train_set, val_set, cfg);
}

struct Evaluation {
    double csl = 0.0;
    std::optional<double> accuracy;  // unset when reports and labels differ
    ConfusionMatrix confusion;
    std::vector<std::size_t> predictions;
};

inline std::vector<std::vector<double>> decision_inputs(const Model& model, const Loss& loss, const Samples& data) {
    std::vector<std::vector<double>> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.push_back(loss.decision_input(model.forward(data.x(i))));
    return out;
}

inline Evaluation evaluate(const Model& model, const Loss& loss, const DecisionRule& rule, const Samples& data,
                           const CostMatrix& cost) {
    if (data.size() == 0) throw std::invalid_argument("evaluate: empty split");
    Evaluation ev;
    ev.predictions.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) ev.predictions.push_back(loss.decide(model.forward(data.x(i)), rule));
    ev.confusion = confusion(ev.predictions, data.labels, cost.n_reports(), cost.n_labels());
    ev.csl = cost_sensitive_loss(ev.confusion, cost);
    if (accuracy_defined(cost)) ev.accuracy = accuracy(ev.confusion);
    return ev;
}

/// Samples where the loss is differentiable in the parameters: at least 1e-4 from a loss kink
/// and with no hidden pre-activation within 1e-4 of zero.
inline std::vector<std::size_t> smooth_samples(const Model& model, const Loss& loss, const Samples& data) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto trace = model.forward_trace(data.x(i));
        bool smooth = loss.kink_distance(trace.output) >= 1e-4;
        for (std::size_t l = 0; smooth && l + 1 < trace.pre.size(); ++l)
            for (double z : trace.pre[l])
                if (std::abs(z) < 1e-4) smooth = false;
        if (smooth) idx.push_back(i);
    }
    return idx;
}

/// Max over parameters of |analytic - central difference| / max(1, |analytic|, |numeric|) for the
/// mean loss over the smooth samples of `data`.
inline double gradient_check(const Model& model, const Loss& loss, const Samples& data, double h = 1e-6) {
    const auto idx = smooth_samples(model, loss, data);
    if (idx.empty()) return 0.0;

    auto analytic = model.zero_like();
    batch_loss(model, loss, data, &idx, &analytic);
    std::vector<double> flat;
    for (const auto& l : analytic) {
        flat.insert(flat.end(), l.weights.data().begin(), l.weights.data().end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }

    Model probe = model;
    std::vector<double*> params;
    probe.for_each_parameter([&](double& v) { params.push_back(&v); });
    double worst = 0.0;
    for (std::size_t j = 0; j < params.size(); ++j) {
        const double saved = *params[j];
        *params[j] = saved + h;
        const double up = batch_loss(probe, loss, data, &idx, nullptr);
        *params[j] = saved - h;
        const double down = batch_loss(probe, loss, data, &idx, nullptr);
        *params[j] = saved;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(flat[j] - numeric) / std::max({1.0, std::abs(flat[j]), std::abs(numeric)}));
    }
    return worst;
}

inline void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
    out << "epoch,train_loss,val_loss\n";
    out.precision(17);
    for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
}

inline void save_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_history_csv(out, history);
}

}  // namespace costlab
