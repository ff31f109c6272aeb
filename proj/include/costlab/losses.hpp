#pragma once

// Training losses behind one interface (value and gradient with respect to model outputs)
// and the decision rules that turn model outputs into reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "costlab/cost_matrix.hpp"
#include "costlab/embedding.hpp"

namespace costlab {

enum class LossKind { cross_entropy, scaled_cross_entropy, embedding, embedding_softmax, weighted_hinge };

inline const char* to_string(LossKind kind) {
    switch (kind) {
        case LossKind::cross_entropy: return "cross_entropy";
        case LossKind::scaled_cross_entropy: return "scaled_cross_entropy";
        case LossKind::embedding: return "embedding";
        case LossKind::embedding_softmax: return "embedding_softmax";
        case LossKind::weighted_hinge: return "weighted_hinge";
    }
    return "?";
}

inline LossKind parse_loss_kind(const std::string& name) {
    for (auto kind : {LossKind::cross_entropy, LossKind::scaled_cross_entropy, LossKind::embedding,
                      LossKind::embedding_softmax, LossKind::weighted_hinge})
        if (name == to_string(kind)) return kind;
    throw std::invalid_argument("unknown loss kind '" + name + "'");
}

struct LossSpec {
    LossKind kind = LossKind::cross_entropy;
    std::optional<CostMatrix> cost;
    double hinge_alpha = 0.0;  // weighted_hinge only

    void validate() const {
        if (kind != LossKind::cross_entropy && !cost)
            throw std::invalid_argument(std::string(to_string(kind)) + " requires a cost matrix");
        if (kind == LossKind::weighted_hinge) {
            if (!(hinge_alpha > 0.0 && hinge_alpha < 1.0)) throw std::invalid_argument("weighted_hinge: alpha in (0,1)");
            if (cost->n_labels() != 2) throw std::invalid_argument("weighted_hinge: binary tasks only");
        }
    }
};

enum class DecisionKind { argmax, weighted_argmax, embedding_link };

struct DecisionRule {
    DecisionKind kind = DecisionKind::argmax;
    std::vector<double> weights;  // weighted_argmax only, strictly positive

    static DecisionRule weighted(std::vector<double> w) {
        for (double v : w)
            if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("weighted_argmax: weights must be positive");
        return {DecisionKind::weighted_argmax, std::move(w)};
    }
};

inline void require_finite_scores(std::span<const double> scores) {
    for (double v : scores)
        if (!std::isfinite(v)) throw std::domain_error("loss: non-finite scores");
}

/// Numerically stable softmax.
inline void softmax(std::span<const double> scores, std::span<double> out) {
    const double top = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) total += out[i] = std::exp(scores[i] - top);
    for (double& v : out.subspan(0, scores.size())) v /= total;
}

inline double log_sum_exp(std::span<const double> scores) {
    const double top = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (double s : scores) total += std::exp(s - top);
    return top + std::log(total);
}

struct ValueGrad {
    double value = 0.0;
    std::vector<double> grad;
};

/// -log softmax(scores)_y and its gradient softmax(scores) - e_y.
inline ValueGrad cross_entropy(std::span<const double> scores, std::size_t y) {
    require_finite_scores(scores);
    if (y >= scores.size()) throw std::out_of_range("cross_entropy: label out of range");
    ValueGrad out{log_sum_exp(scores) - scores[y], std::vector<double>(scores.size())};
    softmax(scores, out.grad);
    out.grad[y] -= 1.0;
    return out;
}

/// Per-label weights: mean cost of each label's column over all reports.
inline std::vector<double> class_weights(const CostMatrix& cost) {
    std::vector<double> w(cost.n_labels(), 0.0);
    for (std::size_t r = 0; r < cost.n_reports(); ++r)
        for (std::size_t y = 0; y < cost.n_labels(); ++y) w[y] += cost(r, y);
    for (double& v : w) v /= static_cast<double>(cost.n_reports());
    return w;
}

inline ValueGrad scaled_cross_entropy(const CostMatrix& cost, std::span<const double> scores, std::size_t y) {
    auto out = cross_entropy(scores, y);
    const double w = class_weights(cost).at(y);
    out.value *= w;
    for (double& g : out.grad) g *= w;
    return out;
}

/// Mixes embedded points with softmax(logits) and evaluates the embedding surrogate there.
/// Logits are indexed by the surrogate's representative reports.
inline ValueGrad embedding_softmax_loss(const EmbeddingSurrogate& s, std::span<const double> logits, std::size_t y) {
    require_finite_scores(logits);
    const auto& reps = s.representative_set();
    if (logits.size() != reps.size()) throw std::invalid_argument("embedding_softmax: one logit per representative report");
    std::vector<double> q(reps.size());
    softmax(logits, q);
    std::vector<double> u(s.dim(), 0.0);
    for (std::size_t k = 0; k < reps.size(); ++k)
        for (std::size_t i = 0; i < u.size(); ++i) u[i] += q[k] * s.embedded(reps[k])[i];
    std::vector<double> g(s.dim());
    ValueGrad out{surrogate_value_and_subgradient(s, u, y, g), std::vector<double>(reps.size())};
    // d/dz_k = q_k (<phi_k, g> - sum_j q_j <phi_j, g>)
    std::vector<double> proj(reps.size());
    double mean = 0.0;
    for (std::size_t k = 0; k < reps.size(); ++k) {
        proj[k] = dot(s.embedded(reps[k]), g);
        mean += q[k] * proj[k];
    }
    for (std::size_t k = 0; k < reps.size(); ++k) out.grad[k] = q[k] * (proj[k] - mean);
    return out;
}

/// Report chosen by `rule` from scores (argmax rules) or a surrogate prediction u (link).
/// Argmax ties resolve to the lowest index.
inline std::size_t decide(const DecisionRule& rule, std::span<const double> scores,
                          const EmbeddingSurrogate* surrogate = nullptr) {
    switch (rule.kind) {
        case DecisionKind::argmax:
            return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
        case DecisionKind::weighted_argmax: {
            if (rule.weights.size() != scores.size()) throw std::invalid_argument("weighted_argmax: weight count mismatch");
            // weights * softmax compared in log space; the softmax normalizer is shared.
            std::size_t best = 0;
            double best_val = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < scores.size(); ++i) {
                const double v = std::log(rule.weights[i]) + scores[i];
                if (v > best_val) best_val = v, best = i;
            }
            return best;
        }
        case DecisionKind::embedding_link:
            if (!surrogate) throw std::invalid_argument("embedding_link: surrogate required");
            return link(*surrogate, scores);
    }
    throw std::logic_error("decide: unknown rule");
}

/// A training loss over raw model outputs, plus the mapping from outputs to the vector its
/// decision rule consumes.
class Loss {
public:
    virtual ~Loss() = default;

    /// Number of model outputs this loss expects.
    virtual std::size_t output_dim() const = 0;
    /// Writes the gradient into `grad` (length output_dim()) and returns the loss value.
    virtual double value_and_grad(std::span<const double> outputs, std::size_t y, std::span<double> grad) const = 0;
    virtual double value(std::span<const double> outputs, std::size_t y) const {
        std::vector<double> g(output_dim());
        return value_and_grad(outputs, y, g);
    }
    /// Vector handed to decide(): scores for argmax rules, a surrogate prediction for links.
    virtual std::vector<double> decision_input(std::span<const double> outputs) const {
        return {outputs.begin(), outputs.end()};
    }
    virtual DecisionRule default_rule() const { return {}; }
    virtual const EmbeddingSurrogate* surrogate() const { return nullptr; }
    /// Non-smooth losses report how far outputs are from the nearest kink (infinity if smooth).
    virtual double kink_distance(std::span<const double>) const { return std::numeric_limits<double>::infinity(); }

    std::size_t decide(std::span<const double> outputs, const DecisionRule& rule) const {
        const auto in = decision_input(outputs);
        return costlab::decide(rule, in, surrogate());
    }
};

class CrossEntropyLoss : public Loss {
public:
    CrossEntropyLoss(std::size_t n_labels, std::vector<double> weights = {})
        : n_labels_(n_labels), weights_(std::move(weights)) {}

    std::size_t output_dim() const override { return n_labels_; }

    double value_and_grad(std::span<const double> outputs, std::size_t y, std::span<double> grad) const override {
        const double w = weights_.empty() ? 1.0 : weights_[y];
        softmax(outputs, grad);
        grad[y] -= 1.0;
        for (double& g : grad) g *= w;
        return w * (log_sum_exp(outputs) - outputs[y]);
    }

private:
    std::size_t n_labels_;
    std::vector<double> weights_;
};

/// Raw outputs are the surrogate prediction u itself.
class EmbeddingLoss : public Loss {
public:
    explicit EmbeddingLoss(EmbeddingSurrogate s) : s_(std::move(s)) {}

    std::size_t output_dim() const override { return s_.dim(); }
    double value_and_grad(std::span<const double> outputs, std::size_t y, std::span<double> grad) const override {
        return surrogate_value_and_subgradient(s_, outputs, y, grad);
    }
    DecisionRule default_rule() const override { return {DecisionKind::embedding_link, {}}; }
    const EmbeddingSurrogate* surrogate() const override { return &s_; }
    double kink_distance(std::span<const double> outputs) const override { return game_kink_distance(outputs); }

protected:
    double game_kink_distance(std::span<const double> u) const {
        double first = -std::numeric_limits<double>::infinity(), second = first;
        for (std::size_t v = 0; v < s_.game_vertices().size(); ++v) {
            const double val = dot(s_.game_vertices()[v], u) + s_.game_vertex_risks()[v];
            if (val > first) second = first, first = val;
            else if (val > second) second = val;
        }
        return first - second;
    }

    EmbeddingSurrogate s_;
};

/// Outputs are logits over representative reports; u is the softmax mixture of embedded points.
class EmbeddingSoftmaxLoss : public EmbeddingLoss {
public:
    using EmbeddingLoss::EmbeddingLoss;

    std::size_t output_dim() const override { return s_.representative_set().size(); }
    double value_and_grad(std::span<const double> outputs, std::size_t y, std::span<double> grad) const override {
        auto vg = embedding_softmax_loss(s_, outputs, y);
        std::copy(vg.grad.begin(), vg.grad.end(), grad.begin());
        return vg.value;
    }
    std::vector<double> decision_input(std::span<const double> outputs) const override {
        std::vector<double> q(outputs.size());
        softmax(outputs, q);
        std::vector<double> u(s_.dim(), 0.0);
        const auto& reps = s_.representative_set();
        for (std::size_t k = 0; k < reps.size(); ++k)
            for (std::size_t i = 0; i < u.size(); ++i) u[i] += q[k] * s_.embedded(reps[k])[i];
        return u;
    }
    double kink_distance(std::span<const double> outputs) const override {
        return game_kink_distance(decision_input(outputs));
    }
};

/// Scalar output; decisions use argmax over (0, u) so that u > 0 picks report 1 and ties pick 0.
class WeightedHingeLoss : public Loss {
public:
    explicit WeightedHingeLoss(double alpha) : h_(alpha) {}

    std::size_t output_dim() const override { return 1; }
    double value_and_grad(std::span<const double> outputs, std::size_t y, std::span<double> grad) const override {
        grad[0] = h_.derivative(outputs[0], y);
        return h_.value(outputs[0], y);
    }
    std::vector<double> decision_input(std::span<const double> outputs) const override { return {0.0, outputs[0]}; }
    double kink_distance(std::span<const double> outputs) const override {
        return std::min(std::abs(outputs[0] - 1.0), std::abs(outputs[0] + 1.0));
    }

private:
    WeightedHinge h_;
};

inline std::unique_ptr<Loss> make_loss(const LossSpec& spec, std::size_t n_labels) {
    spec.validate();
    switch (spec.kind) {
        case LossKind::cross_entropy: return std::make_unique<CrossEntropyLoss>(n_labels);
        case LossKind::scaled_cross_entropy:
            return std::make_unique<CrossEntropyLoss>(n_labels, class_weights(*spec.cost));
        case LossKind::embedding: return std::make_unique<EmbeddingLoss>(build_embedding_surrogate(*spec.cost));
        case LossKind::embedding_softmax:
            return std::make_unique<EmbeddingSoftmaxLoss>(build_embedding_surrogate(*spec.cost));
        case LossKind::weighted_hinge: return std::make_unique<WeightedHingeLoss>(spec.hinge_alpha);
    }
    throw std::logic_error("make_loss: unknown kind");
}

struct PostprocessResult {
    DecisionRule rule;
    double validation_csl = 0.0;
    double argmax_csl = 0.0;  // candidate 0, the uniform weights
};

/// Searches weighted-argmax rules on validation scores. Candidate 0 is the uniform vector;
/// the remaining `n_candidates` are drawn uniformly from the simplex interior. The earliest
/// candidate with the lowest validation cost wins.
inline PostprocessResult postprocess_search(const std::vector<std::vector<double>>& scores_val,
                                            std::span<const std::size_t> labels_val, const CostMatrix& cost,
                                            std::size_t n_candidates, std::uint64_t rng_seed) {
    if (scores_val.empty()) throw std::invalid_argument("postprocess_search: empty validation set");
    if (n_candidates < 1) throw std::invalid_argument("postprocess_search: need at least one candidate");
    if (scores_val.size() != labels_val.size()) throw std::invalid_argument("postprocess_search: length mismatch");
    const std::size_t k = scores_val.front().size();
    std::mt19937_64 rng(rng_seed);
    std::exponential_distribution<double> expo(1.0);

    auto evaluate = [&](const DecisionRule& rule) {
        std::vector<std::size_t> preds(scores_val.size());
        for (std::size_t i = 0; i < preds.size(); ++i) preds[i] = decide(rule, scores_val[i]);
        return cost_sensitive_loss(confusion(preds, labels_val, cost.n_reports(), cost.n_labels()), cost);
    };

    PostprocessResult best{DecisionRule::weighted(std::vector<double>(k, 1.0 / static_cast<double>(k))), 0.0, 0.0};
    best.validation_csl = best.argmax_csl = evaluate(best.rule);
    for (std::size_t c = 0; c < n_candidates; ++c) {
        std::vector<double> w(k);
        double total = 0.0;
        for (double& v : w) total += v = std::max(expo(rng), 1e-300);
        for (double& v : w) v /= total;
        auto rule = DecisionRule::weighted(std::move(w));
        const double csl = evaluate(rule);
        if (csl < best.validation_csl) best.rule = std::move(rule), best.validation_csl = csl;
    }
    return best;
}

}  // namespace costlab
