#pragma once

// Regret profiles, minimizability gaps, Example 1 boundary geometry and Monte-Carlo Bayes risk.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "costlab/cost_matrix.hpp"
#include "costlab/data.hpp"
#include "costlab/embedding.hpp"
#include "costlab/losses.hpp"
#include "costlab/model.hpp"
#include "costlab/trainer.hpp"

namespace costlab {

inline double entropy(const SimplexDist& p) {
    double h = 0.0;
    for (double v : p.probs())
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

/// A surrogate seen through its conditional risk C_L(u, p) = sum_y p_y L(u, y).
class ConditionalSurrogate {
public:
    ConditionalSurrogate(LossSpec spec, CostMatrix cost)
        : spec_(std::move(spec)), cost_(std::move(cost)), loss_(make_loss(spec_, cost_.n_labels())) {
        if (spec_.kind == LossKind::scaled_cross_entropy) weights_ = class_weights(*spec_.cost);
    }

    const Loss& loss() const { return *loss_; }
    const CostMatrix& cost() const { return cost_; }
    LossKind kind() const { return spec_.kind; }
    std::size_t dim() const { return loss_->output_dim(); }

    double risk(std::span<const double> u, const SimplexDist& p) const {
        double r = 0.0;
        for (std::size_t y = 0; y < p.size(); ++y)
            if (p[y] > 0.0) r += p[y] * loss_->value(u, y);
        return r;
    }

    /// inf_u C_L(u, p). The cross-entropy family has closed forms; every embedding-family
    /// loss attains the Bayes risk of its cost matrix at an embedded point.
    double min_risk(const SimplexDist& p) const {
        switch (spec_.kind) {
            case LossKind::cross_entropy: return entropy(p);
            case LossKind::scaled_cross_entropy: {
                std::vector<double> q(p.size());
                double mass = 0.0;
                for (std::size_t y = 0; y < q.size(); ++y) mass += q[y] = weights_[y] * p[y];
                return mass * entropy(SimplexDist::normalized(std::move(q)));
            }
            default: return bayes_risk(cost_, p);
        }
    }

    /// Predictions at (or, for softmax heads, near) the conditional minimizers.
    std::vector<std::vector<double>> candidates(const SimplexDist& p) const {
        std::vector<std::vector<double>> out;
        switch (spec_.kind) {
            case LossKind::cross_entropy:
            case LossKind::scaled_cross_entropy: {
                std::vector<double> u(p.size());
                for (std::size_t y = 0; y < u.size(); ++y) {
                    const double w = weights_.empty() ? 1.0 : weights_[y];
                    u[y] = std::log(std::max(w * p[y], 1e-300));
                }
                out.push_back(std::move(u));
                break;
            }
            case LossKind::embedding: {
                const auto* s = loss_->surrogate();
                for (std::size_t r : s->representative_set()) out.emplace_back(s->embedded(r).begin(), s->embedded(r).end());
                break;
            }
            case LossKind::embedding_softmax: {
                const std::size_t k = dim();
                for (std::size_t j = 0; j < k; ++j) {
                    std::vector<double> logits(k, -40.0);
                    logits[j] = 40.0;
                    out.push_back(std::move(logits));
                }
                break;
            }
            case LossKind::weighted_hinge: out = {{-1.0}, {1.0}}; break;
        }
        return out;
    }

    /// Default prediction sampler: the inflated embedded box for raw embeddings, Gaussian otherwise.
    std::function<std::vector<double>(std::mt19937_64&)> default_sampler() const {
        if (spec_.kind == LossKind::embedding) {
            EmbeddedBoxSampler box(*loss_->surrogate());
            return [box](std::mt19937_64& rng) { return box(rng); };
        }
        const std::size_t d = dim();
        const double scale = spec_.kind == LossKind::weighted_hinge ? 1.5 : 3.0;
        return [d, scale](std::mt19937_64& rng) {
            std::normal_distribution<double> g(0.0, scale);
            std::vector<double> u(d);
            for (double& v : u) v = g(rng);
            return u;
        };
    }

private:
    LossSpec spec_;
    CostMatrix cost_;
    std::unique_ptr<Loss> loss_;
    std::vector<double> weights_;
};

struct RegretPoint {
    std::vector<double> p;
    std::vector<double> u;
    double surrogate_regret;
    double target_regret;
};

struct RegretProfile {
    std::string loss_id;
    std::string link_id;
    std::vector<RegretPoint> points;

    /// min surrogate regret over points whose target regret exceeds eps (infinity if none).
    double delta_hat(double eps) const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& pt : points)
            if (pt.target_regret > eps) best = std::min(best, pt.surrogate_regret);
        return best;
    }

    double min_surrogate_regret() const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& pt : points) best = std::min(best, pt.surrogate_regret);
        return best;
    }

    void write_csv(std::ostream& out) const {
        if (points.empty()) return;
        for (std::size_t i = 0; i < points.front().p.size(); ++i) out << 'p' << i << ',';
        for (std::size_t i = 0; i < points.front().u.size(); ++i) out << 'u' << i << ',';
        out << "surrogate_regret,target_regret\n";
        out.precision(12);
        for (const auto& pt : points) {
            for (double v : pt.p) out << v << ',';
            for (double v : pt.u) out << v << ',';
            out << pt.surrogate_regret << ',' << pt.target_regret << '\n';
        }
    }

    /// Scatter of (target regret, surrogate regret); at most max_points are drawn, evenly strided.
    void write_svg(std::ostream& out, std::size_t max_points = 5000) const {
        const double w = 480, h = 360, pad = 50;
        double tx = 1e-12, sy = 1e-12;
        for (const auto& pt : points) tx = std::max(tx, pt.target_regret), sy = std::max(sy, pt.surrogate_regret);
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
        out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad / 2 << "\" y2=\"" << h - pad
            << "\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << pad << "\" y2=\"" << pad / 2
            << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << w / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">target regret (max "
            << tx << ")</text>\n";
        out << "<text x=\"14\" y=\"" << h / 2 << "\" transform=\"rotate(-90 14 " << h / 2
            << ")\" text-anchor=\"middle\" font-size=\"12\">surrogate regret (max " << sy << ")</text>\n";
        out << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << loss_id << " / "
            << link_id << "</text>\n";
        const std::size_t stride = std::max<std::size_t>(1, (points.size() + max_points - 1) / std::max<std::size_t>(1, max_points));
        for (std::size_t i = 0; i < points.size(); i += stride) {
            const double x = pad + (w - 1.5 * pad) * std::max(0.0, points[i].target_regret) / tx;
            const double y = h - pad - (h - 1.5 * pad) * std::max(0.0, points[i].surrogate_regret) / sy;
            out << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"1.5\" fill=\"steelblue\" fill-opacity=\"0.5\"/>\n";
        }
        out << "</svg>\n";
    }
};

using Link = std::function<std::size_t(std::span<const double>)>;

/// Pairs (surrogate regret, target regret) over every grid p and every prediction u, where the
/// u's are n_u sampler draws plus the loss's conditional minimizers for p.
inline RegretProfile regret_profile(const ConditionalSurrogate& surrogate, const Link& link, const std::string& link_id,
                                    double p_grid_res, std::size_t n_u, std::uint64_t seed,
                                    std::function<std::vector<double>(std::mt19937_64&)> sampler = {}) {
    if (!sampler) sampler = surrogate.default_sampler();
    const CostMatrix& cost = surrogate.cost();
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> draws;
    std::vector<std::size_t> draw_reports;
    for (std::size_t i = 0; i < n_u; ++i) {
        draws.push_back(sampler(rng));
        draw_reports.push_back(link(draws.back()));
    }

    RegretProfile profile{to_string(surrogate.kind()), link_id, {}};
    for (const auto& p : simplex_grid(cost.n_labels(), p_grid_res)) {
        const double best_target = bayes_risk(cost, p);
        const double best_surrogate = surrogate.min_risk(p);
        auto add = [&](const std::vector<double>& u, std::size_t report) {
            profile.points.push_back({{p.probs().begin(), p.probs().end()},
                                      u,
                                      surrogate.risk(u, p) - best_surrogate,
                                      expected_cost(cost, p, report) - best_target});
        };
        for (std::size_t i = 0; i < draws.size(); ++i) add(draws[i], draw_reports[i]);
        for (const auto& u : surrogate.candidates(p)) add(u, link(u));
    }
    return profile;
}

// Example 1 geometry.

struct BoundaryEntry {
    std::string label;
    double slope = 0.0;      // dx1/dx2 along the decision boundary
    double intercept = 0.0;  // x1 at x2 = 0
    bool degenerate = false; // x1 coefficient ~ 0: slope unbounded
    double deviation_from_optimal = 0.0;
    double deviation_from_vertical = 0.0;
};

struct GeometryReport {
    double alpha = 0.0;
    double optimal_slope = 0.0;
    std::vector<BoundaryEntry> entries;

    void write_csv(std::ostream& out) const {
        out << "label,slope,intercept,degenerate,deviation_from_optimal,deviation_from_vertical\n";
        out.precision(12);
        for (const auto& e : entries)
            out << e.label << ',' << e.slope << ',' << e.intercept << ',' << (e.degenerate ? 1 : 0) << ','
                << e.deviation_from_optimal << ',' << e.deviation_from_vertical << '\n';
    }
};

struct GeometryInput {
    std::string label;
    const Model* model;
    DecisionRule rule;  // weighted_argmax shifts the boundary by log(w1/w0)
};

/// Decision boundary of a binary linear model on (x1, x2): the zero set of an affine score
/// g(x) = a1 x1 + a2 x2 + c, where g is the single output or the gap between the two outputs.
/// The boundary is x1 = slope x2 + intercept with slope = -a2/a1.
inline BoundaryEntry boundary_of(const GeometryInput& in, double optimal_slope) {
    const Model& m = *in.model;
    if (m.spec().kind != ModelKind::linear || m.spec().in_dim != 2)
        throw std::invalid_argument("example1_geometry: needs a linear model on two features");
    const auto& layer = m.layers().front();
    double a1, a2, c;
    if (m.spec().out_dim == 1) {
        a1 = layer.weights(0, 0), a2 = layer.weights(0, 1), c = layer.bias[0];
    } else if (m.spec().out_dim == 2) {
        a1 = layer.weights(1, 0) - layer.weights(0, 0);
        a2 = layer.weights(1, 1) - layer.weights(0, 1);
        c = layer.bias[1] - layer.bias[0];
        if (in.rule.kind == DecisionKind::weighted_argmax) c += std::log(in.rule.weights[1] / in.rule.weights[0]);
    } else {
        throw std::invalid_argument("example1_geometry: binary heads only");
    }
    BoundaryEntry e;
    e.label = in.label;
    const double norm = std::hypot(a1, a2);
    if (std::abs(a1) < 1e-6 * norm || norm == 0.0) {
        e.degenerate = true;
        e.slope = std::copysign(std::numeric_limits<double>::infinity(), -a2 * (a1 == 0.0 ? 1.0 : a1));
        e.intercept = std::numeric_limits<double>::quiet_NaN();
        e.deviation_from_optimal = e.deviation_from_vertical = std::numeric_limits<double>::infinity();
        return e;
    }
    e.slope = -a2 / a1;
    e.intercept = -c / a1;
    e.deviation_from_optimal = std::abs(e.slope - optimal_slope);
    e.deviation_from_vertical = std::abs(e.slope);
    return e;
}

inline GeometryReport example1_geometry(const std::vector<GeometryInput>& models, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("example1_geometry: alpha must lie in (0, 1)");
    GeometryReport report{alpha, 0.5 * std::log(alpha / (1.0 - alpha)), {}};
    for (const auto& in : models) report.entries.push_back(boundary_of(in, report.optimal_slope));
    return report;
}

// Monte-Carlo risks on Example 1.

struct Estimate {
    double value = 0.0;
    double standard_error = 0.0;
};

inline Estimate mean_and_se(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean_and_se: empty sample");
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
}

/// E_x[min(alpha (1 - eta(x)), (1 - alpha) eta(x))] with eta = Pr[Y = +1 | x].
inline Estimate monte_carlo_bayes_csl(double alpha, std::size_t n, std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("monte_carlo_bayes_csl: alpha must lie in (0, 1)");
    const auto ds = sample_synthetic(n, seed);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double eta = posterior(ds.samples.features(i, 0), ds.samples.features(i, 1))[1];
        v[i] = std::min(alpha * (1.0 - eta), (1.0 - alpha) * eta);
    }
    return mean_and_se(v);
}

/// A distribution with a known posterior, used to measure minimizability gaps.
struct PosteriorTask {
    std::function<Samples(std::size_t n, std::uint64_t seed)> sample;
    std::function<SimplexDist(std::span<const double> x)> posterior;
};

inline PosteriorTask example1_task() {
    return {[](std::size_t n, std::uint64_t seed) { return sample_synthetic(n, seed).samples; },
            [](std::span<const double> x) { return posterior(x[0], x[1]); }};
}

/// x ~ N(0, I), Pr[Y = 1 | x] = logistic(<w, x> + b): realizable by a linear CE model.
inline PosteriorTask logistic_task(std::vector<double> w, double b) {
    auto eta = [w, b](std::span<const double> x) {
        const double t = dot(w, x) + b;
        const double q = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
        return SimplexDist({1.0 - q, q});
    };
    return {[w, eta](std::size_t n, std::uint64_t seed) {
                std::mt19937_64 rng(seed);
                std::normal_distribution<double> g(0.0, 1.0);
                std::uniform_real_distribution<double> u(0.0, 1.0);
                Samples s{Matrix(n, w.size()), std::vector<std::size_t>(n)};
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < w.size(); ++j) s.features(i, j) = g(rng);
                    s.labels[i] = u(rng) < eta(s.x(i))[1] ? 1 : 0;
                }
                return s;
            },
            eta};
}

struct GapEstimate {
    double gap = 0.0;
    double standard_error = 0.0;
    TrainedModel trained;
};

/// Trains on n_train samples (validation n_train/4) and estimates
/// E_x[C_L(h(x), p(x)) - inf_u C_L(u, p(x))] on n_eval fresh samples. Each term is a
/// conditional regret, so the estimate is nonnegative up to rounding.
inline GapEstimate minimizability_gap(const ConditionalSurrogate& surrogate, ModelSpec spec, const PosteriorTask& task,
                                      std::size_t n_train, std::size_t n_eval, const TrainConfig& cfg, std::uint64_t seed) {
    const auto train_set = task.sample(n_train, seed);
    const auto val_set = task.sample(std::max<std::size_t>(1, n_train / 4), seed ^ 0x9e3779b97f4a7c15ull);
    const auto eval_set = task.sample(n_eval, seed ^ 0xbf58476d1ce4e5b9ull);
    spec.in_dim = train_set.features.cols();
    spec.out_dim = surrogate.dim();
    GapEstimate out;
    out.trained = train(spec, surrogate.loss(), train_set, val_set, cfg);
    std::vector<double> regrets(eval_set.size());
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const auto p = task.posterior(eval_set.x(i));
        regrets[i] = surrogate.risk(out.trained.model.forward(eval_set.x(i)), p) - surrogate.min_risk(p);
    }
    const auto est = mean_and_se(regrets);
    out.gap = est.value;
    out.standard_error = est.standard_error;
    return out;
}

}  // namespace costlab
