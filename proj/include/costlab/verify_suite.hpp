#pragma once

// The property suites behind `costbench verify` and the acceptance run.

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "costlab/cost_matrix.hpp"
#include "costlab/data.hpp"
#include "costlab/embedding.hpp"
#include "costlab/embedding_verify.hpp"
#include "costlab/losses.hpp"
#include "costlab/model.hpp"
#include "costlab/trainer.hpp"

namespace costlab {

struct NamedMatrix {
    std::string name;
    CostMatrix cost;
};

/// Every cost matrix the experiments use.
inline std::vector<NamedMatrix> stock_matrices() {
    return {{"binary_alpha(1/6)", costs::binary_alpha(1.0 / 6.0)},
            {"binary_alpha(1/4)", costs::binary_alpha(0.25)},
            {"zero_one(2)", costs::zero_one(2)},
            {"zero_one(3)", costs::zero_one(3)},
            {"german_credit", costs::german_credit()},
            {"german_credit_deferral", costs::german_credit_deferral()},
            {"three_class_ordinal", costs::three_class_ordinal()}};
}

struct CheckResult {
    std::string name;
    bool ok = true;
    std::string detail;
    double seconds = 0.0;
};

template <typename F>
CheckResult timed_check(std::string name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    CheckResult r{std::move(name), true, {}, 0.0};
    std::ostringstream detail;
    r.ok = body(detail);
    r.detail = detail.str();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

struct NamedSurrogate {
    std::string name;
    EmbeddingSurrogate surrogate;
};

inline std::vector<NamedSurrogate> stock_surrogates() {
    std::vector<NamedSurrogate> out;
    for (auto& m : stock_matrices()) out.push_back({m.name, build_embedding_surrogate(m.cost)});
    return out;
}

/// Embedded points reproduce cost rows exactly and are optimal exactly where their reports are.
inline CheckResult check_embeddings(const std::vector<NamedSurrogate>& surrogates, double grid_res) {
    return timed_check("embedding", [&](std::ostream& out) {
        bool ok = true;
        std::size_t checks = 0;
        for (const auto& [name, s] : surrogates) {
            const auto report = verify_embedding(s, grid_res);
            checks += report.checks;
            if (!report.ok()) {
                ok = false;
                out << name << ": " << report.violations.size() << " violations\n" << report.format();
            }
        }
        out << surrogates.size() << " matrices, " << checks << " checks, grid " << grid_res;
        return ok;
    });
}

/// Link separation at each surrogate's alpha_sep times `scale`. With expect_failure set the
/// check passes only if every matrix shows a violation (the negative control).
inline CheckResult check_alpha_separation(const std::vector<NamedSurrogate>& surrogates, double grid_res,
                                          std::size_t n_u, std::uint64_t seed, double scale = 1.0,
                                          bool expect_failure = false) {
    const std::string name = expect_failure ? "alpha-separation negative control" : "alpha-separation";
    return timed_check(name, [&](std::ostream& out) {
        bool ok = true;
        for (const auto& [mname, base] : surrogates) {
            const auto s = scale == 1.0 ? base : base.with_alpha_sep(scale * base.alpha_sep());
            const auto report = verify_alpha_separation(s, grid_res, n_u, seed);
            out << mname << ": alpha=" << s.alpha_sep() << " violations=" << report.violations.size()
                << " near-tie=" << report.near_tie.size() << '\n';
            if (report.ok() == expect_failure) ok = false;
            if (!report.ok() && !expect_failure) {
                const auto text = report.format();
                out << text.substr(0, text.find('\n') + 1);
            }
        }
        out << n_u << " u-samples per matrix, grid " << grid_res;
        return ok;
    });
}

/// The closed-form synthetic Bayes rule against argmin expected cost under the posterior.
inline CheckResult check_prop1(std::size_t n, std::uint64_t seed) {
    return timed_check("bayes rule agreement", [&](std::ostream& out) {
        const auto ds = sample_synthetic(n, seed);
        std::size_t disagreements = 0;
        for (double alpha : {1.0 / 6.0, 0.25, 0.5}) {
            const auto cost = costs::binary_alpha(alpha);
            for (std::size_t i = 0; i < n; ++i) {
                const double x1 = ds.samples.features(i, 0), x2 = ds.samples.features(i, 1);
                const auto optimal = bayes_optimal_reports(cost, posterior(x1, x2));
                if (!std::binary_search(optimal.begin(), optimal.end(), bayes_decision(x1, x2, alpha))) ++disagreements;
            }
        }
        out << disagreements << " disagreements over " << n << " points x 3 alphas";
        return disagreements == 0;
    });
}

/// Finite-difference gradient checks for every loss on linear and MLP models. Each combination
/// needs `n_points` samples away from kinks. MLP checks use narrow hidden layers to keep the
/// number of parameter perturbations small.
inline CheckResult check_gradients(std::size_t n_points, std::uint64_t seed, double tol = 1e-5) {
    return timed_check("gradients", [&](std::ostream& out) {
        bool ok = true;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        struct Task {
            std::string name;
            CostMatrix cost;
            std::size_t dim;
        };
        const std::vector<Task> tasks{{"binary", costs::binary_alpha(1.0 / 6.0), 2},
                                      {"deferral", costs::german_credit_deferral(), 4},
                                      {"ordinal", costs::three_class_ordinal(), 5}};
        std::size_t combos = 0;
        for (const auto& task : tasks) {
            const std::size_t n_labels = task.cost.n_labels();
            Samples data{Matrix(4 * n_points, task.dim), std::vector<std::size_t>(4 * n_points)};
            for (std::size_t i = 0; i < data.size(); ++i) {
                for (double& v : data.features.row(i)) v = gauss(rng);
                data.labels[i] = static_cast<std::size_t>(rng() % n_labels);
            }
            for (auto kind : {LossKind::cross_entropy, LossKind::scaled_cross_entropy, LossKind::embedding,
                              LossKind::embedding_softmax, LossKind::weighted_hinge}) {
                if (kind == LossKind::weighted_hinge && n_labels != 2) continue;
                if (kind == LossKind::weighted_hinge && task.cost.n_reports() != 2) continue;
                const LossSpec spec{kind, task.cost, kind == LossKind::weighted_hinge ? 1.0 / 6.0 : 0.0};
                const auto loss = make_loss(spec, n_labels);
                for (auto mkind : {ModelKind::linear, ModelKind::mlp}) {
                    ModelSpec ms{mkind, task.dim, loss->output_dim(), {16, 16, 16, 16}, rng()};
                    auto model = init_model(ms);
                    // Spread the outputs so that polyhedral losses see several linear pieces.
                    for (double& b : model.layers().back().bias) b = gauss(rng);
                    auto idx = smooth_samples(model, *loss, data);
                    ++combos;
                    const std::string label = task.name + "/" + to_string(kind) + "/" + (mkind == ModelKind::linear ? "linear" : "mlp");
                    if (idx.size() < n_points) {
                        ok = false;
                        out << label << ": only " << idx.size() << " smooth points\n";
                        continue;
                    }
                    idx.resize(n_points);
                    const double err = gradient_check(model, *loss, take(data, idx));
                    if (!(err <= tol)) {
                        ok = false;
                        out << label << ": relative error " << err << '\n';
                    }
                }
            }
        }
        out << combos << " loss x model combinations, " << n_points << " points each, tolerance " << tol;
        return ok;
    });
}

struct VerifyOptions {
    bool fast = false;
    std::vector<NamedMatrix> extra;   // checked in addition to the stock matrices
    std::optional<Matrix> phi;        // replaces the embedded points of the last extra matrix
    std::uint64_t seed = 1;
};

/// Every suite; a violation in any makes the run fail.
inline std::vector<CheckResult> run_verify(const VerifyOptions& opt) {
    auto surrogates = stock_surrogates();
    for (const auto& m : opt.extra) surrogates.push_back({m.name, build_embedding_surrogate(m.cost)});
    if (opt.phi) {
        if (opt.extra.empty()) throw std::invalid_argument("verify: embedded points given without a cost matrix");
        auto& last = surrogates.back();
        last.surrogate = last.surrogate.with_embedded_points(*opt.phi);
        last.name += " (given phi)";
    }
    const double res = opt.fast ? 0.05 : 0.01;
    return {check_embeddings(surrogates, res), check_alpha_separation(surrogates, res, opt.fast ? 1000 : 10000, opt.seed),
            check_prop1(opt.fast ? 10000 : 100000, opt.seed), check_gradients(opt.fast ? 20 : 100, opt.seed)};
}

}  // namespace costlab
