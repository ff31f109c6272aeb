#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "costlab/model.hpp"
#include "costlab/trainer.hpp"
#include "test_util.hpp"

namespace costlab {
namespace {

Samples gaussian_blobs(std::size_t n, std::size_t n_labels, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Samples s{Matrix(n, dim), std::vector<std::size_t>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = i % n_labels;
        s.labels[i] = y;
        for (std::size_t j = 0; j < dim; ++j) s.features(i, j) = g(rng) + (j == y % dim ? 1.5 : 0.0);
    }
    return s;
}

ModelSpec linear_spec(std::size_t in, std::size_t out, std::uint64_t seed = 1) {
    return {ModelKind::linear, in, out, {}, seed};
}

ModelSpec small_mlp(std::size_t in, std::size_t out, std::uint64_t seed = 1) {
    return {ModelKind::mlp, in, out, {12, 9}, seed};
}

std::vector<double> flat(Model m) {
    std::vector<double> out;
    m.for_each_parameter([&](double& v) { out.push_back(v); });
    return out;
}

TEST(InitModel, SeedDeterminism) {
    EXPECT_EQ(init_model(small_mlp(3, 2, 9)), init_model(small_mlp(3, 2, 9)));
    EXPECT_NE(flat(init_model(small_mlp(3, 2, 9))), flat(init_model(small_mlp(3, 2, 10))));
}

TEST(InitModel, ParameterCountAndRange) {
    const auto m = init_model(linear_spec(7, 3));
    EXPECT_EQ(m.parameter_count(), 3u * (7u + 1u));
    const auto mlp = init_model(small_mlp(16, 3));
    for (const auto& l : mlp.layers()) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.weights.cols()));
        for (double w : l.weights.data()) EXPECT_LE(std::abs(w), bound);
        for (double b : l.bias) EXPECT_EQ(b, 0.0);
    }
    const auto deep = init_model({ModelKind::mlp, 5, 2, {100, 100, 100, 100}, 0});
    EXPECT_EQ(deep.layers().size(), 5u);
}

TEST(InitModel, RejectsBadSpec) {
    EXPECT_THROW(Model(linear_spec(0, 2)), std::invalid_argument);
    EXPECT_THROW(Model(ModelSpec{ModelKind::mlp, 2, 2, {4, 0}, 0}), std::invalid_argument);
}

TEST(Forward, HandExamples) {
    Model zero(linear_spec(3, 2));
    EXPECT_EQ(zero.forward(std::vector<double>{1.0, -2.0, 3.0}), (std::vector<double>{0.0, 0.0}));

    Model lin(linear_spec(2, 1));
    lin.layers()[0].weights(0, 0) = 1.0;
    EXPECT_EQ(lin.forward(std::vector<double>{0.37, 5.0}), std::vector<double>{0.37});
    EXPECT_THROW(lin.forward(std::vector<double>{1.0}), std::invalid_argument);

    // h = relu([[1,-1],[2,0]] x + (0, -1)),  out = [1, 1] h + 0.5
    Model mlp(ModelSpec{ModelKind::mlp, 2, 1, {2}, 0});
    auto& l0 = mlp.layers()[0];
    l0.weights = Matrix::from_rows({{1.0, -1.0}, {2.0, 0.0}});
    l0.bias = {0.0, -1.0};
    mlp.layers()[1].weights = Matrix::from_rows({{1.0, 1.0}});
    mlp.layers()[1].bias = {0.5};
    EXPECT_EQ(mlp.forward(std::vector<double>{3.0, 1.0}), std::vector<double>{0.5 + 2.0 + 5.0});
    EXPECT_EQ(mlp.forward(std::vector<double>{0.25, 1.0}), std::vector<double>{0.5});  // both units off
}

TEST(ModelFile, ExactRoundTrip) {
    for (const auto& spec : {linear_spec(4, 3, 11), small_mlp(4, 2, 12)}) {
        const auto m = init_model(spec);
        std::stringstream buf;
        write_model(buf, m);
        const auto back = read_model(buf);
        EXPECT_EQ(back, m);
        EXPECT_EQ(back.spec().layer_widths(), spec.layer_widths());
    }
    std::stringstream junk("costlab-model 2\n");
    EXPECT_THROW(read_model(junk), std::runtime_error);
    std::stringstream truncated("costlab-model 1\nkind linear\ndims 2 1\nhidden 0\ninit_seed 0\n0.5\n");
    EXPECT_THROW(read_model(truncated), std::runtime_error);
}

TEST(Train, SeparableTwoPointsDriveCrossEntropyToZero) {
    Samples data{Matrix::from_rows({{-1.0}, {1.0}}), {0, 1}};
    CrossEntropyLoss ce(2);
    TrainConfig cfg{0.5, 3000, std::nullopt, 0};
    const auto trained = train(linear_spec(1, 2), ce, data, data, cfg);
    EXPECT_LT(trained.history.back().train_loss, 0.01);
    EXPECT_EQ(trained.best_epoch, cfg.n_epochs);
}

TEST(Train, ZeroRateLeavesParametersUnchanged) {
    const auto data = gaussian_blobs(40, 3, 3, 2);
    CrossEntropyLoss ce(3);
    const auto spec = small_mlp(3, 3, 4);
    const auto trained = train(spec, ce, data, data, TrainConfig{0.0, 25, std::nullopt, 0});
    EXPECT_EQ(trained.model, init_model(spec));
    EXPECT_EQ(trained.history.size(), 26u);
    for (const auto& r : trained.history) {
        EXPECT_EQ(r.train_loss, trained.history.front().train_loss);
        EXPECT_EQ(r.val_loss, trained.history.front().val_loss);
    }
}

TEST(Train, DeterministicAcrossRuns) {
    const auto data = gaussian_blobs(60, 3, 4, 5);
    const auto val = gaussian_blobs(30, 3, 4, 6);
    LossSpec spec{LossKind::embedding_softmax, costs::three_class_ordinal(), 0.0};
    for (auto batch : {std::optional<std::size_t>{}, std::optional<std::size_t>{16}}) {
        TrainConfig cfg{0.05, 40, batch, 17};
        const auto a = train(small_mlp(4, 3, 8), spec, data, val, cfg);
        const auto b = train(small_mlp(4, 3, 8), spec, data, val, cfg);
        EXPECT_EQ(a.model, b.model);
        EXPECT_EQ(a.best_epoch, b.best_epoch);
        ASSERT_EQ(a.history.size(), b.history.size());
        for (std::size_t e = 0; e < a.history.size(); ++e) {
            EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
            EXPECT_EQ(a.history[e].val_loss, b.history[e].val_loss);
        }
    }
}

TEST(Train, SelectsBestValidationEpoch) {
    // Tiny noisy validation set so the validation curve is not monotone.
    const auto data = gaussian_blobs(80, 2, 2, 7);
    Samples val{Matrix::from_rows({{1.5, 0.0}, {0.0, 1.5}, {1.4, 0.2}}), {1, 0, 0}};
    CrossEntropyLoss ce(2);
    const auto trained = train(linear_spec(2, 2, 3), ce, data, val, TrainConfig{0.2, 300, std::nullopt, 0});
    double best = trained.history.front().val_loss;
    for (const auto& r : trained.history) best = std::min(best, r.val_loss);
    EXPECT_EQ(trained.history[trained.best_epoch].val_loss, best);
    EXPECT_EQ(batch_loss(trained.model, ce, val, nullptr, nullptr), best);
    EXPECT_LT(trained.best_epoch, 300u);  // not the final epoch
}

TEST(Train, DivergenceReportsEpoch) {
    Samples data{Matrix::from_rows({{1e150}, {-1e150}}), {0, 1}};
    CrossEntropyLoss ce(2);
    try {
        train(linear_spec(1, 2), ce, data, data, TrainConfig{1e300, 10, std::nullopt, 0});
        FAIL() << "expected divergence";
    } catch (const TrainingDiverged& e) {
        EXPECT_GE(e.epoch(), 1u);
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST(Train, RejectsBadInputs) {
    const auto data = gaussian_blobs(10, 2, 2, 1);
    CrossEntropyLoss ce(2);
    EXPECT_THROW(train(linear_spec(2, 3), ce, data, data, TrainConfig{}), std::invalid_argument);
    EXPECT_THROW(train(linear_spec(2, 2), ce, data, Samples{}, TrainConfig{}), std::invalid_argument);
    EXPECT_THROW(train(linear_spec(2, 2), ce, data, data, TrainConfig{0.1, 0, std::nullopt, 0}), std::invalid_argument);
}

TEST(Train, SmallRateDecreasesLossForEveryLoss) {
    const auto cost = costs::binary_alpha(1.0 / 6.0);
    const auto data = gaussian_blobs(100, 2, 2, 21);
    std::vector<LossSpec> specs{{LossKind::cross_entropy, cost, 0.0},
                                {LossKind::scaled_cross_entropy, cost, 0.0},
                                {LossKind::embedding, cost, 0.0},
                                {LossKind::embedding_softmax, cost, 0.0},
                                {LossKind::weighted_hinge, cost, 1.0 / 6.0}};
    for (const auto& ls : specs) {
        const auto loss = make_loss(ls, 2);
        for (auto kind : {ModelKind::linear, ModelKind::mlp}) {
            ModelSpec spec{kind, 2, loss->output_dim(), {12, 9}, 3};
            const auto trained = train(spec, *loss, data, data, TrainConfig{1e-3, 10, std::nullopt, 0});
            EXPECT_LT(trained.history[10].train_loss, trained.history[0].train_loss) << to_string(ls.kind);
        }
    }
}

TEST(Evaluate, PerfectConstantAndOrder) {
    const auto cost = costs::three_class_ordinal();
    Samples data{Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 1, 0}, {0, 0, 1}}), {0, 1, 2, 1, 2}};
    CrossEntropyLoss ce(3);

    Model identity(linear_spec(3, 3));
    for (std::size_t i = 0; i < 3; ++i) identity.layers()[0].weights(i, i) = 1.0;
    const auto perfect = evaluate(identity, ce, {}, data, cost);
    EXPECT_EQ(perfect.csl, 0.0);
    EXPECT_EQ(perfect.accuracy, 1.0);

    // Always report 0: mean of cost(0, y) over label frequencies (1/5, 2/5, 2/5).
    Model constant(linear_spec(3, 3));
    constant.layers()[0].bias = {1.0, 0.0, 0.0};
    const auto ev = evaluate(constant, ce, {}, data, cost);
    EXPECT_NEAR(ev.csl, 0.2 * 0.0 + 0.4 * 3.0 + 0.4 * 5.0, 1e-15);

    Samples shuffled{Matrix::from_rows({{0, 0, 1}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}, {0, 1, 0}}), {2, 1, 2, 0, 1}};
    const auto model = init_model(linear_spec(3, 3, 5));
    EXPECT_EQ(evaluate(model, ce, {}, data, cost).confusion, evaluate(model, ce, {}, shuffled, cost).confusion);
    EXPECT_THROW(evaluate(model, ce, {}, Samples{Matrix(0, 3), {}}, cost), std::invalid_argument);

    const auto deferral = evaluate(init_model(linear_spec(3, 3, 1)), ce, {}, Samples{Matrix::from_rows({{1, 0, 0}}), {0}},
                                   CostMatrix::from_rows({{0, 1}, {1, 0}, {.5, .5}}));
    EXPECT_FALSE(deferral.accuracy.has_value());
}

TEST(GradientCheck, LinearCrossEntropy) {
    const auto data = gaussian_blobs(30, 3, 4, 31);
    EXPECT_LE(gradient_check(init_model(linear_spec(4, 3, 2)), CrossEntropyLoss(3), data), 1e-6);
}

TEST(GradientCheck, LinearEmbeddingAwayFromKinks) {
    for (const auto& cost : testing::stock_cost_matrices()) {
        const auto data = gaussian_blobs(40, cost.n_labels(), 4, 32);
        const auto loss = make_loss({LossKind::embedding, cost, 0.0}, cost.n_labels());
        EXPECT_LE(gradient_check(init_model(linear_spec(4, loss->output_dim(), 5)), *loss, data), 1e-5);
    }
}

TEST(GradientCheck, MlpEveryLoss) {
    const auto cost = costs::three_class_ordinal();
    const auto data = gaussian_blobs(20, 3, 4, 33);
    for (auto kind : {LossKind::cross_entropy, LossKind::scaled_cross_entropy, LossKind::embedding,
                      LossKind::embedding_softmax}) {
        const auto loss = make_loss({kind, cost, 0.0}, 3);
        EXPECT_LE(gradient_check(init_model(small_mlp(4, loss->output_dim(), 6)), *loss, data), 1e-5) << to_string(kind);
    }
    const auto hinge = make_loss({LossKind::weighted_hinge, costs::binary_alpha(0.25), 0.25}, 2);
    EXPECT_LE(gradient_check(init_model(small_mlp(4, 1, 7)), *hinge, gaussian_blobs(20, 2, 4, 34)), 1e-5);
}

TEST(GradientCheck, DetectsWrongGradient) {
    struct Halved : CrossEntropyLoss {
        using CrossEntropyLoss::CrossEntropyLoss;
        double value_and_grad(std::span<const double> o, std::size_t y, std::span<double> g) const override {
            const double v = CrossEntropyLoss::value_and_grad(o, y, g);
            for (double& x : g) x *= 0.5;
            return v;
        }
    };
    const auto data = gaussian_blobs(30, 3, 4, 35);
    EXPECT_GT(gradient_check(init_model(linear_spec(4, 3, 2)), Halved(3), data), 1e-2);
}

TEST(History, CsvFormat) {
    std::ostringstream out;
    write_history_csv(out, {{0, 1.5, 2.0}, {1, 0.25, 0.5}});
    EXPECT_EQ(out.str(), "epoch,train_loss,val_loss\n0,1.5,2\n1,0.25,0.5\n");
}

}  // namespace
}  // namespace costlab
