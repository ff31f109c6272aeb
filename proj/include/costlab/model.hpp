#pragma once

// Linear and ReLU MLP score models with hand-written backpropagation.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "costlab/cost_matrix.hpp"

namespace costlab {

/// Features and integer labels for a set of samples.
struct Samples {
    Matrix features;  // n x d
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const double> x(std::size_t i) const { return features.row(i); }
};

enum class ModelKind { linear, mlp };

struct ModelSpec {
    ModelKind kind = ModelKind::linear;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::vector<std::size_t> hidden_dims{100, 100, 100, 100};  // mlp only
    std::uint64_t init_seed = 0;

    void validate() const {
        if (in_dim == 0 || out_dim == 0) throw std::invalid_argument("ModelSpec: dimensions must be positive");
        if (kind == ModelKind::mlp)
            for (auto h : hidden_dims)
                if (h == 0) throw std::invalid_argument("ModelSpec: hidden widths must be positive");
    }

    std::vector<std::size_t> layer_widths() const {
        std::vector<std::size_t> w{in_dim};
        if (kind == ModelKind::mlp) w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
        w.push_back(out_dim);
        return w;
    }
};

struct Layer {
    Matrix weights;  // out x in
    std::vector<double> bias;

    bool operator==(const Layer&) const = default;
};

/// Affine layers with ReLU between them; the last layer emits raw scores.
class Model {
public:
    Model() = default;
    explicit Model(ModelSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        const auto widths = spec_.layer_widths();
        for (std::size_t l = 0; l + 1 < widths.size(); ++l)
            layers_.push_back({Matrix(widths[l + 1], widths[l]), std::vector<double>(widths[l + 1], 0.0)});
    }

    const ModelSpec& spec() const noexcept { return spec_; }
    std::vector<Layer>& layers() noexcept { return layers_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weights.data().size() + l.bias.size();
        return n;
    }

    /// Flat view over all parameters in layer order (weights row-major, then bias).
    template <typename F>
    void for_each_parameter(F&& f) {
        for (auto& l : layers_) {
            for (double& w : l.weights.data()) f(w);
            for (double& b : l.bias) f(b);
        }
    }

    std::vector<double> forward(std::span<const double> x) const {
        if (x.size() != spec_.in_dim) throw std::invalid_argument("forward: feature dimension mismatch");
        std::vector<double> act(x.begin(), x.end());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            act = affine(layers_[l], act);
            if (l + 1 < layers_.size())
                for (double& v : act) v = std::max(v, 0.0);
        }
        return act;
    }

    /// Forward pass that keeps every layer's input and pre-activation for backward().
    struct Trace {
        std::vector<std::vector<double>> inputs;
        std::vector<std::vector<double>> pre;
        std::vector<double> output;
    };

    Trace forward_trace(std::span<const double> x) const {
        Trace t;
        std::vector<double> act(x.begin(), x.end());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            t.inputs.push_back(act);
            auto z = affine(layers_[l], act);
            t.pre.push_back(z);
            act = std::move(z);
            if (l + 1 < layers_.size())
                for (double& v : act) v = std::max(v, 0.0);
        }
        t.output = act;
        return t;
    }

    /// Accumulates scale * dLoss/dparams into `grad` (same layout as layers()).
    void backward(const Trace& t, std::span<const double> d_output, double scale, std::vector<Layer>& grad) const {
        std::vector<double> delta(d_output.begin(), d_output.end());
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const auto& in = t.inputs[l];
            auto& g = grad[l];
            for (std::size_t o = 0; o < delta.size(); ++o) {
                const double d = scale * delta[o];
                if (d == 0.0) continue;
                auto row = g.weights.row(o);
                for (std::size_t i = 0; i < in.size(); ++i) row[i] += d * in[i];
                g.bias[o] += d;
            }
            if (l == 0) break;
            std::vector<double> prev(in.size(), 0.0);
            for (std::size_t o = 0; o < delta.size(); ++o) {
                if (delta[o] == 0.0) continue;
                const auto row = layers_[l].weights.row(o);
                for (std::size_t i = 0; i < in.size(); ++i) prev[i] += delta[o] * row[i];
            }
            const auto& z = t.pre[l - 1];
            for (std::size_t i = 0; i < prev.size(); ++i)
                if (z[i] <= 0.0) prev[i] = 0.0;
            delta = std::move(prev);
        }
    }

    std::vector<Layer> zero_like() const {
        std::vector<Layer> out;
        for (const auto& l : layers_) out.push_back({Matrix(l.weights.rows(), l.weights.cols()), std::vector<double>(l.bias.size(), 0.0)});
        return out;
    }

    bool operator==(const Model& o) const { return layers_ == o.layers_; }

private:
    static std::vector<double> affine(const Layer& layer, std::span<const double> in) {
        std::vector<double> out(layer.bias);
        for (std::size_t o = 0; o < out.size(); ++o) out[o] += dot(layer.weights.row(o), in);
        return out;
    }

    ModelSpec spec_;
    std::vector<Layer> layers_;
};

/// Weights drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero.
inline Model init_model(const ModelSpec& spec) {
    Model m(spec);
    std::mt19937_64 rng(spec.init_seed);
    for (auto& l : m.layers()) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.weights.cols()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : l.weights.data()) w = dist(rng);
    }
    return m;
}

// Parameter file: a versioned text format with 17 significant digits, so values round-trip.

inline void write_model(std::ostream& out, const Model& m) {
    const auto& spec = m.spec();
    out << "costlab-model 1\n";
    out << "kind " << (spec.kind == ModelKind::linear ? "linear" : "mlp") << '\n';
    out << "dims " << spec.in_dim << ' ' << spec.out_dim << '\n';
    out << "hidden " << (spec.kind == ModelKind::mlp ? spec.hidden_dims.size() : 0);
    if (spec.kind == ModelKind::mlp)
        for (auto h : spec.hidden_dims) out << ' ' << h;
    out << "\ninit_seed " << spec.init_seed << '\n';
    out.precision(17);
    for (const auto& l : m.layers()) {
        for (std::size_t o = 0; o < l.weights.rows(); ++o) {
            for (std::size_t i = 0; i < l.weights.cols(); ++i) out << (i ? " " : "") << l.weights(o, i);
            out << '\n';
        }
        for (std::size_t o = 0; o < l.bias.size(); ++o) out << (o ? " " : "") << l.bias[o];
        out << '\n';
    }
}

inline Model read_model(std::istream& in) {
    auto expect = [&](const std::string& key) {
        std::string got;
        if (!(in >> got) || got != key) throw std::runtime_error("model file: expected '" + key + "'");
    };
    expect("costlab-model");
    int version = 0;
    in >> version;
    if (version != 1) throw std::runtime_error("model file: unsupported version");
    ModelSpec spec;
    std::string kind;
    expect("kind");
    in >> kind;
    if (kind == "linear") spec.kind = ModelKind::linear;
    else if (kind == "mlp") spec.kind = ModelKind::mlp;
    else throw std::runtime_error("model file: unknown kind " + kind);
    expect("dims");
    in >> spec.in_dim >> spec.out_dim;
    expect("hidden");
    std::size_t n_hidden = 0;
    in >> n_hidden;
    spec.hidden_dims.assign(n_hidden, 0);
    for (auto& h : spec.hidden_dims) in >> h;
    expect("init_seed");
    in >> spec.init_seed;
    if (!in) throw std::runtime_error("model file: malformed header");
    Model m(spec);
    m.for_each_parameter([&](double& v) {
        std::string token;
        if (!(in >> token)) throw std::runtime_error("model file: truncated parameters");
        v = std::stod(token);
    });
    return m;
}

inline void save_model(const std::string& path, const Model& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_model(out, m);
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return read_model(in);
}

}  // namespace costlab
