#pragma once

// Experiment harness: config files, seed derivation, the seeded train/evaluate loop over
// (loss, seed) cells, per-row CSV, aggregation and result tables.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "costlab/cost_matrix.hpp"
#include "costlab/data.hpp"
#include "costlab/diagnostics.hpp"
#include "costlab/losses.hpp"
#include "costlab/model.hpp"
#include "costlab/trainer.hpp"

namespace costlab {

/// Bad or inconsistent configuration, detected before any training.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Seeds.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// splitmix64 chained over the master seed, the FNV-1a hash of each name part, then the index.
/// Adding a loss or dataset never changes the seeds of existing cells.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::string_view> parts, std::uint64_t index) {
    std::uint64_t h = splitmix64(master);
    for (auto part : parts) h = splitmix64(h ^ fnv1a64(part));
    return splitmix64(h ^ index);
}

// Number formatting shared by every CSV writer: shortest round-trip representation.

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

inline double parse_double(std::string_view s, const std::string& what) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError(what + ": not a number '" + std::string(s) + "'");
    return v;
}

inline std::uint64_t parse_unsigned(std::string_view s, const std::string& what) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError(what + ": not a nonnegative integer '" + std::string(s) + "'");
    return v;
}

inline bool parse_bool(const std::string& s, const std::string& what) {
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    throw ConfigError(what + ": expected true or false, got '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// LossSpec and DecisionRule as key/value entries. A cost matrix is written inline with rows
// separated by ';' and entries by spaces.

using Entries = std::vector<std::pair<std::string, std::string>>;

inline std::string format_inline_matrix(const Matrix& m) {
    std::string out;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        if (r) out += "; ";
        for (std::size_t c = 0; c < m.cols(); ++c) out += (c ? " " : "") + format_double(m(r, c));
    }
    return out;
}

inline Matrix parse_inline_matrix(const std::string& s) {
    std::vector<std::vector<double>> rows;
    for (const auto& row : split_list(s, ';')) {
        std::vector<double> values;
        std::istringstream in(row);
        std::string tok;
        while (in >> tok) values.push_back(parse_double(tok, "cost"));
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw ConfigError("cost: empty matrix");
    for (const auto& r : rows)
        if (r.size() != rows.front().size()) throw ConfigError("cost: ragged matrix");
    return Matrix::from_rows(rows);
}

inline Entries loss_spec_entries(const LossSpec& spec) {
    Entries e{{"kind", to_string(spec.kind)}};
    if (spec.cost) e.emplace_back("cost", format_inline_matrix(spec.cost->entries()));
    if (spec.kind == LossKind::weighted_hinge) e.emplace_back("hinge_alpha", format_double(spec.hinge_alpha));
    return e;
}

inline LossSpec loss_spec_from_entries(const Entries& entries) {
    LossSpec spec;
    bool have_kind = false;
    for (const auto& [key, value] : entries) {
        try {
            if (key == "kind") spec.kind = parse_loss_kind(value), have_kind = true;
            else if (key == "cost") spec.cost = CostMatrix(parse_inline_matrix(value));
            else if (key == "hinge_alpha") spec.hinge_alpha = parse_double(value, key);
            else throw ConfigError("loss: unknown key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        } catch (const std::domain_error& e) {
            throw ConfigError(e.what());
        }
    }
    if (!have_kind) throw ConfigError("loss: missing kind");
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return spec;
}

inline const char* to_string(DecisionKind kind) {
    switch (kind) {
        case DecisionKind::argmax: return "argmax";
        case DecisionKind::weighted_argmax: return "weighted_argmax";
        case DecisionKind::embedding_link: return "embedding_link";
    }
    return "?";
}

inline Entries decision_rule_entries(const DecisionRule& rule) {
    Entries e{{"rule", to_string(rule.kind)}};
    if (rule.kind == DecisionKind::weighted_argmax) {
        std::string w;
        for (std::size_t i = 0; i < rule.weights.size(); ++i) w += (i ? ", " : "") + format_double(rule.weights[i]);
        e.emplace_back("weights", w);
    }
    return e;
}

inline DecisionRule decision_rule_from_entries(const Entries& entries) {
    std::optional<DecisionKind> kind;
    std::vector<double> weights;
    for (const auto& [key, value] : entries) {
        if (key == "rule") {
            for (auto k : {DecisionKind::argmax, DecisionKind::weighted_argmax, DecisionKind::embedding_link})
                if (value == to_string(k)) kind = k;
            if (!kind) throw ConfigError("rule: unknown decision rule '" + value + "'");
        } else if (key == "weights") {
            for (const auto& w : split_list(value)) weights.push_back(parse_double(w, "weights"));
        } else {
            throw ConfigError("rule: unknown key '" + key + "'");
        }
    }
    if (!kind) throw ConfigError("rule: missing rule");
    if (*kind != DecisionKind::weighted_argmax) {
        if (!weights.empty()) throw ConfigError("rule: weights only apply to weighted_argmax");
        return {*kind, {}};
    }
    try {
        return DecisionRule::weighted(std::move(weights));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

// Experiment configuration.

enum class TableFormat { csv, markdown };

inline TableFormat parse_table_format(const std::string& s) {
    if (s == "csv") return TableFormat::csv;
    if (s == "markdown" || s == "md") return TableFormat::markdown;
    throw ConfigError("unknown table format '" + s + "' (csv or markdown)");
}

/// Loss label for cross-entropy followed by the weighted-argmax search.
inline constexpr std::string_view kPostprocessLabel = "cross_entropy+postprocess";

/// Synthetic data has no fixed size; "whole dataset" means this many draws.
inline constexpr std::size_t kSyntheticFullSize = 5000;

struct ExperimentConfig {
    // [experiment]
    std::string dataset = "synthetic";
    std::size_t n_samples = 500;  // 0 = the whole dataset
    std::size_t n_seeds = 100;
    std::uint64_t master_seed = 0;
    std::vector<LossKind> losses{LossKind::cross_entropy, LossKind::embedding, LossKind::embedding_softmax,
                                 LossKind::scaled_cross_entropy};
    double alpha = 1.0 / 6.0;  // synthetic cost parameter
    std::string data_dir;      // empty = $COSTBENCH_DATA_DIR, then ./data
    std::size_t threads = 0;   // 0 = hardware concurrency
    // [model]
    ModelKind model_kind = ModelKind::linear;
    std::vector<std::size_t> hidden_dims{100, 100, 100, 100};
    // [train]
    std::optional<double> learning_rate;  // unset = default for the model kind
    std::size_t n_epochs = 2000;
    std::size_t minibatch = 0;  // 0 = full batch
    // [postprocess]
    bool postprocess = true;
    std::size_t n_candidates = 100;
    // [output]
    std::string rows_path;
    std::string table_path;
    TableFormat table_format = TableFormat::markdown;
    bool record_wall_time = false;

    // Not read from files: keep trained models in the returned rows.
    bool keep_models = false;

    bool synthetic() const { return dataset == "synthetic"; }

    TrainConfig train_config() const {
        TrainConfig t;
        t.learning_rate = learning_rate.value_or(TrainConfig::default_rate(model_kind));
        t.n_epochs = n_epochs;
        if (minibatch) t.minibatch = minibatch;
        return t;
    }

    /// Loss labels in row order: each training loss, with the post-processed row right after
    /// cross-entropy when enabled and reports coincide with labels.
    std::vector<std::string> loss_labels(const CostMatrix& cost) const {
        std::vector<std::string> out;
        for (auto k : losses) {
            out.emplace_back(to_string(k));
            if (k == LossKind::cross_entropy && postprocess && accuracy_defined(cost)) out.emplace_back(kPostprocessLabel);
        }
        return out;
    }

    void validate() const {
        if (n_seeds == 0) throw ConfigError("n_seeds must be at least 1");
        if (losses.empty()) throw ConfigError("losses: at least one loss is required");
        if (dataset != "synthetic") {
            const auto names = dataset_names();
            if (std::find(names.begin(), names.end(), dataset) == names.end())
                throw ConfigError("unknown dataset '" + dataset + "'");
        } else if (!(alpha > 0.0 && alpha < 1.0)) {
            throw ConfigError("alpha must lie in (0, 1)");
        }
        for (std::size_t i = 0; i < losses.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (losses[i] == losses[j]) throw ConfigError(std::string("losses: duplicate ") + to_string(losses[i]));
        if (learning_rate && !(*learning_rate > 0.0 && std::isfinite(*learning_rate)))
            throw ConfigError("learning_rate must be positive");
        if (n_epochs == 0) throw ConfigError("n_epochs must be positive");
        if (postprocess && n_candidates == 0) throw ConfigError("n_candidates must be positive");
        if (model_kind == ModelKind::mlp)
            for (auto h : hidden_dims)
                if (h == 0) throw ConfigError("hidden_dims must be positive");
    }
};

/// Reads the `key = value` format with [experiment], [model], [train], [postprocess] and
/// [output] sections. Unknown sections or keys are errors.
inline ExperimentConfig parse_config(std::istream& in) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    ExperimentConfig cfg;
    for (const auto& [section, keys] : tree) {
        if (keys.empty() && !keys.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
        for (const auto& [key, node] : keys) {
            const std::string value = detail::trim(node.data());
            const std::string where = section + "." + key;
            if (section == "experiment") {
                if (key == "dataset") cfg.dataset = value;
                else if (key == "n_samples") cfg.n_samples = parse_unsigned(value, where);
                else if (key == "n_seeds") cfg.n_seeds = parse_unsigned(value, where);
                else if (key == "master_seed") cfg.master_seed = parse_unsigned(value, where);
                else if (key == "alpha") cfg.alpha = parse_double(value, where);
                else if (key == "data_dir") cfg.data_dir = value;
                else if (key == "threads") cfg.threads = parse_unsigned(value, where);
                else if (key == "losses") {
                    cfg.losses.clear();
                    for (const auto& name : split_list(value)) {
                        try {
                            cfg.losses.push_back(parse_loss_kind(name));
                        } catch (const std::invalid_argument& e) {
                            throw ConfigError(where + ": " + e.what());
                        }
                    }
                } else throw ConfigError("config: unknown key " + where);
            } else if (section == "model") {
                if (key == "kind") {
                    if (value == "linear") cfg.model_kind = ModelKind::linear;
                    else if (value == "mlp") cfg.model_kind = ModelKind::mlp;
                    else throw ConfigError(where + ": expected linear or mlp");
                } else if (key == "hidden_dims") {
                    cfg.hidden_dims.clear();
                    for (const auto& h : split_list(value)) cfg.hidden_dims.push_back(parse_unsigned(h, where));
                } else throw ConfigError("config: unknown key " + where);
            } else if (section == "train") {
                if (key == "learning_rate") cfg.learning_rate = parse_double(value, where);
                else if (key == "n_epochs") cfg.n_epochs = parse_unsigned(value, where);
                else if (key == "minibatch") cfg.minibatch = parse_unsigned(value, where);
                else throw ConfigError("config: unknown key " + where);
            } else if (section == "postprocess") {
                if (key == "enabled") cfg.postprocess = parse_bool(value, where);
                else if (key == "n_candidates") cfg.n_candidates = parse_unsigned(value, where);
                else throw ConfigError("config: unknown key " + where);
            } else if (section == "output") {
                if (key == "rows") cfg.rows_path = value;
                else if (key == "table") cfg.table_path = value;
                else if (key == "format") cfg.table_format = parse_table_format(value);
                else if (key == "wall_time") cfg.record_wall_time = parse_bool(value, where);
                else throw ConfigError("config: unknown key " + where);
            } else {
                throw ConfigError("config: unknown section [" + section + "]");
            }
        }
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    return parse_config(in);
}

inline std::string format_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "[experiment]\n";
    out << "dataset = " << cfg.dataset << '\n';
    out << "n_samples = " << cfg.n_samples << '\n';
    out << "n_seeds = " << cfg.n_seeds << '\n';
    out << "master_seed = " << cfg.master_seed << '\n';
    out << "losses = ";
    for (std::size_t i = 0; i < cfg.losses.size(); ++i) out << (i ? ", " : "") << to_string(cfg.losses[i]);
    out << "\nalpha = " << format_double(cfg.alpha) << '\n';
    if (!cfg.data_dir.empty()) out << "data_dir = " << cfg.data_dir << '\n';
    out << "threads = " << cfg.threads << "\n\n[model]\n";
    out << "kind = " << (cfg.model_kind == ModelKind::linear ? "linear" : "mlp") << '\n';
    out << "hidden_dims = ";
    for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i) out << (i ? ", " : "") << cfg.hidden_dims[i];
    out << "\n\n[train]\n";
    if (cfg.learning_rate) out << "learning_rate = " << format_double(*cfg.learning_rate) << '\n';
    out << "n_epochs = " << cfg.n_epochs << '\n';
    out << "minibatch = " << cfg.minibatch << "\n\n[postprocess]\n";
    out << "enabled = " << (cfg.postprocess ? "true" : "false") << '\n';
    out << "n_candidates = " << cfg.n_candidates << "\n\n[output]\n";
    if (!cfg.rows_path.empty()) out << "rows = " << cfg.rows_path << '\n';
    if (!cfg.table_path.empty()) out << "table = " << cfg.table_path << '\n';
    out << "format = " << (cfg.table_format == TableFormat::csv ? "csv" : "markdown") << '\n';
    out << "wall_time = " << (cfg.record_wall_time ? "true" : "false") << '\n';
    return out.str();
}

/// Ablation presets: "more-samples" trains on the whole dataset, "larger-model" swaps in the
/// four-layer ReLU network with its default learning rate.
inline std::vector<std::string> ablation_presets() { return {"more-samples", "larger-model"}; }

inline ExperimentConfig apply_preset(ExperimentConfig cfg, const std::string& preset) {
    if (preset == "more-samples") {
        cfg.n_samples = 0;
    } else if (preset == "larger-model") {
        cfg.model_kind = ModelKind::mlp;
        cfg.hidden_dims = {100, 100, 100, 100};
        cfg.learning_rate.reset();
    } else {
        throw ConfigError("unknown ablation preset '" + preset + "'");
    }
    return cfg;
}

// Result rows.

struct ResultRow {
    std::string dataset;
    std::string loss;
    std::size_t seed = 0;  // seed index within the run
    std::string status = "ok";
    double csl = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> accuracy;
    double train_loss = std::numeric_limits<double>::quiet_NaN();
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    std::size_t best_epoch = 0;
    double wall_time = 0.0;  // seconds; written only on request since it breaks byte-identity

    // In memory only.
    std::shared_ptr<const Model> model;
    DecisionRule rule;

    bool ok() const { return status == "ok"; }
};

inline void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows, bool with_wall_time = false) {
    out << "dataset,loss,seed,status,csl,accuracy,train_loss,val_loss,test_loss,best_epoch";
    out << (with_wall_time ? ",wall_time\n" : "\n");
    for (const auto& r : rows) {
        out << r.dataset << ',' << r.loss << ',' << r.seed << ',' << r.status << ',' << format_double(r.csl) << ','
            << (r.accuracy ? format_double(*r.accuracy) : "") << ',' << format_double(r.train_loss) << ','
            << format_double(r.val_loss) << ',' << format_double(r.test_loss) << ',' << r.best_epoch;
        if (with_wall_time) out << ',' << format_double(r.wall_time);
        out << '\n';
    }
}

inline std::vector<ResultRow> read_rows_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("rows: empty file");
    const auto header = detail::split_fields(line, ',');
    const bool with_wall_time = header.size() == 11;
    if (header.size() != 10 && !with_wall_time) throw ConfigError("rows: unexpected header");
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_fields(line, ',');
        if (f.size() != header.size()) throw ConfigError("rows: line " + std::to_string(line_no) + " has the wrong field count");
        const std::string where = "rows line " + std::to_string(line_no);
        ResultRow r;
        r.dataset = f[0];
        r.loss = f[1];
        r.seed = parse_unsigned(f[2], where);
        r.status = f[3];
        r.csl = parse_double(f[4], where);
        if (!f[5].empty()) r.accuracy = parse_double(f[5], where);
        r.train_loss = parse_double(f[6], where);
        r.val_loss = parse_double(f[7], where);
        r.test_loss = parse_double(f[8], where);
        r.best_epoch = parse_unsigned(f[9], where);
        if (with_wall_time) r.wall_time = parse_double(f[10], where);
        rows.push_back(std::move(r));
    }
    return rows;
}

// Running.

/// Runs f(0..n-1) on up to `threads` workers. Each index is handled exactly once; callers write
/// results into slots keyed by index so the output never depends on scheduling.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) f(i);
        });
    for (auto& th : pool) th.join();
}

/// Dataset and cost matrix for a run. UCI tables are loaded once; synthetic data is drawn per seed.
struct ExperimentData {
    CostMatrix cost;
    std::optional<Dataset> table;
};

inline ExperimentData resolve_data(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.synthetic()) return {costs::binary_alpha(cfg.alpha), std::nullopt};
    try {
        auto [ds, cost] = load_uci(cfg.dataset, data_root(cfg.data_dir));
        if (cfg.n_samples > ds.samples.size())
            throw ConfigError(cfg.dataset + ": n_samples exceeds the " + std::to_string(ds.samples.size()) + " available rows");
        return {std::move(cost), std::move(ds)};
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

/// Train/validation/test samples for one seed index.
struct SeedSplit {
    Samples train, val, test;
};

inline SeedSplit seed_split(const ExperimentConfig& cfg, const ExperimentData& data, std::size_t seed_index) {
    const auto data_seed = derive_seed(cfg.master_seed, {cfg.dataset, "data"}, seed_index);
    const auto split_seed = derive_seed(cfg.master_seed, {cfg.dataset, "split"}, seed_index);
    if (cfg.synthetic()) {
        const std::size_t n = cfg.n_samples ? cfg.n_samples : kSyntheticFullSize;
        const auto ds = sample_synthetic(n, data_seed);
        const auto idx = subsample_and_split(n, n, {}, split_seed);
        return {take(ds.samples, idx.train), take(ds.samples, idx.val), take(ds.samples, idx.test)};
    }
    const auto& samples = data.table->samples;
    const std::size_t n = cfg.n_samples ? cfg.n_samples : samples.size();
    const auto idx = subsample_and_split(samples.size(), n, {}, split_seed);
    return {take(samples, idx.train), take(samples, idx.val), take(samples, idx.test)};
}

inline double hinge_alpha_of(const CostMatrix& cost) {
    if (cost.n_reports() != 2 || cost.n_labels() != 2) return 0.0;
    return cost(1, 0) / (cost(1, 0) + cost(0, 1));
}

/// One training run (seed index, training loss) and the rows it produces.
inline std::vector<ResultRow> run_cell(const ExperimentConfig& cfg, const ExperimentData& data, std::size_t seed_index,
                                       LossKind kind) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<std::string> labels =
        kind == LossKind::cross_entropy && cfg.postprocess && accuracy_defined(data.cost)
            ? std::vector<std::string>{to_string(kind), std::string(kPostprocessLabel)}
            : std::vector<std::string>{to_string(kind)};
    std::vector<ResultRow> rows;
    for (const auto& label : labels) {
        ResultRow r;
        r.dataset = cfg.dataset;
        r.loss = label;
        r.seed = seed_index;
        rows.push_back(std::move(r));
    }
    auto fail = [&](const std::string& status) {
        for (auto& r : rows) r.status = status;
        return rows;
    };
    try {
        const auto split = seed_split(cfg, data, seed_index);
        const LossSpec spec{kind, data.cost, kind == LossKind::weighted_hinge ? hinge_alpha_of(data.cost) : 0.0};
        const auto loss = make_loss(spec, data.cost.n_labels());
        ModelSpec mspec{cfg.model_kind, split.train.features.cols(), loss->output_dim(), cfg.hidden_dims,
                        derive_seed(cfg.master_seed, {cfg.dataset, to_string(kind)}, seed_index)};
        auto tcfg = cfg.train_config();
        tcfg.seed = derive_seed(cfg.master_seed, {cfg.dataset, to_string(kind), "batches"}, seed_index);
        const auto trained = train(mspec, *loss, split.train, split.val, tcfg);
        auto model = std::make_shared<const Model>(trained.model);
        const auto& best = trained.history[trained.best_epoch];
        const double test_loss = batch_loss(*model, *loss, split.test, nullptr, nullptr);

        std::vector<DecisionRule> rules{loss->default_rule()};
        if (labels.size() == 2) {
            const auto pp = postprocess_search(decision_inputs(*model, *loss, split.val), split.val.labels, data.cost,
                                               cfg.n_candidates,
                                               derive_seed(cfg.master_seed, {cfg.dataset, kPostprocessLabel}, seed_index));
            rules.push_back(pp.rule);
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto ev = evaluate(*model, *loss, rules[i], split.test, data.cost);
            auto& r = rows[i];
            r.csl = ev.csl;
            r.accuracy = ev.accuracy;
            r.train_loss = best.train_loss;
            r.val_loss = best.val_loss;
            r.test_loss = test_loss;
            r.best_epoch = trained.best_epoch;
            r.wall_time = elapsed;
            r.rule = rules[i];
            if (cfg.keep_models) r.model = model;
        }
        return rows;
    } catch (const TrainingDiverged& e) {
        return fail("diverged@" + std::to_string(e.epoch()));
    } catch (const std::exception& e) {
        std::clog << cfg.dataset << '/' << to_string(kind) << " seed " << seed_index << ": " << e.what() << '\n';
        return fail("error");
    }
}

/// Rows ordered by (loss as configured, seed index). A failing cell yields flagged rows and
/// never stops the others.
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const ExperimentData& data,
                                             std::ostream* progress = nullptr) {
    const std::size_t n_jobs = cfg.losses.size() * cfg.n_seeds;
    std::vector<std::vector<ResultRow>> slots(n_jobs);
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    parallel_for(n_jobs, cfg.threads, [&](std::size_t job) {
        slots[job] = run_cell(cfg, data, job % cfg.n_seeds, cfg.losses[job / cfg.n_seeds]);
        const std::size_t finished = ++done;
        if (progress && (finished % 10 == 0 || finished == n_jobs)) {
            std::lock_guard lock(progress_mutex);
            *progress << "\r" << cfg.dataset << ": " << finished << '/' << n_jobs << " cells" << (finished == n_jobs ? "\n" : "")
                      << std::flush;
        }
    });
    // Regroup so every row of one loss label is contiguous, post-processed rows after cross-entropy.
    std::vector<ResultRow> rows;
    for (const auto& label : cfg.loss_labels(data.cost))
        for (const auto& slot : slots)
            for (const auto& r : slot)
                if (r.loss == label) rows.push_back(r);
    return rows;
}

inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, std::ostream* progress = nullptr) {
    return run_experiment(cfg, resolve_data(cfg), progress);
}

// Aggregation and tables.

struct AggregateCell {
    std::string dataset;
    std::string loss;
    std::string metric;  // "csl" or "accuracy"
    double mean = 0.0;
    double sem = 0.0;
    std::size_t n = 0;
    bool single = false;  // one row only: sem is reported as 0

    bool operator==(const AggregateCell&) const = default;
};

/// Mean and standard error of the mean (sample standard deviation / sqrt n) per dataset, loss
/// and metric, in order of first appearance. Rows that did not finish are left out; accuracy
/// appears only for groups where every finished row has one.
inline std::vector<AggregateCell> aggregate(const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("aggregate: no rows");
    std::vector<std::pair<std::string, std::string>> keys;
    std::map<std::pair<std::string, std::string>, std::vector<const ResultRow*>> groups;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.dataset, r.loss);
        if (!groups.count(key)) keys.push_back(key);
        auto& g = groups[key];
        if (r.ok()) g.push_back(&r);
    }
    // Datasets stay in first-appearance order even when their rows are interleaved.
    std::vector<std::string> datasets;
    for (const auto& [d, l] : keys)
        if (std::find(datasets.begin(), datasets.end(), d) == datasets.end()) datasets.push_back(d);
    std::vector<AggregateCell> out;
    for (const auto& d : datasets) {
        for (const auto& key : keys) {
            if (key.first != d) continue;
            const auto& g = groups[key];
            if (g.empty()) continue;
            std::vector<double> csl, acc;
            for (const auto* r : g) {
                csl.push_back(r->csl);
                if (r->accuracy) acc.push_back(*r->accuracy);
            }
            const auto e = mean_and_se(csl);
            out.push_back({d, key.second, "csl", e.value, e.standard_error, g.size(), g.size() == 1});
            if (acc.size() == g.size()) {
                const auto a = mean_and_se(acc);
                out.push_back({d, key.second, "accuracy", a.value, a.standard_error, g.size(), g.size() == 1});
            }
        }
    }
    return out;
}

inline void write_table_csv(std::ostream& out, const std::vector<AggregateCell>& table) {
    out << "dataset,loss,metric,mean,sem,n\n";
    for (const auto& c : table)
        out << c.dataset << ',' << c.loss << ',' << c.metric << ',' << format_double(c.mean) << ',' << format_double(c.sem)
            << ',' << c.n << '\n';
}

inline std::vector<AggregateCell> read_table_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "dataset,loss,metric,mean,sem,n") throw ConfigError("table: unexpected header");
    std::vector<AggregateCell> out;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_fields(line, ',');
        if (f.size() != 6) throw ConfigError("table: wrong field count");
        AggregateCell c{f[0], f[1], f[2], parse_double(f[3], "mean"), parse_double(f[4], "sem"), parse_unsigned(f[5], "n")};
        c.single = c.n == 1;
        out.push_back(std::move(c));
    }
    return out;
}

inline std::string display_name(const std::string& id) {
    static const std::map<std::string, std::string> names{
        {"synthetic", "Synthetic"},
        {"german_credit", "German Credit"},
        {"german_credit_deferral", "German Credit w/ Deferral"},
        {"student_performance", "Student Performance"},
        {"diabetes", "Diabetes"},
        {"cross_entropy", "Cross-entropy"},
        {std::string(kPostprocessLabel), "Cross-entropy + Post-processing"},
        {"embedding", "Embeddings"},
        {"embedding_softmax", "Embeddings + Softmax"},
        {"scaled_cross_entropy", "Scaled Cross-entropy"},
        {"weighted_hinge", "Weighted Hinge"},
    };
    const auto it = names.find(id);
    return it == names.end() ? id : it->second;
}

/// One line per (dataset, loss): mean ± sem for CSL and accuracy, "-" where accuracy is
/// undefined, the lowest CSL of each dataset block in bold. Single-row cells are marked with †.
inline void write_table_markdown(std::ostream& out, const std::vector<AggregateCell>& table) {
    auto cell = [](const AggregateCell& c) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f ± %.3f%s", c.mean, c.sem, c.n == 1 ? "†" : "");
        return std::string(buf);
    };
    out << "| Dataset | Loss | Cost-sensitive loss (lower is better) | 0-1 accuracy (higher is better) |\n";
    out << "|---|---|---|---|\n";
    std::string current;
    bool any_single = false;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& c = table[i];
        if (c.metric != "csl") continue;
        any_single |= c.single;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& o : table)
            if (o.dataset == c.dataset && o.metric == "csl") best = std::min(best, o.mean);
        std::string acc = "-";
        for (const auto& o : table)
            if (o.dataset == c.dataset && o.loss == c.loss && o.metric == "accuracy") acc = cell(o);
        const std::string csl = c.mean == best ? "**" + cell(c) + "**" : cell(c);
        out << "| " << (c.dataset == current ? "" : display_name(c.dataset)) << " | " << display_name(c.loss) << " | " << csl
            << " | " << acc << " |\n";
        current = c.dataset;
    }
    if (any_single) out << "\n† single row: standard error reported as 0.\n";
}

inline void emit_table(std::ostream& out, const std::vector<AggregateCell>& table, TableFormat format) {
    if (format == TableFormat::csv) write_table_csv(out, table);
    else write_table_markdown(out, table);
}

inline void emit_table(const std::string& path, const std::vector<AggregateCell>& table, TableFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    emit_table(out, table, format);
    if (!out) throw std::runtime_error("error writing " + path);
}

}  // namespace costlab
