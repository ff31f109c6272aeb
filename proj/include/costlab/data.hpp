#pragma once

// Example 1 synthetic distribution, UCI table ingestion and deterministic splits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "costlab/cost_matrix.hpp"
#include "costlab/model.hpp"

namespace costlab {

struct ColumnTransform {
    enum class Kind { numeric, categorical };
    std::string name;
    Kind kind = Kind::numeric;
    double mean = 0.0;   // numeric
    double scale = 1.0;  // numeric; 1 for constant columns
    std::vector<std::string> vocabulary;  // categorical, sorted

    std::size_t width() const { return kind == Kind::numeric ? 1 : vocabulary.size(); }
    bool operator==(const ColumnTransform&) const = default;
};

/// Enough to replay the feature transform on new raw rows.
struct Preprocessing {
    std::vector<ColumnTransform> columns;
    std::size_t dropped_rows = 0;

    std::size_t output_dim() const {
        std::size_t d = 0;
        for (const auto& c : columns) d += c.width();
        return d;
    }

    void transform_row(const std::vector<std::string>& raw, std::span<double> out) const {
        if (raw.size() != columns.size()) throw std::invalid_argument("preprocessing: column count mismatch");
        std::size_t k = 0;
        for (std::size_t j = 0; j < columns.size(); ++j) {
            const auto& c = columns[j];
            if (c.kind == ColumnTransform::Kind::numeric) {
                out[k++] = (parse_number(raw[j], c.name) - c.mean) / c.scale;
                continue;
            }
            const auto it = std::lower_bound(c.vocabulary.begin(), c.vocabulary.end(), raw[j]);
            if (it == c.vocabulary.end() || *it != raw[j])
                throw std::invalid_argument("preprocessing: unknown category '" + raw[j] + "' in column " + c.name);
            for (std::size_t v = 0; v < c.vocabulary.size(); ++v) out[k + v] = 0.0;
            out[k + static_cast<std::size_t>(it - c.vocabulary.begin())] = 1.0;
            k += c.vocabulary.size();
        }
    }

    Matrix apply(const std::vector<std::vector<std::string>>& rows) const {
        Matrix m(rows.size(), output_dim());
        for (std::size_t i = 0; i < rows.size(); ++i) transform_row(rows[i], m.row(i));
        return m;
    }

    static double parse_number(const std::string& s, const std::string& column) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size() || !std::isfinite(v))
            throw std::invalid_argument("expected a number in column " + column + ", got '" + s + "'");
        return v;
    }
};

struct Dataset {
    std::string name;
    Samples samples;
    std::vector<std::string> label_names;  // index -> name
    std::string source;                    // "synthetic(alpha=..., seed=...)" or "uci(name, fnv1a64=...)"
    Preprocessing preprocessing;

    std::size_t size() const { return samples.size(); }
    std::size_t n_labels() const { return label_names.size(); }
};

// Example 1: y uniform on {-1, +1}, x2 ~ U(0, 1], x1 ~ N(y x2, x2^2). Label index 0 is -1.

inline Dataset sample_synthetic(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("sample_synthetic: n must be positive");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Dataset ds{"synthetic", {Matrix(n, 2), std::vector<std::size_t>(n)}, {"-1", "+1"},
               "synthetic(seed=" + std::to_string(seed) + ")", {}};
    for (std::size_t i = 0; i < n; ++i) {
        const bool positive = coin(rng);
        const double x2 = 1.0 - unif(rng);  // (0, 1]
        const double x1 = (positive ? x2 : -x2) + x2 * gauss(rng);
        ds.samples.features(i, 0) = x1;
        ds.samples.features(i, 1) = x2;
        ds.samples.labels[i] = positive ? 1 : 0;
    }
    ds.preprocessing.columns = {{"x1", ColumnTransform::Kind::numeric, 0.0, 1.0, {}},
                                {"x2", ColumnTransform::Kind::numeric, 0.0, 1.0, {}}};
    return ds;
}

/// Pr[Y = +1 | x] = logistic(2 x1 / x2).
inline SimplexDist posterior(double x1, double x2) {
    if (!(x2 > 0.0)) throw std::domain_error("posterior: x2 must be positive");
    const double t = 2.0 * x1 / x2;
    const double q = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    return SimplexDist({1.0 - q, q});
}

inline double synthetic_threshold(double x2, double alpha) { return 0.5 * x2 * std::log(alpha / (1.0 - alpha)); }

/// Report index under binary_alpha(alpha): 1 (+1) iff x1 >= (x2/2) log(alpha/(1-alpha)).
inline std::size_t bayes_decision(double x1, double x2, double alpha) {
    if (!(x2 > 0.0)) throw std::domain_error("bayes_decision: x2 must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("bayes_decision: alpha must lie in (0, 1)");
    return x1 >= synthetic_threshold(x2, alpha) ? 1 : 0;
}

// UCI tables.

struct DatasetSchema {
    std::string name;
    std::string file;  // under data/<name>/
    char delimiter = ',';  // ' ' means runs of whitespace
    bool header = true;
    std::size_t n_columns = 0;
    std::size_t label_column = 0;
    std::vector<std::size_t> categorical;  // raw column indices (label excluded)
    std::map<std::string, std::size_t> label_map;
    std::vector<std::string> label_names;
    CostMatrix cost;
};

inline std::vector<std::string> dataset_names() {
    return {"german_credit", "german_credit_deferral", "student_performance", "diabetes"};
}

/// German Credit: 20 attributes, class 1 = good, 2 = bad; qualitative attributes use A-codes.
/// Student: 36 integer/real-coded attributes plus Target. Diabetes: Diabetes_012 then 21 indicators.
inline DatasetSchema dataset_schema(const std::string& name) {
    if (name == "german_credit" || name == "german_credit_deferral") {
        return {name,  "raw.data", ' ', false, 21, 20, {0, 2, 3, 5, 6, 8, 9, 11, 13, 14, 16, 18, 19},
                {{"1", 0}, {"2", 1}}, {"good", "bad"},
                name == "german_credit" ? costs::german_credit() : costs::german_credit_deferral()};
    }
    if (name == "student_performance") {
        return {name, "raw.csv", ';', true, 37, 36, {}, {{"Dropout", 0}, {"Enrolled", 1}, {"Graduate", 2}},
                {"Dropout", "Enrolled", "Graduate"}, costs::three_class_ordinal()};
    }
    if (name == "diabetes") {
        return {name, "raw.csv", ',', true, 22, 0, {}, {{"0", 0}, {"0.0", 0}, {"1", 1}, {"1.0", 1}, {"2", 2}, {"2.0", 2}},
                {"no_diabetes", "prediabetes", "diabetes"}, costs::three_class_ordinal()};
    }
    throw std::invalid_argument("unknown dataset '" + name + "'");
}

/// Where the raw file for the dataset lives: the given root (or $COSTBENCH_DATA_DIR, or ./data).
inline std::filesystem::path data_root(const std::string& override_root = "") {
    if (!override_root.empty()) return override_root;
    if (const char* env = std::getenv("COSTBENCH_DATA_DIR"); env && *env) return env;
    return "data";
}

inline std::filesystem::path raw_path(const std::filesystem::path& root, const std::string& name) {
    const auto schema = dataset_schema(name);
    // The deferral variant reads the German Credit file.
    const std::string dir = name == "german_credit_deferral" ? "german_credit" : name;
    return root / dir / schema.file;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << v;
    return out.str();
}

struct RawTable {
    std::vector<std::string> header;             // feature column names
    std::vector<std::vector<std::string>> rows;  // feature fields, label removed
    std::vector<std::size_t> labels;
    std::size_t dropped_rows = 0;
    std::string content_hash;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string> split_fields(const std::string& line, char delimiter) {
    std::vector<std::string> out;
    if (delimiter == ' ') {
        std::istringstream in(line);
        for (std::string tok; in >> tok;) out.push_back(tok);
        return out;
    }
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, delimiter)) out.push_back(trim(field));
    if (!line.empty() && line.back() == delimiter) out.emplace_back();
    return out;
}

}  // namespace detail

/// Parses the delimited file; rows with empty or "?" fields are dropped and counted.
inline RawTable read_raw_table(const DatasetSchema& schema, std::istream& in) {
    RawTable t;
    std::ostringstream all;
    all << in.rdbuf();
    const std::string content = all.str();
    t.content_hash = hex64(fnv1a64(content));

    std::istringstream lines(content);
    std::string line;
    std::size_t line_no = 0;
    bool header_pending = schema.header;
    while (std::getline(lines, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_fields(line, schema.delimiter);
        if (fields.size() != schema.n_columns)
            throw std::invalid_argument(schema.name + ": line " + std::to_string(line_no) + " has " +
                                        std::to_string(fields.size()) + " columns, expected " +
                                        std::to_string(schema.n_columns));
        if (header_pending) {
            header_pending = false;
            for (std::size_t j = 0; j < fields.size(); ++j)
                if (j != schema.label_column) t.header.push_back(fields[j]);
            continue;
        }
        if (std::any_of(fields.begin(), fields.end(), [](const std::string& f) { return f.empty() || f == "?"; })) {
            ++t.dropped_rows;
            continue;
        }
        const auto label = schema.label_map.find(fields[schema.label_column]);
        if (label == schema.label_map.end())
            throw std::invalid_argument(schema.name + ": line " + std::to_string(line_no) + " has unknown label '" +
                                        fields[schema.label_column] + "'");
        t.labels.push_back(label->second);
        fields.erase(fields.begin() + static_cast<std::ptrdiff_t>(schema.label_column));
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty())
        for (std::size_t j = 0; j + 1 < schema.n_columns; ++j) t.header.push_back("A" + std::to_string(j + 1));
    if (t.rows.empty()) throw std::invalid_argument(schema.name + ": no usable rows");
    return t;
}

/// Numeric columns are standardized on the full table (population variance); categorical
/// columns are one-hot over their sorted vocabulary.
inline Preprocessing fit_preprocessing(const DatasetSchema& schema, const RawTable& t) {
    Preprocessing p;
    p.dropped_rows = t.dropped_rows;
    std::vector<std::size_t> feature_to_raw;
    for (std::size_t j = 0; j < schema.n_columns; ++j)
        if (j != schema.label_column) feature_to_raw.push_back(j);
    for (std::size_t f = 0; f < feature_to_raw.size(); ++f) {
        ColumnTransform c;
        c.name = t.header[f];
        const bool categorical = std::find(schema.categorical.begin(), schema.categorical.end(), feature_to_raw[f]) !=
                                 schema.categorical.end();
        if (categorical) {
            c.kind = ColumnTransform::Kind::categorical;
            std::set<std::string> vocab;
            for (const auto& row : t.rows) vocab.insert(row[f]);
            c.vocabulary.assign(vocab.begin(), vocab.end());
        } else {
            double sum = 0.0;
            std::vector<double> v;
            v.reserve(t.rows.size());
            for (const auto& row : t.rows) v.push_back(Preprocessing::parse_number(row[f], c.name));
            for (double x : v) sum += x;
            c.mean = sum / static_cast<double>(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - c.mean) * (x - c.mean);
            const double sd = std::sqrt(ss / static_cast<double>(v.size()));
            c.scale = sd > 0.0 ? sd : 1.0;
        }
        p.columns.push_back(std::move(c));
    }
    return p;
}

/// Reads `<root>/<name>/manifest` ("fnv1a64 <hex>") if present; a mismatch is reported on stderr only.
inline void check_manifest(const std::filesystem::path& manifest, const std::string& actual_hash) {
    std::ifstream in(manifest);
    if (!in) return;
    std::string key, expected;
    while (in >> key >> expected) {
        if (key == "fnv1a64" && expected != actual_hash)
            std::cerr << "warning: " << manifest.string() << " expects fnv1a64 " << expected << ", file hashes to "
                      << actual_hash << '\n';
    }
}

inline std::pair<Dataset, CostMatrix> load_uci(const std::string& name, const std::filesystem::path& root) {
    const auto schema = dataset_schema(name);
    const auto path = raw_path(root, name);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("dataset file not found: " + path.string());
    const auto table = read_raw_table(schema, in);
    check_manifest(path.parent_path() / "manifest", table.content_hash);
    if (table.dropped_rows > 0)
        std::clog << name << ": dropped " << table.dropped_rows << " incomplete rows\n";

    Dataset ds;
    ds.name = name;
    ds.preprocessing = fit_preprocessing(schema, table);
    ds.samples = {ds.preprocessing.apply(table.rows), table.labels};
    ds.label_names = schema.label_names;
    ds.source = "uci(" + name + ", fnv1a64=" + table.content_hash + ")";
    return {std::move(ds), schema.cost};
}

// Processed-dataset cache: a header of column kinds, then one row per sample.

inline void write_dataset_cache(std::ostream& out, const Dataset& ds) {
    out << "costlab-dataset 1\n";
    out << "name " << std::quoted(ds.name) << "\nsource " << std::quoted(ds.source) << '\n';
    out << "labels " << ds.label_names.size();
    for (const auto& l : ds.label_names) out << ' ' << std::quoted(l);
    out << "\ndropped " << ds.preprocessing.dropped_rows << "\ncolumns " << ds.preprocessing.columns.size() << '\n';
    out.precision(17);
    for (const auto& c : ds.preprocessing.columns) {
        out << std::quoted(c.name);
        if (c.kind == ColumnTransform::Kind::numeric) {
            out << " numeric " << c.mean << ' ' << c.scale << '\n';
        } else {
            out << " categorical " << c.vocabulary.size();
            for (const auto& v : c.vocabulary) out << ' ' << std::quoted(v);
            out << '\n';
        }
    }
    out << "kinds";
    for (std::size_t j = 0; j < ds.samples.features.cols(); ++j) out << " num";
    out << " label\nrows " << ds.size() << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.samples.x(i)) out << v << ' ';
        out << ds.samples.labels[i] << '\n';
    }
}

inline Dataset read_dataset_cache(std::istream& in) {
    auto expect = [&](const std::string& key) {
        std::string got;
        if (!(in >> got) || got != key) throw std::runtime_error("dataset cache: expected '" + key + "'");
    };
    expect("costlab-dataset");
    int version = 0;
    if (!(in >> version) || version != 1) throw std::runtime_error("dataset cache: unsupported version");
    Dataset ds;
    expect("name");
    in >> std::quoted(ds.name);
    expect("source");
    in >> std::quoted(ds.source);
    expect("labels");
    std::size_t n_labels = 0;
    in >> n_labels;
    ds.label_names.resize(n_labels);
    for (auto& l : ds.label_names) in >> std::quoted(l);
    expect("dropped");
    in >> ds.preprocessing.dropped_rows;
    expect("columns");
    std::size_t n_cols = 0;
    in >> n_cols;
    for (std::size_t j = 0; j < n_cols; ++j) {
        ColumnTransform c;
        std::string kind;
        in >> std::quoted(c.name) >> kind;
        if (kind == "numeric") {
            std::string mean, scale;
            in >> mean >> scale;
            c.mean = std::stod(mean);
            c.scale = std::stod(scale);
        } else if (kind == "categorical") {
            c.kind = ColumnTransform::Kind::categorical;
            std::size_t n = 0;
            in >> n;
            c.vocabulary.resize(n);
            for (auto& v : c.vocabulary) in >> std::quoted(v);
        } else {
            throw std::runtime_error("dataset cache: bad column kind '" + kind + "'");
        }
        ds.preprocessing.columns.push_back(std::move(c));
    }
    expect("kinds");
    std::size_t d = 0;
    for (std::string k; in >> k && k != "label";) {
        if (k != "num") throw std::runtime_error("dataset cache: bad kind '" + k + "'");
        ++d;
    }
    expect("rows");
    std::size_t n = 0;
    in >> n;
    if (!in) throw std::runtime_error("dataset cache: malformed header");
    ds.samples = {Matrix(n, d), std::vector<std::size_t>(n)};
    std::string token;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (!(in >> token)) throw std::runtime_error("dataset cache: truncated rows");
            ds.samples.features(i, j) = std::stod(token);
        }
        if (!(in >> ds.samples.labels[i])) throw std::runtime_error("dataset cache: truncated rows");
        if (ds.samples.labels[i] >= n_labels) throw std::runtime_error("dataset cache: label out of range");
    }
    return ds;
}

// Splits.

struct SplitFractions {
    double train = 0.6, val = 0.2, test = 0.2;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
    std::uint64_t seed = 0;
};

/// Uniform subsample of n rows, then a split in the given proportions (rounded to nearest).
inline SplitIndices subsample_and_split(std::size_t dataset_size, std::size_t n, SplitFractions f, std::uint64_t seed) {
    if (n == 0 || n > dataset_size) throw std::invalid_argument("subsample_and_split: n must lie in [1, dataset size]");
    if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
        throw std::invalid_argument("subsample_and_split: fractions must be nonnegative and sum to 1");
    std::vector<std::size_t> order(dataset_size);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first n positions become a uniform random subset in random order.
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, dataset_size - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    const auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n))));
    SplitIndices s;
    s.seed = seed;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                  order.begin() + static_cast<std::ptrdiff_t>(n));
    return s;
}

inline Samples take(const Samples& s, const std::vector<std::size_t>& idx) {
    Samples out{Matrix(idx.size(), s.features.cols()), std::vector<std::size_t>(idx.size())};
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto src = s.x(idx[k]);
        std::copy(src.begin(), src.end(), out.features.row(k).begin());
        out.labels[k] = s.labels[idx[k]];
    }
    return out;
}

}  // namespace costlab
