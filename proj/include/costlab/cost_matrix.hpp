#pragma once

// Cost matrices, conditional and Bayes risks, and the cost-sensitive metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace costlab {

/// Absolute tolerance used when collecting argmin sets of expected costs.
inline constexpr double kTieEps = 1e-9;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return {};
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_) throw std::invalid_argument("ragged matrix rows");
            std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

/// A probability vector over labels.
class SimplexDist {
public:
    explicit SimplexDist(std::vector<double> probs) : probs_(std::move(probs)) {
        if (probs_.empty()) throw std::invalid_argument("SimplexDist: empty");
        double total = 0.0;
        for (double v : probs_) {
            if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("SimplexDist: negative or non-finite entry");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("SimplexDist: entries do not sum to 1");
    }

    /// Renormalizes a nonnegative vector. Used for grid points built from integer counts.
    static SimplexDist normalized(std::vector<double> weights) {
        double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (!(total > 0.0)) throw std::invalid_argument("SimplexDist: zero mass");
        for (double& v : weights) v /= total;
        double drift = 1.0 - std::accumulate(weights.begin(), weights.end(), 0.0);
        *std::max_element(weights.begin(), weights.end()) += drift;
        return SimplexDist(std::move(weights));
    }

    static SimplexDist point_mass(std::size_t n, std::size_t y) {
        std::vector<double> p(n, 0.0);
        p.at(y) = 1.0;
        return SimplexDist(std::move(p));
    }

    static SimplexDist uniform(std::size_t n) { return SimplexDist(std::vector<double>(n, 1.0 / static_cast<double>(n))); }

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::span<const double> probs() const noexcept { return probs_; }

private:
    std::vector<double> probs_;
};

/// All points of the simplex over `n` labels whose coordinates are multiples of `resolution`.
inline std::vector<SimplexDist> simplex_grid(std::size_t n, double resolution) {
    if (n == 0 || !(resolution > 0.0) || resolution > 1.0) throw std::invalid_argument("simplex_grid: bad arguments");
    const auto steps = static_cast<int>(std::lround(1.0 / resolution));
    std::vector<SimplexDist> out;
    std::vector<int> counts(n, 0);
    // Enumerate compositions of `steps` into n nonnegative parts.
    auto recurse = [&](auto&& self, std::size_t idx, int remaining) -> void {
        if (idx + 1 == n) {
            counts[idx] = remaining;
            std::vector<double> p(n);
            for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<double>(counts[i]) / steps;
            out.push_back(SimplexDist::normalized(std::move(p)));
            return;
        }
        for (int c = 0; c <= remaining; ++c) {
            counts[idx] = c;
            self(self, idx + 1, remaining - c);
        }
    };
    recurse(recurse, 0, steps);
    return out;
}

/// The target loss as a reports x labels matrix of nonnegative costs.
class CostMatrix {
public:
    CostMatrix(Matrix entries, std::vector<std::string> report_names = {}, std::vector<std::string> label_names = {},
               bool require_zero_per_column = true)
        : entries_(std::move(entries)), report_names_(std::move(report_names)), label_names_(std::move(label_names)) {
        if (entries_.rows() < 2 || entries_.cols() < 2)
            throw std::invalid_argument("CostMatrix: need at least 2 reports and 2 labels");
        for (double v : entries_.data())
            if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("CostMatrix: entries must be finite and >= 0");
        if (require_zero_per_column) {
            for (std::size_t y = 0; y < n_labels(); ++y) {
                bool has_zero = false;
                for (std::size_t r = 0; r < n_reports(); ++r) has_zero = has_zero || entries_(r, y) == 0.0;
                if (!has_zero) throw std::invalid_argument("CostMatrix: column " + std::to_string(y) + " has no zero entry");
            }
        }
        if (report_names_.empty())
            for (std::size_t r = 0; r < n_reports(); ++r) report_names_.push_back("r" + std::to_string(r));
        if (label_names_.empty())
            for (std::size_t y = 0; y < n_labels(); ++y) label_names_.push_back("y" + std::to_string(y));
        if (report_names_.size() != n_reports() || label_names_.size() != n_labels())
            throw std::invalid_argument("CostMatrix: name count mismatch");
    }

    static CostMatrix from_rows(const std::vector<std::vector<double>>& rows, bool require_zero_per_column = true) {
        return CostMatrix(Matrix::from_rows(rows), {}, {}, require_zero_per_column);
    }

    std::size_t n_reports() const noexcept { return entries_.rows(); }
    std::size_t n_labels() const noexcept { return entries_.cols(); }
    double operator()(std::size_t r, std::size_t y) const { return entries_(r, y); }
    std::span<const double> row(std::size_t r) const { return entries_.row(r); }
    const Matrix& entries() const noexcept { return entries_; }
    const std::vector<std::string>& report_names() const noexcept { return report_names_; }
    const std::vector<std::string>& label_names() const noexcept { return label_names_; }

    double max_entry() const { return *std::max_element(entries_.data().begin(), entries_.data().end()); }

    CostMatrix scaled(double factor) const {
        if (!(factor > 0.0)) throw std::invalid_argument("CostMatrix::scaled: factor must be positive");
        Matrix m = entries_;
        for (double& v : m.data()) v *= factor;
        return CostMatrix(std::move(m), report_names_, label_names_, false);
    }

    bool operator==(const CostMatrix& o) const { return entries_ == o.entries_; }

private:
    Matrix entries_;
    std::vector<std::string> report_names_;
    std::vector<std::string> label_names_;
};

namespace costs {

/// Binary cost-sensitive classification: labels and reports ordered (-1, +1).
/// Predicting -1 on a +1 costs 1 - alpha; predicting +1 on a -1 costs alpha.
inline CostMatrix binary_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("binary_alpha: alpha must lie in (0, 1)");
    return CostMatrix(Matrix::from_rows({{0.0, 1.0 - alpha}, {alpha, 0.0}}), {"predict -1", "predict +1"}, {"-1", "+1"});
}

inline CostMatrix zero_one(std::size_t k) {
    Matrix m(k, k, 1.0);
    for (std::size_t i = 0; i < k; ++i) m(i, i) = 0.0;
    return CostMatrix(std::move(m));
}

/// Labels (good, bad); predicting good on a bad risk costs 5.
inline CostMatrix german_credit() {
    return CostMatrix(Matrix::from_rows({{0.0, 5.0}, {1.0, 0.0}}), {"predict good", "predict bad"}, {"good", "bad"});
}

/// German credit plus a defer report with constant cost 1/2.
inline CostMatrix german_credit_deferral() {
    return CostMatrix(Matrix::from_rows({{0.0, 5.0}, {1.0, 0.0}, {0.5, 0.5}}), {"predict good", "predict bad", "defer"},
                      {"good", "bad"});
}

/// Three ordered outcomes (shared by the student performance and diabetes tasks).
inline CostMatrix three_class_ordinal() {
    return CostMatrix::from_rows({{0.0, 3.0, 5.0}, {1.0, 0.0, 3.0}, {3.0, 1.0, 0.0}});
}

}  // namespace costs

inline double expected_cost(const CostMatrix& cost, const SimplexDist& p, std::size_t r) {
    if (r >= cost.n_reports()) throw std::domain_error("expected_cost: report index out of range");
    if (p.size() != cost.n_labels()) throw std::invalid_argument("expected_cost: distribution size mismatch");
    return dot(cost.row(r), p.probs());
}

inline double bayes_risk(const CostMatrix& cost, const SimplexDist& p) {
    double best = expected_cost(cost, p, 0);
    for (std::size_t r = 1; r < cost.n_reports(); ++r) best = std::min(best, expected_cost(cost, p, r));
    return best;
}

/// All reports whose expected cost is within `tie_eps` of the minimum, ascending.
inline std::vector<std::size_t> bayes_optimal_reports(const CostMatrix& cost, const SimplexDist& p,
                                                      double tie_eps = kTieEps) {
    const double best = bayes_risk(cost, p);
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < cost.n_reports(); ++r)
        if (expected_cost(cost, p, r) <= best + tie_eps) out.push_back(r);
    return out;
}

struct ConfusionMatrix {
    std::vector<std::vector<std::size_t>> counts;  // [report][label]
    std::size_t n_samples = 0;

    std::size_t n_reports() const noexcept { return counts.size(); }
    std::size_t n_labels() const noexcept { return counts.empty() ? 0 : counts.front().size(); }
    bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                 std::size_t n_reports, std::size_t n_labels) {
    if (preds.size() != labels.size()) throw std::invalid_argument("confusion: length mismatch");
    ConfusionMatrix cm{std::vector<std::vector<std::size_t>>(n_reports, std::vector<std::size_t>(n_labels, 0)),
                       preds.size()};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= n_reports || labels[i] >= n_labels) throw std::out_of_range("confusion: index out of range");
        ++cm.counts[preds[i]][labels[i]];
    }
    return cm;
}

/// Mean per-sample cost of the decisions summarized by `cm`.
inline double cost_sensitive_loss(const ConfusionMatrix& cm, const CostMatrix& cost) {
    if (cm.n_reports() != cost.n_reports() || cm.n_labels() != cost.n_labels())
        throw std::invalid_argument("cost_sensitive_loss: shape mismatch");
    if (cm.n_samples == 0) throw std::invalid_argument("cost_sensitive_loss: no samples");
    double total = 0.0;
    for (std::size_t r = 0; r < cm.n_reports(); ++r)
        for (std::size_t y = 0; y < cm.n_labels(); ++y) total += static_cast<double>(cm.counts[r][y]) * cost(r, y);
    return total / static_cast<double>(cm.n_samples);
}

/// Fraction of samples whose report index equals the label index. Only defined when
/// reports and labels align one-to-one; callers skip it for deferral-style matrices.
inline double accuracy(const ConfusionMatrix& cm) {
    if (cm.n_samples == 0) throw std::invalid_argument("accuracy: no samples");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(cm.n_reports(), cm.n_labels()); ++i) hits += cm.counts[i][i];
    return static_cast<double>(hits) / static_cast<double>(cm.n_samples);
}

inline bool accuracy_defined(const CostMatrix& cost) { return cost.n_reports() == cost.n_labels(); }

// Text format: "reports labels" on the first line, then one whitespace-separated row per report.

/// Any real matrix in the same format; embedded points use it too.
inline Matrix parse_matrix(std::istream& in) {
    std::size_t n_reports = 0, n_labels = 0;
    if (!(in >> n_reports >> n_labels)) throw std::invalid_argument("matrix file: missing 'rows columns' header");
    Matrix m(n_reports, n_labels);
    for (std::size_t r = 0; r < n_reports; ++r)
        for (std::size_t y = 0; y < n_labels; ++y) {
            std::string token;
            if (!(in >> token)) throw std::invalid_argument("matrix file: truncated row " + std::to_string(r));
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(token, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != token.size()) throw std::invalid_argument("matrix file: bad number '" + token + "'");
            m(r, y) = v;
        }
    std::string extra;
    if (in >> extra) throw std::invalid_argument("matrix file: trailing content '" + extra + "'");
    return m;
}

inline CostMatrix parse_cost_matrix(std::istream& in) {
    // Deferral-style matrices may have columns without a zero entry.
    return CostMatrix(parse_matrix(in), {}, {}, false);
}

inline Matrix load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open matrix file: " + path);
    return parse_matrix(in);
}

inline CostMatrix load_cost_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open cost matrix file: " + path);
    return parse_cost_matrix(in);
}

inline std::string format_cost_matrix(const CostMatrix& cost) {
    std::ostringstream out;
    out.precision(17);
    out << cost.n_reports() << ' ' << cost.n_labels() << '\n';
    for (std::size_t r = 0; r < cost.n_reports(); ++r) {
        for (std::size_t y = 0; y < cost.n_labels(); ++y) out << (y ? " " : "") << cost(r, y);
        out << '\n';
    }
    return out.str();
}

}  // namespace costlab
