#pragma once

// Tiny dense linear programs with free variables:
//
//   maximize  c.x   subject to  A x <= b,  E x = e
//
// enumerate_vertices() makes every choice of (n - rows(E)) inequality rows active and solves
// the square system; its cost grows combinatorially, so it only serves the matrix games over
// a few labels. simplex() is a two-phase tableau method with Bland's rule for everything else.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "costlab/cost_matrix.hpp"

namespace costlab::lp {

struct Problem {
    Matrix ineq_lhs;  // A
    std::vector<double> ineq_rhs;
    Matrix eq_lhs;  // E
    std::vector<double> eq_rhs;

    std::size_t n_vars() const { return ineq_lhs.cols(); }
};

/// Solves the square system M x = v with partial pivoting. Returns nullopt when a pivot
/// falls below `singular_tol` in magnitude.
inline std::optional<std::vector<double>> solve_square(Matrix m, std::vector<double> v, double singular_tol = 1e-12) {
    const std::size_t n = m.rows();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(m(r, col)) > std::abs(m(pivot, col))) pivot = r;
        if (std::abs(m(pivot, col)) < singular_tol) return std::nullopt;
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(m(pivot, c), m(col, c));
            std::swap(v[pivot], v[col]);
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = m(r, col) / m(col, col);
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) m(r, c) -= f * m(col, c);
            v[r] -= f * v[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = v[i] / m(i, i);
    return x;
}

/// Calls `visit(indices)` for every k-subset of {0, ..., n-1} in lexicographic order.
template <typename Visit>
void for_each_combination(std::size_t n, std::size_t k, Visit&& visit) {
    if (k > n) return;
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
        visit(static_cast<const std::vector<std::size_t>&>(idx));
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
        if (i == 0) return;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

/// All vertices of {x : A x <= b, E x = e}, deduplicated and sorted lexicographically.
inline std::vector<std::vector<double>> enumerate_vertices(const Problem& prob, double feas_tol = 1e-9) {
    const std::size_t n = prob.n_vars();
    const std::size_t n_eq = prob.eq_lhs.rows();
    const std::size_t n_ineq = prob.ineq_lhs.rows();
    if (n_eq > n) throw std::invalid_argument("enumerate_vertices: more equalities than variables");
    std::vector<std::vector<double>> vertices;

    for_each_combination(n_ineq, n - n_eq, [&](const std::vector<std::size_t>& active) {
        Matrix m(n, n);
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n_eq; ++i) {
            for (std::size_t c = 0; c < n; ++c) m(i, c) = prob.eq_lhs(i, c);
            v[i] = prob.eq_rhs[i];
        }
        for (std::size_t j = 0; j < active.size(); ++j) {
            for (std::size_t c = 0; c < n; ++c) m(n_eq + j, c) = prob.ineq_lhs(active[j], c);
            v[n_eq + j] = prob.ineq_rhs[active[j]];
        }
        auto x = solve_square(std::move(m), std::move(v));
        if (!x) return;
        for (std::size_t r = 0; r < n_ineq; ++r)
            if (dot(prob.ineq_lhs.row(r), *x) > prob.ineq_rhs[r] + feas_tol) return;
        for (std::size_t r = 0; r < n_eq; ++r)
            if (std::abs(dot(prob.eq_lhs.row(r), *x) - prob.eq_rhs[r]) > feas_tol) return;
        for (double& xi : *x)
            if (std::abs(xi) < 1e-15) xi = 0.0;
        vertices.push_back(std::move(*x));
    });

    std::sort(vertices.begin(), vertices.end());
    auto same = [](const std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i)
            if (std::abs(a[i] - b[i]) > 1e-10) return false;
        return true;
    };
    vertices.erase(std::unique(vertices.begin(), vertices.end(), same), vertices.end());
    return vertices;
}

struct Solution {
    double value = 0.0;
    std::vector<double> x;
};

/// Maximizes c.x over the vertices of the polyhedron; the first maximizing vertex wins ties.
/// Requires a pointed, bounded-in-direction-c feasible set; returns nullopt when infeasible.
inline std::optional<Solution> maximize(const Problem& prob, std::span<const double> objective) {
    auto vertices = enumerate_vertices(prob);
    if (vertices.empty()) return std::nullopt;
    Solution best{-std::numeric_limits<double>::infinity(), {}};
    for (auto& x : vertices) {
        const double val = dot(objective, x);
        if (val > best.value) best = {val, std::move(x)};
    }
    return best;
}

/// Two-phase tableau simplex with Bland's rule; free variables are split as x = x+ - x-.
/// Returns nullopt when infeasible and throws std::domain_error when unbounded.
inline std::optional<Solution> simplex(const Problem& prob, std::span<const double> objective, double tol = 1e-9) {
    const std::size_t n = prob.n_vars();
    const std::size_t n_ineq = prob.ineq_lhs.rows();
    const std::size_t n_eq = prob.eq_lhs.rows();
    const std::size_t m = n_ineq + n_eq;
    if (objective.size() != n) throw std::invalid_argument("simplex: objective length mismatch");

    // Columns: x+ (n), x- (n), slacks (n_ineq), artificials (m), rhs.
    const std::size_t c_slack = 2 * n, c_art = 2 * n + n_ineq, c_rhs = c_art + m, width = c_rhs + 1;
    Matrix t(m + 1, width);  // last row is the objective row (reduced costs)
    std::vector<std::size_t> basis(m);
    for (std::size_t i = 0; i < m; ++i) {
        const bool is_eq = i >= n_ineq;
        const auto row = is_eq ? prob.eq_lhs.row(i - n_ineq) : prob.ineq_lhs.row(i);
        const double rhs = is_eq ? prob.eq_rhs[i - n_ineq] : prob.ineq_rhs[i];
        const double sign = rhs < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            t(i, j) = sign * row[j];
            t(i, n + j) = -sign * row[j];
        }
        if (!is_eq) t(i, c_slack + i) = sign;
        t(i, c_art + i) = 1.0;
        t(i, c_rhs) = sign * rhs;
        basis[i] = c_art + i;
    }

    auto pivot = [&](std::size_t r, std::size_t c) {
        const double pv = t(r, c);
        for (std::size_t j = 0; j < width; ++j) t(r, j) /= pv;
        for (std::size_t i = 0; i <= m; ++i) {
            if (i == r) continue;
            const double f = t(i, c);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < width; ++j) t(i, j) -= f * t(r, j);
        }
        basis[r] = c;
    };

    // Minimizes the objective row over columns [0, n_cols); the row holds reduced costs.
    auto run = [&](std::size_t n_cols) {
        while (true) {
            std::size_t enter = n_cols;
            for (std::size_t j = 0; j < n_cols; ++j)
                if (t(m, j) < -tol) {
                    enter = j;
                    break;
                }
            if (enter == n_cols) return true;
            std::size_t leave = m;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < m; ++i) {
                if (t(i, enter) <= tol) continue;
                const double ratio = t(i, c_rhs) / t(i, enter);
                if (ratio < best - tol || (ratio <= best + tol && leave < m && basis[i] < basis[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
            if (leave == m) return false;
            pivot(leave, enter);
        }
    };

    // Phase I: minimize the sum of artificials.
    for (std::size_t j = 0; j < width; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += t(i, j);
        t(m, j) = j >= c_art && j < c_rhs ? 0.0 : -s;
    }
    run(c_rhs);
    double rhs_scale = 1.0;
    for (std::size_t i = 0; i < m; ++i) rhs_scale = std::max(rhs_scale, std::abs(t(i, c_rhs)));
    if (-t(m, c_rhs) > 1e-9 * rhs_scale) return std::nullopt;  // the row's rhs holds -(sum of artificials)
    // Drive zero-level artificials out of the basis where possible.
    for (std::size_t i = 0; i < m; ++i) {
        if (basis[i] < c_art) continue;
        for (std::size_t j = 0; j < c_art; ++j)
            if (std::abs(t(i, j)) > tol) {
                pivot(i, j);
                break;
            }
    }

    // Phase II: minimize -c.x over the non-artificial columns.
    for (std::size_t j = 0; j < width; ++j) t(m, j) = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        t(m, j) = -objective[j];
        t(m, n + j) = objective[j];
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double f = t(m, basis[i]);
        if (f == 0.0) continue;
        for (std::size_t j = 0; j < width; ++j) t(m, j) -= f * t(i, j);
    }
    if (!run(c_art)) throw std::domain_error("simplex: unbounded objective");

    Solution sol{0.0, std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < m; ++i) {
        if (basis[i] < n) sol.x[basis[i]] += t(i, c_rhs);
        else if (basis[i] < 2 * n) sol.x[basis[i] - n] -= t(i, c_rhs);
    }
    sol.value = dot(objective, sol.x);
    return sol;
}

}  // namespace costlab::lp
