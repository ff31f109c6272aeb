#pragma once

// Polyhedral embedding surrogate for an arbitrary cost matrix.
//
// For a cost matrix with Bayes risk B(p) = min_r <p, cost_r>, the surrogate is
//
//   L(u, y) = G(u) - u_y,   G(u) = max_{p in simplex} [ <p, u> + B(p) ],
//
// with report r embedded at phi(r) = -cost_r. G is the maximum of finitely many affine
// functions, one per vertex of the hypograph of B over the simplex, so the vertex set is
// computed once at construction and every evaluation afterwards is a small max.
//
// The link works on the regions R_v = {u : vertex v attains G(u)}. A prediction u is optimal
// for p exactly when p lies in the hull of the vertices active at u, so a report that is
// Bayes optimal at every vertex whose region comes within alpha of u cannot be wrong for any
// p whose optimal set is that close. That makes the link alpha-separated by construction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <iterator>
#include <numeric>
#include <set>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "costlab/cost_matrix.hpp"
#include "costlab/vertex_lp.hpp"

namespace costlab {

struct GameSolution {
    double value = 0.0;
    SimplexDist witness;
};

/// Shifts `u` so its largest coordinate is zero.
inline std::vector<double> canonicalize(std::span<const double> u) {
    std::vector<double> out(u.begin(), u.end());
    const double top = *std::max_element(out.begin(), out.end());
    for (double& v : out) v -= top;
    return out;
}

/// Infinity-norm distance between the classes u + span{1} and v + span{1}.
inline double shift_distance(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("shift_distance: length mismatch");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return 0.5 * (hi - lo);
}

class EmbeddingSurrogate {
public:
    const CostMatrix& cost() const noexcept { return cost_; }
    std::size_t dim() const noexcept { return cost_.n_labels(); }

    /// Embedded points, one row per report of the cost matrix (including collapsed ones).
    const Matrix& phi() const noexcept { return phi_; }
    std::span<const double> embedded(std::size_t report) const { return phi_.row(report); }

    /// Reports kept for embedding and linking, ascending.
    const std::vector<std::size_t>& representative_set() const noexcept { return representative_; }
    double alpha_sep() const noexcept { return alpha_sep_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    /// Vertices (p, B(p)) of the Bayes-risk hypograph.
    const std::vector<std::vector<double>>& game_vertices() const noexcept { return vertex_p_; }
    const std::vector<double>& game_vertex_risks() const noexcept { return vertex_risk_; }

    /// Smallest pairwise shift distance between embedded representative points.
    double min_embedded_gap() const {
        double gap = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < representative_.size(); ++a)
            for (std::size_t b = a + 1; b < representative_.size(); ++b)
                gap = std::min(gap, shift_distance(embedded(representative_[a]), embedded(representative_[b])));
        return gap;
    }

    /// Representative reports that are Bayes optimal at each game vertex.
    const std::vector<std::vector<std::size_t>>& vertex_reports() const noexcept { return vertex_reports_; }

    /// Largest alpha_sep for which every prediction has a report optimal at all vertex regions
    /// within alpha_sep of it.
    double link_radius_bound() const noexcept { return link_radius_bound_; }

    double vertex_value(std::size_t v, std::span<const double> u) const { return dot(vertex_p_[v], u) + vertex_risk_[v]; }

    /// Index of the maximizing game vertex at u; the lowest index wins exact ties.
    std::size_t argmax_vertex(std::span<const double> u) const {
        std::size_t best = 0;
        double best_val = -std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < vertex_p_.size(); ++v) {
            const double val = dot(vertex_p_[v], u) + vertex_risk_[v];
            if (val > best_val) {
                best_val = val;
                best = v;
            }
        }
        return best;
    }

    /// Copy with different embedded points but the same loss function; used to build
    /// negative controls for the verifiers.
    EmbeddingSurrogate with_embedded_points(Matrix phi) const {
        if (phi.rows() != phi_.rows() || phi.cols() != phi_.cols())
            throw std::invalid_argument("with_embedded_points: shape mismatch");
        EmbeddingSurrogate copy = *this;
        copy.phi_ = std::move(phi);
        return copy;
    }

    EmbeddingSurrogate with_alpha_sep(double alpha) const {
        if (!(alpha > 0.0)) throw std::invalid_argument("alpha_sep must be positive");
        EmbeddingSurrogate copy = *this;
        copy.alpha_sep_ = alpha;
        return copy;
    }

private:
    explicit EmbeddingSurrogate(CostMatrix cost) : cost_(std::move(cost)) {}

    friend EmbeddingSurrogate build_embedding_surrogate(const CostMatrix& cost, double alpha_sep);

    CostMatrix cost_;
    Matrix phi_;
    std::vector<std::size_t> representative_;
    double alpha_sep_ = 0.0;
    double link_radius_bound_ = 0.0;
    std::vector<std::vector<double>> vertex_p_;
    std::vector<double> vertex_risk_;
    std::vector<std::vector<std::size_t>> vertex_reports_;
    std::vector<std::string> warnings_;
};

namespace detail {

// Vertices of {(p, t) : p in simplex, t <= <p, cost_r> for all r}.
inline void bayes_hypograph_vertices(const CostMatrix& cost, std::vector<std::vector<double>>& ps,
                                     std::vector<double>& risks) {
    const std::size_t d = cost.n_labels();
    const std::size_t m = cost.n_reports();
    lp::Problem prob{Matrix(d + m, d + 1), std::vector<double>(d + m, 0.0), Matrix(1, d + 1), {1.0}};
    for (std::size_t i = 0; i < d; ++i) {
        prob.ineq_lhs(i, i) = -1.0;
        prob.eq_lhs(0, i) = 1.0;
    }
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t i = 0; i < d; ++i) prob.ineq_lhs(d + r, i) = -cost(r, i);
        prob.ineq_lhs(d + r, d) = 1.0;
    }
    for (auto& x : lp::enumerate_vertices(prob)) {
        std::vector<double> p(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d));
        for (double& v : p) v = std::max(v, 0.0);
        const double total = std::accumulate(p.begin(), p.end(), 0.0);
        for (double& v : p) v /= total;
        risks.push_back(bayes_risk(cost, SimplexDist::normalized(p)));
        ps.push_back(std::move(p));
    }
}

/// Shift-quotient infinity distance from u to the region where vertex v attains G:
///   min t  s.t.  <q_w - q_v, x> <= c_v - c_w for all vertices w,  |u_i - x_i| <= t.
inline double region_distance(const std::vector<std::vector<double>>& q, const std::vector<double>& c, std::size_t v,
                              std::span<const double> u) {
    const std::size_t d = u.size(), n = q.size();
    lp::Problem prob{Matrix(n - 1 + 2 * d, d + 1), std::vector<double>(n - 1 + 2 * d), Matrix(0, d + 1), {}};
    std::size_t row = 0;
    for (std::size_t w = 0; w < n; ++w) {
        if (w == v) continue;
        for (std::size_t i = 0; i < d; ++i) prob.ineq_lhs(row, i) = q[w][i] - q[v][i];
        prob.ineq_rhs[row++] = c[v] - c[w] + 1e-12;
    }
    for (std::size_t i = 0; i < d; ++i, row += 2) {
        prob.ineq_lhs(row, i) = 1.0;
        prob.ineq_lhs(row, d) = -1.0;
        prob.ineq_rhs[row] = u[i];
        prob.ineq_lhs(row + 1, i) = -1.0;
        prob.ineq_lhs(row + 1, d) = -1.0;
        prob.ineq_rhs[row + 1] = -u[i];
    }
    std::vector<double> objective(d + 1, 0.0);
    objective[d] = -1.0;
    const auto sol = lp::simplex(prob, objective);
    return sol ? std::max(0.0, -sol->value) : std::numeric_limits<double>::infinity();
}

/// Smallest t such that some u is within t of every region in `family`.
inline double family_radius(const std::vector<std::vector<double>>& q, const std::vector<double>& c,
                            const std::vector<std::size_t>& family) {
    const std::size_t d = q.front().size(), n = q.size(), k = family.size();
    // Variables: u (d), x_f (d each), t.
    const std::size_t n_vars = d * (k + 1) + 1, t_col = n_vars - 1;
    lp::Problem prob{Matrix(k * (n - 1 + 2 * d), n_vars), std::vector<double>(k * (n - 1 + 2 * d)), Matrix(0, n_vars), {}};
    std::size_t row = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t v = family[f], x0 = d * (f + 1);
        for (std::size_t w = 0; w < n; ++w) {
            if (w == v) continue;
            for (std::size_t i = 0; i < d; ++i) prob.ineq_lhs(row, x0 + i) = q[w][i] - q[v][i];
            prob.ineq_rhs[row++] = c[v] - c[w];
        }
        for (std::size_t i = 0; i < d; ++i, row += 2) {
            prob.ineq_lhs(row, x0 + i) = 1.0;
            prob.ineq_lhs(row, i) = -1.0;
            prob.ineq_lhs(row, t_col) = -1.0;
            prob.ineq_lhs(row + 1, x0 + i) = -1.0;
            prob.ineq_lhs(row + 1, i) = 1.0;
            prob.ineq_lhs(row + 1, t_col) = -1.0;
        }
    }
    std::vector<double> objective(n_vars, 0.0);
    objective[t_col] = -1.0;
    const auto sol = lp::simplex(prob, objective);
    if (!sol) throw std::logic_error("family_radius: infeasible program");
    return std::max(0.0, -sol->value);
}

inline bool reports_intersect(const std::vector<std::vector<std::size_t>>& sets, const std::vector<std::size_t>& family) {
    std::vector<std::size_t> common = sets[family.front()];
    for (std::size_t f = 1; f < family.size() && !common.empty(); ++f) {
        std::vector<std::size_t> next;
        std::set_intersection(common.begin(), common.end(), sets[family[f]].begin(), sets[family[f]].end(),
                              std::back_inserter(next));
        common = std::move(next);
    }
    return !common.empty();
}

/// Minimum of family_radius over the minimal vertex families with no common optimal report.
inline double link_radius_bound(const std::vector<std::vector<double>>& q, const std::vector<double>& c,
                                const std::vector<std::vector<std::size_t>>& reports) {
    const std::size_t n = q.size();
    double bound = std::numeric_limits<double>::infinity();
    std::vector<std::vector<std::size_t>> level;
    for (std::size_t v = 0; v < n; ++v) level.push_back({v});
    std::set<std::vector<std::size_t>> compatible(level.begin(), level.end());
    std::size_t examined = 0;
    while (!level.empty()) {
        std::vector<std::vector<std::size_t>> next;
        for (const auto& family : level) {
            for (std::size_t v = family.back() + 1; v < n; ++v) {
                auto grown = family;
                grown.push_back(v);
                bool subsets_ok = true;
                for (std::size_t drop = 0; drop + 1 < grown.size() && subsets_ok; ++drop) {
                    auto sub = grown;
                    sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(drop));
                    subsets_ok = compatible.count(sub) > 0;
                }
                if (!subsets_ok) continue;
                if (++examined > 200000) throw std::length_error("embedding: too many vertex families to bound the link radius");
                if (reports_intersect(reports, grown)) {
                    compatible.insert(grown);
                    next.push_back(std::move(grown));
                } else {
                    bound = std::min(bound, family_radius(q, c, grown));
                }
            }
        }
        level = std::move(next);
    }
    return bound;
}

}  // namespace detail

/// Builds the surrogate. Pass alpha_sep <= 0 to use half of link_radius_bound().
inline EmbeddingSurrogate build_embedding_surrogate(const CostMatrix& cost, double alpha_sep = 0.0) {
    EmbeddingSurrogate s(cost);
    const std::size_t m = cost.n_reports();
    const std::size_t d = cost.n_labels();
    s.phi_ = Matrix(m, d);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t y = 0; y < d; ++y) s.phi_(r, y) = -cost(r, y);

    detail::bayes_hypograph_vertices(cost, s.vertex_p_, s.vertex_risk_);

    for (std::size_t r = 0; r < m; ++r) {
        bool duplicate = false;
        for (std::size_t kept : s.representative_)
            if (std::equal(cost.row(r).begin(), cost.row(r).end(), cost.row(kept).begin())) {
                s.warnings_.push_back("report " + std::to_string(r) + " duplicates report " + std::to_string(kept) +
                                      "; collapsed");
                duplicate = true;
                break;
            }
        if (duplicate) continue;
        // A report is worth embedding only if it is Bayes optimal somewhere, i.e. G(phi(r)) = 0.
        const auto v = s.argmax_vertex(s.embedded(r));
        const double g = dot(s.vertex_p_[v], s.embedded(r)) + s.vertex_risk_[v];
        if (g < -1e-12) {
            s.warnings_.push_back("report " + std::to_string(r) + " is never Bayes optimal; excluded");
            continue;
        }
        s.representative_.push_back(r);
    }
    if (s.representative_.size() < 2) throw std::invalid_argument("embedding: fewer than two representative reports");

    for (const auto& q : s.vertex_p_) {
        std::vector<std::size_t> optimal;
        for (std::size_t r : bayes_optimal_reports(cost, SimplexDist::normalized(q)))
            if (std::binary_search(s.representative_.begin(), s.representative_.end(), r)) optimal.push_back(r);
        s.vertex_reports_.push_back(std::move(optimal));
    }
    s.link_radius_bound_ = detail::link_radius_bound(s.vertex_p_, s.vertex_risk_, s.vertex_reports_);

    const double gap = s.min_embedded_gap();
    s.alpha_sep_ = alpha_sep > 0.0 ? alpha_sep : s.link_radius_bound_ / 2.0;
    if (!(s.alpha_sep_ < gap)) throw std::invalid_argument("embedding: alpha_sep must be below the embedded-point gap");
    return s;
}

inline void require_finite(std::span<const double> u, const char* what) {
    for (double v : u)
        if (!std::isfinite(v)) throw std::domain_error(std::string(what) + ": non-finite input");
}

inline GameSolution game_value(const EmbeddingSurrogate& s, std::span<const double> u) {
    if (u.size() != s.dim()) throw std::invalid_argument("game_value: dimension mismatch");
    require_finite(u, "game_value");
    const auto v = s.argmax_vertex(u);
    return {dot(s.game_vertices()[v], u) + s.game_vertex_risks()[v], SimplexDist::normalized(s.game_vertices()[v])};
}

inline double surrogate_value(const EmbeddingSurrogate& s, std::span<const double> u, std::size_t y) {
    if (y >= s.dim()) throw std::out_of_range("surrogate_value: label out of range");
    return game_value(s, u).value - u[y];
}

/// Value and subgradient in one pass; the maximizing game vertex p* gives p* - e_y.
inline double surrogate_value_and_subgradient(const EmbeddingSurrogate& s, std::span<const double> u, std::size_t y,
                                              std::span<double> grad) {
    if (y >= s.dim()) throw std::out_of_range("surrogate: label out of range");
    const auto v = s.argmax_vertex(u);
    const auto& p = s.game_vertices()[v];
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = p[i];
    grad[y] -= 1.0;
    return dot(p, u) + s.game_vertex_risks()[v] - u[y];
}

inline std::vector<double> surrogate_subgradient(const EmbeddingSurrogate& s, std::span<const double> u,
                                                 std::size_t y) {
    require_finite(u, "surrogate_subgradient");
    std::vector<double> g(s.dim());
    surrogate_value_and_subgradient(s, u, y, g);
    return g;
}

/// Expected surrogate loss under label distribution p.
inline double expected_surrogate(const EmbeddingSurrogate& s, std::span<const double> u, const SimplexDist& p) {
    return game_value(s, u).value - dot(p.probs(), u);
}

/// Reports allowed at u: representatives optimal at every vertex whose region lies within
/// alpha_sep of u. Empty only when alpha_sep exceeds link_radius_bound().
inline std::vector<std::size_t> link_candidates(const EmbeddingSurrogate& s, std::span<const double> u, double radius) {
    const auto& q = s.game_vertices();
    std::vector<double> values(q.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < q.size(); ++v) top = std::max(top, values[v] = s.vertex_value(v, u));
    const double active_tol = 1e-12 * (1.0 + std::abs(top));
    std::vector<std::size_t> allowed = s.representative_set();
    for (std::size_t v = 0; v < q.size() && !allowed.empty(); ++v) {
        const double slack = top - values[v];
        // slack <= 2 * distance, so a large slack rules the region out without solving.
        if (slack > active_tol) {
            if (slack >= 2.0 * radius) continue;
            if (detail::region_distance(q, s.game_vertex_risks(), v, u) >= radius) continue;
        }
        std::vector<std::size_t> next;
        std::set_intersection(allowed.begin(), allowed.end(), s.vertex_reports()[v].begin(), s.vertex_reports()[v].end(),
                              std::back_inserter(next));
        allowed = std::move(next);
    }
    return allowed;
}

/// The link psi: among link_candidates, the nearest embedded point in shift distance, lowest
/// report index on ties. If alpha_sep is too large for any report to qualify, the candidates
/// shrink to the vertices active at u itself.
inline std::size_t link(const EmbeddingSurrogate& s, std::span<const double> u) {
    if (u.size() != s.dim()) throw std::invalid_argument("link: dimension mismatch");
    require_finite(u, "link");
    auto allowed = link_candidates(s, u, s.alpha_sep());
    if (allowed.empty()) allowed = link_candidates(s, u, 0.0);
    if (allowed.empty()) allowed = s.representative_set();
    std::size_t best = allowed.front();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t r : allowed) {
        const double dist = shift_distance(u, s.embedded(r));
        if (dist < best_dist - 1e-12) {
            best_dist = dist;
            best = r;
        }
    }
    return best;
}

/// Affine coordinate on the hinge axis for two-label surrogates: the embedded point of the
/// higher representative report maps to +1, the lower to -1.
inline double hinge_coordinate(const EmbeddingSurrogate& s, std::span<const double> u) {
    if (s.dim() != 2 || s.representative_set().size() != 2)
        throw std::invalid_argument("hinge_coordinate: needs two labels and two representative reports");
    auto gap = [](std::span<const double> v) { return v[0] - v[1]; };
    const double lo = gap(s.embedded(s.representative_set()[0]));
    const double hi = gap(s.embedded(s.representative_set()[1]));
    return -1.0 + 2.0 * (gap(u) - lo) / (hi - lo);
}

/// Weighted hinge for the binary alpha-cost task on a scalar score. Label and report index 0
/// stand for -1, index 1 for +1.
class WeightedHinge {
public:
    explicit WeightedHinge(double alpha) : alpha_(alpha) {
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("weighted_hinge: alpha must lie in (0, 1)");
    }

    double alpha() const noexcept { return alpha_; }

    double value(double u, std::size_t y) const {
        if (y > 1) throw std::out_of_range("weighted_hinge: label out of range");
        return y == 1 ? 0.5 * (1.0 - alpha_) * std::max(0.0, 1.0 - u) : 0.5 * alpha_ * std::max(0.0, 1.0 + u);
    }

    double derivative(double u, std::size_t y) const {
        if (y == 1) return u < 1.0 ? -0.5 * (1.0 - alpha_) : 0.0;
        return u > -1.0 ? 0.5 * alpha_ : 0.0;
    }

    /// sign(u) with 0 sent to -1.
    std::size_t link(double u) const { return u > 0.0 ? 1 : 0; }

    static double embedded(std::size_t report) { return report == 1 ? 1.0 : -1.0; }

private:
    double alpha_;
};

inline WeightedHinge weighted_hinge(double alpha) { return WeightedHinge(alpha); }

/// Draws surrogate predictions from a box around the embedded points inflated 2x, with a
/// share of Gaussian draws so far-away regions are probed as well.
class EmbeddedBoxSampler {
public:
    explicit EmbeddedBoxSampler(const EmbeddingSurrogate& s, double tail_share = 0.2) : tail_share_(tail_share) {
        const std::size_t d = s.dim();
        center_.assign(d, 0.0);
        half_.assign(d, 0.0);
        const auto& reps = s.representative_set();
        for (std::size_t r : reps)
            for (std::size_t i = 0; i < d; ++i) center_[i] += s.embedded(r)[i] / static_cast<double>(reps.size());
        for (std::size_t r : reps)
            for (std::size_t i = 0; i < d; ++i)
                half_[i] = std::max(half_[i], 2.0 * std::abs(s.embedded(r)[i] - center_[i]));
        for (double& h : half_) h = std::max(h, 0.5);
    }

    template <typename Rng>
    std::vector<double> operator()(Rng& rng) const {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> u(center_.size());
        const bool tail = unit(rng) < tail_share_;
        for (std::size_t i = 0; i < u.size(); ++i)
            u[i] = center_[i] + (tail ? 2.0 * half_[i] * normal(rng) : half_[i] * (2.0 * unit(rng) - 1.0));
        return u;
    }

private:
    double tail_share_;
    std::vector<double> center_;
    std::vector<double> half_;
};

}  // namespace costlab
