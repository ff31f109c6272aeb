#include <gtest/gtest.h>

#include <random>

#include "costlab/vertex_lp.hpp"

namespace costlab::lp {
namespace {

TEST(SolveSquare, SolvesAndDetectsSingular) {
    const auto x = solve_square(Matrix::from_rows({{2, 1}, {1, 3}}), {3, 5});
    ASSERT_TRUE(x);
    EXPECT_NEAR((*x)[0], 0.8, 1e-15);
    EXPECT_NEAR((*x)[1], 1.4, 1e-15);
    EXPECT_FALSE(solve_square(Matrix::from_rows({{1, 2}, {2, 4}}), {1, 2}));
}

TEST(EnumerateVertices, UnitSquare) {
    Problem prob{Matrix::from_rows({{1, 0}, {0, 1}, {-1, 0}, {0, -1}}), {1, 1, 0, 0}, Matrix(0, 2), {}};
    const auto v = enumerate_vertices(prob);
    EXPECT_EQ(v, (std::vector<std::vector<double>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
}

TEST(Simplex, HandExample) {
    // max 3x + 2y s.t. x + y <= 4, x + 3y <= 6, x <= 3, x, y >= 0: optimum (3, 1) value 11.
    Problem prob{Matrix::from_rows({{1, 1}, {1, 3}, {1, 0}, {-1, 0}, {0, -1}}), {4, 6, 3, 0, 0}, Matrix(0, 2), {}};
    const std::vector<double> c{3, 2};
    const auto sol = simplex(prob, c);
    ASSERT_TRUE(sol);
    EXPECT_NEAR(sol->value, 11.0, 1e-12);
    EXPECT_NEAR(sol->x[0], 3.0, 1e-12);
    EXPECT_NEAR(sol->x[1], 1.0, 1e-12);
}

TEST(Simplex, AgreesWithVertexEnumeration) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0.0, 1.0);
    int feasible = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + trial % 3, rows = n + 2 + trial % 4;
        // Box |x_i| <= 3 keeps every problem bounded; random rows may make it infeasible.
        Problem prob{Matrix(rows + 2 * n, n), std::vector<double>(rows + 2 * n), Matrix(trial % 2, n),
                     std::vector<double>(trial % 2)};
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < n; ++j) prob.ineq_lhs(i, j) = g(rng);
            prob.ineq_rhs[i] = g(rng);
        }
        for (std::size_t j = 0; j < n; ++j) {
            prob.ineq_lhs(rows + 2 * j, j) = 1.0;
            prob.ineq_lhs(rows + 2 * j + 1, j) = -1.0;
            prob.ineq_rhs[rows + 2 * j] = prob.ineq_rhs[rows + 2 * j + 1] = 3.0;
        }
        if (trial % 2) {
            for (std::size_t j = 0; j < n; ++j) prob.eq_lhs(0, j) = g(rng);
            prob.eq_rhs[0] = 0.5 * g(rng);
        }
        std::vector<double> c(n);
        for (double& v : c) v = g(rng);
        const auto oracle = maximize(prob, c);
        const auto got = simplex(prob, c);
        ASSERT_EQ(oracle.has_value(), got.has_value()) << trial;
        if (oracle) {
            ++feasible;
            EXPECT_NEAR(got->value, oracle->value, 1e-8) << trial;
        }
    }
    EXPECT_GT(feasible, 100);
}

TEST(Simplex, InfeasibleUnboundedAndLineality) {
    Problem infeasible{Matrix::from_rows({{1.0}, {-1.0}}), {1.0, -2.0}, Matrix(0, 1), {}};
    EXPECT_FALSE(simplex(infeasible, std::vector<double>{1.0}));

    Problem open{Matrix::from_rows({{-1.0, 0.0}}), {0.0}, Matrix(0, 2), {}};
    EXPECT_THROW(simplex(open, std::vector<double>{1.0, 0.0}), std::domain_error);

    // Shift-quotient distance between u = (0, 3) and the line w + span{1} through w = (0, 0):
    // min t s.t. |u - w - c 1| <= t over free (c, t). Answer 1.5.
    Problem q{Matrix::from_rows({{-1, -1}, {1, -1}, {-1, -1}, {1, -1}}), {0, 0, -3, 3}, Matrix(0, 2), {}};
    const auto sol = simplex(q, std::vector<double>{0.0, -1.0});
    ASSERT_TRUE(sol);
    EXPECT_NEAR(-sol->value, 1.5, 1e-12);
}

}  // namespace
}  // namespace costlab::lp
